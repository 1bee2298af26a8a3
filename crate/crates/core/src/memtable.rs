//! In-memory write buffer: a lock-free skiplist ordered by `(key asc, seq desc)`.

use std::sync::atomic::{AtomicBool, AtomicU64, AtomicUsize, Ordering};

use crossbeam_skiplist::SkipMap;

use crate::entry::{Entry, SeqNo};
use crate::error::{Error, Result};
use crate::schema::Key;

/// Entries copied out per batch by range readers.
const SCAN_BATCH: usize = 512;

#[derive(Debug)]
pub struct Memtable {
    id: u64,
    /// Keyed by `(key, !seq)` so newer versions of a key sort first.
    map: SkipMap<(Key, u64), Entry>,
    size: AtomicUsize,
    min_seq: AtomicU64,
    max_seq: AtomicU64,
    immutable: AtomicBool,
}

impl Memtable {
    /// `id` names the write-ahead log segment backing this memtable.
    pub fn new(id: u64) -> Self {
        Memtable {
            id,
            map: SkipMap::new(),
            size: AtomicUsize::new(0),
            min_seq: AtomicU64::new(u64::MAX),
            max_seq: AtomicU64::new(0),
            immutable: AtomicBool::new(false),
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn put(&self, entry: Entry) -> Result<()> {
        if self.is_immutable() {
            return Err(Error::InvalidArgument("write to immutable memtable".into()));
        }
        self.size
            .fetch_add(entry.approximate_size(), Ordering::Relaxed);
        self.min_seq.fetch_min(entry.seq, Ordering::Relaxed);
        self.max_seq.fetch_max(entry.seq, Ordering::Relaxed);
        self.map.insert((entry.key, !entry.seq), entry);
        Ok(())
    }

    pub fn seal(&self) {
        self.immutable.store(true, Ordering::Release);
    }

    pub fn is_immutable(&self) -> bool {
        self.immutable.load(Ordering::Acquire)
    }

    pub fn approximate_size(&self) -> usize {
        self.size.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Smallest and largest contained sequence numbers.
    pub fn seq_range(&self) -> Option<(SeqNo, SeqNo)> {
        if self.is_empty() {
            None
        } else {
            Some((
                self.min_seq.load(Ordering::Relaxed),
                self.max_seq.load(Ordering::Relaxed),
            ))
        }
    }

    /// Versions of `key` with `seq <= horizon`, newest first.
    pub fn get(&self, key: Key, horizon: SeqNo) -> Vec<Entry> {
        self.map
            .range((key, !horizon)..=(key, u64::MAX))
            .map(|e| e.value().clone())
            .collect()
    }

    /// Up to `limit` entries with key in `[low, high]` and `seq <= horizon`,
    /// starting at position `from` (a key/`!seq` pair, inclusive).
    fn batch(
        &self,
        from: (Key, u64),
        high: Key,
        horizon: SeqNo,
        limit: usize,
    ) -> (Vec<Entry>, Option<(Key, u64)>) {
        let mut out = Vec::with_capacity(limit.min(64));
        let mut iter = self.map.range(from..=(high, u64::MAX));
        for e in iter.by_ref() {
            let entry = e.value();
            if entry.seq > horizon {
                continue;
            }
            if out.len() == limit {
                return (out, Some(*e.key()));
            }
            out.push(entry.clone());
        }
        (out, None)
    }

    /// All entries in `(key asc, seq desc)` order.
    pub fn iter(&self) -> impl Iterator<Item = Entry> + '_ {
        self.map.iter().map(|e| e.value().clone())
    }
}

/// Snapshot range cursor over a shared memtable that does not borrow it.
pub struct MemtableIter {
    mem: std::sync::Arc<Memtable>,
    high: Key,
    horizon: SeqNo,
    next: Option<(Key, u64)>,
    buf: std::vec::IntoIter<Entry>,
}

impl MemtableIter {
    pub fn new(mem: std::sync::Arc<Memtable>, low: Key, high: Key, horizon: SeqNo) -> Self {
        let next = if low <= high { Some((low, 0)) } else { None };
        MemtableIter {
            mem,
            high,
            horizon,
            next,
            buf: Vec::new().into_iter(),
        }
    }
}

impl Iterator for MemtableIter {
    type Item = Entry;

    fn next(&mut self) -> Option<Entry> {
        loop {
            if let Some(e) = self.buf.next() {
                return Some(e);
            }
            let from = self.next.take()?;
            let (batch, next) = self.mem.batch(from, self.high, self.horizon, SCAN_BATCH);
            self.next = next;
            self.buf = batch.into_iter();
        }
    }
}
