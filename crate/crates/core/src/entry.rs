//! Versioned entries and the per-column resolution rule used by reads,
//! flushes and compactions.
//!
//! Resolution scans versions newest to oldest. Every entry carries a *scope*:
//! the columns of the column group it was stored in (all columns for
//! memtables and Level-0). Within its scope a full row or a tombstone is a
//! barrier for every column, while a partial row only settles the columns it
//! carries.

use crate::codec::{self, Reader};
use crate::schema::{ColumnId, ColumnSet, Key, Value};

pub type SeqNo = u64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum EntryKind {
    /// Row image. Columns missing from `present` are null, which only happens
    /// after a delete was merged with later partial updates.
    Full = 0,
    Partial = 1,
    Tombstone = 2,
}

impl EntryKind {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(EntryKind::Full),
            1 => Some(EntryKind::Partial),
            2 => Some(EntryKind::Tombstone),
            _ => None,
        }
    }

    pub fn is_barrier(self) -> bool {
        !matches!(self, EntryKind::Partial)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Entry {
    pub key: Key,
    pub seq: SeqNo,
    pub kind: EntryKind,
    /// Columns carrying a value.
    pub present: ColumnSet,
    /// Values of `present`, in ascending column order.
    pub values: Vec<Value>,
}

impl Entry {
    pub fn full(key: Key, seq: SeqNo, row: &[Value]) -> Self {
        Entry {
            key,
            seq,
            kind: EntryKind::Full,
            present: ColumnSet::full(row.len()),
            values: row.to_vec(),
        }
    }

    /// Partial row from `(column, value)` pairs in any order. Later pairs for
    /// the same column win.
    pub fn partial(key: Key, seq: SeqNo, updates: &[(ColumnId, Value)]) -> Self {
        let mut sorted: Vec<(ColumnId, Value)> = Vec::with_capacity(updates.len());
        for &(c, v) in updates {
            match sorted.iter_mut().find(|(col, _)| *col == c) {
                Some(slot) => slot.1 = v,
                None => sorted.push((c, v)),
            }
        }
        sorted.sort_by_key(|&(c, _)| c);
        Entry {
            key,
            seq,
            kind: EntryKind::Partial,
            present: sorted.iter().map(|&(c, _)| c).collect(),
            values: sorted.into_iter().map(|(_, v)| v).collect(),
        }
    }

    pub fn tombstone(key: Key, seq: SeqNo) -> Self {
        Entry {
            key,
            seq,
            kind: EntryKind::Tombstone,
            present: ColumnSet::EMPTY,
            values: Vec::new(),
        }
    }

    pub fn value(&self, column: ColumnId) -> Option<Value> {
        self.present.rank(column).map(|r| self.values[r])
    }

    pub fn iter_values(&self) -> impl Iterator<Item = (ColumnId, Value)> + '_ {
        self.present.iter().zip(self.values.iter().copied())
    }

    /// Copy restricted to `group`; `None` for a partial with no column in it.
    pub fn restrict(&self, group: ColumnSet) -> Option<Entry> {
        let present = self.present.intersect(group);
        if self.kind == EntryKind::Partial && present.is_empty() {
            return None;
        }
        let values = if present == self.present {
            self.values.clone()
        } else {
            self.iter_values()
                .filter(|(c, _)| present.contains(*c))
                .map(|(_, v)| v)
                .collect()
        };
        Some(Entry {
            key: self.key,
            seq: self.seq,
            kind: self.kind,
            present,
            values,
        })
    }

    /// Approximate in-memory footprint used for memtable accounting.
    pub fn approximate_size(&self) -> usize {
        footprint(self.values.len())
    }

    /// Self-describing encoding used by the write-ahead log.
    pub fn encode(&self, buf: &mut Vec<u8>) {
        codec::put_u64(buf, self.key);
        codec::put_varint(buf, self.seq);
        buf.push(self.kind as u8);
        codec::put_varint128(buf, self.present.bits());
        for &v in &self.values {
            codec::put_u32(buf, v);
        }
    }

    pub fn decode(r: &mut Reader<'_>) -> Option<Entry> {
        let key = r.u64()?;
        let seq = r.varint()?;
        let kind = EntryKind::from_u8(r.u8()?)?;
        let present = ColumnSet::from_bits(r.varint128()?);
        let mut values = Vec::with_capacity(present.len());
        for _ in 0..present.len() {
            values.push(r.u32()?);
        }
        if kind == EntryKind::Tombstone && !present.is_empty() {
            return None;
        }
        Some(Entry {
            key,
            seq,
            kind,
            present,
            values,
        })
    }
}

/// Memtable footprint of an entry carrying `values` values.
pub fn footprint(values: usize) -> usize {
    8 + 8 + 1 + 16 + 4 * values + 32
}

/// Result of a projected read: values for the columns that have one.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Row {
    pub columns: ColumnSet,
    pub values: Vec<Value>,
}

impl Row {
    pub fn get(&self, column: ColumnId) -> Option<Value> {
        self.columns.rank(column).map(|r| self.values[r])
    }

    pub fn iter(&self) -> impl Iterator<Item = (ColumnId, Value)> + '_ {
        self.columns.iter().zip(self.values.iter().copied())
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

/// Accumulates newest-first versions into per-column results.
#[derive(Clone, Debug)]
pub struct Resolver {
    wanted: ColumnSet,
    unresolved: ColumnSet,
    found: ColumnSet,
    values: Vec<(ColumnId, Value)>,
    newest_seq: Option<SeqNo>,
}

impl Resolver {
    pub fn new(wanted: ColumnSet) -> Self {
        Resolver {
            wanted,
            unresolved: wanted,
            found: ColumnSet::EMPTY,
            values: Vec::new(),
            newest_seq: None,
        }
    }

    pub fn reset(&mut self, wanted: ColumnSet) {
        self.wanted = wanted;
        self.unresolved = wanted;
        self.found = ColumnSet::EMPTY;
        self.values.clear();
        self.newest_seq = None;
    }

    /// Applies the next-older version stored with column scope `scope`.
    /// Returns true if it settled any column.
    pub fn apply(&mut self, scope: ColumnSet, entry: &Entry) -> bool {
        let relevant = self.unresolved.intersect(scope);
        if relevant.is_empty() {
            return false;
        }
        let hit = entry.present.intersect(relevant);
        if !hit.is_empty() {
            for (c, v) in entry.iter_values() {
                if hit.contains(c) {
                    self.values.push((c, v));
                }
            }
            self.found = self.found.union(hit);
        }
        let settled = if entry.kind.is_barrier() {
            relevant
        } else {
            hit
        };
        if settled.is_empty() {
            return false;
        }
        self.unresolved = self.unresolved.difference(settled);
        self.newest_seq.get_or_insert(entry.seq);
        true
    }

    pub fn is_done(&self) -> bool {
        self.unresolved.is_empty()
    }

    /// Columns not yet settled by any version.
    pub fn unresolved(&self) -> ColumnSet {
        self.unresolved
    }

    pub fn found(&self) -> ColumnSet {
        self.found
    }

    /// The resolved row, `None` when no wanted column has a live value.
    pub fn row(&self) -> Option<Row> {
        if self.found.is_empty() {
            return None;
        }
        let mut pairs = self.values.clone();
        pairs.sort_unstable_by_key(|&(c, _)| c);
        Some(Row {
            columns: self.found,
            values: pairs.into_iter().map(|(_, v)| v).collect(),
        })
    }

    /// Collapses the applied versions into one entry over `wanted`.
    ///
    /// With `bottom` set nothing older exists, so unsettled columns are null
    /// and deletions disappear entirely.
    pub fn merged_entry(&self, key: Key, bottom: bool) -> Option<Entry> {
        let seq = self.newest_seq?;
        let barrier = bottom || self.unresolved.is_empty();
        let kind = match (barrier, self.found.is_empty()) {
            (true, true) if bottom => return None,
            (true, true) => EntryKind::Tombstone,
            (true, false) => EntryKind::Full,
            (false, true) => return None,
            (false, false) => EntryKind::Partial,
        };
        let row = self.row().unwrap_or_default();
        Some(Entry {
            key,
            seq,
            kind,
            present: row.columns,
            values: row.values,
        })
    }
}
