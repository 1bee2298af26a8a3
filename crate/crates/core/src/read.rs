//! Projection-aware point reads and snapshot range scans.
//!
//! A scan merges one stream per memtable, one per Level-0 run and, for each
//! deeper level, one stream per column group that intersects the
//! projection. Streams of the same level together form that level's
//! column-merging view; the heap across all of them is the level-merging
//! step. Versions are applied newest-source-first through a [`Resolver`].

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use crate::engine::{Engine, Inner};
use crate::entry::{Entry, Resolver, Row, SeqNo};
use crate::error::{Error, Result};
use crate::memtable::MemtableIter;
use crate::schema::{ColumnSet, Key};
use crate::version::RunIter;

/// I/O performed by one query.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct QueryStats {
    /// Data-block reads per `[level][group]`.
    pub block_reads: Vec<Vec<u64>>,
    /// Deepest level probed; `None` when memtables answered the query.
    pub deepest_level: Option<usize>,
    /// Scans: returned keys attributed to the level of their newest
    /// contributing version.
    pub selected: Vec<u64>,
    /// Scans: returned keys whose newest version was in a memtable.
    pub memtable_selected: u64,
}

impl QueryStats {
    fn new(inner: &Inner) -> Self {
        QueryStats {
            block_reads: inner
                .layout
                .levels()
                .iter()
                .map(|g| vec![0; g.len()])
                .collect(),
            deepest_level: None,
            selected: vec![0; inner.layout.num_levels()],
            memtable_selected: 0,
        }
    }

    pub fn total_block_reads(&self) -> u64 {
        self.block_reads.iter().flatten().sum()
    }

    pub fn level_block_reads(&self, level: usize) -> u64 {
        self.block_reads[level].iter().sum()
    }
}

impl Engine {
    /// Values of the columns in `projection` for `key`, or `None` when none
    /// of them has a live value.
    pub fn get(&self, key: Key, projection: ColumnSet) -> Result<Option<Row>> {
        self.get_with_stats(key, projection).map(|(row, _)| row)
    }

    pub fn get_with_stats(
        &self,
        key: Key,
        projection: ColumnSet,
    ) -> Result<(Option<Row>, QueryStats)> {
        let inner = &self.inner;
        check_projection(inner, projection)?;
        let sv = inner.current();
        let horizon = inner.visible_seq.load(Ordering::Acquire);
        let all = inner.opts.schema.all_columns();
        let mut qs = QueryStats::new(inner);
        let mut res = Resolver::new(projection);

        'mem: for mem in std::iter::once(&sv.mem).chain(sv.imm.iter()) {
            for e in mem.get(key, horizon) {
                res.apply(all, &e);
                if res.is_done() {
                    break 'mem;
                }
            }
        }
        let version = &sv.version;
        let mut result: Result<()> = Ok(());
        if !res.is_done() {
            result = (|| {
                qs.deepest_level = Some(0);
                for r in version.level0() {
                    let mut reads = 0;
                    let found = r.run.point_probe(key, &mut reads);
                    qs.block_reads[0][0] += reads;
                    for e in found? {
                        res.apply(all, &e);
                    }
                    if res.is_done() {
                        return Ok(());
                    }
                }
                for level in 1..=version.depth() {
                    qs.deepest_level = Some(level);
                    for (j, &group) in version.layout().level(level).iter().enumerate() {
                        if !group.intersects(res.unresolved()) {
                            continue;
                        }
                        let mut reads = 0;
                        let found = version.run(level, j).point_probe(key, &mut reads);
                        qs.block_reads[level][j] += reads;
                        for e in found? {
                            res.apply(group, &e);
                        }
                        if res.is_done() {
                            return Ok(());
                        }
                    }
                }
                Ok(())
            })();
        }
        for (level, groups) in qs.block_reads.iter().enumerate() {
            for (j, &n) in groups.iter().enumerate() {
                inner.stats.add_block_reads(level, j, n);
            }
        }
        result?;
        if let (Some(p), Some(d)) = (&inner.profiler, qs.deepest_level) {
            p.record_read(projection, d);
        }
        Ok((res.row(), qs))
    }

    /// Snapshot scan over `low..=high` returning rows in ascending key order.
    pub fn scan(&self, low: Key, high: Key, projection: ColumnSet) -> Result<ScanIter> {
        let inner = &self.inner;
        check_projection(inner, projection)?;
        let sv = inner.current();
        let horizon: SeqNo = inner.visible_seq.load(Ordering::Acquire);
        let all = inner.opts.schema.all_columns();
        let mut parts = Vec::new();
        for mem in std::iter::once(&sv.mem).chain(sv.imm.iter()) {
            parts.push(Part {
                scope: all,
                level: None,
                group: 0,
                src: PartSource::Mem(MemtableIter::new(Arc::clone(mem), low, high, horizon)),
                head: None,
            });
        }
        let version = &sv.version;
        for r in version.level0() {
            parts.push(Part {
                scope: all,
                level: Some(0),
                group: 0,
                src: PartSource::Run(r.run.iter(low, high)),
                head: None,
            });
        }
        for level in 1..=version.depth() {
            for (j, &group) in version.layout().level(level).iter().enumerate() {
                if group.intersects(projection) {
                    parts.push(Part {
                        scope: group,
                        level: Some(level),
                        group: j,
                        src: PartSource::Run(version.run(level, j).iter(low, high)),
                        head: None,
                    });
                }
            }
        }
        let mut it = ScanIter {
            inner: Arc::clone(inner),
            projection,
            parts,
            heap: BinaryHeap::new(),
            resolver: Resolver::new(projection),
            stats: QueryStats::new(inner),
            started: false,
            finished: false,
            reported: false,
        };
        it.stats.deepest_level = Some(version.depth());
        Ok(it)
    }
}

fn check_projection(inner: &Inner, projection: ColumnSet) -> Result<()> {
    if projection.is_empty() || !inner.opts.schema.contains(projection) {
        return Err(Error::InvalidArgument(format!(
            "invalid projection {projection:?}"
        )));
    }
    Ok(())
}

enum PartSource {
    Mem(MemtableIter),
    Run(RunIter),
}

struct Part {
    scope: ColumnSet,
    /// `None` for memtables.
    level: Option<usize>,
    group: usize,
    src: PartSource,
    head: Option<Entry>,
}

impl Part {
    fn advance(&mut self) -> Result<()> {
        self.head = match &mut self.src {
            PartSource::Mem(m) => m.next(),
            PartSource::Run(r) => r.next().transpose()?,
        };
        Ok(())
    }

    fn block_reads(&self) -> u64 {
        match &self.src {
            PartSource::Mem(_) => 0,
            PartSource::Run(r) => r.block_reads(),
        }
    }
}

/// Ordered, duplicate-free stream of `(key, row)` for a scan. Rows carry
/// only the projected columns that have values.
pub struct ScanIter {
    inner: Arc<Inner>,
    projection: ColumnSet,
    parts: Vec<Part>,
    /// Min-heap of `(key, part index)`; lower index means newer source.
    heap: BinaryHeap<Reverse<(Key, usize)>>,
    resolver: Resolver,
    stats: QueryStats,
    started: bool,
    finished: bool,
    reported: bool,
}

impl ScanIter {
    /// I/O so far.
    pub fn stats(&self) -> QueryStats {
        let mut qs = self.stats.clone();
        for p in &self.parts {
            if let Some(level) = p.level {
                qs.block_reads[level][p.group] += p.block_reads();
            }
        }
        qs
    }

    fn start(&mut self) -> Result<()> {
        self.started = true;
        for (i, p) in self.parts.iter_mut().enumerate() {
            p.advance()?;
            if let Some(e) = &p.head {
                self.heap.push(Reverse((e.key, i)));
            }
        }
        Ok(())
    }

    /// Applies every version of `key` held by part `i` and re-queues it.
    fn consume(&mut self, i: usize, key: Key, newest: &mut Option<Option<usize>>) -> Result<()> {
        let p = &mut self.parts[i];
        while p.head.as_ref().is_some_and(|e| e.key == key) {
            let e = p.head.take().unwrap();
            if !self.resolver.is_done() && self.resolver.apply(p.scope, &e) && newest.is_none() {
                *newest = Some(p.level);
            }
            p.advance()?;
        }
        if let Some(e) = &p.head {
            self.heap.push(Reverse((e.key, i)));
        }
        Ok(())
    }

    fn step(&mut self) -> Result<Option<(Key, Row)>> {
        if !self.started {
            self.start()?;
        }
        while let Some(Reverse((key, i))) = self.heap.pop() {
            self.resolver.reset(self.projection);
            let mut newest = None;
            self.consume(i, key, &mut newest)?;
            while let Some(&Reverse((k, j))) = self.heap.peek() {
                if k != key {
                    break;
                }
                self.heap.pop();
                self.consume(j, key, &mut newest)?;
            }
            if let Some(row) = self.resolver.row() {
                match newest.flatten() {
                    Some(level) => self.stats.selected[level] += 1,
                    None => self.stats.memtable_selected += 1,
                }
                return Ok(Some((key, row)));
            }
        }
        Ok(None)
    }

    fn report(&mut self) {
        if self.reported {
            return;
        }
        self.reported = true;
        let qs = self.stats();
        for (level, groups) in qs.block_reads.iter().enumerate() {
            for (j, &n) in groups.iter().enumerate() {
                self.inner.stats.add_block_reads(level, j, n);
            }
        }
        if let Some(p) = &self.inner.profiler {
            p.record_scan(self.projection, &qs.selected);
        }
    }
}

impl Iterator for ScanIter {
    type Item = Result<(Key, Row)>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.finished {
            return None;
        }
        match self.step() {
            Ok(Some(item)) => Some(Ok(item)),
            Ok(None) => {
                self.finished = true;
                self.report();
                None
            }
            Err(e) => {
                self.finished = true;
                self.report();
                Some(Err(e))
            }
        }
    }
}

impl Drop for ScanIter {
    fn drop(&mut self) {
        self.report();
    }
}
