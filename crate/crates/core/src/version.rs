//! Immutable snapshot of the on-disk tree: Level-0 runs plus one sorted run
//! per column group on every deeper level.

use std::sync::Arc;

use crate::entry::{Entry, SeqNo};
use crate::error::{Error, Result};
use crate::manifest::FileSlot;
use crate::schema::{validate_layout, ColumnSet, Key, LayoutConfig, Schema};
use crate::sst::{SstIter, SstReader};

/// A sorted run: tables with disjoint key ranges in ascending order.
#[derive(Clone, Debug, Default)]
pub struct Run {
    tables: Vec<Arc<SstReader>>,
}

impl Run {
    pub fn new(mut tables: Vec<Arc<SstReader>>) -> Self {
        tables.sort_by_key(|t| t.meta().min_key);
        Run { tables }
    }

    pub fn tables(&self) -> &[Arc<SstReader>] {
        &self.tables
    }

    pub fn is_empty(&self) -> bool {
        self.tables.is_empty()
    }

    pub fn entries(&self) -> u64 {
        self.tables.iter().map(|t| t.meta().entries).sum()
    }

    pub fn file_bytes(&self) -> u64 {
        self.tables.iter().map(|t| t.meta().file_size).sum()
    }

    /// The table whose key range contains `key`.
    pub fn table_for(&self, key: Key) -> Option<&Arc<SstReader>> {
        let i = self.tables.partition_point(|t| t.meta().max_key < key);
        self.tables.get(i).filter(|t| t.meta().min_key <= key)
    }

    /// Versions of `key` stored in this run, newest first.
    pub fn point_probe(&self, key: Key, reads: &mut u64) -> Result<Vec<Entry>> {
        match self.table_for(key) {
            Some(t) => t.point_probe(key, reads),
            None => Ok(Vec::new()),
        }
    }

    /// Filter-only membership test; reads no data block.
    pub fn may_contain(&self, key: Key) -> bool {
        self.table_for(key).is_some_and(|t| t.may_contain(key))
    }

    pub fn iter(&self, low: Key, high: Key) -> RunIter {
        let start = self.tables.partition_point(|t| t.meta().max_key < low);
        RunIter {
            tables: self.tables.clone(),
            next_table: start,
            low,
            high,
            current: None,
            reads: 0,
        }
    }

    fn check(&self, what: &str) -> Result<()> {
        for w in self.tables.windows(2) {
            if w[0].meta().max_key >= w[1].meta().min_key {
                return Err(Error::InvalidArgument(format!(
                    "{what}: tables {} and {} overlap",
                    w[0].file_id(),
                    w[1].file_id()
                )));
            }
        }
        Ok(())
    }
}

/// Ordered iterator over the entries of a run within `[low, high]`.
pub struct RunIter {
    tables: Vec<Arc<SstReader>>,
    next_table: usize,
    low: Key,
    high: Key,
    current: Option<SstIter>,
    reads: u64,
}

impl RunIter {
    /// Data blocks read so far.
    pub fn block_reads(&self) -> u64 {
        self.reads + self.current.as_ref().map_or(0, |c| c.block_reads())
    }
}

impl Iterator for RunIter {
    type Item = Result<Entry>;

    fn next(&mut self) -> Option<Result<Entry>> {
        loop {
            if let Some(cur) = self.current.as_mut() {
                if let Some(item) = cur.next() {
                    return Some(item);
                }
                self.reads += cur.block_reads();
                self.current = None;
            }
            let t = self.tables.get(self.next_table)?;
            if self.low > self.high || t.meta().min_key > self.high {
                self.next_table = self.tables.len();
                return None;
            }
            self.current = Some(t.scan(self.low, self.high));
            self.next_table += 1;
        }
    }
}

#[derive(Clone, Debug)]
pub struct Level0Run {
    /// Larger ids are newer.
    pub id: u64,
    pub run: Run,
}

#[derive(Clone, Debug)]
pub struct Version {
    layout: Arc<LayoutConfig>,
    /// Newest first.
    level0: Vec<Level0Run>,
    /// `groups[level][group]`; index 0 is unused.
    groups: Vec<Vec<Run>>,
}

impl Version {
    pub fn empty(layout: Arc<LayoutConfig>) -> Self {
        let groups = (0..layout.num_levels())
            .map(|i| {
                if i == 0 {
                    Vec::new()
                } else {
                    vec![Run::default(); layout.groups_at(i)]
                }
            })
            .collect();
        Version {
            layout,
            level0: Vec::new(),
            groups,
        }
    }

    /// Builds a version from opened tables and their slots.
    pub fn from_tables(
        layout: Arc<LayoutConfig>,
        tables: Vec<(FileSlot, Arc<SstReader>)>,
    ) -> Result<Self> {
        let mut v = Version::empty(layout);
        let mut l0: std::collections::BTreeMap<u64, Vec<Arc<SstReader>>> = Default::default();
        let mut grouped: Vec<Vec<Vec<Arc<SstReader>>>> =
            v.groups.iter().map(|g| vec![Vec::new(); g.len()]).collect();
        for (slot, t) in tables {
            let (level, group) = (slot.level as usize, slot.group as usize);
            if level == 0 {
                l0.entry(slot.run).or_default().push(t);
            } else if level < grouped.len() && group < grouped[level].len() {
                grouped[level][group].push(t);
            } else {
                return Err(Error::InvalidArgument(format!(
                    "table {} placed outside the layout at level {level} group {group}",
                    slot.file_id
                )));
            }
        }
        v.level0 = l0
            .into_iter()
            .rev()
            .map(|(id, tables)| Level0Run {
                id,
                run: Run::new(tables),
            })
            .collect();
        for (level, groups) in grouped.into_iter().enumerate() {
            for (g, tables) in groups.into_iter().enumerate() {
                v.groups[level][g] = Run::new(tables);
            }
        }
        Ok(v)
    }

    pub fn layout(&self) -> &Arc<LayoutConfig> {
        &self.layout
    }

    /// Number of levels below Level-0.
    pub fn depth(&self) -> usize {
        self.layout.depth()
    }

    pub fn level0(&self) -> &[Level0Run] {
        &self.level0
    }

    pub fn run(&self, level: usize, group: usize) -> &Run {
        &self.groups[level][group]
    }

    pub fn runs_at(&self, level: usize) -> &[Run] {
        &self.groups[level]
    }

    /// Entries stored in one column-group run (`level >= 1`) or in all of
    /// Level-0 (`level == 0`).
    pub fn group_entries(&self, level: usize, group: usize) -> u64 {
        if level == 0 {
            self.level0.iter().map(|r| r.run.entries()).sum()
        } else {
            self.groups[level][group].entries()
        }
    }

    /// All live tables with their placement.
    pub fn tables(&self) -> Vec<(FileSlot, Arc<SstReader>)> {
        let mut out = Vec::new();
        for r in &self.level0 {
            for t in r.run.tables() {
                out.push((
                    FileSlot {
                        level: 0,
                        group: 0,
                        run: r.id,
                        file_id: t.file_id(),
                    },
                    Arc::clone(t),
                ));
            }
        }
        for (level, groups) in self.groups.iter().enumerate() {
            for (g, run) in groups.iter().enumerate() {
                for t in run.tables() {
                    out.push((
                        FileSlot {
                            level: level as u32,
                            group: g as u32,
                            run: 0,
                            file_id: t.file_id(),
                        },
                        Arc::clone(t),
                    ));
                }
            }
        }
        out
    }

    pub(crate) fn add_level0_run(&mut self, id: u64, tables: Vec<Arc<SstReader>>) {
        let pos = self.level0.partition_point(|r| r.id > id);
        self.level0.insert(
            pos,
            Level0Run {
                id,
                run: Run::new(tables),
            },
        );
    }

    pub(crate) fn remove_level0_runs(&mut self, ids: &[u64]) {
        self.level0.retain(|r| !ids.contains(&r.id));
    }

    pub(crate) fn set_run(&mut self, level: usize, group: usize, tables: Vec<Arc<SstReader>>) {
        self.groups[level][group] = Run::new(tables);
    }

    /// Smallest sequence number stored anywhere on `level`.
    pub fn min_seq(&self, level: usize) -> Option<SeqNo> {
        let tables: Vec<&Arc<SstReader>> = if level == 0 {
            self.level0.iter().flat_map(|r| r.run.tables()).collect()
        } else {
            self.groups[level].iter().flat_map(|r| r.tables()).collect()
        };
        tables.iter().map(|t| t.meta().min_seq).min()
    }

    /// Structural checks: valid layout, every table tagged with its group,
    /// disjoint sorted runs.
    pub fn check(&self, schema: &Schema) -> Result<()> {
        validate_layout(&self.layout, schema)?;
        for r in &self.level0 {
            r.run.check(&format!("level 0 run {}", r.id))?;
            for t in r.run.tables() {
                if t.group() != schema.all_columns() {
                    return Err(Error::InvalidArgument(format!(
                        "level 0 table {} is not full-row",
                        t.file_id()
                    )));
                }
            }
        }
        for (level, runs) in self.groups.iter().enumerate().skip(1) {
            for (g, run) in runs.iter().enumerate() {
                let group: ColumnSet = self.layout.level(level)[g];
                run.check(&format!("level {level} group {g}"))?;
                for t in run.tables() {
                    if t.group() != group || t.meta().level as usize != level {
                        return Err(Error::InvalidArgument(format!(
                            "table {} stored as level {level} group {group} but built for level {} group {}",
                            t.file_id(),
                            t.meta().level,
                            t.group()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
