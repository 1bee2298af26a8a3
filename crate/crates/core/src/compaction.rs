//! Job selection and CG-local merges between adjacent levels.

use std::collections::HashSet;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use crate::entry::{Entry, Resolver};
use crate::error::Result;
use crate::manifest::FileSlot;
use crate::schema::{ColumnSet, Key, LayoutConfig, Schema, TreeParams};
use crate::sst::{sst_path, SstBuilder, SstMeta, SstOptions, SstReader};
use crate::version::{RunIter, Version};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, serde::Serialize, serde::Deserialize)]
pub enum CompactionPriority {
    /// Most overflowing level by capacity ratio, then its most overflowing
    /// column group. Whole runs move down, so each job moves the oldest data
    /// of its group.
    #[default]
    ByAge,
    /// Largest absolute overflow in entries.
    BySize,
}

/// Merge of one column group at `level` into its children at `level + 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompactionJob {
    pub level: usize,
    pub group: usize,
    /// Level-0 runs consumed (Level-0 jobs only).
    pub level0_runs: Vec<u64>,
    pub children: Vec<usize>,
}

impl CompactionJob {
    /// `(level, group)` pairs the job reads or rewrites.
    pub fn reservations(&self) -> Vec<(usize, usize)> {
        let mut out = vec![(self.level, self.group)];
        out.extend(self.children.iter().map(|&k| (self.level + 1, k)));
        out
    }
}

/// Overflow ratio of one group: entries over the level capacity in
/// entries. Capacity is split across groups in proportion to
/// `1 + cg_size`, and a group's size is measured in the same units
/// (`entries * (1 + cg_size) * dt_size`), so the ratio reduces to this.
fn group_ratio(version: &Version, params: &TreeParams, level: usize, group: usize) -> f64 {
    version.group_entries(level, group) as f64 / params.level_capacity_entries(level)
}

/// Overflow ratio of a whole level (Level-0: runs over the run limit).
pub fn level_ratio(version: &Version, params: &TreeParams, level: usize) -> f64 {
    if level == 0 {
        return version.level0().len() as f64 / params.level0_max_runs as f64;
    }
    let groups = version.layout().level(level);
    let weight: usize = groups.iter().map(|g| 1 + g.len()).sum();
    let size: f64 = groups
        .iter()
        .enumerate()
        .map(|(j, g)| version.group_entries(level, j) as f64 * (1 + g.len()) as f64)
        .sum();
    size / (params.level_capacity_entries(level) * weight as f64)
}

/// Picks the next job, skipping groups in `busy`. The deepest level never
/// compacts. Ties go to the lowest level, then the lowest group index.
pub fn pick_compaction(
    version: &Version,
    params: &TreeParams,
    priority: CompactionPriority,
    busy: &HashSet<(usize, usize)>,
) -> Option<CompactionJob> {
    let layout = version.layout();
    let depth = layout.depth();
    let free = |job: &CompactionJob| job.reservations().iter().all(|r| !busy.contains(r));
    // (score, job); first strictly greater score wins.
    let mut best: Option<(f64, CompactionJob)> = None;
    let mut consider = |score: f64, job: CompactionJob| {
        if best.as_ref().is_none_or(|(s, _)| score > *s) {
            best = Some((score, job));
        }
    };
    let l0 = version.level0();
    if l0.len() > params.level0_max_runs && depth >= 1 {
        let job = CompactionJob {
            level: 0,
            group: 0,
            level0_runs: l0.iter().map(|r| r.id).collect(),
            children: (0..layout.groups_at(1)).collect(),
        };
        if free(&job) {
            let score = match priority {
                CompactionPriority::ByAge => level_ratio(version, params, 0),
                CompactionPriority::BySize => {
                    let entries = version.group_entries(0, 0) as f64;
                    entries * (l0.len() - params.level0_max_runs) as f64 / l0.len() as f64
                }
            };
            consider(score, job);
        }
    }
    for level in 1..depth {
        let cap = params.level_capacity_entries(level);
        let mut pick: Option<(f64, usize)> = None;
        for group in 0..layout.groups_at(level) {
            let entries = version.group_entries(level, group) as f64;
            if entries <= cap {
                continue;
            }
            let children = layout.children(level, group);
            if busy.contains(&(level, group))
                || children.iter().any(|&k| busy.contains(&(level + 1, k)))
            {
                continue;
            }
            let score = match priority {
                CompactionPriority::ByAge => group_ratio(version, params, level, group),
                CompactionPriority::BySize => {
                    (entries - cap) * (1 + layout.level(level)[group].len()) as f64
                }
            };
            if pick.is_none_or(|(s, _)| score > s) {
                pick = Some((score, group));
            }
        }
        if let Some((group_score, group)) = pick {
            let score = match priority {
                CompactionPriority::ByAge => level_ratio(version, params, level),
                CompactionPriority::BySize => group_score,
            };
            consider(
                score,
                CompactionJob {
                    level,
                    group,
                    level0_runs: Vec::new(),
                    children: layout.children(level, group),
                },
            );
        }
    }
    best.map(|(_, job)| job)
}

/// Settings shared by flushes and compactions for writing tables.
pub(crate) struct TableWriterConfig<'a> {
    pub dir: &'a Path,
    pub schema: &'a Schema,
    pub params: &'a TreeParams,
    pub target_bytes: usize,
    pub bloom_bits_per_key: usize,
    pub sync: bool,
    pub next_file_id: &'a AtomicU64,
}

/// Writes one sorted run, cutting a new table whenever the current one
/// reaches the target size.
pub(crate) struct RunWriter<'a> {
    cfg: &'a TableWriterConfig<'a>,
    level: u32,
    group: ColumnSet,
    opts: SstOptions,
    current: Option<SstBuilder>,
    finished: Vec<SstMeta>,
    pub entries: u64,
}

impl<'a> RunWriter<'a> {
    pub fn new(cfg: &'a TableWriterConfig<'a>, level: usize, group: ColumnSet) -> Result<Self> {
        let block_entries = crate::schema::entries_per_block(cfg.schema, cfg.params, group)?;
        Ok(RunWriter {
            cfg,
            level: level as u32,
            group,
            opts: SstOptions {
                block_entries,
                block_bytes: cfg.params.block_bytes,
                bloom_bits_per_key: cfg.bloom_bits_per_key,
                sync: cfg.sync,
            },
            current: None,
            finished: Vec::new(),
            entries: 0,
        })
    }

    pub fn add(&mut self, entry: &Entry) -> Result<()> {
        if let Some(b) = &self.current {
            // Cut only between keys so every key lives in one table.
            if b.estimated_size() >= self.cfg.target_bytes as u64 && b.last_key() != Some(entry.key)
            {
                let b = self.current.take().unwrap();
                if let Some(meta) = b.finish()? {
                    self.finished.push(meta);
                }
            }
        }
        let b = match &mut self.current {
            Some(b) => b,
            None => {
                let id = self.cfg.next_file_id.fetch_add(1, Ordering::SeqCst);
                self.current.insert(SstBuilder::new(
                    self.cfg.dir,
                    id,
                    self.level,
                    self.group,
                    self.opts.clone(),
                ))
            }
        };
        b.add(entry)?;
        self.entries += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<Vec<SstMeta>> {
        if let Some(b) = self.current.take() {
            if let Some(meta) = b.finish()? {
                self.finished.push(meta);
            }
        }
        Ok(std::mem::take(&mut self.finished))
    }

    /// Removes every file written so far.
    pub fn abandon(mut self) {
        if let Some(b) = self.current.take() {
            b.abandon();
        }
        remove_tables(self.cfg.dir, &self.finished);
    }
}

pub(crate) fn remove_tables(dir: &Path, metas: &[SstMeta]) {
    for m in metas {
        let _ = std::fs::remove_file(sst_path(dir, m.file_id));
    }
}

pub(crate) fn open_tables(dir: &Path, metas: &[SstMeta]) -> Result<Vec<Arc<SstReader>>> {
    metas
        .iter()
        .map(|m| SstReader::open(dir, m.file_id))
        .collect()
}

/// Outcome of a merge, ready to be installed.
pub(crate) struct MergeOutput {
    /// New tables per child group index.
    pub outputs: Vec<(usize, Vec<SstMeta>)>,
    pub removed: Vec<(FileSlot, Arc<SstReader>)>,
    pub bytes_read: u64,
    pub bytes_written: u64,
    pub model_bytes: u64,
    pub block_reads: u64,
    pub entries_written: u64,
}

struct Source {
    scope: ColumnSet,
    iter: RunIter,
    head: Option<Entry>,
}

impl Source {
    fn advance(&mut self) -> Result<()> {
        self.head = self.iter.next().transpose()?;
        Ok(())
    }
}

/// Executes `job` against `version`, writing the child runs of
/// `level + 1`.
pub(crate) fn run_merge(
    cfg: &TableWriterConfig<'_>,
    version: &Version,
    job: &CompactionJob,
) -> Result<MergeOutput> {
    let layout: &LayoutConfig = version.layout();
    let target = job.level + 1;
    let bottom = target == layout.depth();
    let all = cfg.schema.all_columns();
    let mut removed = Vec::new();
    let mut parents = Vec::new();
    if job.level == 0 {
        for r in version
            .level0()
            .iter()
            .filter(|r| job.level0_runs.contains(&r.id))
        {
            parents.push(Source {
                scope: all,
                iter: r.run.iter(0, Key::MAX),
                head: None,
            });
            for t in r.run.tables() {
                removed.push((
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
    } else {
        let run = version.run(job.level, job.group);
        parents.push(Source {
            scope: layout.level(job.level)[job.group],
            iter: run.iter(0, Key::MAX),
            head: None,
        });
        for t in run.tables() {
            removed.push((slot(job.level, job.group, t), Arc::clone(t)));
        }
    }
    let mut children = Vec::new();
    for &k in &job.children {
        let run = version.run(target, k);
        children.push(Source {
            scope: layout.level(target)[k],
            iter: run.iter(0, Key::MAX),
            head: None,
        });
        for t in run.tables() {
            removed.push((slot(target, k, t), Arc::clone(t)));
        }
    }
    let bytes_read = removed.iter().map(|(_, t)| t.meta().file_size).sum();

    let mut writers = Vec::with_capacity(children.len());
    for c in &children {
        writers.push(RunWriter::new(cfg, target, c.scope)?);
    }
    let result = merge_loop(&mut parents, &mut children, &mut writers, bottom);
    let block_reads = parents
        .iter()
        .chain(children.iter())
        .map(|s| s.iter.block_reads())
        .sum();
    if let Err(e) = result {
        for w in writers {
            w.abandon();
        }
        return Err(e);
    }
    let dt = cfg.schema.dt_size() as u64;
    let mut outputs = Vec::new();
    let mut model_bytes = 0;
    let mut entries_written = 0;
    let mut failed = None;
    for (w, &k) in writers.into_iter().zip(&job.children) {
        let width = 1 + layout.level(target)[k].len() as u64;
        let n = w.entries;
        if failed.is_some() {
            w.abandon();
            continue;
        }
        match w.finish() {
            Ok(metas) => {
                model_bytes += n * width * dt;
                entries_written += n;
                outputs.push((k, metas));
            }
            Err(e) => failed = Some(e),
        }
    }
    if let Some(e) = failed {
        for (_, metas) in &outputs {
            remove_tables(cfg.dir, metas);
        }
        return Err(e);
    }
    let bytes_written = outputs
        .iter()
        .flat_map(|(_, m)| m)
        .map(|m| m.file_size)
        .sum();
    Ok(MergeOutput {
        outputs,
        removed,
        bytes_read,
        bytes_written,
        model_bytes,
        block_reads,
        entries_written,
    })
}

fn slot(level: usize, group: usize, t: &SstReader) -> FileSlot {
    FileSlot {
        level: level as u32,
        group: group as u32,
        run: 0,
        file_id: t.file_id(),
    }
}

fn merge_loop(
    parents: &mut [Source],
    children: &mut [Source],
    writers: &mut [RunWriter<'_>],
    bottom: bool,
) -> Result<()> {
    for s in parents.iter_mut().chain(children.iter_mut()) {
        s.advance()?;
    }
    let mut versions: Vec<(ColumnSet, Entry)> = Vec::new();
    let mut resolver = Resolver::new(ColumnSet::EMPTY);
    loop {
        let Some(key) = parents
            .iter()
            .chain(children.iter())
            .filter_map(|s| s.head.as_ref().map(|e| e.key))
            .min()
        else {
            return Ok(());
        };
        // Parent versions, newest source first.
        versions.clear();
        for s in parents.iter_mut() {
            while s.head.as_ref().is_some_and(|e| e.key == key) {
                versions.push((s.scope, s.head.take().unwrap()));
                s.advance()?;
            }
        }
        for (c, w) in children.iter_mut().zip(writers.iter_mut()) {
            resolver.reset(c.scope);
            for (scope, e) in &versions {
                if resolver.is_done() {
                    break;
                }
                resolver.apply(*scope, e);
            }
            while c.head.as_ref().is_some_and(|e| e.key == key) {
                let e = c.head.take().unwrap();
                if !resolver.is_done() {
                    resolver.apply(c.scope, &e);
                }
                c.advance()?;
            }
            if let Some(out) = resolver.merged_entry(key, bottom) {
                w.add(&out)?;
            }
        }
    }
}

/// Collapses newest-first versions of each key into one full-row-scope
/// entry per key, as written by a flush.
pub(crate) fn collapse_versions(
    entries: impl Iterator<Item = Entry>,
    all: ColumnSet,
    mut emit: impl FnMut(Entry) -> Result<()>,
) -> Result<()> {
    let mut resolver = Resolver::new(all);
    let mut current: Option<Key> = None;
    for e in entries {
        if current != Some(e.key) {
            if let Some(k) = current {
                if let Some(out) = resolver.merged_entry(k, false) {
                    emit(out)?;
                }
            }
            resolver.reset(all);
            current = Some(e.key);
        }
        if !resolver.is_done() {
            resolver.apply(all, &e);
        }
    }
    if let Some(k) = current {
        if let Some(out) = resolver.merged_entry(k, false) {
            emit(out)?;
        }
    }
    Ok(())
}
