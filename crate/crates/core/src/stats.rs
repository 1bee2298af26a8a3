//! Engine-wide counters and the statistics snapshot.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::schema::LayoutConfig;

#[derive(Debug)]
pub struct Statistics {
    /// Query data-block reads per `[level][group]`.
    block_reads: Vec<Vec<AtomicU64>>,
    /// Compaction jobs per source `[level][group]`.
    compaction_jobs: Vec<Vec<AtomicU64>>,
    pub(crate) compaction_bytes_read: AtomicU64,
    pub(crate) compaction_bytes_written: AtomicU64,
    /// Entries written by compactions weighted by `(1 + cg_size) * dt_size`.
    pub(crate) compaction_model_bytes: AtomicU64,
    pub(crate) compaction_block_reads: AtomicU64,
    pub(crate) compactions: AtomicU64,
    pub(crate) compaction_micros: AtomicU64,
    pub(crate) flush_bytes_written: AtomicU64,
    pub(crate) flushes: AtomicU64,
    pub(crate) write_stalls: AtomicU64,
}

impl Statistics {
    pub fn new(layout: &LayoutConfig) -> Self {
        Statistics {
            block_reads: layout
                .levels()
                .iter()
                .map(|g| g.iter().map(|_| AtomicU64::new(0)).collect())
                .collect(),
            compaction_jobs: layout
                .levels()
                .iter()
                .map(|g| g.iter().map(|_| AtomicU64::new(0)).collect())
                .collect(),
            compaction_bytes_read: AtomicU64::new(0),
            compaction_bytes_written: AtomicU64::new(0),
            compaction_model_bytes: AtomicU64::new(0),
            compaction_block_reads: AtomicU64::new(0),
            compactions: AtomicU64::new(0),
            compaction_micros: AtomicU64::new(0),
            flush_bytes_written: AtomicU64::new(0),
            flushes: AtomicU64::new(0),
            write_stalls: AtomicU64::new(0),
        }
    }

    pub(crate) fn add_block_reads(&self, level: usize, group: usize, n: u64) {
        if n > 0 {
            self.block_reads[level][group].fetch_add(n, Ordering::Relaxed);
        }
    }

    pub(crate) fn add_compaction_job(&self, level: usize, group: usize) {
        self.compaction_jobs[level][group].fetch_add(1, Ordering::Relaxed);
    }

    pub fn compaction_jobs(&self) -> Vec<Vec<u64>> {
        self.compaction_jobs
            .iter()
            .map(|g| g.iter().map(|c| c.load(Ordering::Relaxed)).collect())
            .collect()
    }

    pub(crate) fn add(counter: &AtomicU64, n: u64) {
        counter.fetch_add(n, Ordering::Relaxed);
    }

    pub fn block_reads(&self) -> Vec<Vec<u64>> {
        self.block_reads
            .iter()
            .map(|g| g.iter().map(|c| c.load(Ordering::Relaxed)).collect())
            .collect()
    }

    pub fn total_block_reads(&self) -> u64 {
        self.block_reads
            .iter()
            .flatten()
            .map(|c| c.load(Ordering::Relaxed))
            .sum()
    }
}

/// Age distribution of one level; ages count sequence numbers elapsed
/// since an entry was written.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AgeHistogram {
    /// Upper bounds of the buckets (ascending).
    pub bounds: Vec<u64>,
    pub counts: Vec<u64>,
    pub median: Option<u64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub level: usize,
    /// Entries per column-group run (Level-0: a single total).
    pub group_entries: Vec<u64>,
    pub group_file_bytes: Vec<u64>,
    pub tables: usize,
    /// Level-0 only.
    pub runs: usize,
    pub capacity_entries: f64,
    pub ages: AgeHistogram,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StatsSnapshot {
    pub last_seq: u64,
    pub block_reads: Vec<Vec<u64>>,
    pub total_block_reads: u64,
    pub compaction_bytes_read: u64,
    pub compaction_bytes_written: u64,
    pub compaction_model_bytes: u64,
    pub compaction_block_reads: u64,
    pub compactions: u64,
    /// Compaction jobs per source `[level][group]`.
    pub compaction_jobs: Vec<Vec<u64>>,
    /// Wall time spent merging.
    pub compaction_micros: u64,
    pub flush_bytes_written: u64,
    pub flushes: u64,
    pub write_stalls: u64,
    pub memtable_entries: u64,
    pub levels: Vec<LevelStats>,
}

impl StatsSnapshot {
    /// Entries stored on disk per level, summed over groups.
    pub fn level_entries(&self) -> Vec<u64> {
        self.levels
            .iter()
            .map(|l| l.group_entries.iter().sum())
            .collect()
    }
}

/// Weighted median and log2-bucketed histogram of `(age, weight)` samples.
pub(crate) fn age_histogram(samples: &mut [(u64, u64)]) -> AgeHistogram {
    if samples.is_empty() {
        return AgeHistogram::default();
    }
    samples.sort_unstable();
    let total: u64 = samples.iter().map(|s| s.1).sum();
    let mut acc = 0;
    let mut median = None;
    for &(age, w) in samples.iter() {
        acc += w;
        if 2 * acc >= total {
            median = Some(age);
            break;
        }
    }
    let top = samples.last().unwrap().0;
    let buckets = 64 - top.leading_zeros() as usize + 1;
    let bounds: Vec<u64> = (0..buckets)
        .map(|b| if b == 0 { 0 } else { (1u64 << b) - 1 })
        .collect();
    let mut counts = vec![0u64; buckets];
    for &(age, w) in samples.iter() {
        let b = bounds.partition_point(|&ub| ub < age);
        counts[b.min(buckets - 1)] += w;
    }
    AgeHistogram {
        bounds,
        counts,
        median,
    }
}
