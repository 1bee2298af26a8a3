//! Run reports and their CSV comparison.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use laser_core::StatsSnapshot;
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};
use crate::generator::QueryClass;
use crate::spec::WorkloadSpec;

pub const REPORT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencySummary {
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub p99_us: f64,
    pub max_us: f64,
}

impl LatencySummary {
    pub fn from_nanos(samples: &mut [u64]) -> Self {
        if samples.is_empty() {
            return LatencySummary::default();
        }
        samples.sort_unstable();
        let n = samples.len();
        let at = |q: f64| samples[((q * n as f64).ceil() as usize).clamp(1, n) - 1] as f64 / 1e3;
        LatencySummary {
            mean_us: samples.iter().map(|&s| s as f64).sum::<f64>() / n as f64 / 1e3,
            p50_us: at(0.5),
            p95_us: at(0.95),
            p99_us: at(0.99),
            max_us: samples[n - 1] as f64 / 1e3,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    pub count: u64,
    /// Data-block reads issued by this class.
    pub block_reads: u64,
    /// Rows returned (reads and scans).
    pub rows: u64,
    pub latency: LatencySummary,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub version: u32,
    pub spec: WorkloadSpec,
    /// Design name when a named design was used.
    pub design: Option<String>,
    pub layout: String,
    pub phase: String,
    pub deterministic: bool,
    /// The run stopped early because of an error.
    pub partial: bool,
    pub error: Option<String>,
    pub runtime_secs: f64,
    pub load_secs: f64,
    pub steady_secs: f64,
    pub classes: BTreeMap<String, ClassReport>,
    /// `(seconds since start, rows inserted)` samples.
    pub insert_timeline: Vec<(f64, u64)>,
    pub insert_throughput: f64,
    /// Sum of Q4 results and of Q5 maxima.
    pub scan_checksum: u64,
    /// Engine statistics at the end of the run.
    pub stats: StatsSnapshot,
    /// Query block reads plus compaction I/O in blocks.
    pub measured_cost: f64,
    /// Modeled cost under the profiled workload, when profiling.
    pub modeled_cost: Option<f64>,
}

impl RunReport {
    pub fn class(&self, c: QueryClass) -> ClassReport {
        self.classes.get(c.name()).cloned().unwrap_or_default()
    }

    pub fn query_block_reads(&self) -> u64 {
        self.classes.values().map(|c| c.block_reads).sum()
    }

    pub fn compaction_bytes(&self) -> u64 {
        self.stats.compaction_bytes_read + self.stats.compaction_bytes_written
    }

    pub fn label(&self) -> String {
        self.design.clone().unwrap_or_else(|| "custom".to_string())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if path.extension().is_some_and(|e| e == "csv") {
            let file = std::fs::File::create(path)?;
            write_csv(std::slice::from_ref(self), file)
        } else {
            std::fs::write(path, serde_json::to_string_pretty(self)?)?;
            Ok(())
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let r: RunReport = serde_json::from_slice(&std::fs::read(path)?)?;
        if r.version != REPORT_VERSION {
            return Err(BenchError::Report(format!(
                "{}: unsupported report version {}",
                path.display(),
                r.version
            )));
        }
        Ok(r)
    }
}

/// Measured cost: block reads of queries plus compaction bytes read and
/// written, in blocks.
pub fn measured_cost(query_block_reads: u64, stats: &StatsSnapshot, block_bytes: usize) -> f64 {
    query_block_reads as f64
        + (stats.compaction_bytes_read + stats.compaction_bytes_written) as f64 / block_bytes as f64
}

#[derive(Debug, Serialize)]
struct Row {
    rank: usize,
    design: String,
    measured_cost: f64,
    modeled_cost: String,
    query_block_reads: u64,
    compaction_bytes: u64,
    compaction_secs: f64,
    runtime_secs: f64,
    insert_throughput: f64,
    q1_mean_us: f64,
    q2a_mean_us: f64,
    q2b_mean_us: f64,
    q3_mean_us: f64,
    q4_mean_us: f64,
    q5_mean_us: f64,
    q2a_block_reads: u64,
    q2b_block_reads: u64,
    q4_block_reads: u64,
    q5_block_reads: u64,
}

/// Ranks reports by measured cost (ties share a rank).
pub fn rank(reports: &[RunReport]) -> Vec<(usize, &RunReport)> {
    let mut order: Vec<&RunReport> = reports.iter().collect();
    order.sort_by(|a, b| a.measured_cost.total_cmp(&b.measured_cost));
    let mut out = Vec::with_capacity(order.len());
    for (i, r) in order.iter().enumerate() {
        let rank = match out.last() {
            Some(&(prev_rank, prev)) if (prev as &RunReport).measured_cost == r.measured_cost => {
                prev_rank
            }
            _ => i + 1,
        };
        out.push((rank, *r));
    }
    out
}

fn write_csv(reports: &[RunReport], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (rank, r) in rank(reports) {
        let c = |q| r.class(q);
        w.serialize(Row {
            rank,
            design: r.label(),
            measured_cost: r.measured_cost,
            modeled_cost: r.modeled_cost.map(|m| format!("{m}")).unwrap_or_default(),
            query_block_reads: r.query_block_reads(),
            compaction_bytes: r.compaction_bytes(),
            compaction_secs: r.stats.compaction_micros as f64 / 1e6,
            runtime_secs: r.runtime_secs,
            insert_throughput: r.insert_throughput,
            q1_mean_us: c(QueryClass::Q1).latency.mean_us,
            q2a_mean_us: c(QueryClass::Q2a).latency.mean_us,
            q2b_mean_us: c(QueryClass::Q2b).latency.mean_us,
            q3_mean_us: c(QueryClass::Q3).latency.mean_us,
            q4_mean_us: c(QueryClass::Q4).latency.mean_us,
            q5_mean_us: c(QueryClass::Q5).latency.mean_us,
            q2a_block_reads: c(QueryClass::Q2a).block_reads,
            q2b_block_reads: c(QueryClass::Q2b).block_reads,
            q4_block_reads: c(QueryClass::Q4).block_reads,
            q5_block_reads: c(QueryClass::Q5).block_reads,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// CSV ranking of reports produced under the same spec.
pub fn compare(reports: &[RunReport], out: impl Write) -> Result<()> {
    if reports.len() < 2 {
        return Err(BenchError::Report("need at least two reports".into()));
    }
    let first = &reports[0];
    for r in &reports[1..] {
        if r.spec != first.spec || r.phase != first.phase {
            return Err(BenchError::Report(format!(
                "reports {:?} and {:?} were produced by different workloads",
                first.label(),
                r.label()
            )));
        }
    }
    write_csv(reports, out)
}
