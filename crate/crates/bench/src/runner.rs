//! Drives the engine through the load and steady phases of a workload.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::{Duration, Instant};

use laser_core::{
    cost, ColumnSet, Engine, Key, LayoutConfig, Options, StatsSnapshot, SyncPolicy, TreeParams,
    WorkloadStats, WriteBatch,
};
use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use tracing::{info, warn};

use crate::error::{BenchError, Result};
use crate::generator::{Generator, Op, Phase, QueryClass};
use crate::report::{measured_cost, ClassReport, LatencySummary, RunReport, REPORT_VERSION};
use crate::spec::WorkloadSpec;

const STATE_FILE: &str = "bench-state.json";
const LOAD_BATCH: usize = 512;
const TIMELINE_POINTS: u64 = 200;

/// How a workload is executed.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub spec: WorkloadSpec,
    pub layout: LayoutConfig,
    /// Name of the design that produced `layout`, if any.
    pub design: Option<String>,
    /// Single-threaded with inline flushes and compactions.
    pub deterministic: bool,
    /// Collect per-level workload statistics during the steady phase.
    pub profile: bool,
    /// Sync the write-ahead log on every write.
    pub sync: bool,
}

/// A report plus the profiled workload, when profiling.
#[derive(Debug)]
pub struct RunOutput {
    pub report: RunReport,
    pub workload: Option<WorkloadStats>,
}

/// Progress marker kept in the database directory.
#[derive(Clone, Debug, Serialize, Deserialize)]
struct BenchState {
    spec: WorkloadSpec,
    layout: String,
    loaded_rows: u64,
}

pub fn engine_options(cfg: &RunConfig, params: &TreeParams) -> Result<Options> {
    let spec = &cfg.spec;
    let mut opts = Options::new(spec.schema()?, params.clone(), cfg.layout.clone());
    opts.memtable_bytes = spec.tree.memtable_bytes;
    opts.sst_target_bytes = spec.tree.sst_target_bytes;
    opts.bloom_bits_per_key = spec.tree.bloom_bits_per_key;
    opts.wal_sync = if cfg.sync {
        SyncPolicy::PerBatch
    } else {
        SyncPolicy::None
    };
    opts.sync_files = cfg.sync;
    opts.background = !cfg.deterministic;
    opts.profile = cfg.profile;
    Ok(opts)
}

/// Whether two specs describe the same load phase.
fn same_load(a: &WorkloadSpec, b: &WorkloadSpec) -> bool {
    a.columns == b.columns
        && a.dt_size == b.dt_size
        && a.seed == b.seed
        && a.load_rows == b.load_rows
        && a.tree == b.tree
}

fn read_state(db: &Path) -> Result<Option<BenchState>> {
    match std::fs::read(db.join(STATE_FILE)) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}

fn write_state(db: &Path, state: &BenchState) -> Result<()> {
    let tmp = db.join(format!("{STATE_FILE}.tmp"));
    std::fs::write(&tmp, serde_json::to_vec_pretty(state)?)?;
    std::fs::rename(tmp, db.join(STATE_FILE))?;
    Ok(())
}

fn dir_is_empty(db: &Path) -> Result<bool> {
    match std::fs::read_dir(db) {
        Ok(mut d) => Ok(d.next().is_none()),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(true),
        Err(e) => Err(e.into()),
    }
}

/// Whether the load phase still has to run in `db` for `cfg`.
fn needs_load(db: &Path, cfg: &RunConfig) -> Result<bool> {
    match read_state(db)? {
        None if dir_is_empty(db)? => Ok(true),
        None => Err(BenchError::Spec(format!(
            "{} holds data that was not written by a load; use an empty directory",
            db.display()
        ))),
        Some(state) => {
            if !same_load(&state.spec, &cfg.spec) || state.layout != cfg.layout.to_string() {
                return Err(BenchError::Spec(format!(
                    "{} was loaded with a different workload or layout",
                    db.display()
                )));
            }
            if state.loaded_rows != cfg.spec.load_rows {
                return Err(BenchError::Spec(format!(
                    "{} holds an interrupted load ({} of {} rows); use an empty directory",
                    db.display(),
                    state.loaded_rows,
                    cfg.spec.load_rows
                )));
            }
            Ok(false)
        }
    }
}

/// Per-class counters of one thread.
#[derive(Default)]
struct Tally {
    classes: BTreeMap<QueryClass, (ClassReport, Vec<u64>)>,
    checksum: u64,
}

impl Tally {
    fn record(&mut self, class: QueryClass, block_reads: u64, rows: u64, nanos: u64) {
        let (c, lat) = self.classes.entry(class).or_default();
        c.count += 1;
        c.block_reads += block_reads;
        c.rows += rows;
        lat.push(nanos);
    }

    fn merge(&mut self, other: Tally) {
        for (class, (c, lat)) in other.classes {
            let (mine, mine_lat) = self.classes.entry(class).or_default();
            mine.count += c.count;
            mine.block_reads += c.block_reads;
            mine.rows += c.rows;
            mine_lat.extend(lat);
        }
        self.checksum = self.checksum.wrapping_add(other.checksum);
    }

    fn finish(self) -> BTreeMap<String, ClassReport> {
        self.classes
            .into_iter()
            .map(|(class, (mut c, mut lat))| {
                c.latency = LatencySummary::from_nanos(&mut lat);
                (class.name().to_string(), c)
            })
            .collect()
    }
}

/// Executes one read-only operation.
fn read(engine: &Engine, op: &Op, tally: &mut Tally) -> Result<()> {
    let started = Instant::now();
    match op {
        Op::Point {
            class,
            key,
            projection,
        } => {
            let (row, qs) = engine.get_with_stats(*key, *projection)?;
            let nanos = started.elapsed().as_nanos() as u64;
            tally.record(*class, qs.total_block_reads(), row.is_some() as u64, nanos);
        }
        Op::Scan {
            class,
            low,
            high,
            projection,
        } => {
            let (rows, sum, qs) = scan(engine, *class, *low, *high, *projection)?;
            let nanos = started.elapsed().as_nanos() as u64;
            tally.checksum = tally.checksum.wrapping_add(sum);
            tally.record(*class, qs, rows, nanos);
        }
        _ => unreachable!("not a read"),
    }
    Ok(())
}

/// Q4 sums the projected values; Q5 takes their maximum.
fn scan(
    engine: &Engine,
    class: QueryClass,
    low: Key,
    high: Key,
    projection: ColumnSet,
) -> Result<(u64, u64, u64)> {
    let mut it = engine.scan(low, high, projection)?;
    let (mut rows, mut sum, mut max) = (0u64, 0u64, 0u64);
    for item in it.by_ref() {
        let (_, row) = item?;
        rows += 1;
        for (_, v) in row.iter() {
            sum = sum.wrapping_add(v as u64);
            max = max.max(v as u64);
        }
    }
    let reads = it.stats().total_block_reads();
    Ok((rows, if class == QueryClass::Q4 { sum } else { max }, reads))
}

/// Executes one write operation.
fn write(engine: &Engine, op: Op, tally: &mut Tally) -> Result<()> {
    let started = Instant::now();
    let class = op.class();
    match op {
        Op::Insert { key, row, .. } => engine.insert(key, &row)?,
        Op::Update { key, column, value } => engine.update(key, &[(column, value)])?,
        _ => unreachable!("not a write"),
    }
    tally.record(class, 0, 0, started.elapsed().as_nanos() as u64);
    Ok(())
}

fn is_read(op: &Op) -> bool {
    matches!(op, Op::Point { .. } | Op::Scan { .. })
}

struct Timeline {
    start: Instant,
    every: u64,
    points: Vec<(f64, u64)>,
}

impl Timeline {
    fn new(start: Instant, total: u64) -> Self {
        Timeline {
            start,
            every: (total / TIMELINE_POINTS).max(1),
            points: Vec::new(),
        }
    }

    fn tick(&mut self, inserted: u64) {
        if inserted.is_multiple_of(self.every) {
            self.points
                .push((self.start.elapsed().as_secs_f64(), inserted));
        }
    }
}

fn load_phase(engine: &Engine, db: &Path, cfg: &RunConfig, timeline: &mut Timeline) -> Result<u64> {
    let spec = &cfg.spec;
    let mut state = BenchState {
        spec: spec.clone(),
        layout: cfg.layout.to_string(),
        loaded_rows: 0,
    };
    write_state(db, &state)?;
    let mut batch = WriteBatch::new();
    let mut pending = 0usize;
    let mut inserted = 0u64;
    for step in Generator::new(spec, Phase::Load) {
        if let Op::Insert { key, row, .. } = step.op {
            batch.insert(key, &row);
            pending += 1;
            inserted += 1;
            timeline.tick(inserted);
        }
        if pending == LOAD_BATCH {
            engine.write(std::mem::take(&mut batch))?;
            pending = 0;
        }
    }
    engine.write(batch)?;
    state.loaded_rows = inserted;
    write_state(db, &state)?;
    info!(rows = inserted, "load complete");
    Ok(inserted)
}

fn steady_deterministic(
    engine: &Engine,
    spec: &WorkloadSpec,
    tally: &mut Tally,
    timeline: &mut Timeline,
) -> Result<()> {
    for step in Generator::new(spec, Phase::Steady) {
        if is_read(&step.op) {
            read(engine, &step.op, tally)?;
        } else {
            let insert = matches!(step.op, Op::Insert { .. });
            write(engine, step.op, tally)?;
            if insert {
                timeline.tick(step.after_inserts + 1);
            }
        }
    }
    Ok(())
}

/// One writer on the calling thread and `spec.readers` reader threads. Each
/// reader regenerates the stream, takes every `readers`-th read and waits
/// until the rows it may target have been inserted.
fn steady_concurrent(
    engine: &Engine,
    spec: &WorkloadSpec,
    tally: &mut Tally,
    timeline: &mut Timeline,
) -> Result<()> {
    let inserted = AtomicU64::new(spec.load_rows);
    let abort = AtomicBool::new(false);
    let first_error: Mutex<Option<BenchError>> = Mutex::new(None);
    let fail = |e: BenchError| {
        abort.store(true, Ordering::Release);
        first_error.lock().get_or_insert(e);
    };
    let readers = spec.readers;
    let reader_tallies: Vec<Tally> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..readers)
            .map(|r| {
                let (inserted, abort, fail) = (&inserted, &abort, &fail);
                s.spawn(move || {
                    let mut t = Tally::default();
                    let reads = Generator::new(spec, Phase::Steady).filter(|s| is_read(&s.op));
                    for step in reads.skip(r).step_by(readers) {
                        while inserted.load(Ordering::Acquire) < step.after_inserts {
                            if abort.load(Ordering::Acquire) {
                                return t;
                            }
                            std::thread::sleep(Duration::from_micros(50));
                        }
                        if abort.load(Ordering::Acquire) {
                            return t;
                        }
                        if let Err(e) = read(engine, &step.op, &mut t) {
                            fail(e);
                            return t;
                        }
                    }
                    t
                })
            })
            .collect();
        for step in Generator::new(spec, Phase::Steady) {
            if abort.load(Ordering::Acquire) {
                break;
            }
            if is_read(&step.op) {
                continue;
            }
            let insert = matches!(step.op, Op::Insert { .. });
            if let Err(e) = write(engine, step.op, tally) {
                fail(e);
                break;
            }
            if insert {
                let n = step.after_inserts + 1;
                inserted.store(n, Ordering::Release);
                timeline.tick(n);
            }
        }
        // Readers may wait on inserts that never come after a failure.
        inserted.store(u64::MAX, Ordering::Release);
        handles
            .into_iter()
            .map(|h| h.join().expect("reader thread panicked"))
            .collect()
    });
    for t in reader_tallies {
        tally.merge(t);
    }
    match first_error.into_inner() {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

fn delta(after: &StatsSnapshot, before: &StatsSnapshot) -> (u64, u64) {
    (
        after
            .compaction_bytes_read
            .saturating_sub(before.compaction_bytes_read),
        after
            .compaction_bytes_written
            .saturating_sub(before.compaction_bytes_written),
    )
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Mode {
    LoadOnly,
    Full,
}

/// Runs the load phase into an empty `db`.
pub fn load(db: &Path, cfg: &RunConfig) -> Result<RunOutput> {
    execute(db, cfg, Mode::LoadOnly)
}

/// Runs the steady phase, loading first unless `db` already holds a
/// completed load of the same workload and layout.
pub fn run(db: &Path, cfg: &RunConfig) -> Result<RunOutput> {
    execute(db, cfg, Mode::Full)
}

fn execute(db: &Path, cfg: &RunConfig, mode: Mode) -> Result<RunOutput> {
    cfg.spec.validate()?;
    let params = cfg.spec.tree_params()?;
    let must_load = needs_load(db, cfg)?;
    if mode == Mode::LoadOnly && !must_load {
        return Err(BenchError::Spec(format!(
            "{} is already loaded",
            db.display()
        )));
    }
    let engine = Engine::open(db, engine_options(cfg, &params)?)?;
    let start = Instant::now();
    let mut timeline = Timeline::new(start, cfg.spec.total_rows());
    let mut tally = Tally::default();
    let mut load_secs = 0.0;
    let mut steady_secs = 0.0;

    let mut outcome = Ok(());
    let mut loaded = 0;
    if must_load {
        outcome = load_phase(&engine, db, cfg, &mut timeline).map(|n| loaded = n);
        load_secs = start.elapsed().as_secs_f64();
    }
    engine.reset_workload_stats();
    let before = engine.statistics();
    if outcome.is_ok() && mode == Mode::Full {
        let steady_start = Instant::now();
        outcome = if cfg.deterministic {
            steady_deterministic(&engine, &cfg.spec, &mut tally, &mut timeline)
        } else {
            steady_concurrent(&engine, &cfg.spec, &mut tally, &mut timeline)
        };
        steady_secs = steady_start.elapsed().as_secs_f64();
    }
    let runtime_secs = start.elapsed().as_secs_f64();
    let stats = engine.statistics();
    let workload = engine.workload_stats().filter(|_| cfg.profile);
    let closed = engine.close();
    let error = match (outcome, closed) {
        (Err(e), _) => Some(e.to_string()),
        (Ok(()), Err(e)) => Some(e.to_string()),
        _ => None,
    };
    if let Some(e) = &error {
        warn!(error = %e, "run stopped early");
    }

    let checksum = tally.checksum;
    let classes = tally.finish();
    let query_reads: u64 = classes.values().map(|c| c.block_reads).sum();
    let (read_bytes, written_bytes) = delta(&stats, &before);
    let steady_stats = StatsSnapshot {
        compaction_bytes_read: read_bytes,
        compaction_bytes_written: written_bytes,
        ..StatsSnapshot::default()
    };
    let schema = cfg.spec.schema()?;
    let modeled_cost = workload
        .as_ref()
        .map(|w| cost::workload_cost(&cfg.layout, w, &params, &schema));
    let inserts = loaded + classes.get(QueryClass::Q1.name()).map_or(0, |c| c.count);
    let report = RunReport {
        version: REPORT_VERSION,
        spec: cfg.spec.clone(),
        design: cfg.design.clone(),
        layout: cfg.layout.to_string(),
        phase: if mode == Mode::LoadOnly {
            "load"
        } else {
            "run"
        }
        .to_string(),
        deterministic: cfg.deterministic,
        partial: error.is_some(),
        error,
        runtime_secs,
        load_secs,
        steady_secs,
        classes,
        insert_throughput: if runtime_secs > 0.0 {
            inserts as f64 / runtime_secs
        } else {
            0.0
        },
        insert_timeline: timeline.points,
        scan_checksum: checksum,
        measured_cost: measured_cost(query_reads, &steady_stats, params.block_bytes),
        stats,
        modeled_cost,
    };
    Ok(RunOutput { report, workload })
}
