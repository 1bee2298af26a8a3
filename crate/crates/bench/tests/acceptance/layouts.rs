use std::cell::RefCell;
use std::collections::BTreeMap;
use std::rc::Rc;

use laser_bench::report::RunReport;
use laser_bench::runner::{self, engine_options, RunConfig};
use laser_bench::{designs, key_of, WorkloadSpec};
use laser_core::{ColumnSet, Engine, Key, TreeParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::TempDir;

use crate::fit::{linear, spread};
use crate::util::Outcome;

const COLUMNS: usize = 8;
const WIDTHS: [usize; 4] = [1, 2, 4, 8];
const POINT_READS: usize = 2000;
const SCANS: usize = 10;
/// Each scan covers this fraction of the key space.
const SCAN_FRACTION: f64 = 0.0025;
const LINEAR_TOLERANCE: f64 = 0.25;
const FLAT_TOLERANCE: f64 = 0.15;

/// A loaded desk-scale database for one equal-width layout.
struct Loaded {
    engine: Engine,
    report: RunReport,
    params: TreeParams,
    load_secs: f64,
    _dir: TempDir,
}

thread_local! {
    static LOADED: RefCell<BTreeMap<usize, Rc<Loaded>>> = const { RefCell::new(BTreeMap::new()) };
}

fn load(cg: usize) -> Result<Rc<Loaded>, String> {
    if let Some(l) = LOADED.with(|m| m.borrow().get(&cg).cloned()) {
        return Ok(l);
    }
    let start = std::time::Instant::now();
    let e = |x: laser_bench::BenchError| x.to_string();
    let spec = WorkloadSpec::desk(COLUMNS);
    let schema = spec.schema().map_err(e)?;
    let params = spec.tree_params().map_err(e)?;
    let cfg = RunConfig {
        layout: designs::cg(&schema, params.levels, cg),
        design: Some(format!("cg-{cg}")),
        spec,
        deterministic: true,
        profile: false,
        sync: false,
    };
    let dir = tempfile::tempdir().map_err(|x| x.to_string())?;
    let out = runner::load(dir.path(), &cfg).map_err(e)?;
    if let Some(err) = out.report.error {
        return Err(err);
    }
    let engine = Engine::open(dir.path(), engine_options(&cfg, &params).map_err(e)?)
        .map_err(|x| x.to_string())?;
    let loaded = Rc::new(Loaded {
        engine,
        report: out.report,
        params,
        load_secs: start.elapsed().as_secs_f64(),
        _dir: dir,
    });
    LOADED.with(|m| m.borrow_mut().insert(cg, loaded.clone()));
    Ok(loaded)
}

fn prefix(k: usize) -> ColumnSet {
    ColumnSet::range(1, k as u16)
}

fn point_keys(rows: u64) -> Vec<Key> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    (0..POINT_READS)
        .map(|_| key_of(rng.gen_range(0..rows)))
        .collect()
}

fn scan_ranges() -> Vec<(Key, Key)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let width = (Key::MAX as f64 * SCAN_FRACTION) as Key;
    (0..SCANS)
        .map(|_| {
            let low = rng.gen_range(0..Key::MAX - width);
            (low, low + width)
        })
        .collect()
}

/// Mean block reads per point read for each prefix projection `1..=k`.
fn point_curve(l: &Loaded) -> Result<Vec<f64>, String> {
    let keys = point_keys(l.report.spec.load_rows);
    (1..=COLUMNS)
        .map(|k| {
            let mut reads = 0u64;
            for &key in &keys {
                let (row, qs) = l
                    .engine
                    .get_with_stats(key, prefix(k))
                    .map_err(|e| e.to_string())?;
                if row.is_none() {
                    return Err(format!("loaded key {key} not found"));
                }
                reads += qs.total_block_reads();
            }
            Ok(reads as f64 / keys.len() as f64)
        })
        .collect()
}

/// Total block reads of the fixed scans under `projection`.
fn scan_reads(l: &Loaded, projection: ColumnSet) -> Result<f64, String> {
    let mut reads = 0u64;
    for (low, high) in scan_ranges() {
        let mut it = l
            .engine
            .scan(low, high, projection)
            .map_err(|e| e.to_string())?;
        for item in it.by_ref() {
            item.map_err(|e| e.to_string())?;
        }
        reads += it.stats().total_block_reads();
    }
    Ok(reads as f64)
}

fn populated_levels(l: &Loaded) -> usize {
    l.report
        .stats
        .level_entries()
        .iter()
        .skip(1)
        .filter(|&&n| n > 0)
        .count()
}

fn fmt(ys: &[f64]) -> String {
    ys.iter()
        .map(|y| format!("{y:.1}"))
        .collect::<Vec<_>>()
        .join(" ")
}

/// Linear growth in `|projection|` for one group per column and a flat
/// curve for the row layout.
fn trends(name: &str, narrow: &[f64], wide: &[f64]) -> (bool, String) {
    let xs: Vec<f64> = (1..=COLUMNS).map(|k| k as f64).collect();
    let f = linear(&xs, narrow);
    let dev = f.max_deviation(&xs, narrow);
    let flat = spread(wide);
    let pass = f.slope > 0.0 && f.r2 >= 0.9 && dev <= LINEAR_TOLERANCE && flat <= FLAT_TOLERANCE;
    (
        pass,
        format!(
            "{name} cg1 [{}] slope {:.3} r2 {:.4} max dev {:.1}%; cg8 [{}] spread {:.1}%",
            fmt(narrow),
            f.slope,
            f.r2,
            dev * 100.0,
            fmt(wide),
            flat * 100.0
        ),
    )
}

fn shape_note(l: &Loaded) -> (bool, String) {
    let levels = populated_levels(l);
    let ok = l.params.size_ratio == 2 && levels >= 4;
    (
        ok,
        format!(
            "{} rows, T={}, {} populated levels below Level-0",
            l.report.spec.load_rows, l.params.size_ratio, levels
        ),
    )
}

pub fn point_reads() -> Outcome {
    let start = std::time::Instant::now();
    let run = || -> Result<Outcome, String> {
        let narrow = load(1)?;
        let wide = load(COLUMNS)?;
        let (shape_ok, shape) = shape_note(&narrow);
        let (ok, detail) = trends(
            "mean reads per lookup:",
            &point_curve(&narrow)?,
            &point_curve(&wide)?,
        );
        let secs = start.elapsed().as_secs_f64();
        Ok(Outcome::new(
            shape_ok && ok && secs <= 600.0,
            format!(
                "{shape}; {detail}; loads {:.0}s + {:.0}s",
                narrow.load_secs, wide.load_secs
            ),
        ))
    };
    run().unwrap_or_else(Outcome::fail)
}

pub fn scans() -> Outcome {
    let start = std::time::Instant::now();
    let run = || -> Result<Outcome, String> {
        let all: Vec<Rc<Loaded>> = WIDTHS.iter().map(|&w| load(w)).collect::<Result<_, _>>()?;
        let curve = |l: &Loaded| {
            (1..=COLUMNS)
                .map(|k| scan_reads(l, prefix(k)))
                .collect::<Result<Vec<_>, _>>()
        };
        let (ok, detail) = trends("scan block reads:", &curve(&all[0])?, &curve(&all[3])?);
        let full = ColumnSet::full(COLUMNS);
        let by_width: Vec<f64> = all
            .iter()
            .map(|l| scan_reads(l, full))
            .collect::<Result<_, _>>()?;
        let decreasing = by_width.windows(2).all(|w| w[0] > w[1]);
        let inv: Vec<f64> = WIDTHS.iter().map(|&w| 1.0 / w as f64).collect();
        let f = linear(&inv, &by_width);
        let shape_ok = decreasing && f.slope > 0.0 && f.r2 >= 0.9;
        let secs = start.elapsed().as_secs_f64();
        Ok(Outcome::new(
            ok && shape_ok && secs <= 600.0,
            format!(
                "{detail}; full projection by cg 1/2/4/8 [{}] on 1/cg: slope {:.0} r2 {:.4}",
                fmt(&by_width),
                f.slope,
                f.r2
            ),
        ))
    };
    run().unwrap_or_else(Outcome::fail)
}

pub fn write_amplification() -> Outcome {
    let run = || -> Result<Outcome, String> {
        let all: Vec<Rc<Loaded>> = WIDTHS.iter().map(|&w| load(w)).collect::<Result<_, _>>()?;
        let row = &all[3];
        let (levels, t, b, c) = (
            row.params.levels as f64,
            row.params.size_ratio as f64,
            row.params.block_entries as f64,
            COLUMNS as f64,
        );
        let sum_g = |cg: usize| 1.0 + levels * (COLUMNS / cg) as f64;
        let predicted = |cg: usize| t * levels / b + t / (b * c) * sum_g(cg);
        let written = |l: &Loaded| l.report.stats.compaction_bytes_written as f64;
        let model = |l: &Loaded| l.report.stats.compaction_model_bytes as f64;
        let mut pass = true;
        let mut notes = Vec::new();
        for (i, &cg) in WIDTHS.iter().enumerate() {
            let measured = written(&all[i]) / written(row);
            let expected = predicted(cg) / predicted(COLUMNS);
            let weighted = model(&all[i]) / model(row);
            pass &= (measured / expected - 1.0).abs() <= 0.25;
            notes.push(format!(
                "cg{cg} sum_g {:.0}: bytes {:.0} MB ratio {measured:.2} vs {expected:.2} (model-weighted {weighted:.2})",
                sum_g(cg),
                written(&all[i]) / 1e6
            ));
        }
        // Narrower groups have larger sum_g.
        let monotone = all.windows(2).all(|w| written(&w[0]) > written(&w[1]));
        Ok(Outcome::new(pass && monotone, notes.join("; ")))
    };
    run().unwrap_or_else(Outcome::fail)
}
