use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use laser_core::entry::footprint;
use laser_core::{ColumnId, ColumnSet, Engine, Key, Options, Row, Schema, Value, WriteBatch};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::util::{inline_options, params, random_layout, random_projection, Outcome};

const COLUMNS: usize = 6;
const KEYS: u64 = 4096;
const SEEDS: u64 = 20;
const OPS: u64 = 1_000_000;

/// Reference semantics: the live value of every column of every key.
#[derive(Default)]
struct Oracle {
    rows: BTreeMap<Key, BTreeMap<ColumnId, Value>>,
}

impl Oracle {
    fn insert(&mut self, key: Key, row: &[Value]) {
        self.rows.insert(
            key,
            row.iter()
                .enumerate()
                .map(|(i, v)| (i as ColumnId + 1, *v))
                .collect(),
        );
    }

    fn update(&mut self, key: Key, values: &[(ColumnId, Value)]) {
        self.rows
            .entry(key)
            .or_default()
            .extend(values.iter().copied());
    }

    fn delete(&mut self, key: Key) {
        self.rows.remove(&key);
    }

    fn get(&self, key: Key, projection: ColumnSet) -> Option<Row> {
        let (columns, values): (Vec<ColumnId>, Vec<Value>) = self
            .rows
            .get(&key)?
            .iter()
            .filter(|(c, _)| projection.contains(**c))
            .map(|(c, v)| (*c, *v))
            .unzip();
        if columns.is_empty() {
            return None;
        }
        Some(Row {
            columns: columns.into_iter().collect(),
            values,
        })
    }

    fn scan(&self, low: Key, high: Key, projection: ColumnSet) -> Vec<(Key, Row)> {
        self.rows
            .range(low..=high)
            .filter_map(|(k, _)| self.get(*k, projection).map(|r| (*k, r)))
            .collect()
    }
}

fn key(rng: &mut ChaCha8Rng) -> Key {
    match rng.gen_range(0..200) {
        0 => 0,
        1 => Key::MAX,
        _ => rng.gen_range(0..KEYS).wrapping_mul(0x9e37_79b9_7f4a_7c15),
    }
}

fn row(rng: &mut ChaCha8Rng) -> Vec<Value> {
    (0..COLUMNS).map(|_| rng.gen()).collect()
}

fn updates(rng: &mut ChaCha8Rng) -> Vec<(ColumnId, Value)> {
    random_projection(rng, COLUMNS)
        .iter()
        .map(|c| (c, rng.gen()))
        .collect()
}

fn random_options(rng: &mut ChaCha8Rng) -> Options {
    let schema = Schema::new(COLUMNS, 4).unwrap();
    let levels = rng.gen_range(2..=3);
    let layout = random_layout(rng, &schema, levels);
    let p = params(
        &schema,
        levels,
        rng.gen_range(2..=4),
        16,
        16,
        rng.gen_range(1..=4),
    );
    let memtable = footprint(COLUMNS) * rng.gen_range(64..=256);
    let mut opts = inline_options(schema, p, layout, memtable);
    opts.sst_target_bytes = 4 << 10;
    opts
}

fn scan_all(
    engine: &Engine,
    low: Key,
    high: Key,
    projection: ColumnSet,
) -> laser_core::Result<Vec<(Key, Row)>> {
    engine.scan(low, high, projection)?.collect()
}

struct Counts {
    reads: u64,
    restarts: u64,
    compactions: u64,
}

/// One randomized sequence checked against the oracle after every read.
fn run_seed(dir: &Path, seed: u64, ops: u64, counts: &mut Counts) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let opts = random_options(&mut rng);
    let mut engine = Some(Engine::open(dir, opts.clone()).map_err(|e| e.to_string())?);
    let mut oracle = Oracle::default();
    let all = ColumnSet::full(COLUMNS);
    for i in 0..ops {
        let e = engine.as_ref().unwrap();
        let fail = |what: String| format!("seed {seed}, op {i}: {what}");
        let err = |x: laser_core::Error| fail(x.to_string());
        match rng.gen_range(0..1000) {
            0..=249 => {
                let (k, r) = (key(&mut rng), row(&mut rng));
                e.insert(k, &r).map_err(err)?;
                oracle.insert(k, &r);
            }
            250..=399 => {
                let (k, u) = (key(&mut rng), updates(&mut rng));
                e.update(k, &u).map_err(err)?;
                oracle.update(k, &u);
            }
            400..=449 => {
                let k = key(&mut rng);
                e.delete(k).map_err(err)?;
                oracle.delete(k);
            }
            450..=469 => {
                let mut batch = WriteBatch::new();
                for _ in 0..rng.gen_range(1..=8) {
                    let k = key(&mut rng);
                    match rng.gen_range(0..3) {
                        0 => {
                            let r = row(&mut rng);
                            batch.insert(k, &r);
                            oracle.insert(k, &r);
                        }
                        1 => {
                            let u = updates(&mut rng);
                            batch.update(k, &u);
                            oracle.update(k, &u);
                        }
                        _ => {
                            batch.delete(k);
                            oracle.delete(k);
                        }
                    }
                }
                e.write(batch).map_err(err)?;
            }
            470..=899 => {
                let k = key(&mut rng);
                let p = if rng.gen_bool(0.2) {
                    all
                } else {
                    random_projection(&mut rng, COLUMNS)
                };
                let got = e.get(k, p).map_err(err)?;
                let want = oracle.get(k, p);
                if got != want {
                    return Err(fail(format!(
                        "get({k}, {p:?}) = {got:?}, expected {want:?}"
                    )));
                }
                counts.reads += 1;
            }
            _ => {
                let low = key(&mut rng);
                let span = (Key::MAX / KEYS).saturating_mul(rng.gen_range(0..48));
                let high = low.saturating_add(span);
                let p = random_projection(&mut rng, COLUMNS);
                let got = scan_all(e, low, high, p).map_err(err)?;
                let want = oracle.scan(low, high, p);
                if got != want {
                    return Err(fail(format!(
                        "scan({low}..={high}, {p:?}) returned {} rows, expected {}",
                        got.len(),
                        want.len()
                    )));
                }
                counts.reads += 1;
            }
        }
        match rng.gen_range(0..100_000) {
            0..=19 => e.flush().map_err(err)?,
            20..=39 => {
                if e.compact_once().map_err(err)?.is_some() {
                    e.check_invariants(false).map_err(err)?;
                    counts.compactions += 1;
                }
            }
            40 => {
                e.compact_until_stable().map_err(err)?;
                e.check_invariants(true).map_err(err)?;
            }
            41..=42 => {
                let old = engine.take().unwrap();
                if rng.gen_bool(0.5) {
                    old.close().map_err(err)?;
                } else {
                    drop(old);
                }
                engine = Some(Engine::open(dir, opts.clone()).map_err(err)?);
                counts.restarts += 1;
            }
            _ => {}
        }
    }
    let e = engine.take().unwrap();
    let finish = || -> laser_core::Result<Vec<(Key, Row)>> {
        e.compact_until_stable()?;
        e.check_invariants(true)?;
        scan_all(&e, 0, Key::MAX, all)
    };
    let got = finish().map_err(|x| format!("seed {seed}: {x}"))?;
    if got != oracle.scan(0, Key::MAX, all) {
        return Err(format!(
            "seed {seed}: final contents differ from the oracle"
        ));
    }
    e.close().map_err(|x| x.to_string())
}

pub fn randomized() -> Outcome {
    let start = Instant::now();
    let mut counts = Counts {
        reads: 0,
        restarts: 0,
        compactions: 0,
    };
    for seed in 0..SEEDS {
        let dir = tempfile::tempdir().unwrap();
        if let Err(e) = run_seed(dir.path(), seed, OPS, &mut counts) {
            return Outcome::fail(e);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        secs <= 900.0,
        format!(
            "{SEEDS} seeds x {OPS} ops, {} reads and scans matched, {} restarts, {} forced compactions",
            counts.reads, counts.restarts, counts.compactions
        ),
    )
}

/// Runs short random sequences, compacting one job at a time and checking
/// the manifest after each job. Returns the number of manifests checked.
pub fn compaction_manifests(seeds: u64, writes: u64) -> Result<u64, String> {
    let mut checked = 0;
    for seed in 0..seeds {
        let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let mut opts = random_options(&mut rng);
        opts.memtable_bytes = footprint(COLUMNS) * 1_000_000;
        let engine = Engine::open(dir.path(), opts).map_err(|e| e.to_string())?;
        let err = |x: laser_core::Error| format!("seed {seed}: {x}");
        for i in 0..writes {
            let k = key(&mut rng);
            if rng.gen_bool(0.7) {
                engine.insert(k, &row(&mut rng)).map_err(err)?;
            } else {
                engine.update(k, &updates(&mut rng)).map_err(err)?;
            }
            if i % 200 == 199 {
                engine.flush().map_err(err)?;
                engine.check_invariants(true).map_err(err)?;
                checked += 1;
                while engine.compact_once().map_err(err)?.is_some() {
                    engine.check_invariants(true).map_err(err)?;
                    checked += 1;
                }
            }
        }
    }
    Ok(checked)
}
