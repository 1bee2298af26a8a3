use laser_bench::key_of;
use laser_core::entry::footprint;
use laser_core::{levels_for, CompactionPriority, Engine, LayoutConfig, Schema};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::util::{inline_options, params, Outcome};

const COLUMNS: usize = 4;

pub fn stratification() -> Outcome {
    let schema = Schema::new(COLUMNS, 4).unwrap();
    let rows = 200_000u64;
    let mut p = params(&schema, 1, 2, 16, 16, 4);
    p.levels = levels_for(rows, &p).unwrap();
    let layout = LayoutConfig::row(&schema, p.levels);
    let mut opts = inline_options(schema, p, layout, footprint(COLUMNS) * 256);
    opts.priority = CompactionPriority::ByAge;
    let dir = tempfile::tempdir().unwrap();
    let engine = Engine::open(dir.path(), opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for i in 0..rows {
        let row: Vec<u32> = (0..COLUMNS).map(|_| rng.gen()).collect();
        engine.insert(key_of(i), &row).unwrap();
    }
    let stats = engine.statistics();
    let medians: Vec<(usize, u64)> = stats
        .levels
        .iter()
        .filter_map(|l| l.ages.median.map(|m| (l.level, m)))
        .collect();
    let increasing = medians.windows(2).all(|w| w[0].1 < w[1].1);
    let shown: Vec<String> = medians.iter().map(|(l, m)| format!("L{l}={m}")).collect();
    Outcome::new(
        increasing && medians.len() >= 3,
        format!(
            "median age in writes per populated level: {} ({} levels)",
            shown.join(" "),
            medians.len()
        ),
    )
}

pub fn space_amplification() -> Outcome {
    let schema = Schema::new(COLUMNS, 4).unwrap();
    let t = 2;
    let p = params(&schema, 5, t, 16, 64, 4);
    let n = p.level_capacity_entries(5) as u64;
    let memtable_rows = 256;
    let layout = LayoutConfig::row(&schema, p.levels);
    let opts = inline_options(schema, p, layout, footprint(COLUMNS) * 1_000_000);
    let dir = tempfile::tempdir().unwrap();
    let engine = Engine::open(dir.path(), opts).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let row = |rng: &mut ChaCha8Rng| -> Vec<u32> { (0..COLUMNS).map(|_| rng.gen()).collect() };
    for i in 0..n {
        engine.insert(key_of(i), &row(&mut rng)).unwrap();
        if i % memtable_rows == memtable_rows - 1 {
            engine.compact_until_stable().unwrap();
        }
    }
    engine.compact_until_stable().unwrap();

    let mut worst: Option<(f64, u64, u64)> = None;
    let mut sum_fraction = 0.0;
    let mut samples = 0u64;
    let warmup = 3 * n / memtable_rows;
    let flushes = 10 * n / memtable_rows;
    for f in 0..flushes {
        for _ in 0..memtable_rows {
            let k = key_of(rng.gen_range(0..n));
            let values: Vec<(u16, u32)> = row(&mut rng)
                .into_iter()
                .enumerate()
                .map(|(c, v)| (c as u16 + 1, v))
                .collect();
            engine.update(k, &values).unwrap();
        }
        engine.compact_until_stable().unwrap();
        if f < warmup {
            continue;
        }
        let entries = engine.statistics().level_entries();
        let last = *entries.last().unwrap();
        let upper: u64 = entries[..entries.len() - 1].iter().sum();
        let total = upper + last;
        let obsolete = (total - n) as f64 / total as f64;
        sum_fraction += obsolete;
        samples += 1;
        if worst.is_none_or(|w| obsolete > w.0) {
            worst = Some((obsolete, upper, last));
        }
    }
    let (fraction, upper, last) = worst.unwrap();
    let expected = 1.0 / t as f64;
    let bound = last as f64 / (t - 1) as f64;
    let pass = (fraction - expected).abs() <= 0.25 * expected && upper as f64 <= 1.25 * bound;
    Outcome::new(
        pass,
        format!(
            "{n} keys, after {warmup} warm-up flushes, highest obsolete fraction {fraction:.3} (1/T = {expected}), upper levels {upper} vs last level {last}; mean over {samples} flushes {:.3}",
            sum_fraction / samples as f64
        ),
    )
}
