use std::collections::HashMap;
use std::time::Instant;

use laser_core::cost::LevelWorkload;
use laser_core::{
    advise, advise_greedy, validate_layout, ColumnSet, LayoutConfig, Schema, TreeParams,
    WorkloadStats,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::util::{check_layout, random_projection, Outcome};

/// Constants of the brute-force cost, which is the modeled cost times `B c`.
struct Model {
    t: u128,
    b: u128,
    c: u128,
    inserts: u128,
}

impl Model {
    fn level(&self, groups: &[ColumnSet], wl: &LevelWorkload) -> u128 {
        let needed = |p: ColumnSet| groups.iter().filter(move |g| g.intersects(p));
        let mut cost = self.inserts * self.t * groups.len() as u128;
        for (&p, &n) in &wl.reads {
            cost += n as u128 * self.b * self.c * needed(p).count() as u128;
        }
        for (&p, s) in &wl.scans {
            cost += s.selected as u128 * needed(p).map(|g| 1 + g.len() as u128).sum::<u128>();
        }
        for (&p, &n) in &wl.updates {
            cost += self.t * n as u128 * needed(p).map(|g| 1 + g.len() as u128).sum::<u128>();
        }
        cost
    }

    fn layout(&self, layout: &LayoutConfig, stats: &WorkloadStats) -> u128 {
        let empty = LevelWorkload::default();
        let per_level: u128 = (0..layout.num_levels())
            .map(|i| self.level(layout.level(i), stats.level(i).unwrap_or(&empty)))
            .sum();
        per_level + self.inserts * self.t * layout.depth() as u128 * self.c
    }
}

/// Every set partition of `cols`, groups ordered by smallest column.
fn partitions(cols: &[u16]) -> Vec<Vec<ColumnSet>> {
    let Some((&first, rest)) = cols.split_first() else {
        return vec![Vec::new()];
    };
    let mut out = Vec::new();
    for p in partitions(rest) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            if i == p.len() {
                q.push(ColumnSet::single(first));
            } else {
                q[i].insert(first);
            }
            q.sort_by_key(|g| g.first());
            out.push(q);
        }
    }
    out
}

/// Every partition that refines `parent`.
fn refinements(parent: &[ColumnSet]) -> Vec<Vec<ColumnSet>> {
    let mut out = vec![Vec::new()];
    for g in parent {
        let cols: Vec<u16> = g.iter().collect();
        let parts = partitions(&cols);
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<ColumnSet>| {
                parts.iter().map(move |p| {
                    let mut q = prefix.clone();
                    q.extend(p);
                    q
                })
            })
            .collect();
    }
    for q in &mut out {
        q.sort_by_key(|g| g.first());
    }
    out
}

/// Minimum over all refinement chains below `parent` of the cost of levels
/// `level..=depth`.
fn best_chain(
    model: &Model,
    stats: &WorkloadStats,
    depth: usize,
    level: usize,
    parent: &[ColumnSet],
    memo: &mut HashMap<(usize, Vec<ColumnSet>), u128>,
) -> u128 {
    if level > depth {
        return 0;
    }
    if let Some(&v) = memo.get(&(level, parent.to_vec())) {
        return v;
    }
    let empty = LevelWorkload::default();
    let wl = stats.level(level).unwrap_or(&empty);
    let best = refinements(parent)
        .into_iter()
        .map(|p| model.level(&p, wl) + best_chain(model, stats, depth, level + 1, &p, memo))
        .min()
        .expect("a partition refines itself");
    memo.insert((level, parent.to_vec()), best);
    best
}

fn random_workload(rng: &mut ChaCha8Rng, c: usize, levels: usize, sparse: bool) -> WorkloadStats {
    let mut stats = WorkloadStats::new(c, levels + 1);
    stats.inserts = rng.gen_range(0..200_000);
    for i in 0..=levels {
        if rng.gen_bool(0.2) {
            continue;
        }
        let wl = stats.level_mut(i);
        let kinds = if sparse { 2 } else { 4 };
        for _ in 0..rng.gen_range(0..=kinds) {
            wl.add_read(random_projection(rng, c), rng.gen_range(1..5_000));
        }
        for _ in 0..rng.gen_range(0..=kinds) {
            let n = rng.gen_range(1..50);
            wl.add_scan(random_projection(rng, c), n, n * rng.gen_range(0..100_000));
        }
        for _ in 0..rng.gen_range(0..=kinds) {
            wl.add_update(random_projection(rng, c), rng.gen_range(1..20_000));
        }
    }
    stats
}

fn random_params(rng: &mut ChaCha8Rng, schema: &Schema, levels: usize) -> TreeParams {
    let b = rng.gen_range(2..=64);
    let row = (1 + schema.columns()) * schema.dt_size() as usize;
    TreeParams::derive(schema, b * row, rng.gen_range(2..=10), levels, 4, 4)
        .expect("valid parameters")
}

pub fn optimality() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for case in 0..200 {
        let c = rng.gen_range(1..=6);
        let levels = rng.gen_range(1..=3);
        let schema = Schema::new(c, 4).unwrap();
        let params = random_params(&mut rng, &schema, levels);
        let stats = random_workload(&mut rng, c, levels, false);
        let advice = match advise(&stats, &params, &schema, 1.0) {
            Ok(a) => a,
            Err(e) => return Outcome::fail(format!("case {case}: {e}")),
        };
        let model = Model {
            t: params.size_ratio as u128,
            b: params.block_entries as u128,
            c: c as u128,
            inserts: stats.inserts as u128,
        };
        let all = [schema.all_columns()];
        let mut memo = HashMap::new();
        let minimum = model.level(&all, stats.level(0).unwrap_or(&LevelWorkload::default()))
            + best_chain(&model, &stats, levels, 1, &all, &mut memo)
            + model.inserts * model.t * levels as u128 * model.c;
        let chosen = model.layout(&advice.layout, &stats);
        if let Err(e) = check_layout(&advice.layout, &schema) {
            return Outcome::fail(format!("case {case}: {e}"));
        }
        if chosen != minimum || advice.cost_scaled != minimum * 1_000_000 {
            return Outcome::fail(format!(
                "case {case} (c={c}, L={levels}): advisor layout costs {chosen}, reported {}, minimum {minimum}",
                advice.cost_scaled / 1_000_000
            ));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    Outcome::new(
        secs <= 300.0,
        format!(
            "200 workloads, advisor cost equals the brute-force minimum in every case ({secs:.1}s)"
        ),
    )
}

pub fn invariants() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut checked = 0;
    for case in 0..300 {
        let c = rng.gen_range(1..=30);
        let levels = rng.gen_range(1..=8);
        let schema = Schema::new(c, 4).unwrap();
        let params = random_params(&mut rng, &schema, levels);
        let stats = random_workload(&mut rng, c, levels, c > 12);
        for greedy in [false, true] {
            let advice = if greedy {
                advise_greedy(&stats, &params, &schema, 1.0)
            } else {
                advise(&stats, &params, &schema, 1.0)
            };
            let layout = match advice {
                Ok(a) => a.layout,
                Err(e) => return Outcome::fail(format!("case {case}: {e}")),
            };
            if layout.depth() != levels {
                return Outcome::fail(format!(
                    "case {case}: layout depth {} for {levels} levels",
                    layout.depth()
                ));
            }
            if let Err(e) = validate_layout(&layout, &schema) {
                return Outcome::fail(format!("case {case}: {e:?}"));
            }
            if let Err(e) = check_layout(&layout, &schema) {
                return Outcome::fail(format!("case {case}: {e}"));
            }
            checked += 1;
        }
    }
    let manifests = match crate::engine_model::compaction_manifests(3, 20_000) {
        Ok(n) => n,
        Err(e) => return Outcome::fail(e),
    };
    Outcome::new(
        true,
        format!("{checked} advisor layouts and {manifests} post-compaction manifests satisfy containment"),
    )
}

/// Workload over 100 columns with projections of assorted widths at every
/// level.
fn wide_workload(rng: &mut ChaCha8Rng, c: usize, levels: usize) -> WorkloadStats {
    let mut stats = WorkloadStats::new(c, levels + 1);
    stats.inserts = 10_000_000;
    let range = |rng: &mut ChaCha8Rng| {
        let lo = rng.gen_range(1..=c as u16);
        let hi = rng.gen_range(lo..=(lo + 20).min(c as u16));
        ColumnSet::range(lo, hi)
    };
    for i in 0..=levels {
        let wl = stats.level_mut(i);
        for _ in 0..6 {
            wl.add_read(range(rng), rng.gen_range(1..100_000));
            let n = rng.gen_range(1..100);
            wl.add_scan(range(rng), n, n * rng.gen_range(1..1_000_000));
            wl.add_update(
                ColumnSet::single(rng.gen_range(1..=c as u16)),
                rng.gen_range(1..100_000),
            );
        }
        wl.add_read(random_projection(rng, c), rng.gen_range(1..1_000));
    }
    stats
}

pub fn scale() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (c, levels) = (100, 8);
    let schema = Schema::new(c, 4).unwrap();
    let params = random_params(&mut rng, &schema, levels);
    let stats = wide_workload(&mut rng, c, levels);
    let start = Instant::now();
    let advice = match advise(&stats, &params, &schema, 1.0) {
        Ok(a) => a,
        Err(e) => return Outcome::fail(e.to_string()),
    };
    let secs = start.elapsed().as_secs_f64();
    if let Err(e) = check_layout(&advice.layout, &schema) {
        return Outcome::fail(e);
    }
    let groups: usize = (0..=levels).map(|i| advice.layout.groups_at(i)).sum();
    Outcome::new(
        secs <= 30.0,
        format!("c=100, L=8 advised in {secs:.2}s, {groups} groups in total"),
    )
}
