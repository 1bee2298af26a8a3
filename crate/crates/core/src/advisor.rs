//! Layout search: chooses the column groups of every level from profiled
//! per-level statistics.
//!
//! Each group at level `i - 1` is partitioned independently at level `i`.
//! The attributes of the parent are first split into atoms, the coarsest
//! pieces that no projection cuts. Unions of atoms are kept as candidates
//! when they are no more expensive than their atoms, and the cheapest
//! partition built from candidates is selected.
//!
//! [`advise`] values a group at level `i` by its own cost plus the optimal
//! cost of partitioning it at the levels below, which makes the whole chain
//! optimal. [`advise_greedy`] only looks at level `i`.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::cost::{workload_cost_scaled, CostContext, LevelWorkload, WorkloadStats};
use crate::error::Result;
use crate::schema::{validate_layout, ColumnSet, LayoutConfig, Schema, TreeParams};

/// Above this many atoms the search only considers groups that are runs of
/// consecutive atoms.
pub const MAX_EXACT_ATOMS: usize = 12;

/// Coarsest partition of `parent` such that every projection restricted to
/// `parent` is a union of parts. Parts are ordered by their first column.
pub fn split(
    parent: ColumnSet,
    projections: impl IntoIterator<Item = ColumnSet>,
) -> Vec<ColumnSet> {
    let mut parts = vec![parent];
    if parent.is_empty() {
        return Vec::new();
    }
    for p in projections {
        let p = p.intersect(parent);
        if p.is_empty() || p == parent {
            continue;
        }
        let mut next = Vec::with_capacity(parts.len() + 1);
        for part in parts {
            let inside = part.intersect(p);
            let outside = part.difference(p);
            if !inside.is_empty() {
                next.push(inside);
            }
            if !outside.is_empty() {
                next.push(outside);
            }
        }
        parts = next;
    }
    parts.sort_by_key(|g| g.first());
    parts
}

/// A candidate group with its cost in scaled units.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Candidate {
    pub group: ColumnSet,
    pub cost: u128,
    /// Groups the candidate contributes, including those below it.
    pub groups: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CandidateSet {
    pub atoms: Vec<ColumnSet>,
    /// Atoms first, then retained unions.
    pub candidates: Vec<Candidate>,
}

/// Atoms plus every union of atoms that costs no more than its atoms do
/// separately. Enumerates all `2^k` unions, so callers keep `k` at most
/// [`MAX_EXACT_ATOMS`].
pub fn merge_candidates(
    atoms: &[ColumnSet],
    mut value: impl FnMut(ColumnSet) -> (u128, usize),
) -> CandidateSet {
    assert!(atoms.len() <= 31, "too many atoms for exhaustive merging");
    let singles: Vec<Candidate> = atoms
        .iter()
        .map(|&group| {
            let (cost, groups) = value(group);
            Candidate {
                group,
                cost,
                groups,
            }
        })
        .collect();
    let mut candidates = singles.clone();
    for mask in 1u32..(1 << atoms.len()) {
        if mask.count_ones() < 2 {
            continue;
        }
        let members = || (0..atoms.len()).filter(move |i| mask >> i & 1 == 1);
        let parts: u128 = members().map(|i| singles[i].cost).sum();
        let group = members().fold(ColumnSet::EMPTY, |u, i| u.union(atoms[i]));
        let (cost, groups) = value(group);
        if cost <= parts {
            candidates.push(Candidate {
                group,
                cost,
                groups,
            });
        }
    }
    CandidateSet {
        atoms: atoms.to_vec(),
        candidates,
    }
}

/// A partition of one parent group.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Partition {
    /// Ordered by first column.
    pub groups: Vec<ColumnSet>,
    pub cost: u128,
    /// Groups including those chosen below.
    pub total_groups: usize,
}

impl Partition {
    /// Lower cost, then fewer groups, then lexicographically smaller groups.
    fn better_than(&self, other: &Partition) -> bool {
        self.cost
            .cmp(&other.cost)
            .then(self.total_groups.cmp(&other.total_groups))
            .then_with(|| lex_cmp(&self.groups, &other.groups))
            == Ordering::Less
    }
}

fn lex_cmp(a: &[ColumnSet], b: &[ColumnSet]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        let o = x.iter().cmp(y.iter());
        if o != Ordering::Equal {
            return o;
        }
    }
    a.len().cmp(&b.len())
}

/// Cheapest partition of the atoms' union composed of candidates.
pub fn select(set: &CandidateSet) -> Partition {
    let k = set.atoms.len();
    if k == 0 {
        return Partition {
            groups: Vec::new(),
            cost: 0,
            total_groups: 0,
        };
    }
    // Candidate masks over atom indices.
    let atom_mask = |g: ColumnSet| -> u32 {
        (0..k)
            .filter(|&i| set.atoms[i].is_subset(g))
            .fold(0u32, |m, i| m | 1 << i)
    };
    let by_mask: HashMap<u32, &Candidate> = set
        .candidates
        .iter()
        .map(|c| (atom_mask(c.group), c))
        .collect();
    let full = (1u32 << k) - 1;
    let mut best: Vec<Option<Partition>> = vec![None; 1 << k];
    best[0] = Some(Partition {
        groups: Vec::new(),
        cost: 0,
        total_groups: 0,
    });
    for mask in 1..=full {
        let low = mask & mask.wrapping_neg();
        let rest = mask ^ low;
        let mut sub = rest;
        let mut winner: Option<Partition> = None;
        loop {
            let m = sub | low;
            if let Some(c) = by_mask.get(&m) {
                if let Some(tail) = &best[(mask ^ m) as usize] {
                    let mut groups = Vec::with_capacity(tail.groups.len() + 1);
                    groups.push(c.group);
                    groups.extend_from_slice(&tail.groups);
                    let p = Partition {
                        groups,
                        cost: c.cost + tail.cost,
                        total_groups: c.groups + tail.total_groups,
                    };
                    if winner.as_ref().is_none_or(|w| p.better_than(w)) {
                        winner = Some(p);
                    }
                }
            }
            if sub == 0 {
                break;
            }
            sub = (sub - 1) & rest;
        }
        best[mask as usize] = winner;
    }
    best[full as usize].take().expect("atoms are candidates")
}

/// Result of a layout search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Advice {
    #[serde(with = "layout_text")]
    pub layout: LayoutConfig,
    /// Modeled workload cost in scaled units.
    pub cost_scaled: u128,
    /// Modeled workload cost.
    pub cost: f64,
    /// Too many atoms for an exhaustive search: groups were restricted to
    /// runs of consecutive atoms.
    pub capped: bool,
}

mod layout_text {
    use super::LayoutConfig;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(l: &LayoutConfig, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&l.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<LayoutConfig, D::Error> {
        let text = String::deserialize(d)?;
        LayoutConfig::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Per-projection coefficients of one level: a group `g` intersecting the
/// projection costs `fixed + per_width * (1 + |g|)` (before `weight_den`).
#[derive(Clone, Copy, Debug)]
struct Term {
    projection: ColumnSet,
    fixed: u128,
    per_width: u128,
}

fn level_terms(ctx: &CostContext, wl: &LevelWorkload) -> Vec<Term> {
    let mut terms: HashMap<ColumnSet, Term> = HashMap::new();
    let bc = ctx.block_entries * ctx.columns;
    let mut add = |p: ColumnSet, fixed: u128, per_width: u128| {
        let t = terms.entry(p).or_insert(Term {
            projection: p,
            fixed: 0,
            per_width: 0,
        });
        t.fixed += fixed;
        t.per_width += per_width;
    };
    for (&p, &n) in &wl.reads {
        add(p, bc * n as u128, 0);
    }
    for (&p, s) in &wl.scans {
        add(p, 0, s.selected as u128);
    }
    for (&p, &n) in &wl.updates {
        add(p, 0, ctx.size_ratio * n as u128);
    }
    let mut terms: Vec<Term> = terms
        .into_values()
        .filter(|t| t.fixed + t.per_width > 0)
        .collect();
    terms.sort_by_key(|t| t.projection);
    terms
}

struct Solver {
    ctx: CostContext,
    depth: usize,
    terms: Vec<Vec<Term>>,
    /// Projections that may split a group at each level.
    splitters: Vec<Vec<ColumnSet>>,
    lookahead: bool,
    memo: HashMap<(usize, ColumnSet), Rc<Partition>>,
}

impl Solver {
    fn new(stats: &WorkloadStats, ctx: CostContext, depth: usize, lookahead: bool) -> Self {
        let empty = LevelWorkload::default();
        let terms: Vec<Vec<Term>> = (0..=depth)
            .map(|i| level_terms(&ctx, stats.level(i).unwrap_or(&empty)))
            .collect();
        let mut splitters: Vec<Vec<ColumnSet>> = terms
            .iter()
            .map(|ts| ts.iter().map(|t| t.projection).collect())
            .collect();
        if lookahead {
            for i in (0..depth).rev() {
                let below = splitters[i + 1].clone();
                splitters[i].extend(below);
                splitters[i].sort();
                splitters[i].dedup();
            }
        }
        Solver {
            ctx,
            depth,
            terms,
            splitters,
            lookahead,
            memo: HashMap::new(),
        }
    }

    /// Cost of `group` at `level` alone, in scaled units.
    fn own_cost(&self, level: usize, group: ColumnSet) -> u128 {
        let width = 1 + group.len() as u128;
        let ops: u128 = self.terms[level]
            .iter()
            .filter(|t| t.projection.intersects(group))
            .map(|t| t.fixed + t.per_width * width)
            .sum();
        self.ctx.insert_term(1) + ops * self.ctx.weight_den
    }

    /// Best partition of `parent` at `level` (with the levels below when
    /// looking ahead).
    fn solve(&mut self, level: usize, parent: ColumnSet) -> Rc<Partition> {
        if let Some(p) = self.memo.get(&(level, parent)) {
            return Rc::clone(p);
        }
        let atoms = split(parent, self.splitters[level].iter().copied());
        let set = merge_candidates(&atoms, |g| {
            let own = self.own_cost(level, g);
            if self.lookahead && level < self.depth {
                let below = self.solve(level + 1, g);
                (own + below.cost, 1 + below.total_groups)
            } else {
                (own, 1)
            }
        });
        let p = Rc::new(select(&set));
        self.memo.insert((level, parent), Rc::clone(&p));
        p
    }

    fn layout(&mut self, schema: &Schema) -> LayoutConfig {
        let mut levels = vec![vec![schema.all_columns()]];
        for level in 1..=self.depth {
            let mut groups = Vec::new();
            for parent in levels[level - 1].clone() {
                groups.extend_from_slice(&self.solve(level, parent).groups);
            }
            levels.push(groups);
        }
        LayoutConfig::new(levels)
    }
}

/// Best partition of every run of consecutive atoms at one level:
/// `cost[a][b]`, `groups[a][b]` and `first_end[a][b]`, the last atom of the
/// first group, for atoms `a..=b`.
struct RunTable {
    cost: Vec<u128>,
    groups: Vec<usize>,
    first_end: Vec<usize>,
}

impl Solver {
    /// Cost of each run of consecutive atoms as one group at `level`.
    fn run_costs(&self, level: usize, atoms: &[ColumnSet]) -> Vec<u128> {
        let n = atoms.len();
        let terms = &self.terms[level];
        let touching: Vec<Vec<usize>> = atoms
            .iter()
            .map(|&a| {
                (0..terms.len())
                    .filter(|&t| terms[t].projection.intersects(a))
                    .collect()
            })
            .collect();
        let mut out = vec![0u128; n * n];
        let mut hit = vec![false; terms.len()];
        for a in 0..n {
            hit.iter_mut().for_each(|h| *h = false);
            let (mut fixed, mut per_width, mut width) = (0u128, 0u128, 1u128);
            for b in a..n {
                for &t in &touching[b] {
                    if !hit[t] {
                        hit[t] = true;
                        fixed += terms[t].fixed;
                        per_width += terms[t].per_width;
                    }
                }
                width += atoms[b].len() as u128;
                out[a * n + b] =
                    self.ctx.insert_term(1) + (fixed + per_width * width) * self.ctx.weight_den;
            }
        }
        out
    }

    /// Search restricted to groups that are runs of consecutive `atoms`,
    /// solved bottom-up over all runs at every level.
    fn layout_over_runs(&self, atoms: &[ColumnSet]) -> LayoutConfig {
        let n = atoms.len();
        let mut tables: Vec<RunTable> = Vec::with_capacity(self.depth);
        for level in (1..=self.depth).rev() {
            let own = self.run_costs(level, atoms);
            let below = tables.last().filter(|_| self.lookahead);
            let value = |a: usize, b: usize| match below {
                Some(t) => (own[a * n + b] + t.cost[a * n + b], 1 + t.groups[a * n + b]),
                None => (own[a * n + b], 1),
            };
            let mut t = RunTable {
                cost: vec![0; n * n],
                groups: vec![0; n * n],
                first_end: vec![0; n * n],
            };
            for b in 0..n {
                for a in (0..=b).rev() {
                    let mut best: Option<(u128, usize, usize, ColumnSet)> = None;
                    let mut first = ColumnSet::EMPTY;
                    for (y, &atom) in atoms.iter().enumerate().take(b + 1).skip(a) {
                        first = first.union(atom);
                        let (mut cost, mut groups) = value(a, y);
                        if y < b {
                            cost += t.cost[(y + 1) * n + b];
                            groups += t.groups[(y + 1) * n + b];
                        }
                        // Partitions with different first groups are
                        // ordered by them.
                        let better = best.is_none_or(|(c, g, _, f)| {
                            cost.cmp(&c)
                                .then(groups.cmp(&g))
                                .then_with(|| first.iter().cmp(f.iter()))
                                == Ordering::Less
                        });
                        if better {
                            best = Some((cost, groups, y, first));
                        }
                    }
                    let (cost, groups, y, _) = best.expect("non-empty run");
                    t.cost[a * n + b] = cost;
                    t.groups[a * n + b] = groups;
                    t.first_end[a * n + b] = y;
                }
            }
            tables.push(t);
        }
        tables.reverse();
        let union = |a: usize, b: usize| {
            atoms[a..=b]
                .iter()
                .fold(ColumnSet::EMPTY, |u, &g| u.union(g))
        };
        let mut levels = vec![vec![union(0, n - 1)]];
        let mut parents = vec![(0, n - 1)];
        for t in &tables {
            let mut runs = Vec::new();
            for &(a, b) in &parents {
                let mut x = a;
                while x <= b {
                    let y = t.first_end[x * n + b];
                    runs.push((x, y));
                    x = y + 1;
                }
            }
            runs.sort_by_key(|&(a, _)| atoms[a].first());
            levels.push(runs.iter().map(|&(a, b)| union(a, b)).collect());
            parents = runs;
        }
        LayoutConfig::new(levels)
    }
}

fn run(
    stats: &WorkloadStats,
    params: &TreeParams,
    schema: &Schema,
    insert_weight: f64,
    lookahead: bool,
) -> Result<Advice> {
    params.validate(schema)?;
    stats.validate(schema, params.levels)?;
    let ctx = CostContext::new(params, schema, stats.inserts, insert_weight)?;
    let mut solver = Solver::new(stats, ctx, params.levels, lookahead);
    let every: Vec<ColumnSet> = solver.splitters.iter().flatten().copied().collect();
    let finest = split(schema.all_columns(), every);
    let capped = finest.len() > MAX_EXACT_ATOMS;
    let layout = if capped {
        tracing::warn!(
            atoms = finest.len(),
            "too many atoms for an exhaustive search; groups are runs of consecutive atoms"
        );
        solver.layout_over_runs(&finest)
    } else {
        solver.layout(schema)
    };
    debug_assert!(validate_layout(&layout, schema).is_ok());
    let cost_scaled = workload_cost_scaled(&layout, stats, &ctx);
    Ok(Advice {
        layout,
        cost_scaled,
        cost: cost_scaled as f64 / ctx.scale(),
        capped,
    })
}

/// Layout with the minimum modeled cost among all layouts whose groups at
/// each level refine the level above. When `capped`, the minimum is over
/// layouts whose groups are runs of consecutive atoms.
pub fn advise(
    stats: &WorkloadStats,
    params: &TreeParams,
    schema: &Schema,
    insert_weight: f64,
) -> Result<Advice> {
    run(stats, params, schema, insert_weight, true)
}

/// Level-by-level variant: each level minimizes its own cost given the
/// level above.
pub fn advise_greedy(
    stats: &WorkloadStats,
    params: &TreeParams,
    schema: &Schema,
    insert_weight: f64,
) -> Result<Advice> {
    run(stats, params, schema, insert_weight, false)
}
