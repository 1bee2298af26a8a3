//! Closed-form I/O cost model for a layout under a workload.
//!
//! Costs are block-I/O estimates with unit constants. Besides the `f64`
//! API, every quantity is also available in *scaled units*: the cost
//! multiplied by `B * c * weight_den`, which is an exact integer. The advisor
//! compares designs in scaled units so equal costs compare equal.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schema::{ColumnSet, LayoutConfig, Schema, TreeParams};

/// `E^g`: number of groups intersecting `projection`.
pub fn eg(groups: &[ColumnSet], projection: ColumnSet) -> usize {
    groups.iter().filter(|g| g.intersects(projection)).count()
}

/// `E^G`: sum of `1 + cg_size` over groups intersecting `projection`.
#[allow(non_snake_case)]
pub fn eG(groups: &[ColumnSet], projection: ColumnSet) -> usize {
    groups
        .iter()
        .filter(|g| g.intersects(projection))
        .map(|g| 1 + g.len())
        .sum()
}

/// Operation costs of one design.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OpCosts {
    /// Insert amplification.
    pub w: f64,
    /// Point-read block reads.
    pub p: f64,
    /// Range-scan block reads.
    pub q: f64,
    /// Update amplification.
    pub u: f64,
}

fn bc(params: &TreeParams, schema: &Schema) -> f64 {
    (params.block_entries * schema.columns()) as f64
}

/// `W = T L / B + T / (B c) * sum_{i=0..L} g_i`.
pub fn insert_amp(layout: &LayoutConfig, params: &TreeParams, schema: &Schema) -> f64 {
    let t = params.size_ratio as f64;
    let l = layout.depth() as f64;
    let sum_g: usize = (0..layout.num_levels()).map(|i| layout.groups_at(i)).sum();
    t * l / params.block_entries as f64 + t * sum_g as f64 / bc(params, schema)
}

/// `P = sum_i E^g_i`.
pub fn point_cost(layout: &LayoutConfig, projection: ColumnSet) -> f64 {
    layout
        .levels()
        .iter()
        .map(|g| eg(g, projection))
        .sum::<usize>() as f64
}

/// `Q = sum_i s_i E^G_i / (c B)`; `selectivity[i]` is `s_i`.
pub fn scan_cost(
    layout: &LayoutConfig,
    projection: ColumnSet,
    selectivity: &[f64],
    params: &TreeParams,
    schema: &Schema,
) -> f64 {
    layout
        .levels()
        .iter()
        .zip(selectivity)
        .map(|(g, s)| s * eG(g, projection) as f64)
        .sum::<f64>()
        / bc(params, schema)
}

/// `U = sum_i T E^G_i / (c B)`.
pub fn update_amp(
    layout: &LayoutConfig,
    projection: ColumnSet,
    params: &TreeParams,
    schema: &Schema,
) -> f64 {
    let t = params.size_ratio as f64;
    layout
        .levels()
        .iter()
        .map(|g| t * eG(g, projection) as f64)
        .sum::<f64>()
        / bc(params, schema)
}

/// Splits a scan's total selectivity across levels `0..=L` in proportion to
/// level capacities `T^i B pg`.
pub fn estimate_selectivity(total: f64, params: &TreeParams) -> Vec<f64> {
    let caps: Vec<f64> = (0..=params.levels)
        .map(|i| params.level_capacity_entries(i))
        .collect();
    let sum: f64 = caps.iter().sum();
    caps.iter().map(|c| total * c / sum).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScanStat {
    pub count: u64,
    /// Entries selected at the level, summed over the scans.
    pub selected: u64,
}

/// Operations served by one level, keyed by projection.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelWorkload {
    pub reads: BTreeMap<ColumnSet, u64>,
    pub scans: BTreeMap<ColumnSet, ScanStat>,
    pub updates: BTreeMap<ColumnSet, u64>,
}

impl LevelWorkload {
    pub fn is_empty(&self) -> bool {
        self.reads.is_empty() && self.scans.is_empty() && self.updates.is_empty()
    }

    /// Every projection used at this level.
    pub fn projections(&self) -> impl Iterator<Item = ColumnSet> + '_ {
        self.reads
            .keys()
            .chain(self.scans.keys())
            .chain(self.updates.keys())
            .copied()
    }

    pub fn add_read(&mut self, projection: ColumnSet, count: u64) {
        *self.reads.entry(projection).or_default() += count;
    }

    pub fn add_update(&mut self, projection: ColumnSet, count: u64) {
        *self.updates.entry(projection).or_default() += count;
    }

    pub fn add_scan(&mut self, projection: ColumnSet, count: u64, selected: u64) {
        let s = self.scans.entry(projection).or_default();
        s.count += count;
        s.selected += selected;
    }

    pub fn merge(&mut self, other: &LevelWorkload) {
        for (&p, &n) in &other.reads {
            self.add_read(p, n);
        }
        for (&p, s) in &other.scans {
            self.add_scan(p, s.count, s.selected);
        }
        for (&p, &n) in &other.updates {
            self.add_update(p, n);
        }
    }
}

/// `w` plus per-level `p_i`, `q_i`/`s_i` and `u_i` with projections.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkloadStats {
    pub columns: usize,
    pub inserts: u64,
    /// Levels `0..=L`.
    pub levels: Vec<LevelWorkload>,
}

impl WorkloadStats {
    pub fn new(columns: usize, levels: usize) -> Self {
        WorkloadStats {
            columns,
            inserts: 0,
            levels: vec![LevelWorkload::default(); levels],
        }
    }

    pub fn level(&self, i: usize) -> Option<&LevelWorkload> {
        self.levels.get(i)
    }

    pub fn level_mut(&mut self, i: usize) -> &mut LevelWorkload {
        if self.levels.len() <= i {
            self.levels.resize(i + 1, LevelWorkload::default());
        }
        &mut self.levels[i]
    }

    pub fn validate(&self, schema: &Schema, levels: usize) -> Result<()> {
        if self.columns != schema.columns() {
            return Err(Error::InvalidArgument(format!(
                "statistics describe {} columns, schema has {}",
                self.columns,
                schema.columns()
            )));
        }
        if self.levels.len() > levels + 1 {
            return Err(Error::InvalidArgument(format!(
                "statistics cover {} levels, tree has {}",
                self.levels.len(),
                levels + 1
            )));
        }
        for (i, l) in self.levels.iter().enumerate() {
            for p in l.projections() {
                if p.is_empty() || !schema.contains(p) {
                    return Err(Error::InvalidArgument(format!(
                        "level {i}: invalid projection {p}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Scalar constants shared by the scaled cost functions.
#[derive(Clone, Copy, Debug)]
pub struct CostContext {
    pub size_ratio: u128,
    pub block_entries: u128,
    pub columns: u128,
    pub inserts: u128,
    /// Insert weight as the rational `weight_num / weight_den`.
    pub weight_num: u128,
    pub weight_den: u128,
}

impl CostContext {
    pub fn new(
        params: &TreeParams,
        schema: &Schema,
        inserts: u64,
        insert_weight: f64,
    ) -> Result<Self> {
        if !insert_weight.is_finite() || insert_weight < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "invalid insert weight {insert_weight}"
            )));
        }
        const DEN: u128 = 1_000_000;
        Ok(CostContext {
            size_ratio: params.size_ratio as u128,
            block_entries: params.block_entries as u128,
            columns: schema.columns() as u128,
            inserts: inserts as u128,
            weight_num: (insert_weight * DEN as f64).round() as u128,
            weight_den: DEN,
        })
    }

    /// Multiplier from cost to scaled units.
    pub fn scale(&self) -> f64 {
        (self.block_entries * self.columns * self.weight_den) as f64
    }

    /// Insert term of one level, `w T g / (B c)`, in scaled units.
    pub fn insert_term(&self, groups: u128) -> u128 {
        self.inserts * self.size_ratio * groups * self.weight_num
    }

    /// Read, scan and update terms for a single group, in scaled units.
    /// The level cost is additive over groups apart from the insert term.
    pub fn group_terms(&self, group: ColumnSet, wl: &LevelWorkload) -> u128 {
        let width = 1 + group.len() as u128;
        let bc = self.block_entries * self.columns;
        let mut total = 0u128;
        for (p, &n) in &wl.reads {
            if p.intersects(group) {
                total += bc * n as u128;
            }
        }
        for (p, s) in &wl.scans {
            if p.intersects(group) {
                total += s.selected as u128 * width;
            }
        }
        for (p, &n) in &wl.updates {
            if p.intersects(group) {
                total += self.size_ratio * n as u128 * width;
            }
        }
        total * self.weight_den
    }

    /// Level cost of a partition, in scaled units.
    pub fn level_cost_scaled(&self, groups: &[ColumnSet], wl: &LevelWorkload) -> u128 {
        self.insert_term(groups.len() as u128)
            + groups
                .iter()
                .map(|&g| self.group_terms(g, wl))
                .sum::<u128>()
    }

    /// Layout-independent insert term `w T L / B`, in scaled units.
    pub fn depth_term(&self, depth: usize) -> u128 {
        self.inserts * self.size_ratio * depth as u128 * self.columns * self.weight_num
    }
}

/// Per-level cost:
/// `w T g_i/(B c) + sum p E^g + sum s E^G/(c B) + sum T u E^G/(c B)`.
pub fn level_cost(
    groups: &[ColumnSet],
    wl: &LevelWorkload,
    inserts: u64,
    params: &TreeParams,
    schema: &Schema,
) -> f64 {
    let t = params.size_ratio as f64;
    let bc = bc(params, schema);
    let mut cost = inserts as f64 * t * groups.len() as f64 / bc;
    for (&p, &n) in &wl.reads {
        cost += n as f64 * eg(groups, p) as f64;
    }
    for (&p, s) in &wl.scans {
        cost += s.selected as f64 * eG(groups, p) as f64 / bc;
    }
    for (&p, &n) in &wl.updates {
        cost += t * n as f64 * eG(groups, p) as f64 / bc;
    }
    cost
}

/// Total modeled cost: the per-level costs plus the layout-independent part
/// of the insert cost, so that it equals the sum of `W`, `P`, `Q` and `U`
/// over every operation.
pub fn workload_cost(
    layout: &LayoutConfig,
    stats: &WorkloadStats,
    params: &TreeParams,
    schema: &Schema,
) -> f64 {
    let per_level: f64 = (0..layout.num_levels())
        .map(|i| {
            let empty = LevelWorkload::default();
            let wl = stats.level(i).unwrap_or(&empty);
            level_cost(layout.level(i), wl, stats.inserts, params, schema)
        })
        .sum();
    per_level
        + stats.inserts as f64 * params.size_ratio as f64 * layout.depth() as f64
            / params.block_entries as f64
}

/// [`workload_cost`] in exact scaled units.
pub fn workload_cost_scaled(
    layout: &LayoutConfig,
    stats: &WorkloadStats,
    ctx: &CostContext,
) -> u128 {
    let empty = LevelWorkload::default();
    let per_level: u128 = (0..layout.num_levels())
        .map(|i| ctx.level_cost_scaled(layout.level(i), stats.level(i).unwrap_or(&empty)))
        .sum();
    per_level + ctx.depth_term(layout.depth())
}
