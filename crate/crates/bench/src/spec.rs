//! Workload and tree settings, stored as versioned TOML.

use std::path::Path;

use laser_core::entry::footprint;
use laser_core::{levels_for, ColumnId, ColumnSet, Schema, TreeParams};
use serde::{Deserialize, Serialize};

use crate::error::{BenchError, Result};

pub const SPEC_VERSION: u32 = 1;

/// Structural and sizing settings of the engine under test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeSettings {
    pub size_ratio: u32,
    /// Levels below Level-0; `0` derives it from the total row count.
    #[serde(default)]
    pub levels: usize,
    pub block_bytes: usize,
    /// Level-0 capacity in blocks; `0` derives it from the memtable size.
    #[serde(default)]
    pub level0_blocks: usize,
    pub level0_max_runs: usize,
    pub memtable_bytes: usize,
    pub sst_target_bytes: usize,
    pub bloom_bits_per_key: usize,
}

impl Default for TreeSettings {
    fn default() -> Self {
        TreeSettings {
            size_ratio: 2,
            levels: 0,
            block_bytes: 4096,
            level0_blocks: 0,
            level0_max_runs: 4,
            memtable_bytes: 4 << 20,
            sst_target_bytes: 256 << 10,
            bloom_bits_per_key: 10,
        }
    }
}

/// Point-query class (Q2a, Q2b).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PointSpec {
    pub count: u64,
    /// Mean of the normal recency distribution (1.0 is the newest key).
    pub mean: f64,
    pub stddev: f64,
    pub projection: ColumnSet,
}

/// Range-query class (Q4, Q5).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub count: u64,
    /// Fraction of the key space covered by each query.
    pub fraction: f64,
    pub projection: ColumnSet,
}

/// Column-update class (Q3): one random column of a recently inserted key.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UpdateSpec {
    /// One update after every `every` inserts; `0` disables updates.
    pub every: u64,
    pub mean: f64,
    pub stddev: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkloadSpec {
    pub version: u32,
    pub name: String,
    pub columns: usize,
    #[serde(default = "default_dt_size")]
    pub dt_size: u32,
    pub seed: u64,
    /// Rows inserted by the load phase.
    pub load_rows: u64,
    /// Inserts (Q1) issued during the steady phase.
    pub steady_inserts: u64,
    pub q2a: PointSpec,
    pub q2b: PointSpec,
    pub q3: UpdateSpec,
    pub q4: ScanSpec,
    pub q5: ScanSpec,
    /// Reader client threads in concurrent mode.
    pub readers: usize,
    pub tree: TreeSettings,
}

fn default_dt_size() -> u32 {
    4
}

/// Maps the 30-column projection `lo..=hi` onto `c` columns.
fn project(c: usize, lo: usize, hi: usize) -> ColumnSet {
    let map = |x: usize| ((x - 1) * c / 30 + 1) as ColumnId;
    let lo = map(lo);
    let hi = if hi == 30 {
        c as ColumnId
    } else {
        map(hi).max(lo)
    };
    ColumnSet::range(lo, hi)
}

impl WorkloadSpec {
    /// The workload at its original size: 400M loaded rows, 20M more
    /// inserted alongside the queries.
    pub fn full(columns: usize) -> Self {
        WorkloadSpec {
            version: SPEC_VERSION,
            name: format!("hw-c{columns}"),
            columns,
            dt_size: 4,
            seed: 42,
            load_rows: 400_000_000,
            steady_inserts: 20_000_000,
            q2a: PointSpec {
                count: 500_000,
                mean: 0.98,
                stddev: 0.02,
                projection: project(columns, 1, 30),
            },
            q2b: PointSpec {
                count: 500_000,
                mean: 0.85,
                stddev: 0.02,
                projection: project(columns, 16, 30),
            },
            q3: UpdateSpec {
                every: 100,
                mean: 0.98,
                stddev: 0.02,
            },
            q4: ScanSpec {
                count: 12,
                fraction: 0.05,
                projection: project(columns, 21, 30),
            },
            q5: ScanSpec {
                count: 12,
                fraction: 0.5,
                projection: project(columns, 28, 30),
            },
            readers: 4,
            tree: TreeSettings {
                levels: 8,
                ..TreeSettings::default()
            },
        }
    }

    /// Desk-scale preset: 4M loaded rows, 1/100 of the query counts and
    /// 1 MiB memtables, which gives six levels at eight columns.
    pub fn desk(columns: usize) -> Self {
        let mut s = WorkloadSpec::full(columns);
        s.name = format!("hw-desk-c{columns}");
        s.load_rows = 4_000_000;
        s.steady_inserts = 200_000;
        s.q2a.count = 5_000;
        s.q2b.count = 5_000;
        s.tree.levels = 0;
        s.tree.memtable_bytes = 1 << 20;
        s
    }

    /// Divides rows, inserts and point-query counts by `scale`.
    pub fn scaled(&self, scale: f64) -> Result<Self> {
        if !(scale.is_finite() && scale >= 1.0) {
            return Err(BenchError::Spec(format!("scale must be >= 1, got {scale}")));
        }
        let div = |n: u64| ((n as f64 / scale).round() as u64).max(if n > 0 { 1 } else { 0 });
        let mut s = self.clone();
        s.load_rows = div(s.load_rows);
        s.steady_inserts = div(s.steady_inserts);
        s.q2a.count = div(s.q2a.count);
        s.q2b.count = div(s.q2b.count);
        Ok(s)
    }

    /// Vertical shift: moves both point-query distributions towards older
    /// keys by `offset`.
    pub fn shift_reads(&mut self, offset: f64) {
        self.q2a.mean -= offset;
        self.q2b.mean -= offset;
    }

    /// Horizontal shift: moves the Q5 projection `offset` columns left.
    pub fn shift_scan(&mut self, offset: u16) -> Result<()> {
        let (lo, hi) = (self.q5.projection.first(), self.q5.projection.last());
        match (lo, hi) {
            (Some(lo), Some(hi)) if lo > offset => {
                self.q5.projection = ColumnSet::range(lo - offset, hi - offset);
                Ok(())
            }
            _ => Err(BenchError::Spec(format!(
                "cannot shift Q5 projection by {offset}"
            ))),
        }
    }

    pub fn schema(&self) -> Result<Schema> {
        Ok(Schema::new(self.columns, self.dt_size)?)
    }

    pub fn total_rows(&self) -> u64 {
        self.load_rows + self.steady_inserts
    }

    /// Tree parameters with derived fields filled in.
    pub fn tree_params(&self) -> Result<TreeParams> {
        tree_params(&self.schema()?, &self.tree, self.total_rows())
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SPEC_VERSION {
            return Err(BenchError::Spec(format!(
                "unsupported spec version {} (expected {SPEC_VERSION})",
                self.version
            )));
        }
        let schema = self.schema()?;
        for (name, p) in [("q2a", &self.q2a), ("q2b", &self.q2b)] {
            check_unit(name, p.mean)?;
            check_projection(name, p.projection, &schema)?;
            if !(p.stddev >= 0.0 && p.stddev.is_finite()) {
                return Err(BenchError::Spec(format!(
                    "{name}: invalid stddev {}",
                    p.stddev
                )));
            }
        }
        check_unit("q3", self.q3.mean)?;
        for (name, s) in [("q4", &self.q4), ("q5", &self.q5)] {
            check_unit(name, s.fraction)?;
            check_projection(name, s.projection, &schema)?;
        }
        if self.readers == 0 {
            return Err(BenchError::Spec("need at least one reader".into()));
        }
        self.tree_params()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let spec: WorkloadSpec = toml::from_str(&text)
            .map_err(|e| BenchError::Spec(format!("{}: {e}", path.display())))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("spec serializes")
    }
}

fn check_unit(name: &str, x: f64) -> Result<()> {
    if (0.0..=1.0).contains(&x) {
        Ok(())
    } else {
        Err(BenchError::Spec(format!("{name}: {x} is outside [0, 1]")))
    }
}

fn check_projection(name: &str, p: ColumnSet, schema: &Schema) -> Result<()> {
    if p.is_empty() || !schema.contains(p) {
        return Err(BenchError::Spec(format!(
            "{name}: projection {p} outside the schema"
        )));
    }
    Ok(())
}

/// Tree parameters from settings; `rows` sizes the tree when `levels` is 0.
/// A derived Level-0 capacity is what `level0_max_runs` full memtables hold.
pub fn tree_params(schema: &Schema, tree: &TreeSettings, rows: u64) -> Result<TreeParams> {
    let mut p = TreeParams::derive(
        schema,
        tree.block_bytes,
        tree.size_ratio,
        1,
        1,
        tree.level0_max_runs,
    )?;
    p.level0_blocks = if tree.level0_blocks > 0 {
        tree.level0_blocks
    } else {
        let per_memtable = tree.memtable_bytes.div_ceil(footprint(schema.columns()));
        (tree.level0_max_runs * per_memtable)
            .div_ceil(p.block_entries)
            .max(1)
    };
    p.levels = if tree.levels > 0 {
        tree.levels
    } else {
        levels_for(rows.max(1), &p)?
    };
    Ok(p)
}

/// Parameters file of the advisor: the schema width plus tree settings.
/// A workload spec file is accepted as well.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamsFile {
    pub columns: usize,
    #[serde(default = "default_dt_size")]
    pub dt_size: u32,
    /// Used to derive `levels` when the tree leaves it at 0.
    #[serde(default)]
    pub load_rows: u64,
    #[serde(default)]
    pub steady_inserts: u64,
    pub tree: TreeSettings,
}

impl ParamsFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| BenchError::Spec(format!("{}: {e}", path.display())))
    }

    pub fn schema(&self) -> Result<Schema> {
        Ok(Schema::new(self.columns, self.dt_size)?)
    }

    pub fn tree_params(&self) -> Result<TreeParams> {
        tree_params(
            &self.schema()?,
            &self.tree,
            self.load_rows + self.steady_inserts,
        )
    }
}
