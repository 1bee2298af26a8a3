use laser_core::{ColumnSet, LayoutConfig, Options, Schema, SyncPolicy, TreeParams};
use rand::Rng;

/// Result of one criterion.
pub struct Outcome {
    pub pass: bool,
    pub detail: String,
}

impl Outcome {
    pub fn new(pass: bool, detail: impl Into<String>) -> Self {
        Outcome {
            pass,
            detail: detail.into(),
        }
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Outcome::new(false, detail)
    }
}

/// Tree parameters with 4-byte values and `block_entries` row entries per
/// block.
pub fn params(
    schema: &Schema,
    levels: usize,
    size_ratio: u32,
    block_entries: usize,
    level0_blocks: usize,
    level0_max_runs: usize,
) -> TreeParams {
    let row = (1 + schema.columns()) * schema.dt_size() as usize;
    TreeParams {
        size_ratio,
        levels,
        block_entries,
        level0_blocks,
        block_bytes: block_entries * row,
        level0_max_runs,
    }
}

/// Options with inline flushes and compactions and no syncing.
pub fn inline_options(
    schema: Schema,
    params: TreeParams,
    layout: LayoutConfig,
    memtable_bytes: usize,
) -> Options {
    let mut opts = Options::new(schema, params, layout);
    opts.memtable_bytes = memtable_bytes;
    opts.sst_target_bytes = 16 << 10;
    opts.wal_sync = SyncPolicy::None;
    opts.sync_files = false;
    opts.background = false;
    opts
}

/// Checks that level 0 is one full-row group, that every level partitions
/// the schema and that every group is contained in a group of the level
/// above.
pub fn check_layout(layout: &LayoutConfig, schema: &Schema) -> Result<(), String> {
    let all = schema.all_columns();
    if layout.level(0) != [all] {
        return Err(format!("level 0 is {:?}", layout.level(0)));
    }
    for (i, groups) in layout.levels().iter().enumerate() {
        let mut seen = ColumnSet::EMPTY;
        for &g in groups {
            if g.is_empty() || g.intersects(seen) {
                return Err(format!("level {i}: groups overlap or are empty"));
            }
            seen = seen.union(g);
        }
        if seen != all {
            return Err(format!("level {i}: groups do not cover the schema"));
        }
        if i > 0 {
            for &g in groups {
                if !layout.level(i - 1).iter().any(|&p| g.is_subset(p)) {
                    return Err(format!(
                        "level {i}: group {g:?} is not inside a parent group"
                    ));
                }
            }
        }
    }
    Ok(())
}

/// Uniformly random non-empty subset of the first `c` columns.
pub fn random_projection(rng: &mut impl Rng, c: usize) -> ColumnSet {
    loop {
        let mut s = ColumnSet::EMPTY;
        for col in 1..=c as u16 {
            if rng.gen_bool(0.5) {
                s.insert(col);
            }
        }
        if !s.is_empty() {
            return s;
        }
    }
}

/// Random layout of `levels` levels below Level-0 where each level refines
/// the one above by splitting some groups into arbitrary subsets.
pub fn random_layout(rng: &mut impl Rng, schema: &Schema, levels: usize) -> LayoutConfig {
    let mut out = vec![vec![schema.all_columns()]];
    for _ in 0..levels {
        let mut next = Vec::new();
        for &g in out.last().unwrap() {
            if g.len() == 1 || rng.gen_bool(0.4) {
                next.push(g);
                continue;
            }
            let parts = rng.gen_range(2..=g.len().min(3));
            let mut bins = vec![ColumnSet::EMPTY; parts];
            for col in g.iter() {
                bins[rng.gen_range(0..parts)].insert(col);
            }
            next.extend(bins.into_iter().filter(|b| !b.is_empty()));
        }
        next.sort_by_key(|g| g.first());
        out.push(next);
    }
    LayoutConfig::new(out)
}
