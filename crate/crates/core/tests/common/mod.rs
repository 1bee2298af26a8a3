#![allow(dead_code)]

use std::collections::BTreeMap;

use laser_core::{
    ColumnId, ColumnSet, Engine, Key, LayoutConfig, Options, Row, Schema, SyncPolicy, TreeParams,
    Value,
};

/// Small tree: 4-byte values, `block_entries` row entries per block.
pub fn params(
    schema: &Schema,
    levels: usize,
    size_ratio: u32,
    block_entries: usize,
    level0_blocks: usize,
) -> TreeParams {
    let row = (1 + schema.columns()) * schema.dt_size() as usize;
    TreeParams {
        size_ratio,
        levels,
        block_entries,
        level0_blocks,
        block_bytes: block_entries * row,
        level0_max_runs: 4,
    }
}

/// Inline (deterministic) engine options with tiny memtables.
pub fn small_options(
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

/// Reference semantics: per key, the live value of every column.
#[derive(Default, Clone)]
pub struct Oracle {
    pub rows: BTreeMap<Key, BTreeMap<ColumnId, Value>>,
}

impl Oracle {
    pub fn insert(&mut self, key: Key, row: &[Value]) {
        self.rows.insert(
            key,
            row.iter()
                .enumerate()
                .map(|(i, v)| (i as ColumnId + 1, *v))
                .collect(),
        );
    }

    pub fn update(&mut self, key: Key, values: &[(ColumnId, Value)]) {
        let r = self.rows.entry(key).or_default();
        for &(c, v) in values {
            r.insert(c, v);
        }
    }

    pub fn delete(&mut self, key: Key) {
        self.rows.remove(&key);
    }

    pub fn get(&self, key: Key, projection: ColumnSet) -> Option<Row> {
        let r = self.rows.get(&key)?;
        let cols: Vec<(ColumnId, Value)> = r
            .iter()
            .filter(|(c, _)| projection.contains(**c))
            .map(|(c, v)| (*c, *v))
            .collect();
        if cols.is_empty() {
            return None;
        }
        Some(Row {
            columns: cols.iter().map(|(c, _)| *c).collect(),
            values: cols.iter().map(|(_, v)| *v).collect(),
        })
    }

    pub fn scan(&self, low: Key, high: Key, projection: ColumnSet) -> Vec<(Key, Row)> {
        self.rows
            .range(low..=high)
            .filter_map(|(k, _)| self.get(*k, projection).map(|r| (*k, r)))
            .collect()
    }
}

pub fn scan_all(engine: &Engine, low: Key, high: Key, projection: ColumnSet) -> Vec<(Key, Row)> {
    engine
        .scan(low, high, projection)
        .unwrap()
        .collect::<laser_core::Result<Vec<_>>>()
        .unwrap()
}
