//! Named fixed layouts used for comparisons.

use laser_core::{ColumnSet, LayoutConfig, Schema};

use crate::error::{BenchError, Result};

/// Row format at every level.
pub fn row(schema: &Schema, levels: usize) -> LayoutConfig {
    LayoutConfig::row(schema, levels)
}

/// Single-column groups below Level-0.
pub fn column(schema: &Schema, levels: usize) -> LayoutConfig {
    LayoutConfig::uniform(schema, levels, 1)
}

/// Equal-width groups of `cg_size` columns below Level-0.
pub fn cg(schema: &Schema, levels: usize, cg_size: usize) -> LayoutConfig {
    LayoutConfig::uniform(schema, levels, cg_size)
}

/// Row format except the two deepest levels, which are single-column.
pub fn htap_simple(schema: &Schema, levels: usize) -> LayoutConfig {
    let all = schema.all_columns();
    let columns: Vec<ColumnSet> = (1..=schema.columns() as u16)
        .map(ColumnSet::single)
        .collect();
    let split_from = levels.saturating_sub(1).max(1);
    let groups = (0..=levels)
        .map(|i| {
            if i >= split_from {
                columns.clone()
            } else {
                vec![all]
            }
        })
        .collect();
    LayoutConfig::new(groups)
}

/// Resolves `row`, `column`, `htap-simple` or `cg-<n>`.
pub fn by_name(name: &str, schema: &Schema, levels: usize) -> Result<LayoutConfig> {
    match name {
        "row" => Ok(row(schema, levels)),
        "column" => Ok(column(schema, levels)),
        "htap-simple" => Ok(htap_simple(schema, levels)),
        other => {
            let n = other
                .strip_prefix("cg-")
                .and_then(|n| n.parse::<usize>().ok())
                .filter(|&n| n >= 1 && n <= schema.columns())
                .ok_or_else(|| BenchError::Spec(format!("unknown design {other:?}")))?;
            Ok(cg(schema, levels, n))
        }
    }
}

/// The fixed comparison designs for a schema: row, column, the listed
/// group widths and the row/column hybrid.
pub fn fixed_designs(
    schema: &Schema,
    levels: usize,
    widths: &[usize],
) -> Vec<(String, LayoutConfig)> {
    let mut out = vec![
        ("row".to_string(), row(schema, levels)),
        ("column".to_string(), column(schema, levels)),
    ];
    for &w in widths {
        if w > 1 && w < schema.columns() {
            out.push((format!("cg-{w}"), cg(schema, levels, w)));
        }
    }
    out.push(("htap-simple".to_string(), htap_simple(schema, levels)));
    out
}
