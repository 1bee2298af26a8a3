//! Schema, column sets, per-level column-group layouts and tree parameters.
//!
//! Columns are dense identifiers `1..=c`. A [`ColumnSet`] is a bitmask over
//! them and doubles as projection, column group and presence bitmap.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::error::{Error, Result};

/// Column identifier, `1..=c`.
pub type ColumnId = u16;

/// Keys are 8-byte unsigned integers ordered numerically.
pub type Key = u64;

/// Column values are 4-byte integers.
pub type Value = u32;

pub const MAX_COLUMNS: usize = 128;

/// A set of column identifiers stored as a 128-bit mask (bit `id - 1`).
#[derive(Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct ColumnSet(u128);

impl ColumnSet {
    pub const EMPTY: ColumnSet = ColumnSet(0);

    pub const fn from_bits(bits: u128) -> Self {
        ColumnSet(bits)
    }

    pub const fn bits(self) -> u128 {
        self.0
    }

    /// All columns `1..=c`.
    pub fn full(c: usize) -> Self {
        assert!(c <= MAX_COLUMNS);
        if c == MAX_COLUMNS {
            ColumnSet(u128::MAX)
        } else {
            ColumnSet((1u128 << c) - 1)
        }
    }

    pub fn single(id: ColumnId) -> Self {
        assert!(
            id >= 1 && (id as usize) <= MAX_COLUMNS,
            "column id {id} out of range"
        );
        ColumnSet(1u128 << (id - 1))
    }

    /// Columns `lo..=hi`.
    pub fn range(lo: ColumnId, hi: ColumnId) -> Self {
        assert!(lo >= 1 && lo <= hi && (hi as usize) <= MAX_COLUMNS);
        let upper = ColumnSet::full(hi as usize).0;
        let lower = ColumnSet::full(lo as usize - 1).0;
        ColumnSet(upper & !lower)
    }

    pub fn contains(self, id: ColumnId) -> bool {
        id >= 1 && (id as usize) <= MAX_COLUMNS && self.0 & (1u128 << (id - 1)) != 0
    }

    pub fn insert(&mut self, id: ColumnId) {
        *self = self.union(ColumnSet::single(id));
    }

    pub fn union(self, other: ColumnSet) -> Self {
        ColumnSet(self.0 | other.0)
    }

    pub fn intersect(self, other: ColumnSet) -> Self {
        ColumnSet(self.0 & other.0)
    }

    pub fn difference(self, other: ColumnSet) -> Self {
        ColumnSet(self.0 & !other.0)
    }

    pub fn intersects(self, other: ColumnSet) -> bool {
        self.0 & other.0 != 0
    }

    pub fn is_subset(self, other: ColumnSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    /// Smallest column id, if any.
    pub fn first(self) -> Option<ColumnId> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as ColumnId + 1)
    }

    pub fn last(self) -> Option<ColumnId> {
        (self.0 != 0).then(|| (128 - self.0.leading_zeros()) as ColumnId)
    }

    /// Column ids in ascending order.
    pub fn iter(self) -> ColumnIter {
        ColumnIter(self.0)
    }

    /// Position of `id` among the members of this set (0-based), if present.
    pub fn rank(self, id: ColumnId) -> Option<usize> {
        if !self.contains(id) {
            return None;
        }
        let below = self.0 & ((1u128 << (id - 1)) - 1);
        Some(below.count_ones() as usize)
    }
}

impl FromIterator<ColumnId> for ColumnSet {
    fn from_iter<I: IntoIterator<Item = ColumnId>>(iter: I) -> Self {
        let mut set = ColumnSet::EMPTY;
        for id in iter {
            set.insert(id);
        }
        set
    }
}

pub struct ColumnIter(u128);

impl Iterator for ColumnIter {
    type Item = ColumnId;

    fn next(&mut self) -> Option<ColumnId> {
        if self.0 == 0 {
            return None;
        }
        let tz = self.0.trailing_zeros();
        self.0 &= self.0 - 1;
        Some(tz as ColumnId + 1)
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let n = self.0.count_ones() as usize;
        (n, Some(n))
    }
}

impl ExactSizeIterator for ColumnIter {}

/// Renders as comma-separated ids and ranges, e.g. `1-3,5`.
impl fmt::Display for ColumnSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        let mut ids = self.iter().peekable();
        while let Some(lo) = ids.next() {
            let mut hi = lo;
            while ids.peek() == Some(&(hi + 1)) {
                hi = ids.next().unwrap();
            }
            if !first {
                f.write_str(",")?;
            }
            first = false;
            if lo == hi {
                write!(f, "{lo}")?;
            } else {
                write!(f, "{lo}-{hi}")?;
            }
        }
        Ok(())
    }
}

impl fmt::Debug for ColumnSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{{self}}}")
    }
}

impl FromStr for ColumnSet {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let mut set = ColumnSet::EMPTY;
        for item in s.split(',') {
            let item = item.trim();
            if item.is_empty() {
                return Err(format!("empty item in column list {s:?}"));
            }
            let parse = |t: &str| -> std::result::Result<ColumnId, String> {
                let id: ColumnId = t
                    .trim()
                    .parse()
                    .map_err(|_| format!("bad column id {t:?}"))?;
                if id == 0 || id as usize > MAX_COLUMNS {
                    return Err(format!("column id {id} out of range"));
                }
                Ok(id)
            };
            match item.split_once('-') {
                Some((lo, hi)) => {
                    let (lo, hi) = (parse(lo)?, parse(hi)?);
                    if lo > hi {
                        return Err(format!("descending range {item:?}"));
                    }
                    set = set.union(ColumnSet::range(lo, hi));
                }
                None => set.insert(parse(item)?),
            }
        }
        Ok(set)
    }
}

impl serde::Serialize for ColumnSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> serde::Deserialize<'de> for ColumnSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        if text.is_empty() {
            return Ok(ColumnSet::EMPTY);
        }
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Schema {
    columns: usize,
    dt_size: u32,
}

impl Schema {
    /// Key size used by the benchmark tables.
    pub const KEY_SIZE: usize = 8;

    pub fn new(columns: usize, dt_size: u32) -> Result<Self> {
        if columns == 0 || columns > MAX_COLUMNS {
            return Err(Error::InvalidSchema(format!(
                "column count must be in 1..={MAX_COLUMNS}, got {columns}"
            )));
        }
        if dt_size == 0 {
            return Err(Error::InvalidSchema("dt_size must be positive".into()));
        }
        Ok(Schema { columns, dt_size })
    }

    /// Number of columns `c`.
    pub fn columns(&self) -> usize {
        self.columns
    }

    /// Average bytes per stored value, key included.
    pub fn dt_size(&self) -> u32 {
        self.dt_size
    }

    pub fn all_columns(&self) -> ColumnSet {
        ColumnSet::full(self.columns)
    }

    pub fn contains(&self, set: ColumnSet) -> bool {
        set.is_subset(self.all_columns())
    }
}

/// Structural LSM parameters. `L` counts levels below Level-0.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TreeParams {
    /// `T`
    pub size_ratio: u32,
    /// `L`
    pub levels: usize,
    /// `B`: row-format entries per block.
    pub block_entries: usize,
    /// `pg`: blocks in Level-0.
    pub level0_blocks: usize,
    /// `D`
    pub block_bytes: usize,
    /// Maximum Level-0 runs before Level-0 counts as overflowing.
    pub level0_max_runs: usize,
}

impl TreeParams {
    /// Builds parameters with `B` derived from the block size so that
    /// `D = B * (1 + c) * dt_size` up to rounding.
    pub fn derive(
        schema: &Schema,
        block_bytes: usize,
        size_ratio: u32,
        levels: usize,
        level0_blocks: usize,
        level0_max_runs: usize,
    ) -> Result<Self> {
        let row_bytes = (1 + schema.columns()) * schema.dt_size() as usize;
        let params = TreeParams {
            size_ratio,
            levels,
            block_entries: (block_bytes / row_bytes).max(1),
            level0_blocks,
            block_bytes,
            level0_max_runs,
        };
        params.validate(schema)?;
        Ok(params)
    }

    pub fn validate(&self, schema: &Schema) -> Result<()> {
        if self.size_ratio < 2 {
            return Err(Error::InvalidParams(format!(
                "size ratio must be >= 2, got {}",
                self.size_ratio
            )));
        }
        if self.levels < 1 {
            return Err(Error::InvalidParams(
                "need at least one level below Level-0".into(),
            ));
        }
        if self.block_entries == 0 || self.level0_blocks == 0 {
            return Err(Error::InvalidParams("B and pg must be positive".into()));
        }
        if self.level0_max_runs == 0 {
            return Err(Error::InvalidParams(
                "Level-0 run limit must be positive".into(),
            ));
        }
        let row_bytes = (1 + schema.columns()) * schema.dt_size() as usize;
        if row_bytes > self.block_bytes {
            return Err(Error::InvalidParams(format!(
                "block of {} bytes cannot hold one {row_bytes}-byte row",
                self.block_bytes
            )));
        }
        // D = B (1 + c) dt_size, up to rounding of B.
        let lo = self.block_entries * row_bytes;
        let hi = (self.block_entries + 1) * row_bytes;
        if self.block_bytes < lo || self.block_bytes >= hi {
            return Err(Error::InvalidParams(format!(
                "block size {} inconsistent with B = {} and {row_bytes}-byte rows",
                self.block_bytes, self.block_entries
            )));
        }
        Ok(())
    }

    /// Entry capacity of level `i` (`T^i * B * pg`).
    pub fn level_capacity_entries(&self, level: usize) -> f64 {
        (self.size_ratio as f64).powi(level as i32)
            * (self.block_entries * self.level0_blocks) as f64
    }
}

/// Number of levels needed for `n` entries: `ceil(log_T(n / (B pg) * (T-1)/T))`,
/// clamped to at least one.
pub fn levels_for(n: u64, params: &TreeParams) -> Result<usize> {
    if params.size_ratio < 2 {
        return Err(Error::InvalidParams("size ratio must be >= 2".into()));
    }
    let per_level0 = params.block_entries as u128 * params.level0_blocks as u128;
    if per_level0 == 0 {
        return Err(Error::InvalidParams("B * pg must be positive".into()));
    }
    if n == 0 {
        return Err(Error::InvalidArgument(
            "entry count must be positive".into(),
        ));
    }
    let t = params.size_ratio as u128;
    // Smallest L with T^L >= n (T-1) / (T B pg), evaluated in integers.
    let target = n as u128 * (t - 1);
    let mut power = t * per_level0;
    let mut levels = 0usize;
    while power < target {
        power = power.saturating_mul(t);
        levels += 1;
    }
    Ok(levels.max(1))
}

/// `B_ji = floor(B (1 + c) / (1 + cg_size))`, at least one.
pub fn entries_per_block(schema: &Schema, params: &TreeParams, group: ColumnSet) -> Result<usize> {
    if group.is_empty() {
        return Err(Error::InvalidArgument("empty column group".into()));
    }
    if !schema.contains(group) {
        return Err(Error::InvalidArgument(format!(
            "group {group:?} not within schema of {} columns",
            schema.columns()
        )));
    }
    let n = params.block_entries * (1 + schema.columns()) / (1 + group.len());
    Ok(n.max(1))
}

/// Per-level partition of the schema columns into column groups.
///
/// Level 0 is always the single full-row group. Groups within a level are
/// kept sorted by their smallest column id, so a group's index is stable.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LayoutConfig {
    levels: Vec<Vec<ColumnSet>>,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("level {level}{}: {reason}", group.map(|g| format!(" group {g}")).unwrap_or_default())]
pub struct LayoutViolation {
    pub level: usize,
    pub group: Option<usize>,
    pub reason: String,
}

impl LayoutConfig {
    /// Builds a layout from explicit per-level groups. Groups are sorted into
    /// canonical order; validity is not checked (see [`validate_layout`]).
    pub fn new(levels: Vec<Vec<ColumnSet>>) -> Self {
        let levels = levels
            .into_iter()
            .map(|mut groups| {
                groups.sort_by_key(|g| (g.first().unwrap_or(ColumnId::MAX), g.bits()));
                groups
            })
            .collect();
        LayoutConfig { levels }
    }

    /// Full-row groups at levels `0..=levels`.
    pub fn row(schema: &Schema, levels: usize) -> Self {
        LayoutConfig::new(vec![vec![schema.all_columns()]; levels + 1])
    }

    /// Level 0 full-row, levels `1..=levels` split into equal-width groups of
    /// `cg_size` consecutive columns (the last group takes the remainder).
    pub fn uniform(schema: &Schema, levels: usize, cg_size: usize) -> Self {
        let mut all = vec![vec![schema.all_columns()]];
        for _ in 0..levels {
            all.push(equal_width_groups(schema.columns(), cg_size));
        }
        LayoutConfig::new(all)
    }

    /// Number of levels below Level-0.
    pub fn depth(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, level: usize) -> &[ColumnSet] {
        &self.levels[level]
    }

    pub fn levels(&self) -> &[Vec<ColumnSet>] {
        &self.levels
    }

    /// `g_i`
    pub fn groups_at(&self, level: usize) -> usize {
        self.levels[level].len()
    }

    /// Indices of the groups at `level + 1` contained in group `group` of `level`.
    pub fn children(&self, level: usize, group: usize) -> Vec<usize> {
        let parent = self.levels[level][group];
        self.levels[level + 1]
            .iter()
            .enumerate()
            .filter(|(_, g)| g.is_subset(parent))
            .map(|(i, _)| i)
            .collect()
    }

    /// Index of the group at `level` containing `column`.
    pub fn group_of(&self, level: usize, column: ColumnId) -> Option<usize> {
        self.levels[level].iter().position(|g| g.contains(column))
    }

    /// Parses the one-line-per-level text form, e.g. `L2: [1-15] [16-30]`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut levels = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (label, rest) = line
                .split_once(':')
                .ok_or_else(|| Error::parse(line_no, "expected `L<i>: [..] ...`"))?;
            let label = label.trim();
            let level: usize = label
                .strip_prefix('L')
                .and_then(|n| n.parse().ok())
                .ok_or_else(|| Error::parse(line_no, format!("bad level label {label:?}")))?;
            if level != levels.len() {
                return Err(Error::parse(
                    line_no,
                    format!("expected level L{}, found {label}", levels.len()),
                ));
            }
            let mut groups = Vec::new();
            let mut rest = rest.trim();
            while !rest.is_empty() {
                let body = rest
                    .strip_prefix('[')
                    .ok_or_else(|| Error::parse(line_no, format!("expected `[` at {rest:?}")))?;
                let (inner, tail) = body
                    .split_once(']')
                    .ok_or_else(|| Error::parse(line_no, "unterminated group"))?;
                let group: ColumnSet = inner.parse().map_err(|e| Error::parse(line_no, e))?;
                groups.push(group);
                rest = tail.trim_start();
            }
            if groups.is_empty() {
                return Err(Error::parse(line_no, "level without groups"));
            }
            levels.push(groups);
        }
        if levels.is_empty() {
            return Err(Error::parse(0, "empty layout"));
        }
        Ok(LayoutConfig::new(levels))
    }
}

impl fmt::Display for LayoutConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, groups) in self.levels.iter().enumerate() {
            write!(f, "L{i}:")?;
            for g in groups {
                write!(f, " [{g}]")?;
            }
            writeln!(f)?;
        }
        Ok(())
    }
}

/// Equal-width consecutive groups of `cg_size` columns over `1..=c`.
pub fn equal_width_groups(c: usize, cg_size: usize) -> Vec<ColumnSet> {
    let cg_size = cg_size.clamp(1, c);
    (1..=c)
        .step_by(cg_size)
        .map(|lo| ColumnSet::range(lo as ColumnId, (lo + cg_size - 1).min(c) as ColumnId))
        .collect()
}

/// Checks that every level partitions the schema, Level-0 is the full row, and
/// every group at level `i >= 1` is contained in one group at level `i - 1`.
pub fn validate_layout(
    layout: &LayoutConfig,
    schema: &Schema,
) -> std::result::Result<(), LayoutViolation> {
    let all = schema.all_columns();
    let violation = |level, group, reason: String| LayoutViolation {
        level,
        group,
        reason,
    };
    if layout.levels.is_empty() {
        return Err(violation(0, None, "layout has no levels".into()));
    }
    for (level, groups) in layout.levels.iter().enumerate() {
        let mut seen = ColumnSet::EMPTY;
        for (j, g) in groups.iter().enumerate() {
            if g.is_empty() {
                return Err(violation(level, Some(j), "empty column group".into()));
            }
            if !g.is_subset(all) {
                return Err(violation(
                    level,
                    Some(j),
                    format!("{g:?} outside the schema"),
                ));
            }
            if seen.intersects(*g) {
                return Err(violation(
                    level,
                    Some(j),
                    format!("{g:?} overlaps another group"),
                ));
            }
            seen = seen.union(*g);
        }
        if seen != all {
            return Err(violation(
                level,
                None,
                format!("groups miss columns {:?}", all.difference(seen)),
            ));
        }
        if level == 0 {
            if groups.len() != 1 {
                return Err(violation(
                    0,
                    None,
                    "Level-0 must be a single full-row group".into(),
                ));
            }
            continue;
        }
        let parents = &layout.levels[level - 1];
        for (j, g) in groups.iter().enumerate() {
            if !parents.iter().any(|p| g.is_subset(*p)) {
                return Err(violation(
                    level,
                    Some(j),
                    format!(
                        "{g:?} is not contained in a single group of level {}",
                        level - 1
                    ),
                ));
            }
        }
    }
    Ok(())
}
