//! Per-level operation statistics gathered from a running engine, and their
//! text serialization.
//!
//! ```text
//! # laser-stats v1
//! columns 30
//! inserts 1000000
//! 0 read 1-30 5000 0
//! 3 scan 21-30 12 480000
//! ```

use std::fmt::Write as _;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};

use parking_lot::Mutex;

use crate::cost::WorkloadStats;
use crate::error::{Error, Result};
use crate::schema::ColumnSet;

const HEADER: &str = "# laser-stats v1";

#[derive(Debug)]
pub struct Profiler {
    inserts: AtomicU64,
    stats: Mutex<WorkloadStats>,
}

impl Profiler {
    pub fn new(columns: usize, levels: usize) -> Self {
        Profiler {
            inserts: AtomicU64::new(0),
            stats: Mutex::new(WorkloadStats::new(columns, levels)),
        }
    }

    pub fn record_insert(&self) {
        self.inserts.fetch_add(1, Ordering::Relaxed);
    }

    /// A point read that probed levels `0..=deepest`.
    pub fn record_read(&self, projection: ColumnSet, deepest: usize) {
        let mut s = self.stats.lock();
        for level in 0..=deepest {
            s.level_mut(level).add_read(projection, 1);
        }
    }

    /// An update located at levels `0..=deepest`.
    pub fn record_update(&self, projection: ColumnSet, deepest: usize) {
        let mut s = self.stats.lock();
        for level in 0..=deepest {
            s.level_mut(level).add_update(projection, 1);
        }
    }

    /// A scan; `selected[i]` is the number of returned keys attributed to
    /// level `i`. Every level counts the scan.
    pub fn record_scan(&self, projection: ColumnSet, selected: &[u64]) {
        let mut s = self.stats.lock();
        let levels = s.levels.len().max(selected.len());
        for level in 0..levels {
            let n = selected.get(level).copied().unwrap_or(0);
            s.level_mut(level).add_scan(projection, 1, n);
        }
    }

    pub fn snapshot(&self) -> WorkloadStats {
        let mut s = self.stats.lock().clone();
        s.inserts = self.inserts.load(Ordering::Relaxed);
        s
    }

    pub fn reset(&self) {
        let mut s = self.stats.lock();
        let (c, l) = (s.columns, s.levels.len());
        *s = WorkloadStats::new(c, l);
        self.inserts.store(0, Ordering::Relaxed);
    }
}

pub fn to_text(stats: &WorkloadStats) -> String {
    let mut out = String::new();
    writeln!(out, "{HEADER}").unwrap();
    writeln!(out, "columns {}", stats.columns).unwrap();
    writeln!(out, "levels {}", stats.levels.len()).unwrap();
    writeln!(out, "inserts {}", stats.inserts).unwrap();
    for (i, l) in stats.levels.iter().enumerate() {
        for (p, n) in &l.reads {
            writeln!(out, "{i} read {p} {n} 0").unwrap();
        }
        for (p, s) in &l.scans {
            writeln!(out, "{i} scan {p} {} {}", s.count, s.selected).unwrap();
        }
        for (p, n) in &l.updates {
            writeln!(out, "{i} update {p} {n} 0").unwrap();
        }
    }
    out
}

pub fn from_text(text: &str) -> Result<WorkloadStats> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, HEADER)) => {}
        Some((n, other)) => {
            return Err(Error::parse(
                n,
                format!("expected header {HEADER:?}, found {other:?}"),
            ))
        }
        None => return Err(Error::parse(1, "empty statistics file")),
    }
    let mut columns = None;
    let mut levels = 0usize;
    let mut inserts = None;
    let mut stats = WorkloadStats::default();
    for (n, line) in lines {
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str, what: &str| -> Result<u64> {
            s.parse()
                .map_err(|_| Error::parse(n, format!("invalid {what} {s:?}")))
        };
        match fields.as_slice() {
            ["columns", v] => columns = Some(num(v, "column count")? as usize),
            ["levels", v] => levels = num(v, "level count")? as usize,
            ["inserts", v] => inserts = Some(num(v, "insert count")?),
            [level, kind, proj, count, selected] => {
                let level = num(level, "level")? as usize;
                let projection: ColumnSet = proj
                    .parse()
                    .map_err(|e| Error::parse(n, format!("invalid projection {proj:?}: {e}")))?;
                if projection.is_empty() {
                    return Err(Error::parse(n, "empty projection"));
                }
                if let Some(c) = columns {
                    if projection.last().is_some_and(|m| m as usize > c) {
                        return Err(Error::parse(
                            n,
                            format!("projection {proj} exceeds {c} columns"),
                        ));
                    }
                }
                let count = num(count, "count")?;
                let selected = num(selected, "selected entry count")?;
                let wl = stats.level_mut(level);
                match *kind {
                    "read" => wl.add_read(projection, count),
                    "scan" => wl.add_scan(projection, count, selected),
                    "update" => wl.add_update(projection, count),
                    other => {
                        return Err(Error::parse(n, format!("unknown operation kind {other:?}")))
                    }
                }
            }
            _ => return Err(Error::parse(n, format!("unrecognized record {line:?}"))),
        }
    }
    stats.columns = columns.ok_or_else(|| Error::parse(2, "missing column count"))?;
    stats.inserts = inserts.ok_or_else(|| Error::parse(3, "missing insert count"))?;
    if stats.levels.len() < levels {
        stats.levels.resize(levels, Default::default());
    }
    Ok(stats)
}

pub fn export(stats: &WorkloadStats, path: &Path) -> Result<()> {
    std::fs::write(path, to_text(stats))?;
    Ok(())
}

pub fn import(path: &Path) -> Result<WorkloadStats> {
    from_text(&std::fs::read_to_string(path)?)
}
