//! Real-time LSM-tree storage engine with per-level column-group layouts,
//! an I/O cost model and a layout advisor.

pub mod advisor;
pub mod bloom;
pub mod codec;
pub mod compaction;
pub mod cost;
pub mod engine;
pub mod entry;
pub mod error;
pub mod manifest;
pub mod memtable;
pub mod profiler;
pub mod read;
pub mod schema;
pub mod sst;
pub mod stats;
pub mod version;
pub mod wal;

pub use advisor::{advise, advise_greedy, Advice};
pub use compaction::{pick_compaction, CompactionJob, CompactionPriority};
pub use cost::{LevelWorkload, OpCosts, ScanStat, WorkloadStats};
pub use engine::{Engine, Options, WriteBatch, WriteOp};
pub use entry::{Entry, EntryKind, Row, SeqNo};
pub use error::{Error, Result};
pub use read::{QueryStats, ScanIter};
pub use schema::{
    entries_per_block, equal_width_groups, levels_for, validate_layout, ColumnId, ColumnSet, Key,
    LayoutConfig, LayoutViolation, Schema, TreeParams, Value,
};
pub use stats::{AgeHistogram, LevelStats, StatsSnapshot};
pub use wal::SyncPolicy;
