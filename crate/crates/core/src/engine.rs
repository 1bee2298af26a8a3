//! Engine lifecycle, write path, flushes and compaction scheduling.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::Duration;

use parking_lot::{Condvar, Mutex, RwLock};

use crate::compaction::{
    collapse_versions, open_tables, pick_compaction, remove_tables, run_merge, CompactionJob,
    CompactionPriority, RunWriter, TableWriterConfig,
};
use crate::cost::WorkloadStats;
use crate::entry::{Entry, SeqNo};
use crate::error::{Error, Result};
use crate::manifest::{FileSlot, Manifest, VersionEdit};
use crate::memtable::Memtable;
use crate::profiler::Profiler;
use crate::schema::{
    validate_layout, ColumnId, ColumnSet, Key, LayoutConfig, Schema, TreeParams, Value,
};
use crate::sst::{sst_path, SstReader};
use crate::stats::{age_histogram, LevelStats, Statistics, StatsSnapshot};
use crate::version::Version;
use crate::wal::{self, SyncPolicy, WalWriter};

#[derive(Clone, Debug)]
pub struct Options {
    pub schema: Schema,
    pub params: TreeParams,
    pub layout: LayoutConfig,
    /// A memtable is sealed once its approximate size reaches this.
    pub memtable_bytes: usize,
    /// Sealed memtables allowed before writers wait for a flush.
    pub max_immutable_memtables: usize,
    pub sst_target_bytes: usize,
    pub bloom_bits_per_key: usize,
    pub wal_sync: SyncPolicy,
    /// `fsync` tables and the manifest.
    pub sync_files: bool,
    pub priority: CompactionPriority,
    pub compaction_workers: usize,
    /// Run flushes and compactions on background threads. When false they
    /// run inline on the writing thread, which makes every counter
    /// reproducible.
    pub background: bool,
    /// Collect per-level workload statistics.
    pub profile: bool,
}

impl Options {
    pub fn new(schema: Schema, params: TreeParams, layout: LayoutConfig) -> Self {
        Options {
            schema,
            params,
            layout,
            memtable_bytes: 4 << 20,
            max_immutable_memtables: 1,
            sst_target_bytes: 256 << 10,
            bloom_bits_per_key: crate::bloom::DEFAULT_BITS_PER_KEY,
            wal_sync: SyncPolicy::PerBatch,
            sync_files: true,
            priority: CompactionPriority::ByAge,
            compaction_workers: 2,
            background: true,
            profile: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate(&self.schema)?;
        validate_layout(&self.layout, &self.schema)?;
        if self.layout.depth() != self.params.levels {
            return Err(Error::InvalidParams(format!(
                "layout has {} levels below Level-0, parameters specify {}",
                self.layout.depth(),
                self.params.levels
            )));
        }
        if self.memtable_bytes == 0 || self.sst_target_bytes == 0 {
            return Err(Error::InvalidParams(
                "memtable and table sizes must be positive".into(),
            ));
        }
        if self.background && self.compaction_workers == 0 {
            return Err(Error::InvalidParams(
                "need at least one compaction worker".into(),
            ));
        }
        Ok(())
    }
}

/// One write operation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum WriteOp {
    Insert(Key, Vec<Value>),
    Update(Key, Vec<(ColumnId, Value)>),
    Delete(Key),
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct WriteBatch {
    ops: Vec<WriteOp>,
}

impl WriteBatch {
    pub fn new() -> Self {
        WriteBatch::default()
    }

    pub fn insert(&mut self, key: Key, row: &[Value]) -> &mut Self {
        self.ops.push(WriteOp::Insert(key, row.to_vec()));
        self
    }

    pub fn update(&mut self, key: Key, values: &[(ColumnId, Value)]) -> &mut Self {
        self.ops.push(WriteOp::Update(key, values.to_vec()));
        self
    }

    pub fn delete(&mut self, key: Key) -> &mut Self {
        self.ops.push(WriteOp::Delete(key));
        self
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }
}

/// Memtables plus the table version, swapped atomically as a unit.
#[derive(Clone)]
pub(crate) struct SuperVersion {
    pub mem: Arc<Memtable>,
    /// Sealed memtables, newest first.
    pub imm: Vec<Arc<Memtable>>,
    pub version: Arc<Version>,
}

struct WriterState {
    wal: WalWriter,
    next_seq: SeqNo,
}

#[derive(Default)]
struct Scheduler {
    busy: HashSet<(usize, usize)>,
    running: usize,
    flushing: bool,
    shutdown: bool,
    error: Option<String>,
}

pub(crate) struct Inner {
    pub dir: PathBuf,
    pub opts: Options,
    pub layout: Arc<LayoutConfig>,
    writer: Mutex<WriterState>,
    sv: RwLock<Arc<SuperVersion>>,
    pub visible_seq: AtomicU64,
    manifest: Mutex<Manifest>,
    next_file_id: AtomicU64,
    pub stats: Statistics,
    pub profiler: Option<Profiler>,
    sched: Mutex<Scheduler>,
    flush_lock: Mutex<()>,
    work_cv: Condvar,
    done_cv: Condvar,
    closed: AtomicBool,
}

/// An open database. Cheap to share across threads by reference.
pub struct Engine {
    pub(crate) inner: Arc<Inner>,
    threads: Vec<JoinHandle<()>>,
}

impl Engine {
    /// Opens or creates a database in `dir`, replaying the write-ahead log.
    pub fn open(dir: impl AsRef<Path>, opts: Options) -> Result<Engine> {
        opts.validate()?;
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut manifest = Manifest::open(&dir, opts.sync_files)?;
        let layout_text = opts.layout.to_string();
        match &manifest.state().layout {
            Some(stored) => {
                let stored_layout = LayoutConfig::parse(stored)?;
                if stored_layout != opts.layout {
                    return Err(Error::InvalidArgument(format!(
                        "database was created with layout\n{stored}\nbut opened with\n{layout_text}"
                    )));
                }
            }
            None => manifest.log(&VersionEdit {
                layout: Some(layout_text),
                next_file_id: Some(1),
                ..Default::default()
            })?,
        }
        let state = manifest.state().clone();
        let layout = Arc::new(opts.layout.clone());
        let mut tables = Vec::with_capacity(state.files.len());
        for slot in state.files.values() {
            tables.push((*slot, SstReader::open(&dir, slot.file_id)?));
        }
        let version = Version::from_tables(Arc::clone(&layout), tables)?;
        version.check(&opts.schema)?;
        remove_orphans(&dir, &state.files.keys().copied().collect())?;
        let next_file_id = state
            .next_file_id
            .max(state.files.keys().max().map_or(1, |m| m + 1));

        let stats = Statistics::new(&layout);
        let profiler = opts
            .profile
            .then(|| Profiler::new(opts.schema.columns(), layout.num_levels()));
        // Replay unflushed writes into a memtable and flush it so the old log
        // segments can go.
        let recovered = Arc::new(Memtable::new(state.flushed_seq + 1));
        let replay = wal::replay(&dir, state.flushed_seq, |e| recovered.put(e))?;
        let last_seq = state.last_seq.max(replay.last_seq.unwrap_or(0));
        if replay.torn_tail {
            tracing::warn!("recovered write-ahead log with a torn tail");
        }
        let next_seq = last_seq + 1;
        // A segment starting past the last record holds no records.
        let fresh = wal::wal_path(&dir, next_seq);
        if fresh.exists() {
            fs::remove_file(&fresh)?;
        }
        let old_segments = wal::list_segments(&dir)?;
        let wal = WalWriter::create(&dir, next_seq, opts.wal_sync)?;
        let inner = Arc::new(Inner {
            dir: dir.clone(),
            layout: Arc::clone(&layout),
            writer: Mutex::new(WriterState { wal, next_seq }),
            sv: RwLock::new(Arc::new(SuperVersion {
                mem: Arc::new(Memtable::new(next_seq)),
                imm: Vec::new(),
                version: Arc::new(version),
            })),
            visible_seq: AtomicU64::new(last_seq),
            manifest: Mutex::new(manifest),
            next_file_id: AtomicU64::new(next_file_id),
            stats,
            profiler,
            sched: Mutex::new(Scheduler::default()),
            flush_lock: Mutex::new(()),
            work_cv: Condvar::new(),
            done_cv: Condvar::new(),
            closed: AtomicBool::new(false),
            opts,
        });
        if !recovered.is_empty() {
            recovered.seal();
            inner.flush_memtable(&recovered)?;
        } else {
            inner.manifest.lock().log(&VersionEdit {
                last_seq: Some(last_seq),
                flushed_seq: Some(last_seq),
                ..Default::default()
            })?;
        }
        for (_, path) in old_segments {
            if path.exists() {
                fs::remove_file(path)?;
            }
        }
        let mut engine = Engine {
            inner,
            threads: Vec::new(),
        };
        if engine.inner.opts.background {
            engine.start_workers();
            engine.inner.work_cv.notify_all();
        } else {
            engine.inner.compact_pending()?;
        }
        Ok(engine)
    }

    fn start_workers(&mut self) {
        let inner = Arc::clone(&self.inner);
        self.threads.push(
            std::thread::Builder::new()
                .name("laser-flush".into())
                .spawn(move || inner.flush_worker())
                .expect("spawn flush worker"),
        );
        for i in 0..self.inner.opts.compaction_workers {
            let inner = Arc::clone(&self.inner);
            self.threads.push(
                std::thread::Builder::new()
                    .name(format!("laser-compact-{i}"))
                    .spawn(move || inner.compaction_worker())
                    .expect("spawn compaction worker"),
            );
        }
    }

    pub fn schema(&self) -> &Schema {
        &self.inner.opts.schema
    }

    pub fn options(&self) -> &Options {
        &self.inner.opts
    }

    pub fn layout(&self) -> &LayoutConfig {
        &self.inner.layout
    }

    pub fn path(&self) -> &Path {
        &self.inner.dir
    }

    pub fn insert(&self, key: Key, row: &[Value]) -> Result<()> {
        self.write(WriteBatch {
            ops: vec![WriteOp::Insert(key, row.to_vec())],
        })
    }

    pub fn update(&self, key: Key, values: &[(ColumnId, Value)]) -> Result<()> {
        self.write(WriteBatch {
            ops: vec![WriteOp::Update(key, values.to_vec())],
        })
    }

    pub fn delete(&self, key: Key) -> Result<()> {
        self.write(WriteBatch {
            ops: vec![WriteOp::Delete(key)],
        })
    }

    /// Applies a batch atomically with respect to readers and the log.
    pub fn write(&self, batch: WriteBatch) -> Result<()> {
        self.inner.write(batch)
    }

    /// Seals the mutable memtable and waits until every sealed memtable is
    /// on disk.
    pub fn flush(&self) -> Result<()> {
        self.inner.flush_all()
    }

    /// Flushes and then runs compactions until no level overflows.
    pub fn compact_until_stable(&self) -> Result<()> {
        self.inner.flush_all()?;
        if self.inner.opts.background {
            self.inner.wait_idle()
        } else {
            self.inner.compact_pending()
        }
    }

    /// Runs at most one compaction job inline. Returns the job executed.
    pub fn compact_once(&self) -> Result<Option<CompactionJob>> {
        self.inner.compact_one()
    }

    pub fn version(&self) -> Arc<Version> {
        Arc::clone(&self.inner.current().version)
    }

    pub fn last_seq(&self) -> SeqNo {
        self.inner.visible_seq.load(Ordering::Acquire)
    }

    pub fn statistics(&self) -> StatsSnapshot {
        self.inner.snapshot_stats()
    }

    /// Statistics collected by the profiler, if enabled.
    pub fn workload_stats(&self) -> Option<WorkloadStats> {
        self.inner.profiler.as_ref().map(|p| p.snapshot())
    }

    pub fn reset_workload_stats(&self) {
        if let Some(p) = &self.inner.profiler {
            p.reset();
        }
    }

    /// Verifies structural invariants of the current version. With `deep`,
    /// also reads every run and checks key order and that each run stores at
    /// most one version per key.
    pub fn check_invariants(&self, deep: bool) -> Result<()> {
        let version = self.version();
        version.check(&self.inner.opts.schema)?;
        if !deep {
            return Ok(());
        }
        let runs = version.level0().iter().map(|r| (0, &r.run)).chain(
            (1..=version.depth()).flat_map(|l| version.runs_at(l).iter().map(move |r| (l, r))),
        );
        for (level, run) in runs {
            let mut prev: Option<Key> = None;
            for e in run.iter(0, Key::MAX) {
                let e = e?;
                if prev.is_some_and(|p| p >= e.key) {
                    return Err(Error::InvalidArgument(format!(
                        "level {level}: key {} out of order or duplicated",
                        e.key
                    )));
                }
                prev = Some(e.key);
            }
        }
        Ok(())
    }

    /// Stops background threads without flushing; unflushed writes stay in
    /// the write-ahead log.
    pub fn close(mut self) -> Result<()> {
        self.shutdown();
        match self.inner.sched.lock().error.take() {
            Some(e) => Err(Error::BackgroundFailure(e)),
            None => Ok(()),
        }
    }

    fn shutdown(&mut self) {
        self.inner.closed.store(true, Ordering::Release);
        {
            let mut s = self.inner.sched.lock();
            s.shutdown = true;
        }
        self.inner.work_cv.notify_all();
        self.inner.done_cv.notify_all();
        for t in self.threads.drain(..) {
            let _ = t.join();
        }
    }
}

impl Drop for Engine {
    fn drop(&mut self) {
        self.shutdown();
    }
}

fn remove_orphans(dir: &Path, live: &HashSet<u64>) -> Result<()> {
    for item in fs::read_dir(dir)? {
        let path = item?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("sst") {
            continue;
        }
        let id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.parse::<u64>().ok());
        if let Some(id) = id {
            if !live.contains(&id) {
                tracing::debug!(file = id, "removing orphaned table");
                fs::remove_file(&path)?;
            }
        }
    }
    Ok(())
}

impl Inner {
    pub(crate) fn current(&self) -> Arc<SuperVersion> {
        Arc::clone(&self.sv.read())
    }

    fn check_usable(&self) -> Result<()> {
        if self.closed.load(Ordering::Acquire) {
            return Err(Error::Closed);
        }
        if let Some(e) = &self.sched.lock().error {
            return Err(Error::BackgroundFailure(e.clone()));
        }
        Ok(())
    }

    fn fail(&self, msg: String) {
        tracing::error!(error = %msg, "background failure");
        let mut s = self.sched.lock();
        s.error.get_or_insert(msg);
        drop(s);
        self.done_cv.notify_all();
    }

    fn validate_op(&self, op: &WriteOp) -> Result<()> {
        let schema = &self.opts.schema;
        match op {
            WriteOp::Insert(_, row) if row.len() != schema.columns() => {
                Err(Error::InvalidArgument(format!(
                    "insert carries {} values for {} columns",
                    row.len(),
                    schema.columns()
                )))
            }
            WriteOp::Update(_, values) => {
                if values.is_empty() {
                    return Err(Error::InvalidArgument("update without values".into()));
                }
                match values
                    .iter()
                    .find(|(c, _)| *c == 0 || *c as usize > schema.columns())
                {
                    Some((c, _)) => Err(Error::InvalidArgument(format!("unknown column {c}"))),
                    None => Ok(()),
                }
            }
            _ => Ok(()),
        }
    }

    fn write(&self, batch: WriteBatch) -> Result<()> {
        if batch.is_empty() {
            return Ok(());
        }
        for op in &batch.ops {
            self.validate_op(op)?;
        }
        if let Some(p) = &self.profiler {
            for op in &batch.ops {
                match op {
                    WriteOp::Insert(..) => p.record_insert(),
                    WriteOp::Update(key, values) => {
                        let projection: ColumnSet = values.iter().map(|(c, _)| *c).collect();
                        p.record_update(projection, self.locate(*key, projection));
                    }
                    WriteOp::Delete(_) => {}
                }
            }
        }
        let mut w = self.writer.lock();
        self.check_usable()?;
        if self.opts.background {
            self.stall_if_needed()?;
        }
        let first = w.next_seq;
        let entries: Vec<Entry> = batch
            .ops
            .into_iter()
            .enumerate()
            .map(|(i, op)| {
                let seq = first + i as u64;
                match op {
                    WriteOp::Insert(k, row) => Entry::full(k, seq, &row),
                    WriteOp::Update(k, values) => Entry::partial(k, seq, &values),
                    WriteOp::Delete(k) => Entry::tombstone(k, seq),
                }
            })
            .collect();
        if let Err(e) = w.wal.append(&entries) {
            self.fail(format!("write-ahead log append failed: {e}"));
            return Err(e);
        }
        let last = first + entries.len() as u64 - 1;
        let mem = Arc::clone(&self.sv.read().mem);
        for e in entries {
            mem.put(e)?;
        }
        w.next_seq = last + 1;
        self.visible_seq.store(last, Ordering::Release);
        let sealed = mem.approximate_size() >= self.opts.memtable_bytes;
        if sealed {
            self.seal(&mut w)?;
        }
        drop(w);
        if sealed && !self.opts.background {
            self.flush_pending()?;
            self.compact_pending()?;
        }
        Ok(())
    }

    /// Blocks the writer while flushes or Level-0 compactions lag behind.
    fn stall_if_needed(&self) -> Result<()> {
        let limit = 2 * self.opts.params.level0_max_runs;
        let mut counted = false;
        loop {
            let sv = self.current();
            let behind = sv.imm.len() > self.opts.max_immutable_memtables
                || sv.version.level0().len() >= limit;
            if !behind {
                return Ok(());
            }
            if !counted {
                Statistics::add(&self.stats.write_stalls, 1);
                counted = true;
            }
            let mut s = self.sched.lock();
            if s.shutdown {
                return Err(Error::Closed);
            }
            if let Some(e) = &s.error {
                return Err(Error::BackgroundFailure(e.clone()));
            }
            self.work_cv.notify_all();
            self.done_cv.wait_for(&mut s, Duration::from_millis(20));
        }
    }

    fn seal(&self, w: &mut WriterState) -> Result<()> {
        let wal = WalWriter::create(&self.dir, w.next_seq, self.opts.wal_sync)?;
        let old_wal = std::mem::replace(&mut w.wal, wal);
        drop(old_wal);
        let mut guard = self.sv.write();
        let mut next = (**guard).clone();
        next.mem.seal();
        next.imm.insert(0, Arc::clone(&next.mem));
        next.mem = Arc::new(Memtable::new(w.next_seq));
        *guard = Arc::new(next);
        drop(guard);
        let _s = self.sched.lock();
        self.work_cv.notify_all();
        Ok(())
    }

    fn writer_config(&self) -> TableWriterConfig<'_> {
        TableWriterConfig {
            dir: &self.dir,
            schema: &self.opts.schema,
            params: &self.opts.params,
            target_bytes: self.opts.sst_target_bytes,
            bloom_bits_per_key: self.opts.bloom_bits_per_key,
            sync: self.opts.sync_files,
            next_file_id: &self.next_file_id,
        }
    }

    /// Writes a sealed memtable as a new Level-0 run and retires its log
    /// segment.
    fn flush_memtable(&self, mem: &Arc<Memtable>) -> Result<()> {
        let cfg = self.writer_config();
        let all = self.opts.schema.all_columns();
        let mut writer = RunWriter::new(&cfg, 0, all)?;
        let written = collapse_versions(mem.iter(), all, |e| writer.add(&e));
        let metas = match written {
            Ok(()) => writer.finish()?,
            Err(e) => {
                writer.abandon();
                return Err(e);
            }
        };
        let tables = match open_tables(&self.dir, &metas) {
            Ok(t) => t,
            Err(e) => {
                remove_tables(&self.dir, &metas);
                return Err(e);
            }
        };
        let max_seq = mem.seq_range().map_or(0, |(_, hi)| hi);
        let run_id = max_seq;
        {
            let mut manifest = self.manifest.lock();
            let edit = VersionEdit {
                added: metas
                    .iter()
                    .map(|m| FileSlot {
                        level: 0,
                        group: 0,
                        run: run_id,
                        file_id: m.file_id,
                    })
                    .collect(),
                last_seq: Some(self.visible_seq.load(Ordering::Acquire).max(max_seq)),
                flushed_seq: Some(max_seq),
                next_file_id: Some(self.next_file_id.load(Ordering::SeqCst)),
                ..Default::default()
            };
            if let Err(e) = manifest.log(&edit) {
                remove_tables(&self.dir, &metas);
                return Err(e);
            }
            let mut guard = self.sv.write();
            let mut next = (**guard).clone();
            next.imm.retain(|m| !Arc::ptr_eq(m, mem));
            if !tables.is_empty() {
                let mut v = (*next.version).clone();
                v.add_level0_run(run_id, tables);
                next.version = Arc::new(v);
            }
            *guard = Arc::new(next);
        }
        let segment = wal::wal_path(&self.dir, mem.id());
        if segment.exists() {
            fs::remove_file(segment)?;
        }
        Statistics::add(&self.stats.flushes, 1);
        Statistics::add(
            &self.stats.flush_bytes_written,
            metas.iter().map(|m| m.file_size).sum(),
        );
        self.done_cv.notify_all();
        Ok(())
    }

    /// Flushes the oldest sealed memtable, if any.
    fn flush_oldest(&self) -> Result<bool> {
        let _guard = self.flush_lock.lock();
        let Some(mem) = self.current().imm.last().cloned() else {
            return Ok(false);
        };
        self.flush_memtable(&mem)?;
        Ok(true)
    }

    fn flush_pending(&self) -> Result<()> {
        while self.flush_oldest()? {}
        Ok(())
    }

    fn flush_all(&self) -> Result<()> {
        self.check_usable()?;
        {
            let mut w = self.writer.lock();
            if !self.current().mem.is_empty() {
                self.seal(&mut w)?;
            }
        }
        if !self.opts.background {
            return self.flush_pending();
        }
        let mut s = self.sched.lock();
        loop {
            if let Some(e) = &s.error {
                return Err(Error::BackgroundFailure(e.clone()));
            }
            if s.shutdown {
                return Err(Error::Closed);
            }
            if self.current().imm.is_empty() && !s.flushing {
                return Ok(());
            }
            self.work_cv.notify_all();
            self.done_cv.wait_for(&mut s, Duration::from_millis(20));
        }
    }

    /// Waits until no job runs and nothing overflows.
    fn wait_idle(&self) -> Result<()> {
        let mut s = self.sched.lock();
        loop {
            if let Some(e) = &s.error {
                return Err(Error::BackgroundFailure(e.clone()));
            }
            if s.shutdown {
                return Err(Error::Closed);
            }
            let sv = self.current();
            let idle = s.running == 0
                && !s.flushing
                && sv.imm.is_empty()
                && pick_compaction(
                    &sv.version,
                    &self.opts.params,
                    self.opts.priority,
                    &HashSet::new(),
                )
                .is_none();
            if idle {
                return Ok(());
            }
            self.work_cv.notify_all();
            self.done_cv.wait_for(&mut s, Duration::from_millis(20));
        }
    }

    fn compact_pending(&self) -> Result<()> {
        while self.compact_one()?.is_some() {}
        Ok(())
    }

    /// Picks and runs one job inline, respecting background reservations.
    fn compact_one(&self) -> Result<Option<CompactionJob>> {
        let job = {
            let mut s = self.sched.lock();
            let version = Arc::clone(&self.current().version);
            match pick_compaction(&version, &self.opts.params, self.opts.priority, &s.busy) {
                Some(job) => {
                    s.busy.extend(job.reservations());
                    s.running += 1;
                    job
                }
                None => return Ok(None),
            }
        };
        let result = self.run_job(&job);
        self.release(&job);
        result.map(|()| Some(job))
    }

    fn release(&self, job: &CompactionJob) {
        let mut s = self.sched.lock();
        for r in job.reservations() {
            s.busy.remove(&r);
        }
        s.running -= 1;
        drop(s);
        self.work_cv.notify_all();
        self.done_cv.notify_all();
    }

    fn run_job(&self, job: &CompactionJob) -> Result<()> {
        let version = Arc::clone(&self.current().version);
        let cfg = self.writer_config();
        tracing::debug!(level = job.level, group = job.group, "compaction started");
        let started = std::time::Instant::now();
        let out = run_merge(&cfg, &version, job)?;
        let target = job.level + 1;
        let mut opened = Vec::with_capacity(out.outputs.len());
        for (k, metas) in &out.outputs {
            match open_tables(&self.dir, metas) {
                Ok(t) => opened.push((*k, t)),
                Err(e) => {
                    for (_, m) in &out.outputs {
                        remove_tables(&self.dir, m);
                    }
                    return Err(e);
                }
            }
        }
        {
            let mut manifest = self.manifest.lock();
            let edit = VersionEdit {
                added: out
                    .outputs
                    .iter()
                    .flat_map(|(k, metas)| {
                        metas.iter().map(move |m| FileSlot {
                            level: target as u32,
                            group: *k as u32,
                            run: 0,
                            file_id: m.file_id,
                        })
                    })
                    .collect(),
                deleted: out.removed.iter().map(|(s, _)| *s).collect(),
                next_file_id: Some(self.next_file_id.load(Ordering::SeqCst)),
                ..Default::default()
            };
            if let Err(e) = manifest.log(&edit) {
                for (_, m) in &out.outputs {
                    remove_tables(&self.dir, m);
                }
                return Err(e);
            }
            let mut guard = self.sv.write();
            let mut next = (**guard).clone();
            let mut v = (*next.version).clone();
            if job.level == 0 {
                v.remove_level0_runs(&job.level0_runs);
            } else {
                v.set_run(job.level, job.group, Vec::new());
            }
            for (k, tables) in opened {
                v.set_run(target, k, tables);
            }
            for &k in &job.children {
                if !out.outputs.iter().any(|(o, _)| *o == k) {
                    v.set_run(target, k, Vec::new());
                }
            }
            v.check(&self.opts.schema)?;
            next.version = Arc::new(v);
            *guard = Arc::new(next);
        }
        for (_, t) in &out.removed {
            t.mark_obsolete();
        }
        let s = &self.stats;
        Statistics::add(&s.compactions, 1);
        s.add_compaction_job(job.level, job.group);
        Statistics::add(&s.compaction_micros, started.elapsed().as_micros() as u64);
        Statistics::add(&s.compaction_bytes_read, out.bytes_read);
        Statistics::add(&s.compaction_bytes_written, out.bytes_written);
        Statistics::add(&s.compaction_model_bytes, out.model_bytes);
        Statistics::add(&s.compaction_block_reads, out.block_reads);
        tracing::debug!(
            level = job.level,
            group = job.group,
            entries = out.entries_written,
            bytes = out.bytes_written,
            "compaction finished"
        );
        Ok(())
    }

    fn flush_worker(self: Arc<Self>) {
        loop {
            {
                let mut s = self.sched.lock();
                loop {
                    if s.shutdown || s.error.is_some() {
                        return;
                    }
                    if !self.current().imm.is_empty() {
                        s.flushing = true;
                        break;
                    }
                    self.work_cv.wait_for(&mut s, Duration::from_millis(50));
                }
            }
            let result = self.flush_oldest();
            self.sched.lock().flushing = false;
            self.work_cv.notify_all();
            self.done_cv.notify_all();
            if let Err(e) = result {
                self.fail(format!("flush failed: {e}"));
                return;
            }
        }
    }

    fn compaction_worker(self: Arc<Self>) {
        loop {
            let job = {
                let mut s = self.sched.lock();
                loop {
                    if s.shutdown || s.error.is_some() {
                        return;
                    }
                    let version = Arc::clone(&self.current().version);
                    if let Some(job) =
                        pick_compaction(&version, &self.opts.params, self.opts.priority, &s.busy)
                    {
                        s.busy.extend(job.reservations());
                        s.running += 1;
                        break job;
                    }
                    self.work_cv.wait_for(&mut s, Duration::from_millis(50));
                }
            };
            let result = self.run_job(&job);
            self.release(&job);
            if let Err(e) = result {
                self.fail(format!(
                    "compaction of level {} group {} failed: {e}",
                    job.level, job.group
                ));
                return;
            }
        }
    }

    /// Deepest level an update of `key` touching `projection` would have to
    /// reach, found with filters only. Keys not found anywhere count as blind
    /// writes at Level-0.
    pub(crate) fn locate(&self, key: Key, projection: ColumnSet) -> usize {
        let sv = self.current();
        let horizon = self.visible_seq.load(Ordering::Acquire);
        if std::iter::once(&sv.mem)
            .chain(sv.imm.iter())
            .any(|m| !m.get(key, horizon).is_empty())
        {
            return 0;
        }
        let v = &sv.version;
        if v.level0().iter().any(|r| r.run.may_contain(key)) {
            return 0;
        }
        for level in 1..=v.depth() {
            let hit = v
                .layout()
                .level(level)
                .iter()
                .enumerate()
                .any(|(j, g)| g.intersects(projection) && v.run(level, j).may_contain(key));
            if hit {
                return level;
            }
        }
        0
    }

    fn snapshot_stats(&self) -> StatsSnapshot {
        let sv = self.current();
        let v = &sv.version;
        let last = self.visible_seq.load(Ordering::Acquire);
        let params = &self.opts.params;
        let mut levels = Vec::new();
        for level in 0..self.layout.num_levels() {
            let runs: Vec<&crate::version::Run> = if level == 0 {
                v.level0().iter().map(|r| &r.run).collect()
            } else {
                v.runs_at(level).iter().collect()
            };
            let mut samples = Vec::new();
            for t in runs.iter().flat_map(|r| r.tables()) {
                let m = t.meta();
                let points = m.seq_sketch.len().max(1) as u64;
                for &s in &m.seq_sketch {
                    samples.push((last.saturating_sub(s), m.entries / points));
                }
            }
            let (group_entries, group_file_bytes) = if level == 0 {
                (
                    vec![runs.iter().map(|r| r.entries()).sum()],
                    vec![runs.iter().map(|r| r.file_bytes()).sum()],
                )
            } else {
                (
                    runs.iter().map(|r| r.entries()).collect(),
                    runs.iter().map(|r| r.file_bytes()).collect(),
                )
            };
            levels.push(LevelStats {
                level,
                group_entries,
                group_file_bytes,
                tables: runs.iter().map(|r| r.tables().len()).sum(),
                runs: if level == 0 { runs.len() } else { 0 },
                capacity_entries: params.level_capacity_entries(level),
                ages: age_histogram(&mut samples),
            });
        }
        let s = &self.stats;
        let load = |c: &AtomicU64| c.load(Ordering::Relaxed);
        StatsSnapshot {
            last_seq: last,
            block_reads: s.block_reads(),
            total_block_reads: s.total_block_reads(),
            compaction_bytes_read: load(&s.compaction_bytes_read),
            compaction_bytes_written: load(&s.compaction_bytes_written),
            compaction_model_bytes: load(&s.compaction_model_bytes),
            compaction_block_reads: load(&s.compaction_block_reads),
            compactions: load(&s.compactions),
            compaction_jobs: s.compaction_jobs(),
            compaction_micros: load(&s.compaction_micros),
            flush_bytes_written: load(&s.flush_bytes_written),
            flushes: load(&s.flushes),
            write_stalls: load(&s.write_stalls),
            memtable_entries: std::iter::once(&sv.mem)
                .chain(sv.imm.iter())
                .map(|m| m.len() as u64)
                .sum(),
            levels,
        }
    }
}

/// Path of a table file in an engine directory.
pub fn table_path(dir: &Path, file_id: u64) -> PathBuf {
    sst_path(dir, file_id)
}
