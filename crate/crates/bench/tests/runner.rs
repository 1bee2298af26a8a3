use laser_bench::runner::{self, RunConfig};
use laser_bench::{designs, QueryClass, WorkloadSpec};

fn tiny_spec() -> WorkloadSpec {
    let mut spec = WorkloadSpec::desk(8).scaled(400.0).unwrap();
    spec.tree.memtable_bytes = 64 << 10;
    spec
}

fn config(spec: WorkloadSpec, design: &str, deterministic: bool) -> RunConfig {
    let schema = spec.schema().unwrap();
    let levels = spec.tree_params().unwrap().levels;
    RunConfig {
        layout: designs::by_name(design, &schema, levels).unwrap(),
        design: Some(design.to_string()),
        spec,
        deterministic,
        profile: false,
        sync: false,
    }
}

#[test]
fn deterministic_runs_repeat_exactly() {
    let cfg = config(tiny_spec(), "cg-2", true);
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ra = runner::run(a.path(), &cfg).unwrap().report;
    let rb = runner::run(b.path(), &cfg).unwrap().report;
    assert!(ra.error.is_none());
    assert_eq!(ra.stats.block_reads, rb.stats.block_reads);
    assert_eq!(
        ra.stats.compaction_bytes_written,
        rb.stats.compaction_bytes_written
    );
    assert_eq!(ra.scan_checksum, rb.scan_checksum);
    assert_eq!(ra.measured_cost, rb.measured_cost);
    for (name, class) in &ra.classes {
        assert_eq!(class.block_reads, rb.classes[name].block_reads, "{name}");
        assert_eq!(class.count, rb.classes[name].count, "{name}");
    }
}

#[test]
fn class_reads_add_up_to_engine_counters() {
    let cfg = config(tiny_spec(), "htap-simple", true);
    let dir = tempfile::tempdir().unwrap();
    let r = runner::run(dir.path(), &cfg).unwrap().report;
    assert_eq!(r.query_block_reads(), r.stats.total_block_reads);
    assert_eq!(r.class(QueryClass::Q1).count, cfg.spec.steady_inserts);
    assert_eq!(r.class(QueryClass::Q2a).count, cfg.spec.q2a.count);
    assert_eq!(r.class(QueryClass::Q5).count, cfg.spec.q5.count);
    assert!(r.class(QueryClass::Q2a).rows > 0);
    assert!(r.measured_cost >= r.query_block_reads() as f64);
}

#[test]
fn concurrent_run_counts_every_operation() {
    let cfg = config(tiny_spec(), "row", false);
    let dir = tempfile::tempdir().unwrap();
    let r = runner::run(dir.path(), &cfg).unwrap().report;
    assert!(r.error.is_none());
    assert_eq!(r.class(QueryClass::Q2b).count, cfg.spec.q2b.count);
    assert_eq!(r.class(QueryClass::Q4).count, cfg.spec.q4.count);
    assert_eq!(r.class(QueryClass::Q1).count, cfg.spec.steady_inserts);
}

#[test]
fn empty_steady_phase() {
    let mut spec = tiny_spec();
    spec.steady_inserts = 0;
    spec.q2a.count = 0;
    spec.q2b.count = 0;
    spec.q4.count = 0;
    spec.q5.count = 0;
    let cfg = config(spec, "row", true);
    let dir = tempfile::tempdir().unwrap();
    let r = runner::run(dir.path(), &cfg).unwrap().report;
    assert!(r.error.is_none());
    assert_eq!(r.query_block_reads(), 0);
    assert_eq!(r.class(QueryClass::Q1).count, 0);
}

#[test]
fn run_resumes_after_load() {
    let cfg = config(tiny_spec(), "cg-4", true);
    let dir = tempfile::tempdir().unwrap();
    let loaded = runner::load(dir.path(), &cfg).unwrap().report;
    assert_eq!(loaded.phase, "load");
    assert!(loaded.classes.is_empty());
    assert!(runner::load(dir.path(), &cfg).is_err());
    let resumed = runner::run(dir.path(), &cfg).unwrap().report;
    assert_eq!(resumed.load_secs, 0.0);

    let fresh_dir = tempfile::tempdir().unwrap();
    let fresh = runner::run(fresh_dir.path(), &cfg).unwrap().report;
    assert_eq!(
        resumed.class(QueryClass::Q2a).rows,
        fresh.class(QueryClass::Q2a).rows
    );
    assert_eq!(resumed.scan_checksum, fresh.scan_checksum);
}

#[test]
fn foreign_directories_are_rejected() {
    let cfg = config(tiny_spec(), "row", true);
    let dir = tempfile::tempdir().unwrap();
    runner::load(dir.path(), &cfg).unwrap();
    let other = config(tiny_spec(), "column", true);
    assert!(runner::run(dir.path(), &other).is_err());
    let mut reseeded = cfg.clone();
    reseeded.spec.seed += 1;
    assert!(runner::run(dir.path(), &reseeded).is_err());

    let junk = tempfile::tempdir().unwrap();
    std::fs::write(junk.path().join("notes.txt"), "x").unwrap();
    assert!(runner::run(junk.path(), &cfg).is_err());
}

#[test]
fn profiling_yields_statistics_and_modeled_cost() {
    let mut cfg = config(tiny_spec(), "row", true);
    cfg.profile = true;
    let dir = tempfile::tempdir().unwrap();
    let out = runner::run(dir.path(), &cfg).unwrap();
    let w = out.workload.expect("profiled statistics");
    assert_eq!(w.columns, 8);
    assert!(w.inserts > 0);
    assert!(out.report.modeled_cost.unwrap() > 0.0);
}
