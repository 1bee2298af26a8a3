use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use laser_bench::report::RunReport;
use laser_bench::runner::{self, RunConfig};
use laser_bench::{designs, ParamsFile, WorkloadSpec};
use laser_core::{advisor, profiler, LayoutConfig};
use tracing_subscriber::EnvFilter;

#[derive(Parser)]
#[command(
    name = "laser-bench",
    version,
    about = "HTAP workload benchmark for the laser engine"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a workload spec file.
    Spec {
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
        #[arg(long, default_value_t = 30)]
        columns: usize,
        #[arg(long)]
        scale: Option<f64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the load phase into an empty database directory.
    Load(RunArgs),
    /// Run the steady phase, loading first when the directory is empty.
    Run(RunArgs),
    /// Rank reports from the same workload by measured cost.
    Compare {
        #[arg(required = true, num_args = 2..)]
        reports: Vec<PathBuf>,
        /// CSV output; standard output when omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Recommend a layout from profiled workload statistics.
    Advise {
        #[arg(long)]
        stats: PathBuf,
        /// Tree parameters; a workload spec file is accepted.
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        insert_weight: f64,
        /// Decide each level from its own statistics only.
        #[arg(long)]
        greedy: bool,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    /// Original size: 400M rows.
    Full,
    /// 4M rows and 1/100 of the point queries.
    Desk,
}

#[derive(Args)]
struct RunArgs {
    /// Workload spec file.
    #[arg(long, conflicts_with_all = ["preset", "columns"])]
    spec: Option<PathBuf>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    columns: Option<usize>,
    /// Divide row and point-query counts by this factor.
    #[arg(long)]
    scale: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Layout file in `L<i>: [..]` form.
    #[arg(long, conflicts_with = "design")]
    layout: Option<PathBuf>,
    /// row, column, htap-simple or cg-<n>.
    #[arg(long)]
    design: Option<String>,
    #[arg(long)]
    db: PathBuf,
    /// Collect per-level workload statistics.
    #[arg(long)]
    profile: bool,
    /// Where to export profiled statistics.
    #[arg(long, requires = "profile")]
    stats_out: Option<PathBuf>,
    /// Single-threaded run with inline compactions.
    #[arg(long)]
    deterministic: bool,
    /// Report file; `.csv` writes a one-row summary, anything else JSON.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Move point-query recency towards older keys by this amount.
    #[arg(long)]
    shift_read: Option<f64>,
    /// Move the Q5 projection this many columns left.
    #[arg(long)]
    shift_scan: Option<u16>,
    /// Sync the write-ahead log on every write.
    #[arg(long)]
    sync: bool,
}

impl RunArgs {
    fn config(&self) -> anyhow::Result<RunConfig> {
        let mut spec = match (&self.spec, self.preset) {
            (Some(path), _) => WorkloadSpec::load(path)?,
            (None, preset) => {
                let c = self.columns.unwrap_or(30);
                match preset.unwrap_or(Preset::Desk) {
                    Preset::Full => WorkloadSpec::full(c),
                    Preset::Desk => WorkloadSpec::desk(c),
                }
            }
        };
        if let Some(scale) = self.scale {
            spec = spec.scaled(scale)?;
        }
        if let Some(seed) = self.seed {
            spec.seed = seed;
        }
        if let Some(offset) = self.shift_read {
            spec.shift_reads(offset);
        }
        if let Some(offset) = self.shift_scan {
            spec.shift_scan(offset)?;
        }
        spec.validate()?;
        let schema = spec.schema()?;
        let levels = spec.tree_params()?.levels;
        let (layout, design) = match (&self.layout, &self.design) {
            (Some(path), _) => {
                let text = std::fs::read_to_string(path)
                    .with_context(|| format!("reading {}", path.display()))?;
                (LayoutConfig::parse(&text)?, None)
            }
            (None, name) => {
                let name = name.clone().unwrap_or_else(|| "row".into());
                (designs::by_name(&name, &schema, levels)?, Some(name))
            }
        };
        if layout.depth() != levels {
            bail!(
                "layout has {} levels below Level-0, the workload needs {levels}",
                layout.depth()
            );
        }
        Ok(RunConfig {
            spec,
            layout,
            design,
            deterministic: self.deterministic,
            profile: self.profile,
            sync: self.sync,
        })
    }
}

fn execute(args: &RunArgs, load_only: bool) -> anyhow::Result<ExitCode> {
    let cfg = args.config()?;
    let out = if load_only {
        runner::load(&args.db, &cfg)?
    } else {
        runner::run(&args.db, &cfg)?
    };
    let report = &out.report;
    if let (Some(path), Some(w)) = (&args.stats_out, &out.workload) {
        profiler::export(w, path)?;
    }
    match &args.report {
        Some(path) => report.save(path)?,
        None => println!("{}", serde_json::to_string_pretty(report)?),
    }
    summarize(report);
    if let Some(e) = &report.error {
        eprintln!("run stopped early: {e}");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn summarize(r: &RunReport) {
    eprintln!(
        "{} ({}): {:.1}s, measured cost {:.0}, {} query block reads, {:.0} inserts/s",
        r.label(),
        r.phase,
        r.runtime_secs,
        r.measured_cost,
        r.query_block_reads(),
        r.insert_throughput
    );
    for (name, c) in &r.classes {
        eprintln!(
            "  {name:>3}: {:>9} ops, {:>10} block reads, mean {:.1}us, p99 {:.1}us",
            c.count, c.block_reads, c.latency.mean_us, c.latency.p99_us
        );
    }
}

fn advise(
    stats: &Path,
    params: &Path,
    out: &Path,
    insert_weight: f64,
    greedy: bool,
) -> anyhow::Result<()> {
    let stats = profiler::import(stats)?;
    let file = ParamsFile::load(params)?;
    let schema = file.schema()?;
    let params = file.tree_params()?;
    let advice = if greedy {
        advisor::advise_greedy(&stats, &params, &schema, insert_weight)?
    } else {
        advisor::advise(&stats, &params, &schema, insert_weight)?
    };
    std::fs::write(out, advice.layout.to_string())?;
    if advice.capped {
        eprintln!("too many column fragments for an exhaustive search; groups are runs of consecutive fragments");
    }
    eprintln!("modeled cost {:.1}", advice.cost);
    print!("{}", advice.layout);
    Ok(())
}

fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(
            EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .init();
    let result = match Cli::parse().command {
        Command::Spec {
            preset,
            columns,
            scale,
            out,
        } => (|| {
            let mut spec = match preset {
                Preset::Full => WorkloadSpec::full(columns),
                Preset::Desk => WorkloadSpec::desk(columns),
            };
            if let Some(s) = scale {
                spec = spec.scaled(s)?;
            }
            spec.validate()?;
            std::fs::write(&out, spec.to_toml())?;
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Load(args) => execute(&args, true),
        Command::Run(args) => execute(&args, false),
        Command::Compare { reports, report } => (|| {
            let loaded = reports
                .iter()
                .map(|p| RunReport::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            match report {
                Some(path) => laser_bench::compare(&loaded, std::fs::File::create(path)?)?,
                None => laser_bench::compare(&loaded, std::io::stdout().lock())?,
            }
            Ok(ExitCode::SUCCESS)
        })(),
        Command::Advise {
            stats,
            params,
            out,
            insert_weight,
            greedy,
        } => advise(&stats, &params, &out, insert_weight, greedy).map(|_| ExitCode::SUCCESS),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
