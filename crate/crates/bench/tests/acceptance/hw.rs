use std::time::Instant;

use laser_bench::runner::{self, RunConfig, RunOutput};
use laser_bench::{designs, WorkloadSpec};
use laser_core::cost::{workload_cost_scaled, CostContext};
use laser_core::{advise, LayoutConfig};

use crate::util::{check_layout, Outcome};

const COLUMNS: usize = 30;
/// Rows are a quarter of the desk preset.
const SCALE: f64 = 4.0;
const FIXED: [&str; 6] = ["row", "column", "cg-3", "cg-6", "cg-15", "htap-simple"];

fn run(
    spec: &WorkloadSpec,
    layout: LayoutConfig,
    design: Option<&str>,
    profile: bool,
) -> Result<RunOutput, String> {
    let cfg = RunConfig {
        spec: spec.clone(),
        layout,
        design: design.map(str::to_string),
        deterministic: true,
        profile,
        sync: false,
    };
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let out = runner::run(dir.path(), &cfg).map_err(|e| e.to_string())?;
    match &out.report.error {
        Some(e) => Err(format!("{}: {e}", out.report.label())),
        None => Ok(out),
    }
}

pub fn ordering() -> Outcome {
    let start = Instant::now();
    let inner = || -> Result<Outcome, String> {
        let e = |x: laser_bench::BenchError| x.to_string();
        let spec = WorkloadSpec::desk(COLUMNS).scaled(SCALE).map_err(e)?;
        let schema = spec.schema().map_err(e)?;
        let params = spec.tree_params().map_err(e)?;
        let levels = params.levels;

        let profiled = run(&spec, designs::row(&schema, levels), Some("row"), true)?;
        let stats = profiled
            .workload
            .clone()
            .ok_or("profiling produced no statistics")?;
        let advice = advise(&stats, &params, &schema, 1.0).map_err(|x| x.to_string())?;
        check_layout(&advice.layout, &schema)?;
        let ctx =
            CostContext::new(&params, &schema, stats.inserts, 1.0).map_err(|x| x.to_string())?;

        let mut fixed = vec![("row".to_string(), profiled.report.measured_cost, {
            workload_cost_scaled(&designs::row(&schema, levels), &stats, &ctx)
        })];
        for name in &FIXED[1..] {
            let layout = designs::by_name(name, &schema, levels).map_err(e)?;
            let modeled = workload_cost_scaled(&layout, &stats, &ctx);
            let out = run(&spec, layout, Some(name), false)?;
            fixed.push((name.to_string(), out.report.measured_cost, modeled));
        }
        let chosen = run(&spec, advice.layout.clone(), None, false)?;
        let chosen_modeled = workload_cost_scaled(&advice.layout, &stats, &ctx);

        let (best_name, best_measured, _) = fixed
            .iter()
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .cloned()
            .expect("fixed designs");
        let ratio = chosen.report.measured_cost / best_measured;
        let modeled_min = fixed.iter().all(|d| chosen_modeled <= d.2);
        let secs = start.elapsed().as_secs_f64();
        let scale = ctx.scale();
        let table: Vec<String> = fixed
            .iter()
            .map(|(n, m, c)| format!("{n} {m:.0}/{:.0}", *c as f64 / scale))
            .collect();
        Ok(Outcome::new(
            ratio <= 1.1 && modeled_min && secs <= 1800.0,
            format!(
                "{} rows at c={COLUMNS}; advisor measured {:.0}, modeled {:.0}; best fixed {best_name} {best_measured:.0} (ratio {ratio:.3}); measured/modeled: {}; advisor layout {}",
                spec.load_rows,
                chosen.report.measured_cost,
                chosen_modeled as f64 / scale,
                table.join(", "),
                advice.layout.to_string().trim().replace('\n', " | ")
            ),
        ))
    };
    inner().unwrap_or_else(Outcome::fail)
}
