use paoi_core::scenario::{mean_half_width, run_sweep, SweepOptions, SweepTable};
use paoi_core::{ComputeFormula, PsiMode, Sweep};

use crate::svg::{line_chart, Series};
use crate::{num, opt_num, CliError, Run};

pub const HEADER: [&str; 17] = [
    "sweep_var",
    "value",
    "replication",
    "discipline",
    "avg_analytic_mode",
    "avg_analytic",
    "avg_sim",
    "avg_sim_ci",
    "severity_mode",
    "j_z",
    "j_validity",
    "ks_stage",
    "drops",
    "preemptions",
    "j_sim",
    "compute_arrival_rate",
    "error",
];

pub const AGGREGATE_HEADER: [&str; 13] = [
    "sweep_var",
    "value",
    "replications",
    "avg_analytic_mean",
    "avg_analytic_hw",
    "avg_sim_mean",
    "avg_sim_hw",
    "j_z_mean",
    "j_z_hw",
    "j_sim_mean",
    "j_sim_hw",
    "ks_stage_mean",
    "failed_cells",
];

pub fn build(run: &Run<'_>) -> Result<(Sweep, SweepOptions), CliError> {
    let cfg = run.config;
    let spec = cfg
        .sweep
        .clone()
        .ok_or_else(|| CliError::Config("`sweep` section is required for `paoi sweep`".into()))?;
    let sweep = Sweep::new(spec, cfg.scenario.clone())?;
    let opts = SweepOptions {
        ruin_level: cfg.ruin_level()?,
        z: cfg.z()?,
        lambda_mode: cfg.analysis.lambda_mode,
        exponent_mode: cfg.analysis.exponent_mode,
        horizon: Some(cfg.analysis.horizon_s),
        seed: cfg.analysis.seed,
    };
    Ok((sweep, opts))
}

pub fn rows(t: &SweepTable, avg_mode: ComputeFormula, psi_mode: PsiMode) -> Vec<Vec<String>> {
    t.cells
        .iter()
        .map(|c| {
            let mut errors: Vec<String> = Vec::new();
            let avg = c.avg(avg_mode).as_ref().map_err(|e| errors.push(format!("analytic: {e}"))).ok();
            let j = c.severity(psi_mode);
            let sim = c.sim.as_ref().map_err(|e| errors.push(format!("sim: {e}"))).ok();
            if let paoi_core::SeverityOutcome::NotComputable(e) = j {
                errors.push(format!("severity: {e}"));
            }
            vec![
                t.variable.label().to_string(),
                num(c.value),
                c.replication.to_string(),
                t.discipline.label().to_string(),
                avg_mode.label().to_string(),
                opt_num(avg.copied()),
                opt_num(sim.map(|s| s.avg_e2e.mean)),
                opt_num(sim.map(|s| s.avg_e2e.half_width)),
                psi_mode.label().to_string(),
                opt_num(j.value()),
                match j {
                    paoi_core::SeverityOutcome::Computed { validity, .. } => validity.label().to_string(),
                    paoi_core::SeverityOutcome::NotComputable(_) => "NOT_COMPUTABLE".to_string(),
                },
                opt_num(sim.and_then(|s| s.ks_stage)),
                sim.map(|s| s.drops.to_string()).unwrap_or_default(),
                sim.map(|s| s.preemptions.to_string()).unwrap_or_default(),
                opt_num(sim.and_then(|s| s.severity)),
                opt_num(sim.map(|s| s.compute_arrival_rate)),
                errors.join("; "),
            ]
        })
        .collect()
}

pub struct AggregateRow {
    pub value: f64,
    pub replications: usize,
    pub avg_analytic: Option<(f64, Option<f64>)>,
    pub avg_sim: Option<(f64, Option<f64>)>,
    pub j_z: Option<(f64, Option<f64>)>,
    pub j_sim: Option<(f64, Option<f64>)>,
    pub ks_stage: Option<f64>,
    pub failed_cells: usize,
}

pub fn aggregate(t: &SweepTable, avg_mode: ComputeFormula, psi_mode: PsiMode) -> Vec<AggregateRow> {
    let mut values: Vec<f64> = t.cells.iter().map(|c| c.value).collect();
    values.dedup();
    values
        .into_iter()
        .map(|v| {
            let cells: Vec<_> = t.cells.iter().filter(|c| c.value == v).collect();
            let collect = |f: &dyn Fn(&paoi_core::scenario::SweepCell) -> Option<f64>| {
                cells.iter().filter_map(|c| f(c)).collect::<Vec<f64>>()
            };
            let avg = collect(&|c| c.avg(avg_mode).as_ref().ok().copied());
            let sim = collect(&|c| c.sim.as_ref().ok().map(|s| s.avg_e2e.mean));
            let j = collect(&|c| c.severity(psi_mode).value());
            let js = collect(&|c| c.sim.as_ref().ok().and_then(|s| s.severity));
            let ks = collect(&|c| c.sim.as_ref().ok().and_then(|s| s.ks_stage));
            let failed = cells
                .iter()
                .filter(|c| c.avg(avg_mode).is_err() || c.sim.is_err())
                .count();
            AggregateRow {
                value: v,
                replications: cells.len(),
                avg_analytic: mean_half_width(&avg),
                avg_sim: mean_half_width(&sim),
                j_z: mean_half_width(&j),
                j_sim: mean_half_width(&js),
                ks_stage: mean_half_width(&ks).map(|m| m.0),
                failed_cells: failed,
            }
        })
        .collect()
}

fn pair(p: Option<(f64, Option<f64>)>) -> [String; 2] {
    [opt_num(p.map(|x| x.0)), opt_num(p.and_then(|x| x.1))]
}

pub fn cmd_sweep(run: &Run<'_>) -> Result<(), CliError> {
    let (sweep, opts) = build(run)?;
    let avg_mode = run.config.avg_mode()?;
    let psi_mode = run.config.psi_mode()?;
    let table = run_sweep(&sweep, &opts);
    let rows = rows(&table, avg_mode, psi_mode);
    let path = run.write_csv("sweep.csv", &HEADER, &rows)?;
    eprintln!("wrote {} ({} rows)", path.display(), rows.len());

    let agg = aggregate(&table, avg_mode, psi_mode);
    let agg_rows: Vec<Vec<String>> = agg
        .iter()
        .map(|a| {
            let mut r = vec![table.variable.label().to_string(), num(a.value), a.replications.to_string()];
            for p in [a.avg_analytic, a.avg_sim, a.j_z, a.j_sim] {
                r.extend(pair(p));
            }
            r.push(opt_num(a.ks_stage));
            r.push(a.failed_cells.to_string());
            r
        })
        .collect();
    run.write_csv("sweep_aggregate.csv", &AGGREGATE_HEADER, &agg_rows)?;

    if run.config.analysis.charts {
        let pts = |f: &dyn Fn(&AggregateRow) -> Option<f64>| {
            agg.iter().filter_map(|a| f(a).map(|y| (a.value, y))).collect::<Vec<_>>()
        };
        let avg_chart = line_chart(
            "Average E2E peak AoI",
            table.variable.label(),
            "seconds",
            &[
                Series {
                    name: "analytic",
                    points: pts(&|a| a.avg_analytic.map(|p| p.0)),
                },
                Series {
                    name: "simulated",
                    points: pts(&|a| a.avg_sim.map(|p| p.0)),
                },
            ],
        );
        run.write_file("sweep_avg.svg", &avg_chart)?;
        let sev_chart = line_chart(
            "Maximum severity CDF at z",
            table.variable.label(),
            "probability",
            &[
                Series {
                    name: "analytic",
                    points: pts(&|a| a.j_z.map(|p| p.0)),
                },
                Series {
                    name: "simulated",
                    points: pts(&|a| a.j_sim.map(|p| p.0)),
                },
            ],
        );
        run.write_file("sweep_severity.svg", &sev_chart)?;
    }
    Ok(())
}
