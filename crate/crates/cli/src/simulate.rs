use paoi_core::aoi_analytic::severity_curve;
use paoi_core::queue_sim::{self, excursion_severity, worst_of, batch_means};
use paoi_core::scenario::{mix, realize_rates, stage_ks};
use paoi_core::{Error, PsiMode, SeverityOutcome, Stage, StageLaw, SystemLaw};

use crate::{num, opt_num, CliError, Run};

pub const SAMPLE_HEADER: [&str; 5] = ["replication", "user", "stage", "delivery_time", "paoi_seconds"];
pub const EXCURSION_HEADER: [&str; 3] = ["replication", "ruin_level", "exceedance"];
pub const SUMMARY_HEADER: [&str; 10] = [
    "replication",
    "user",
    "stage",
    "update_rate",
    "n",
    "mean",
    "half_width",
    "ks",
    "drops",
    "preemptions",
];
pub const SEVERITY_HEADER: [&str; 8] = [
    "replication",
    "ruin_level",
    "z",
    "empirical",
    "psi_mode",
    "analytic",
    "validity_flag",
    "deviation",
];

/// Rows comparing an empirical severity CDF with both analytic readings.
pub fn severity_rows(
    replication: &str,
    sys: &SystemLaw,
    ruin_level: f64,
    zs: &[f64],
    empirical: &[f64],
) -> Result<Vec<Vec<String>>, CliError> {
    let mut rows = Vec::new();
    for mode in [PsiMode::AsWritten, PsiMode::Survival] {
        let curve = severity_curve(sys, ruin_level, zs, mode)?;
        for ((z, emp), p) in zs.iter().zip(empirical).zip(&curve.points) {
            let flag = match p {
                SeverityOutcome::Computed { validity, .. } => validity.label(),
                SeverityOutcome::NotComputable(_) => "NOT_COMPUTABLE",
            };
            rows.push(vec![
                replication.to_string(),
                num(ruin_level),
                num(*z),
                num(*emp),
                mode.label().to_string(),
                opt_num(p.value()),
                flag.to_string(),
                opt_num(p.value().map(|v| v - emp)),
            ]);
        }
    }
    Ok(rows)
}

pub fn cmd_simulate(run: &Run<'_>) -> Result<(), CliError> {
    let cfg = run.config;
    let level = cfg.ruin_level()?;
    let zs = cfg.z_grid()?;
    let sc = &cfg.scenario;
    let rates = realize_rates(sc)?;
    let stages = rates
        .iter()
        .map(|&r| StageLaw::new(r, sc.queue.stage_service_rate, sc.queue.discipline))
        .collect::<paoi_core::Result<Vec<_>>>()?;
    let sys = SystemLaw::new(stages.clone(), cfg.analysis.exponent_mode)?;

    let mut samples = Vec::new();
    let mut excursions = Vec::new();
    let mut summary = Vec::new();
    let mut severity = Vec::new();
    for rep in 0..cfg.analysis.replications {
        let seed = mix(cfg.analysis.seed, rep as u64);
        let s = queue_sim::run(&sc.queue, &rates, cfg.analysis.horizon_s, seed)?;
        let r = rep.to_string();
        for u in 0..s.users() {
            for stage in [Stage::Stage1, Stage::E2e] {
                for smp in s.series(u, stage)? {
                    samples.push(vec![r.clone(), u.to_string(), stage.label().into(), num(smp.time), num(smp.peak)]);
                }
                let peaks = s.peaks(u, stage)?;
                let est = batch_means(&peaks).ok();
                let ks = match (stage, queue_sim::empirical_cdf(&s, u, stage)) {
                    (Stage::Stage1, Ok(e)) => Some(stage_ks(&e, &stages[u])?),
                    _ => None,
                };
                summary.push(vec![
                    r.clone(),
                    u.to_string(),
                    stage.label().into(),
                    num(rates[u]),
                    peaks.len().to_string(),
                    opt_num(est.map(|e| e.mean)),
                    opt_num(est.map(|e| e.half_width)),
                    opt_num(ks),
                    s.counters[u].drops.to_string(),
                    s.counters[u].preemptions.to_string(),
                ]);
            }
        }
        for smp in &s.compute {
            samples.push(vec![r.clone(), "all".into(), Stage::Compute.label().into(), num(smp.time), num(smp.peak)]);
        }
        let est = batch_means(&s.peaks(0, Stage::Compute)?).ok();
        summary.push(vec![
            r.clone(),
            "all".into(),
            Stage::Compute.label().into(),
            num(s.compute_arrival_rate()),
            s.compute.len().to_string(),
            opt_num(est.map(|e| e.mean)),
            opt_num(est.map(|e| e.half_width)),
            String::new(),
            s.total_drops().to_string(),
            s.total_preemptions().to_string(),
        ]);
        match excursion_severity(&worst_of(&s.stage1_trace), level) {
            Ok(ex) => {
                for e in &ex.exceedances {
                    excursions.push(vec![r.clone(), num(level), num(*e)]);
                }
                let emp: Vec<f64> = zs.iter().map(|&z| ex.severity_cdf(z)).collect();
                severity.extend(severity_rows(&r, &sys, level, &zs, &emp)?);
            }
            Err(Error::Empty(msg)) => eprintln!("replication {rep}: {msg}"),
            Err(e) => return Err(e.into()),
        }
    }
    run.write_csv("samples.csv", &SAMPLE_HEADER, &samples)?;
    run.write_csv("excursions.csv", &EXCURSION_HEADER, &excursions)?;
    run.write_csv("simulation_summary.csv", &SUMMARY_HEADER, &summary)?;
    run.write_csv("severity.csv", &SEVERITY_HEADER, &severity)?;
    eprintln!(
        "wrote {} samples, {} excursions to {}",
        samples.len(),
        excursions.len(),
        run.out.display()
    );
    Ok(())
}
