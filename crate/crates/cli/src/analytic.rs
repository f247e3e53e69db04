use paoi_core::aoi_analytic::{avg_paoi_compute, severity_curve, CdfSource};
use paoi_core::{
    ComputeFormula, ComputeQueueLaw, Discipline, Error, ExponentMode, PsiMode, SeverityOutcome,
    StageLaw, SystemLaw,
};

use crate::{num, CliError, Run};

pub const HEADER: [&str; 8] = [
    "discipline",
    "r",
    "mu",
    "a_or_z",
    "quantity",
    "mode",
    "value",
    "validity_flag",
];

fn row(d: &str, r: f64, mu: f64, x: Option<f64>, q: &str, mode: &str, value: Option<f64>, flag: &str) -> Vec<String> {
    vec![
        d.to_string(),
        num(r),
        num(mu),
        x.map(num).unwrap_or_default(),
        q.to_string(),
        mode.to_string(),
        value.map(num).unwrap_or_default(),
        flag.to_string(),
    ]
}

fn stage_rows(law: &StageLaw, ages: &[f64], zs: &[f64], ruin_level: Option<f64>) -> Result<Vec<Vec<String>>, CliError> {
    let d = law.discipline.label();
    let (r, mu) = (law.update_rate, law.service_rate);
    let mut out = Vec::new();
    let order = sorted(ages);
    let quad = law.cdf_quadrature_sorted(&order)?;
    for &a in ages {
        let q = quad[order.partition_point(|x| *x < a)];
        let cf = law.cdf(a, CdfSource::ClosedForm)?;
        out.push(row(d, r, mu, Some(a), "pdf", "-", Some(law.pdf(a)?), "VALID"));
        out.push(row(d, r, mu, Some(a), "cdf", "closed-form", Some(cf.value), cf.validity.label()));
        out.push(row(d, r, mu, Some(a), "cdf", "quadrature", Some(q), "VALID"));
        out.push(row(
            d,
            r,
            mu,
            Some(a),
            "cdf_discrepancy",
            "closed-form-minus-quadrature",
            Some(cf.value - q),
            cf.validity.label(),
        ));
    }
    out.push(row(d, r, mu, None, "avg_stage", "-", Some(law.mean()), "VALID"));
    if let Some(level) = ruin_level {
        let sys = SystemLaw::new(vec![*law], ExponentMode::HomogeneousPower)?;
        for mode in [PsiMode::AsWritten, PsiMode::Survival] {
            let curve = severity_curve(&sys, level, zs, mode)?;
            for (z, p) in zs.iter().zip(&curve.points) {
                let flag = match p {
                    SeverityOutcome::Computed { validity, .. } => validity.label(),
                    SeverityOutcome::NotComputable(_) => "NOT_COMPUTABLE",
                };
                out.push(row(d, r, mu, Some(*z), "severity", mode.label(), p.value(), flag));
            }
        }
    }
    Ok(out)
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

fn compute_rows(lambda: f64, mu_c: f64) -> Result<Vec<Vec<String>>, CliError> {
    let mut out = Vec::new();
    for f in [ComputeFormula::AsWritten, ComputeFormula::Corrected] {
        let law = ComputeQueueLaw::new(lambda, mu_c, f)?;
        let (value, flag) = match avg_paoi_compute(&law) {
            Ok(c) if c.dimensional_anomaly => (Some(c.value), "DIMENSIONAL_ANOMALY"),
            Ok(c) => (Some(c.value), "VALID"),
            Err(Error::Unstable { .. }) => (None, "UNSTABLE"),
            Err(Error::NotComputable(_)) => (None, "NOT_COMPUTABLE"),
            Err(e) => return Err(e.into()),
        };
        out.push(row("compute", lambda, mu_c, None, "avg_compute", f.label(), value, flag));
    }
    Ok(out)
}

/// Rows of the analytic table for the configured grid.
pub fn table(run: &Run<'_>) -> Result<Vec<Vec<String>>, CliError> {
    let grid = &run.config.analysis.grid;
    let mut rows = Vec::new();
    if !grid.stages.is_empty() {
        let level = run.config.ruin_level()?;
        let zs = run.config.z_grid()?;
        for &[r, mu] in &grid.stages {
            for d in [Discipline::FcfsMm12, Discipline::LcfsMm12Star] {
                rows.extend(stage_rows(&StageLaw::new(r, mu, d)?, &grid.ages, &zs, Some(level))?);
            }
        }
    }
    for &[lambda, mu_c] in &grid.compute {
        rows.extend(compute_rows(lambda, mu_c)?);
    }
    Ok(rows)
}

pub fn cmd_analytic(run: &Run<'_>) -> Result<(), CliError> {
    let rows = table(run)?;
    let path = run.write_csv("analytic.csv", &HEADER, &rows)?;
    eprintln!("wrote {} ({} rows)", path.display(), rows.len());
    Ok(())
}
