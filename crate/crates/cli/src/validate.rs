//! The oracle suite behind `paoi validate`.

use std::time::Instant;

use paoi_core::aoi_analytic::{avg_paoi_compute, avg_paoi_e2e, severity_cdf, CdfSource};
use paoi_core::queue_sim::{self, estimate_additive_e2e, excursion_severity, worst_of};
use paoi_core::scenario::{realize_rates, run_sweep, stage_ks, SweepOptions, SweepSpec};
use paoi_core::{
    ComputeFormula, ComputeQueueLaw, Discipline, ExponentMode, PsiMode, QueueConfig,
    SeverityQuery, Stage, StageLaw, Sweep, SweepVariable, SystemLaw, Validity,
};
use serde::Serialize;

use crate::simulate::{severity_rows, SEVERITY_HEADER};
use crate::{num, CliError, Run};

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub criterion: &'static str,
    pub name: String,
    pub passed: bool,
    pub measured: f64,
    pub tolerance: f64,
    pub detail: String,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub checks: Vec<Check>,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn criterion(&self, id: &str) -> impl Iterator<Item = &Check> {
        let id = id.to_string();
        self.checks.iter().filter(move |c| c.criterion == id)
    }
}

const R_GRID: [f64; 6] = [0.5, 1.0, 2.0, 5.0, 10.0, 1e4];
const MU_GRID: [f64; 2] = [1.0, 5.0];

/// `(r, μ)` pairs, skipping `r = μ` and adding `r = μ(1 ± 1e-8)`.
pub fn stage_grid() -> Vec<(f64, f64)> {
    let mut g = Vec::new();
    for mu in MU_GRID {
        g.extend(R_GRID.iter().filter(|r| **r != mu).map(|&r| (r, mu)));
        g.push((mu * (1.0 + 1e-8), mu));
        g.push((mu * (1.0 - 1e-8), mu));
    }
    g
}

fn both(r: f64, mu: f64) -> paoi_core::Result<[StageLaw; 2]> {
    Ok([StageLaw::fcfs(r, mu)?, StageLaw::lcfs(r, mu)?])
}

struct Suite<'a> {
    run: &'a Run<'a>,
    checks: Vec<Check>,
}

impl Suite<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, criterion: &'static str, name: &str, passed: bool, measured: f64, tolerance: f64, detail: String, start: Instant) {
        let c = Check {
            criterion,
            name: name.to_string(),
            passed,
            measured,
            tolerance,
            detail,
            elapsed_s: start.elapsed().as_secs_f64(),
        };
        eprintln!(
            "[{}] {:<4} {:<34} measured={} tol={} {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.criterion,
            c.name,
            c.measured,
            c.tolerance,
            c.detail
        );
        self.checks.push(c);
    }

    fn normalization(&mut self) -> Result<(), CliError> {
        let v = &self.run.config.validation;
        let t = Instant::now();
        let mut worst: f64 = 0.0;
        for (r, mu) in stage_grid() {
            for law in both(r, mu)? {
                worst = worst.max((law.expect(|_| 1.0)? - 1.0).abs());
            }
        }
        self.push("1", "pdf_normalization", worst < v.normalization_tol, worst, v.normalization_tol, format!("{} (r, mu) pairs x 2 disciplines", stage_grid().len()), t);
        let secs = t.elapsed().as_secs_f64();
        self.push("1", "normalization_runtime_s", secs < v.normalization_budget_s, secs, v.normalization_budget_s, String::new(), t);
        Ok(())
    }

    fn fcfs_agreement(&mut self) -> Result<(), CliError> {
        let v = &self.run.config.validation;
        let t = Instant::now();
        let mut worst: f64 = 0.0;
        let mut invalid = 0;
        for (r, mu) in stage_grid() {
            let law = StageLaw::fcfs(r, mu)?;
            let ages: Vec<f64> = (0..200).map(|i| 20.0 / mu * f64::from(i) / 199.0).collect();
            let quad = law.cdf_quadrature_sorted(&ages)?;
            for (a, q) in ages.iter().zip(quad) {
                let c = law.cdf_closed_form(*a)?;
                invalid += usize::from(c.validity == Validity::Invalid);
                worst = worst.max((c.value - q).abs());
            }
        }
        self.push("2", "fcfs_closed_form_vs_quadrature", worst < v.cdf_agreement_tol && invalid == 0, worst, v.cdf_agreement_tol, format!("200 ages on [0, 20/mu]; {invalid} invalid flags"), t);
        let t = Instant::now();
        let spot = StageLaw::fcfs(2.0, 1.0)?.cdf_closed_form(1.0)?.value;
        let dev = (spot - 0.0965).abs();
        self.push("2", "fcfs_cdf_spot_r2_mu1_a1", dev < v.spot_tol, dev, v.spot_tol, format!("CDF = {spot}"), t);
        Ok(())
    }

    fn lcfs_discrepancy(&mut self) -> Result<(), CliError> {
        let v = &self.run.config.validation;
        let t = Instant::now();
        let law = StageLaw::lcfs(2.0, 1.0)?;
        let c = law.cdf(0.0, CdfSource::ClosedForm)?;
        let dev = (c.value + 1.0 / 3.0).abs();
        self.push(
            "3",
            "lcfs_closed_form_at_zero",
            dev < v.closed_form_spot_tol && c.validity == Validity::Invalid,
            dev,
            v.closed_form_spot_tol,
            format!("value = {}, flag = {}", c.value, c.validity.label()),
            t,
        );
        let t = Instant::now();
        let mut problems = Vec::new();
        let mut tail_2_1 = f64::NAN;
        for (r, mu) in stage_grid() {
            let law = StageLaw::lcfs(r, mu)?;
            let ages: Vec<f64> = (0..200).map(|i| 20.0 / mu * f64::from(i) / 199.0).collect();
            let cdf = law.cdf_quadrature_sorted(&ages)?;
            if cdf[0] != 0.0 || cdf.windows(2).any(|w| w[1] < w[0]) {
                problems.push(format!("({r}, {mu})"));
            }
            if (r, mu) == (2.0, 1.0) {
                tail_2_1 = 1.0 - cdf[199];
            }
        }
        self.push(
            "3",
            "lcfs_quadrature_is_a_cdf",
            problems.is_empty() && tail_2_1 < 1e-6,
            tail_2_1,
            1e-6,
            format!("1 - CDF(20/mu) at (2, 1); non-monotone or non-zero start at: [{}]", problems.join(" ")),
            t,
        );
        Ok(())
    }

    fn moments(&mut self) -> Result<(), CliError> {
        let v = &self.run.config.validation;
        let t = Instant::now();
        let mut worst: f64 = 0.0;
        for (r, mu) in stage_grid() {
            for law in both(r, mu)? {
                worst = worst.max((law.expect(|a| a)? - law.mean()).abs());
            }
        }
        self.push("4", "mean_vs_first_moment", worst < v.moment_tol, worst, v.moment_tol, String::new(), t);
        let t = Instant::now();
        let [f, l] = both(2.0, 1.0)?;
        let dev = (f.mean() - 17.0 / 6.0).abs().max((l.mean() - 2.3889).abs());
        self.push("4", "mean_spots_r2_mu1", dev < v.spot_tol, dev, v.spot_tol, format!("fcfs = {}, lcfs = {}", f.mean(), l.mean()), t);
        Ok(())
    }

    fn ks(&mut self) -> Result<(), CliError> {
        let v = self.run.config.validation.clone();
        let seed = self.run.config.analysis.seed;
        for d in [Discipline::FcfsMm12, Discipline::LcfsMm12Star] {
            for (i, r) in [0.5, 2.0, 10.0].into_iter().enumerate() {
                let t = Instant::now();
                let law = StageLaw::new(r, 1.0, d)?;
                let cfg = QueueConfig::new(d, 1.0, 100.0);
                let horizon = 1.02 * v.ks_deliveries as f64 / law.throughput() / (1.0 - cfg.warmup_fraction);
                let s = queue_sim::run(&cfg, &[r], horizon, paoi_core::scenario::mix(seed, 100 + i as u64))?;
                let e = queue_sim::empirical_cdf(&s, 0, Stage::Stage1)?;
                let ks = stage_ks(&e, &law)?;
                let secs = t.elapsed().as_secs_f64();
                self.push(
                    "5",
                    &format!("ks_{}_r{}_mu1", d.label(), r),
                    ks <= v.ks_max && secs < v.ks_budget_s && e.len() >= v.ks_deliveries,
                    ks,
                    v.ks_max,
                    format!("n = {}, {:.2} s", e.len(), secs),
                    t,
                );
            }
        }
        Ok(())
    }

    fn e2e(&mut self) -> Result<(), CliError> {
        let cfg = self.run.config;
        let v = &cfg.validation;
        let t = Instant::now();
        let sc = &cfg.scenario;
        let rates = realize_rates(sc)?;
        let stages = rates
            .iter()
            .map(|&r| StageLaw::new(r, sc.queue.stage_service_rate, sc.queue.discipline))
            .collect::<paoi_core::Result<Vec<_>>>()?;
        let law = ComputeQueueLaw::from_stages(&stages, sc.queue.compute_service_rate, cfg.analysis.lambda_mode, ComputeFormula::Corrected)?;
        let analytic = avg_paoi_e2e(&stages, &law)?.value;
        let mut queue = sc.queue.clone();
        queue.compute_feed = paoi_core::ComputeFeed::Tandem;
        let sum_mu = sc.queue.stage_service_rate * rates.len() as f64;
        let horizon = v.e2e_deliveries as f64 / sum_mu / (1.0 - queue.warmup_fraction);
        let s = queue_sim::run(&queue, &rates, horizon, cfg.analysis.seed)?;
        let est = estimate_additive_e2e(&s)?;
        let rel = (est.mean / analytic - 1.0).abs();
        let rel_ci = est.half_width / analytic;
        self.push(
            "6",
            "e2e_des_vs_corrected",
            rel + rel_ci < v.e2e_rel_tol,
            rel + rel_ci,
            v.e2e_rel_tol,
            format!(
                "U = {}, analytic = {analytic}, DES = {} +/- {}, {} compute deliveries",
                rates.len(),
                est.mean,
                est.half_width,
                s.compute.len()
            ),
            t,
        );
        let t = Instant::now();
        let rate = s.compute_arrival_rate();
        self.push(
            "6",
            "compute_arrival_rate_gap",
            rate <= sum_mu * (1.0 + v.e2e_rel_tol),
            rate,
            sum_mu,
            format!("tandem compute arrivals/s vs sum of stage service rates; gap = {}", sum_mu - rate),
            t,
        );
        let t = Instant::now();
        let c = avg_paoi_compute(&ComputeQueueLaw::new(75.0, 100.0, ComputeFormula::AsWritten)?)?;
        let dev = (c.value - 1_515_000.0233).abs();
        self.push(
            "6",
            "compute_as_written_spot",
            dev < v.spot_tol && c.dimensional_anomaly,
            dev,
            v.spot_tol,
            format!("value = {}, dimensional anomaly = {}", c.value, c.dimensional_anomaly),
            t,
        );
        Ok(())
    }

    fn severity(&mut self) -> Result<(), CliError> {
        let cfg = self.run.config;
        let v = &cfg.validation;
        let t = Instant::now();
        let sys = SystemLaw::new(vec![StageLaw::fcfs(2.0, 1.0)?], ExponentMode::HomogeneousPower)?;
        let mut dev: f64 = 0.0;
        let mut flags = Vec::new();
        for (mode, expect) in [(PsiMode::AsWritten, -3.05), (PsiMode::Survival, 3.05)] {
            let out = severity_cdf(&sys, &SeverityQuery::new(1.0, 1.0, mode)?)?;
            dev = dev.max(out.value().map_or(f64::INFINITY, |x| (x - expect).abs()));
            flags.push(format!("{} = {:?} {}", mode.label(), out.value(), out.validity().label()));
            if out.validity() != Validity::Invalid {
                dev = f64::INFINITY;
            }
        }
        self.push("7", "severity_worked_point", dev < v.severity_spot_tol, dev, v.severity_spot_tol, flags.join(", "), t);

        let t = Instant::now();
        let zs = {
            let mut z = cfg.analysis.z_grid.clone();
            if z.is_empty() {
                z = vec![0.25, 0.5, 1.0, 2.0, 3.0];
            }
            z
        };
        let law = StageLaw::fcfs(2.0, 1.0)?;
        // roughly one excursion above a = 1 per 4 s at (2, 1)
        let horizon = 4.2 * v.excursions as f64;
        let s = queue_sim::run(&QueueConfig::new(Discipline::FcfsMm12, 1.0, 100.0), &[2.0], horizon, cfg.analysis.seed)?;
        let ex = excursion_severity(&worst_of(&s.stage1_trace), 1.0)?;
        let emp: Vec<f64> = zs.iter().map(|&z| ex.severity_cdf(z)).collect();
        let rows = severity_rows("0", &SystemLaw::new(vec![law], ExponentMode::HomogeneousPower)?, 1.0, &zs, &emp)?;
        let path = self.run.write_csv("severity_report.csv", &SEVERITY_HEADER, &rows)?;
        let max_dev = rows
            .iter()
            .filter_map(|r| r[7].parse::<f64>().ok())
            .fold(0.0_f64, |m, d| m.max(d.abs()));
        self.push(
            "7",
            "severity_des_report",
            !rows.is_empty() && ex.exceedances.len() >= v.excursions,
            ex.exceedances.len() as f64,
            v.excursions as f64,
            format!("{} rows in {}; max |analytic - empirical| = {max_dev}", rows.len(), path.display()),
            t,
        );
        Ok(())
    }

    fn trend(&mut self, name: &str, criterion: &'static str, variable: SweepVariable, values: &[f64], discipline: Discipline) -> Result<(), CliError> {
        let t = Instant::now();
        let cfg = self.run.config;
        let mut base = cfg.scenario.clone();
        base.queue.discipline = discipline;
        let sweep = Sweep::new(
            SweepSpec {
                variable,
                values: values.to_vec(),
                replications: 1,
            },
            base,
        )?;
        let table = run_sweep(&sweep, &trend_options(cfg.analysis.seed, cfg));
        let avgs: Vec<Result<f64, String>> = table.cells.iter().map(|c| c.avg_corrected.clone()).collect();
        let mut violations = avgs.iter().filter(|a| a.is_err()).count();
        let ok: Vec<f64> = avgs.iter().filter_map(|a| a.as_ref().ok().copied()).collect();
        violations += ok.windows(2).filter(|w| w[1] > w[0]).count();
        let detail = values
            .iter()
            .zip(&avgs)
            .map(|(x, a)| match a {
                Ok(v) => format!("{x}: {v}"),
                Err(e) => format!("{x}: {e}"),
            })
            .collect::<Vec<_>>()
            .join("; ");
        let name = format!("{name}_{}", discipline.label());
        self.push(criterion, &name, violations == 0, violations as f64, 0.0, detail, t);
        Ok(())
    }

    fn determinism(&mut self) -> Result<(), CliError> {
        let t = Instant::now();
        let cfg = self.run.config;
        let values: Vec<f64> = cfg.validation.trend_users.iter().take(2).copied().collect();
        let sweep = Sweep::new(
            SweepSpec {
                variable: SweepVariable::NumUsers,
                values,
                replications: 2,
            },
            cfg.scenario.clone(),
        )?;
        let mut opts = trend_options(cfg.analysis.seed, cfg);
        opts.horizon = Some(cfg.analysis.horizon_s.min(100.0));
        let render = || -> Result<Vec<u8>, CliError> {
            let t = run_sweep(&sweep, &opts);
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(crate::sweep::HEADER)?;
            for r in crate::sweep::rows(&t, ComputeFormula::Corrected, PsiMode::AsWritten) {
                w.write_record(r)?;
            }
            w.into_inner().map_err(|e| CliError::Other(anyhow::anyhow!("{e}")))
        };
        let (a, b) = (render()?, render()?);
        self.push("9", "sweep_rows_byte_identical", a == b, a.len() as f64, b.len() as f64, "two in-process sweeps, same seed".into(), t);
        Ok(())
    }
}

fn trend_options(seed: u64, cfg: &crate::config::Config) -> SweepOptions {
    SweepOptions {
        ruin_level: cfg.analysis.ruin_level.unwrap_or(1.0),
        z: cfg.analysis.z.unwrap_or(1.0),
        lambda_mode: cfg.analysis.lambda_mode,
        exponent_mode: cfg.analysis.exponent_mode,
        horizon: None,
        seed,
    }
}

/// Runs every check; failures are recorded, never short-circuited.
pub fn run_suite(run: &Run<'_>) -> Result<Report, CliError> {
    let mut s = Suite { run, checks: Vec::new() };
    s.normalization()?;
    s.fcfs_agreement()?;
    s.lcfs_discrepancy()?;
    s.moments()?;
    s.ks()?;
    s.e2e()?;
    s.severity()?;
    let users = run.config.validation.trend_users.clone();
    let widths = run.config.validation.trend_bandwidths.clone();
    for d in [Discipline::FcfsMm12, Discipline::LcfsMm12Star] {
        s.trend("avg_e2e_nonincreasing_in_users", "8a", SweepVariable::NumUsers, &users, d)?;
        s.trend("avg_e2e_nonincreasing_in_bandwidth", "8b", SweepVariable::Bandwidth, &widths, d)?;
    }
    s.determinism()?;
    Ok(Report { checks: s.checks })
}

pub const REPORT_HEADER: [&str; 7] = ["criterion", "check", "passed", "measured", "tolerance", "elapsed_s", "detail"];

pub fn cmd_validate(run: &Run<'_>) -> Result<Report, CliError> {
    let report = run_suite(run)?;
    let rows: Vec<Vec<String>> = report
        .checks
        .iter()
        .map(|c| {
            vec![
                c.criterion.to_string(),
                c.name.clone(),
                c.passed.to_string(),
                num(c.measured),
                num(c.tolerance),
                num(c.elapsed_s),
                c.detail.clone(),
            ]
        })
        .collect();
    run.write_csv("validation_report.csv", &REPORT_HEADER, &rows)?;
    run.write_file(
        "validation_report.json",
        &serde_json::to_string_pretty(&report).map_err(anyhow::Error::from)?,
    )?;
    Ok(report)
}
