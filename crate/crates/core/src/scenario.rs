//! Rooms, user placement, RIS association and parameter sweeps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::aoi_analytic::{
    avg_paoi_e2e, severity_cdf, ComputeFormula, ComputeQueueLaw, Discipline, ExponentMode,
    LambdaMode, PsiMode, SeverityOutcome, SeverityQuery, StageLaw, SystemLaw,
};
use crate::error::{Error, Result};
use crate::queue_sim::{self, worst_of, EmpiricalCdf, MeanEstimate, QueueConfig, Stage};
use crate::thz_link::{rate_bps, update_rate, LinkGeometry, LinkParams};

pub type Point = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Room {
    pub side_length: f64,
    pub ris_positions: Vec<Point>,
}

impl Default for Room {
    /// 50 m square with one RIS at the middle of each wall.
    fn default() -> Self {
        Room::square(50.0)
    }
}

impl Room {
    pub fn square(side: f64) -> Self {
        let h = side / 2.0;
        Room {
            side_length: side,
            ris_positions: vec![[h, 0.0], [side, h], [h, side], [0.0, h]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let l = self.side_length;
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::config("room.side_length", format!("must be > 0, got {l}")));
        }
        if self.ris_positions.is_empty() {
            return Err(Error::config("room.ris_positions", "at least one RIS is required"));
        }
        for (i, p) in self.ris_positions.iter().enumerate() {
            let inside = p.iter().all(|c| (0.0..=l).contains(c));
            let on_wall = p.iter().any(|c| *c == 0.0 || *c == l);
            if !(inside && on_wall) {
                return Err(Error::config(
                    format!("room.ris_positions[{i}]"),
                    format!("({}, {}) is not on the room boundary", p[0], p[1]),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub room: Room,
    pub num_users: usize,
    pub link: LinkParams,
    pub queue: QueueConfig,
    pub placement_seed: u64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.room.validate()?;
        self.link
            .validate()
            .map_err(|e| Error::config("link", e.to_string()))?;
        self.queue
            .validate()
            .map_err(|e| Error::config("queue", e.to_string()))?;
        Ok(())
    }
}

/// Users i.i.d. uniform over the open square.
pub fn place_users(scenario: &Scenario) -> Vec<Point> {
    let l = scenario.room.side_length;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.placement_seed);
    let mut coord = || loop {
        let x = rng.random_range(0.0..l);
        if x > 0.0 {
            return x;
        }
    };
    (0..scenario.num_users).map(|_| [coord(), coord()]).collect()
}

fn distance(a: Point, b: Point) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Nearest-RIS association; ties go to the lowest RIS index.
pub fn associate(users: &[Point], room: &Room) -> Result<Vec<LinkGeometry>> {
    if room.ris_positions.is_empty() {
        return Err(Error::domain("no RIS to associate with"));
    }
    users
        .iter()
        .map(|&u| {
            let d: Vec<f64> = room.ris_positions.iter().map(|&p| distance(u, p)).collect();
            let serving = d
                .iter()
                .enumerate()
                .fold(0, |best, (i, v)| if *v < d[best] { i } else { best });
            LinkGeometry::new(serving, d)
        })
        .collect()
}

/// Per-user update rate (updates/s).
pub fn realize_rates(scenario: &Scenario) -> Result<Vec<f64>> {
    scenario.validate()?;
    let users = place_users(scenario);
    associate(&users, &scenario.room)?
        .iter()
        .map(|g| update_rate(rate_bps(g, &scenario.link)?, &scenario.link))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SweepVariable {
    NumUsers,
    Bandwidth,
}

impl SweepVariable {
    pub fn label(self) -> &'static str {
        match self {
            SweepVariable::NumUsers => "num_users",
            SweepVariable::Bandwidth => "bandwidth_hz",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub replications: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub variable: SweepVariable,
    pub values: Vec<f64>,
    pub replications: usize,
    pub base: Scenario,
}

impl Sweep {
    pub fn new(spec: SweepSpec, base: Scenario) -> Result<Self> {
        if spec.values.is_empty() {
            return Err(Error::config("sweep.values", "must not be empty"));
        }
        if spec.values.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::config("sweep.values", "must be strictly increasing"));
        }
        if spec.replications == 0 {
            return Err(Error::config("sweep.replications", "must be >= 1"));
        }
        for (i, v) in spec.values.iter().enumerate() {
            let ok = match spec.variable {
                SweepVariable::NumUsers => *v >= 1.0 && v.fract() == 0.0,
                SweepVariable::Bandwidth => v.is_finite() && *v > 0.0,
            };
            if !ok {
                return Err(Error::config(format!("sweep.values[{i}]"), format!("invalid value {v}")));
            }
        }
        base.validate()?;
        Ok(Sweep {
            variable: spec.variable,
            values: spec.values,
            replications: spec.replications,
            base,
        })
    }

    /// Scenario for one sweep value and replication.
    pub fn cell_scenario(&self, value: f64, replication: usize) -> Scenario {
        let mut s = self.base.clone();
        match self.variable {
            SweepVariable::NumUsers => s.num_users = value as usize,
            SweepVariable::Bandwidth => s.link.bandwidth_hz = value,
        }
        s.placement_seed = mix(self.base.placement_seed, replication as u64);
        s
    }
}

/// SplitMix64 finaliser over a seed and an index.
pub fn mix(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepOptions {
    pub ruin_level: f64,
    pub z: f64,
    pub lambda_mode: LambdaMode,
    pub exponent_mode: ExponentMode,
    /// Simulated seconds per cell; `None` skips the simulator.
    pub horizon: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    /// Compute-queue mean PAoI plus the per-user stage means.
    pub avg_e2e: MeanEstimate,
    /// Empirical `P(max exceedance ≤ z)` of the worst-user AoI above the ruin level.
    pub severity: Option<f64>,
    pub excursions: usize,
    /// Largest per-user stage KS distance.
    pub ks_stage: Option<f64>,
    pub drops: u64,
    pub preemptions: u64,
    pub compute_arrival_rate: f64,
}

/// One (value, replication) cell. Failures are kept as messages.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub replication: usize,
    pub seed: u64,
    pub rates: Vec<f64>,
    pub avg_as_written: std::result::Result<f64, String>,
    pub avg_corrected: std::result::Result<f64, String>,
    pub severity_as_written: SeverityOutcome,
    pub severity_survival: SeverityOutcome,
    pub sim: std::result::Result<SimSummary, String>,
}

impl SweepCell {
    pub fn avg(&self, formula: ComputeFormula) -> &std::result::Result<f64, String> {
        match formula {
            ComputeFormula::AsWritten => &self.avg_as_written,
            ComputeFormula::Corrected => &self.avg_corrected,
        }
    }

    pub fn severity(&self, mode: PsiMode) -> &SeverityOutcome {
        match mode {
            PsiMode::AsWritten => &self.severity_as_written,
            PsiMode::Survival => &self.severity_survival,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub variable: SweepVariable,
    pub discipline: Discipline,
    pub options: SweepOptions,
    pub cells: Vec<SweepCell>,
}

fn average(stages: &[StageLaw], mu_c: f64, opts: &SweepOptions, f: ComputeFormula) -> std::result::Result<f64, String> {
    let law = ComputeQueueLaw::from_stages(stages, mu_c, opts.lambda_mode, f).map_err(|e| e.to_string())?;
    avg_paoi_e2e(stages, &law).map(|a| a.value).map_err(|e| e.to_string())
}

fn severity(sys: &std::result::Result<SystemLaw, String>, opts: &SweepOptions, mode: PsiMode) -> SeverityOutcome {
    let run = || -> Result<SeverityOutcome> {
        let sys = sys.as_ref().map_err(|e| Error::NotComputable(e.clone()))?;
        severity_cdf(sys, &SeverityQuery::new(opts.ruin_level, opts.z, mode)?)
    };
    run().unwrap_or_else(|e| SeverityOutcome::NotComputable(e.to_string()))
}

/// Largest per-user KS distance between stage samples and the stage law.
pub fn max_stage_ks(samples: &queue_sim::PaoiSamples, stages: &[StageLaw]) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for (u, law) in stages.iter().enumerate() {
        let ecdf = match queue_sim::empirical_cdf(samples, u, Stage::Stage1) {
            Ok(e) => e,
            Err(Error::Empty(_)) => continue,
            Err(e) => return Err(e),
        };
        worst = worst.max(stage_ks(&ecdf, law)?);
    }
    Ok(worst)
}

/// KS distance against the canonical stage CDF.
pub fn stage_ks(ecdf: &EmpiricalCdf, law: &StageLaw) -> Result<f64> {
    match law.discipline {
        Discipline::FcfsMm12 => {
            let values = ecdf
                .sorted()
                .iter()
                .map(|&a| law.cdf_closed_form(a).map(|c| c.value))
                .collect::<Result<Vec<_>>>()?;
            ecdf.ks_distance_values(&values)
        }
        Discipline::LcfsMm12Star => ecdf.ks_distance_values(&law.cdf_quadrature_sorted(ecdf.sorted())?),
    }
}

fn simulate(scenario: &Scenario, rates: &[f64], stages: &[StageLaw], opts: &SweepOptions, horizon: f64, seed: u64) -> Result<SimSummary> {
    let s = queue_sim::run(&scenario.queue, rates, horizon, seed)?;
    let avg_e2e = queue_sim::estimate_additive_e2e(&s)?;
    let (severity, excursions) = match queue_sim::excursion_severity(&worst_of(&s.stage1_trace), opts.ruin_level) {
        Ok(ex) => (Some(ex.severity_cdf(opts.z)), ex.exceedances.len()),
        Err(Error::Empty(_)) => (None, 0),
        Err(e) => return Err(e),
    };
    Ok(SimSummary {
        avg_e2e,
        severity,
        excursions,
        ks_stage: Some(max_stage_ks(&s, stages)?),
        drops: s.total_drops(),
        preemptions: s.total_preemptions(),
        compute_arrival_rate: s.compute_arrival_rate(),
    })
}

fn run_cell(sweep: &Sweep, opts: &SweepOptions, vi: usize, replication: usize) -> SweepCell {
    let value = sweep.values[vi];
    let scenario = sweep.cell_scenario(value, replication);
    let seed = mix(mix(opts.seed, vi as u64), replication as u64);
    let rates = realize_rates(&scenario);
    let (rates, stages) = match rates.and_then(|r| {
        let st = r
            .iter()
            .map(|&x| StageLaw::new(x, scenario.queue.stage_service_rate, scenario.queue.discipline))
            .collect::<Result<Vec<_>>>()?;
        Ok((r, st))
    }) {
        Ok(v) => v,
        Err(e) => {
            let msg = e.to_string();
            return SweepCell {
                value,
                replication,
                seed,
                rates: Vec::new(),
                avg_as_written: Err(msg.clone()),
                avg_corrected: Err(msg.clone()),
                severity_as_written: SeverityOutcome::NotComputable(msg.clone()),
                severity_survival: SeverityOutcome::NotComputable(msg.clone()),
                sim: Err(msg),
            };
        }
    };
    let mu_c = scenario.queue.compute_service_rate;
    let sys = SystemLaw::new(stages.clone(), opts.exponent_mode).map_err(|e| e.to_string());
    let sim = match opts.horizon {
        Some(h) => simulate(&scenario, &rates, &stages, opts, h, seed).map_err(|e| e.to_string()),
        None => Err("simulation disabled".to_string()),
    };
    SweepCell {
        value,
        replication,
        seed,
        avg_as_written: average(&stages, mu_c, opts, ComputeFormula::AsWritten),
        avg_corrected: average(&stages, mu_c, opts, ComputeFormula::Corrected),
        severity_as_written: severity(&sys, opts, PsiMode::AsWritten),
        severity_survival: severity(&sys, opts, PsiMode::Survival),
        sim,
        rates,
    }
}

/// Evaluates every (value, replication) cell in parallel; rows come back in
/// value-major order regardless of scheduling.
pub fn run_sweep(sweep: &Sweep, opts: &SweepOptions) -> SweepTable {
    let jobs: Vec<(usize, usize)> = (0..sweep.values.len())
        .flat_map(|v| (0..sweep.replications).map(move |r| (v, r)))
        .collect();
    let cells = jobs
        .par_iter()
        .map(|&(v, r)| run_cell(sweep, opts, v, r))
        .collect();
    SweepTable {
        variable: sweep.variable,
        discipline: sweep.base.queue.discipline,
        options: *opts,
        cells,
    }
}

/// Mean and 95% Student-t half-width; the half-width is `None` for fewer than two values.
pub fn mean_half_width(values: &[f64]) -> Option<(f64, Option<f64>)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return Some((mean, None));
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Some((mean, Some(t975(values.len() - 1) * (var / n).sqrt())))
}

/// Two-sided 95% Student-t quantile.
pub fn t975(df: usize) -> f64 {
    StudentsT::new(0.0, 1.0, df as f64)
        .expect("df >= 1")
        .inverse_cdf(0.975)
}
