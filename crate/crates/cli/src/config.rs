use std::fs;
use std::path::Path;

use paoi_core::scenario::SweepSpec;
use paoi_core::{ComputeFormula, ExponentMode, LambdaMode, PsiMode, Scenario, StageLaw};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    pub scenario: Scenario,
    #[serde(default)]
    pub sweep: Option<SweepSpec>,
    pub analysis: Analysis,
    #[serde(default)]
    pub validation: Validation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Analysis {
    pub seed: u64,
    /// Severity ruin level `a` in seconds. Required here or via `--ruin-level`.
    #[serde(default)]
    pub ruin_level: Option<f64>,
    /// Severity threshold `z` in seconds. Required here or via `--z`.
    #[serde(default)]
    pub z: Option<f64>,
    #[serde(default)]
    pub z_grid: Vec<f64>,
    #[serde(default)]
    pub psi_mode: Option<PsiMode>,
    #[serde(default)]
    pub avg_mode: Option<ComputeFormula>,
    #[serde(default)]
    pub lambda_mode: LambdaMode,
    #[serde(default)]
    pub exponent_mode: ExponentMode,
    /// Simulated seconds per run.
    pub horizon_s: f64,
    #[serde(default = "one")]
    pub replications: usize,
    #[serde(default)]
    pub charts: bool,
    #[serde(default)]
    pub grid: AnalyticGrid,
}

fn one() -> usize {
    1
}

/// Points evaluated by `paoi analytic`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalyticGrid {
    /// `(r, μ)` stage pairs.
    #[serde(default)]
    pub stages: Vec<[f64; 2]>,
    #[serde(default)]
    pub ages: Vec<f64>,
    /// `(λ_C, μ_C)` compute-queue pairs.
    #[serde(default)]
    pub compute: Vec<[f64; 2]>,
}

/// Tolerances and budgets of the validation suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Validation {
    pub normalization_tol: f64,
    pub cdf_agreement_tol: f64,
    pub moment_tol: f64,
    pub spot_tol: f64,
    pub closed_form_spot_tol: f64,
    pub severity_spot_tol: f64,
    pub ks_max: f64,
    pub ks_deliveries: usize,
    pub e2e_rel_tol: f64,
    pub e2e_deliveries: usize,
    pub excursions: usize,
    pub normalization_budget_s: f64,
    pub ks_budget_s: f64,
    pub trend_users: Vec<f64>,
    pub trend_bandwidths: Vec<f64>,
}

impl Default for Validation {
    fn default() -> Self {
        Validation {
            normalization_tol: 1e-6,
            cdf_agreement_tol: 1e-6,
            moment_tol: 1e-6,
            spot_tol: 1e-4,
            closed_form_spot_tol: 1e-9,
            severity_spot_tol: 1e-2,
            ks_max: 0.01,
            ks_deliveries: 100_000,
            e2e_rel_tol: 0.02,
            e2e_deliveries: 1_000_000,
            excursions: 100_000,
            normalization_budget_s: 10.0,
            ks_budget_s: 60.0,
            trend_users: vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0],
            trend_bandwidths: vec![1.25e9, 2.5e9, 5e9, 10e9, 20e9, 40e9],
        }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub z: Option<f64>,
    pub ruin_level: Option<f64>,
    pub psi_mode: Option<PsiMode>,
    pub avg_mode: Option<ComputeFormula>,
    pub feed: Option<paoi_core::ComputeFeed>,
    pub replications: Option<usize>,
}

impl Config {
    pub fn load(path: &Path) -> Result<Config, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        Config::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Config, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Config = serde_path_to_error::deserialize(de).map_err(|e| {
            CliError::Config(format!("at `{}`: {}", e.path(), e.inner()))
        })?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), CliError> {
        if let Some(s) = o.seed {
            self.analysis.seed = s;
        }
        if let Some(z) = o.z {
            self.analysis.z = Some(z);
        }
        if let Some(a) = o.ruin_level {
            self.analysis.ruin_level = Some(a);
        }
        if let Some(m) = o.psi_mode {
            self.analysis.psi_mode = Some(m);
        }
        if let Some(m) = o.avg_mode {
            self.analysis.avg_mode = Some(m);
        }
        if let Some(f) = o.feed {
            self.scenario.queue.compute_feed = f;
        }
        if let Some(r) = o.replications {
            self.analysis.replications = r;
            if let Some(s) = self.sweep.as_mut() {
                s.replications = r;
            }
        }
        self.check()
    }

    fn check(&self) -> Result<(), CliError> {
        self.scenario
            .validate()
            .map_err(|e| CliError::Config(format!("scenario: {e}")))?;
        let a = &self.analysis;
        if !(a.horizon_s.is_finite() && a.horizon_s > 0.0) {
            return Err(CliError::Config("at `analysis.horizon_s`: must be > 0".into()));
        }
        if a.replications == 0 {
            return Err(CliError::Config("at `analysis.replications`: must be >= 1".into()));
        }
        for (name, v) in [("analysis.ruin_level", a.ruin_level), ("analysis.z", a.z)] {
            if let Some(v) = v {
                if !(v.is_finite() && v > 0.0) {
                    return Err(CliError::Config(format!("at `{name}`: must be > 0, got {v}")));
                }
            }
        }
        if let Some(i) = a.z_grid.iter().position(|z| !(z.is_finite() && *z > 0.0)) {
            return Err(CliError::Config(format!("at `analysis.z_grid[{i}]`: must be > 0")));
        }
        for (i, [r, mu]) in a.grid.stages.iter().enumerate() {
            StageLaw::fcfs(*r, *mu)
                .map_err(|e| CliError::Config(format!("at `analysis.grid.stages[{i}]`: {e}")))?;
        }
        if let Some(i) = a.grid.ages.iter().position(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(CliError::Config(format!("at `analysis.grid.ages[{i}]`: must be >= 0")));
        }
        Ok(())
    }

    pub fn ruin_level(&self) -> Result<f64, CliError> {
        self.analysis.ruin_level.ok_or_else(|| {
            CliError::Config("ruin level is required: set `analysis.ruin_level` or pass --ruin-level".into())
        })
    }

    pub fn z(&self) -> Result<f64, CliError> {
        self.analysis
            .z
            .ok_or_else(|| CliError::Config("threshold is required: set `analysis.z` or pass --z".into()))
    }

    pub fn psi_mode(&self) -> Result<PsiMode, CliError> {
        self.analysis
            .psi_mode
            .ok_or_else(|| CliError::Config("set `analysis.psi_mode` or pass --psi-mode".into()))
    }

    pub fn avg_mode(&self) -> Result<ComputeFormula, CliError> {
        self.analysis
            .avg_mode
            .ok_or_else(|| CliError::Config("set `analysis.avg_mode` or pass --avg-mode".into()))
    }

    /// The z grid, or just `z` when no grid is configured.
    pub fn z_grid(&self) -> Result<Vec<f64>, CliError> {
        if self.analysis.z_grid.is_empty() {
            Ok(vec![self.z()?])
        } else {
            Ok(self.analysis.z_grid.clone())
        }
    }
}
