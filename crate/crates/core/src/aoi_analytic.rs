//! Closed-form peak-AoI laws for the per-user stage queues and the compute queue.
//!
//! A stage is an M/M/1/2 queue fed by Poisson updates at rate `r` and served at
//! rate `μ`, either FCFS (arrivals to a full buffer are dropped) or LCFS with
//! preemption in waiting (M/M/1/2*: a new arrival replaces the waiting update).
//!
//! All closed forms contain `(r − μ)` denominators. They are evaluated through the
//! cancellation-free kernels [`gap1`] and [`gap2`]; when `|r − μ| < 1e-6·μ` the
//! kernels switch to their second-order expansion around `r = μ`.
//!
//! The LCFS closed-form CDF is kept exactly as printed and is always reported as
//! [`Validity::Invalid`]: it is not the antiderivative of the LCFS density (its
//! value at `a = 0` is `μ(2 − r − μ)/(r + μ)`). The canonical LCFS CDF integrates
//! the density numerically.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_with_breaks, QuadOptions};

/// Relative width of the removable singularity band around `r = μ`.
pub const SINGULAR_BAND: f64 = 1e-6;

/// Survival mass left beyond the quadrature upper limit.
pub const TAIL_MASS: f64 = 1e-12;

/// Absolute tolerance of the CDF quadrature.
pub const QUAD_ABS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Discipline {
    /// M/M/1/2, first come first served; arrivals to a full buffer are dropped.
    #[serde(rename = "fcfs")]
    FcfsMm12,
    /// M/M/1/2*, a new arrival replaces the waiting update; service is never preempted.
    #[serde(rename = "lcfs")]
    LcfsMm12Star,
}

impl Discipline {
    pub fn label(self) -> &'static str {
        match self {
            Discipline::FcfsMm12 => "fcfs",
            Discipline::LcfsMm12Star => "lcfs",
        }
    }
}

impl std::fmt::Display for Discipline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Discipline {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fcfs" => Ok(Discipline::FcfsMm12),
            "lcfs" => Ok(Discipline::LcfsMm12Star),
            other => Err(Error::domain(format!("unknown discipline `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Validity {
    Valid,
    Invalid,
}

impl Validity {
    pub fn label(self) -> &'static str {
        match self {
            Validity::Valid => "VALID",
            Validity::Invalid => "INVALID",
        }
    }

    pub fn and(self, other: Validity) -> Validity {
        if self == Validity::Valid && other == Validity::Valid {
            Validity::Valid
        } else {
            Validity::Invalid
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CdfSource {
    /// The printed closed-form CDF.
    ClosedForm,
    /// Adaptive quadrature of the density.
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfValue {
    pub value: f64,
    pub validity: Validity,
}

/// PAoI law of one user stage.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageLaw {
    pub update_rate: f64,
    pub service_rate: f64,
    pub discipline: Discipline,
}

impl StageLaw {
    pub fn new(update_rate: f64, service_rate: f64, discipline: Discipline) -> Result<Self> {
        for (name, v) in [("update_rate", update_rate), ("service_rate", service_rate)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(StageLaw {
            update_rate,
            service_rate,
            discipline,
        })
    }

    pub fn fcfs(r: f64, mu: f64) -> Result<Self> {
        StageLaw::new(r, mu, Discipline::FcfsMm12)
    }

    pub fn lcfs(r: f64, mu: f64) -> Result<Self> {
        StageLaw::new(r, mu, Discipline::LcfsMm12Star)
    }

    pub fn is_near_singular(&self) -> bool {
        (self.update_rate - self.service_rate).abs() < SINGULAR_BAND * self.service_rate
    }

    /// Probability that the stage is empty, `μ / (r + μ)`, as used to weight the
    /// two conditional densities.
    pub fn empty_weight(&self) -> f64 {
        self.service_rate / (self.update_rate + self.service_rate)
    }

    /// Stationary departure rate of the capacity-2 stage, `μ (1 − π0)` with
    /// `π0 = 1 / (1 + ρ + ρ²)`. Both disciplines share this occupancy process.
    pub fn throughput(&self) -> f64 {
        let rho = self.update_rate / self.service_rate;
        let busy = (rho + rho * rho) / (1.0 + rho + rho * rho);
        self.service_rate * busy
    }

    fn kernels(&self) -> Kernels {
        Kernels {
            r: self.update_rate,
            mu: self.service_rate,
            singular: self.is_near_singular(),
        }
    }

    pub fn pdf(&self, a: f64) -> Result<f64> {
        check_age(a)?;
        let k = self.kernels();
        Ok(match self.discipline {
            Discipline::FcfsMm12 => k.fcfs_pdf(a),
            Discipline::LcfsMm12Star => k.lcfs_pdf(a),
        })
    }

    /// Upper quadrature limit: smallest doubling of `1/r + 1/μ` at which the FCFS
    /// survival at the same rates is below [`TAIL_MASS`].
    pub fn quadrature_limit(&self) -> f64 {
        let k = self.kernels();
        let mut a = 1.0 / self.update_rate + 1.0 / self.service_rate;
        while k.fcfs_survival(a) >= TAIL_MASS {
            a *= 2.0;
        }
        a
    }

    fn quad_breaks(&self, hi: f64) -> Vec<f64> {
        let (r, mu) = (self.update_rate, self.service_rate);
        // doubling ladders over each time scale, so no panel straddles a fast tail
        let mut pts = vec![0.0];
        for scale in [1.0 / (r + mu), 1.0 / r, 1.0 / mu] {
            pts.extend((0..7).map(|k| scale * f64::from(1u32 << k)));
        }
        pts.retain(|p| *p < hi);
        pts.push(hi);
        pts.sort_by(f64::total_cmp);
        pts.dedup();
        pts
    }

    /// `∫₀^min(a, A_max) pdf`.
    pub fn cdf_quadrature(&self, a: f64) -> Result<f64> {
        check_age(a)?;
        let hi = a.min(self.quadrature_limit());
        if hi == 0.0 {
            return Ok(0.0);
        }
        let k = self.kernels();
        let opts = QuadOptions {
            abs_tol: QUAD_ABS_TOL,
            rel_tol: 0.0,
            max_intervals: 4000,
        };
        let res = match self.discipline {
            Discipline::FcfsMm12 => integrate_with_breaks(|x| k.fcfs_pdf(x), &self.quad_breaks(hi), opts)?,
            Discipline::LcfsMm12Star => integrate_with_breaks(|x| k.lcfs_pdf(x), &self.quad_breaks(hi), opts)?,
        };
        Ok(res.value)
    }

    /// `∫₀^A_max g(a)·pdf(a) da` with the same subdivision as the CDF.
    pub fn expect<G: Fn(f64) -> f64>(&self, g: G) -> Result<f64> {
        let hi = self.quadrature_limit();
        let k = self.kernels();
        let opts = QuadOptions {
            abs_tol: QUAD_ABS_TOL,
            rel_tol: 0.0,
            max_intervals: 4000,
        };
        let breaks = self.quad_breaks(hi);
        let res = match self.discipline {
            Discipline::FcfsMm12 => integrate_with_breaks(|x| g(x) * k.fcfs_pdf(x), &breaks, opts)?,
            Discipline::LcfsMm12Star => integrate_with_breaks(|x| g(x) * k.lcfs_pdf(x), &breaks, opts)?,
        };
        Ok(res.value)
    }

    /// Quadrature CDF at each of a sorted list of ages, accumulated piecewise.
    pub fn cdf_quadrature_sorted(&self, ages: &[f64]) -> Result<Vec<f64>> {
        if ages.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(Error::domain("ages must be sorted ascending"));
        }
        let limit = self.quadrature_limit();
        let k = self.kernels();
        let opts = QuadOptions {
            abs_tol: 1e-13,
            rel_tol: 1e-12,
            max_intervals: 4000,
        };
        let mut out = Vec::with_capacity(ages.len());
        let mut acc = 0.0;
        let mut prev = 0.0;
        for &a in ages {
            check_age(a)?;
            let hi = a.min(limit);
            if hi > prev {
                let mut breaks: Vec<f64> = self
                    .quad_breaks(hi)
                    .into_iter()
                    .filter(|p| *p > prev)
                    .collect();
                breaks.insert(0, prev);
                let piece = match self.discipline {
                    Discipline::FcfsMm12 => integrate_with_breaks(|x| k.fcfs_pdf(x), &breaks, opts)?,
                    Discipline::LcfsMm12Star => integrate_with_breaks(|x| k.lcfs_pdf(x), &breaks, opts)?,
                };
                acc += piece.value;
                prev = hi;
            }
            out.push(acc);
        }
        Ok(out)
    }

    /// Printed closed-form CDF with its validity flag.
    pub fn cdf_closed_form(&self, a: f64) -> Result<CdfValue> {
        check_age(a)?;
        let k = self.kernels();
        Ok(match self.discipline {
            Discipline::FcfsMm12 => {
                let value = 1.0 - k.fcfs_survival(a);
                let validity = if (0.0..=1.0).contains(&value) {
                    Validity::Valid
                } else {
                    Validity::Invalid
                };
                CdfValue { value, validity }
            }
            Discipline::LcfsMm12Star => CdfValue {
                value: k.lcfs_cdf_as_printed(a),
                validity: Validity::Invalid,
            },
        })
    }

    pub fn cdf(&self, a: f64, source: CdfSource) -> Result<CdfValue> {
        match source {
            CdfSource::ClosedForm => self.cdf_closed_form(a),
            CdfSource::Quadrature => {
                let value = self.cdf_quadrature(a)?;
                let validity = if (-QUAD_ABS_TOL..=1.0 + QUAD_ABS_TOL).contains(&value) {
                    Validity::Valid
                } else {
                    Validity::Invalid
                };
                Ok(CdfValue { value, validity })
            }
        }
    }

    /// The CDF source that yields a valid distribution for this discipline.
    pub fn canonical_source(&self) -> CdfSource {
        match self.discipline {
            Discipline::FcfsMm12 => CdfSource::ClosedForm,
            Discipline::LcfsMm12Star => CdfSource::Quadrature,
        }
    }

    pub fn cdf_canonical(&self, a: f64) -> Result<CdfValue> {
        self.cdf(a, self.canonical_source())
    }

    /// `closed form − quadrature` at `a`.
    pub fn cdf_discrepancy(&self, a: f64) -> Result<f64> {
        Ok(self.cdf_closed_form(a)?.value - self.cdf_quadrature(a)?)
    }

    /// Mean stage PAoI.
    pub fn mean(&self) -> f64 {
        let (r, mu) = (self.update_rate, self.service_rate);
        match self.discipline {
            Discipline::FcfsMm12 => 1.0 / r + 3.0 / mu - 2.0 / (r + mu),
            Discipline::LcfsMm12Star => {
                1.0 / r + 1.0 / mu + r / ((r + mu) * (r + mu)) + r / (mu * (r + mu))
            }
        }
    }
}

fn check_age(a: f64) -> Result<()> {
    if a.is_nan() || a < 0.0 {
        Err(Error::domain(format!("age must be >= 0, got {a}")))
    } else {
        Ok(())
    }
}

/// `(e^{−μa} − e^{−ra}) / (r − μ)`.
pub fn gap1(r: f64, mu: f64, a: f64) -> f64 {
    Kernels {
        r,
        mu,
        singular: (r - mu).abs() < SINGULAR_BAND * mu,
    }
    .gap1(a)
}

/// `(e^{−ra} − e^{−μa} + (r − μ) a e^{−μa}) / (r − μ)²`.
pub fn gap2(r: f64, mu: f64, a: f64) -> f64 {
    Kernels {
        r,
        mu,
        singular: (r - mu).abs() < SINGULAR_BAND * mu,
    }
    .gap2(a)
}

#[derive(Debug, Clone, Copy)]
struct Kernels {
    r: f64,
    mu: f64,
    singular: bool,
}

impl Kernels {
    fn gap1(&self, a: f64) -> f64 {
        let d = self.r - self.mu;
        let x = d * a;
        let em = (-self.mu * a).exp();
        if self.singular {
            em * a * (1.0 - x / 2.0 + x * x / 6.0)
        } else if x == 0.0 {
            em * a
        } else if x.abs() <= 1.0 {
            em * a * (-(-x).exp_m1() / x)
        } else {
            (em - (-self.r * a).exp()) / d
        }
    }

    fn gap2(&self, a: f64) -> f64 {
        let d = self.r - self.mu;
        let x = d * a;
        let em = (-self.mu * a).exp();
        if self.singular {
            em * a * a * (0.5 - x / 6.0 + x * x / 24.0)
        } else if x.abs() < 0.1 {
            // Σ (−x)^k / (k+2)!
            let mut term = 0.5;
            let mut sum = term;
            for k in 1..10 {
                term *= -x / (k as f64 + 2.0);
                sum += term;
            }
            em * a * a * sum
        } else if x.abs() <= 1.0 {
            em * ((-x).exp_m1() + x) / (d * d)
        } else {
            ((-self.r * a).exp() - em + x * em) / (d * d)
        }
    }

    fn fcfs_pdf(&self, a: f64) -> f64 {
        let (r, mu) = (self.r, self.mu);
        let mu3 = mu * mu * mu;
        let w = r / (r + mu);
        mu3 * w * self.gap2(a) + 0.5 * a * a * mu3 * (-mu * a).exp() * w
    }

    /// `1 − φ_F(a)`, all terms non-negative.
    fn fcfs_survival(&self, a: f64) -> f64 {
        let (r, mu) = (self.r, self.mu);
        let em = (-mu * a).exp();
        let mu3 = mu * mu * mu;
        em * (1.0 + mu * a) + em * r * mu * mu * a * a / (2.0 * (r + mu)) + mu3 / (r + mu) * self.gap2(a)
    }

    fn lcfs_pdf(&self, a: f64) -> f64 {
        let (r, mu) = (self.r, self.mu);
        let s = r + mu;
        let es = (-s * a).exp();
        let er = (-r * a).exp();
        let em = (-mu * a).exp();
        // Density conditioned on an empty system at the previous departure.
        let empty = r * s * a * es + (r * r + 2.0 * r * mu + 2.0 * mu * mu) / mu * (es - er)
            + mu * (r + 2.0 * mu) * self.gap1(a);
        // Conditioned on a busy system.
        let busy = mu * mu / (r * r)
            * (es * (3.0 * mu + 2.0 * r + r * s * a) - em * (3.0 * mu + 2.0 * r - r * (r + 2.0 * mu) * a));
        empty * mu / s + busy * r / s
    }

    fn lcfs_cdf_as_printed(&self, a: f64) -> f64 {
        let (r, mu) = (self.r, self.mu);
        let d = r - mu;
        let s = r + mu;
        let den = r * s;
        // (r³ − 3μ³ + rμ(r+μ)(1 + (r−μ))) / (r − μ), expanded in d = r − μ.
        let p1 = 2.0 * mu * mu * mu + 6.0 * mu * mu + (3.0 * mu * mu + 4.0 * mu) * d + (mu + 1.0) * d * d;
        let es = (-s * a).exp();
        let er = (-r * a).exp();
        let em = (-mu * a).exp();
        1.0 - p1 / den * es + (r * r + 2.0 * r * mu + 3.0 * mu * mu) / den * er
            - 3.0 * mu * mu * mu / den * self.gap1(a)
            - (d + mu * a * (r + 2.0 * mu)) / s * em
    }
}

/// Stage PAoI density.
pub fn pdf_paoi(law: &StageLaw, a: f64) -> Result<f64> {
    law.pdf(a)
}

/// Stage PAoI CDF from the requested source.
pub fn cdf_paoi(law: &StageLaw, a: f64, source: CdfSource) -> Result<CdfValue> {
    law.cdf(a, source)
}

/// How per-stage CDFs combine into the CDF at the end of all stages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExponentMode {
    /// `φ₁(a)^U`, i.i.d. stages.
    HomogeneousPower,
    /// `Π_u φ_u(a)`.
    #[default]
    HeterogeneousProduct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SystemLaw {
    pub stages: Vec<StageLaw>,
    pub exponent_mode: ExponentMode,
    /// `None` picks each stage's canonical source.
    pub cdf_source: Option<CdfSource>,
}

impl SystemLaw {
    pub fn new(stages: Vec<StageLaw>, exponent_mode: ExponentMode) -> Result<Self> {
        if stages.is_empty() {
            return Err(Error::domain("system needs at least one stage"));
        }
        Ok(SystemLaw {
            stages,
            exponent_mode,
            cdf_source: None,
        })
    }

    pub fn with_source(mut self, source: CdfSource) -> Self {
        self.cdf_source = Some(source);
        self
    }

    fn stage_cdf(&self, stage: &StageLaw, a: f64) -> Result<CdfValue> {
        stage.cdf(a, self.cdf_source.unwrap_or_else(|| stage.canonical_source()))
    }

    pub fn cdf(&self, a: f64) -> Result<CdfValue> {
        match self.exponent_mode {
            ExponentMode::HomogeneousPower => {
                let first = self.stage_cdf(&self.stages[0], a)?;
                Ok(CdfValue {
                    value: first.value.powi(self.stages.len() as i32),
                    validity: first.validity,
                })
            }
            ExponentMode::HeterogeneousProduct => {
                self.stages.iter().try_fold(
                    CdfValue {
                        value: 1.0,
                        validity: Validity::Valid,
                    },
                    |acc, s| {
                        let c = self.stage_cdf(s, a)?;
                        Ok(CdfValue {
                            value: acc.value * c.value,
                            validity: acc.validity.and(c.validity),
                        })
                    },
                )
            }
        }
    }
}

/// CDF at the end of all stages.
pub fn system_cdf(sys: &SystemLaw, a: f64) -> Result<CdfValue> {
    sys.cdf(a)
}

/// Reading of `Ψ` in the maximum-severity formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PsiMode {
    /// `Ψ` is the system PAoI CDF.
    AsWritten,
    /// `Ψ` is the survival function `1 − CDF`.
    Survival,
}

impl PsiMode {
    pub fn label(self) -> &'static str {
        match self {
            PsiMode::AsWritten => "as-written",
            PsiMode::Survival => "survival",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SeverityQuery {
    pub ruin_level: f64,
    pub threshold: f64,
    pub psi_mode: PsiMode,
}

impl SeverityQuery {
    pub fn new(ruin_level: f64, threshold: f64, psi_mode: PsiMode) -> Result<Self> {
        for (name, v) in [("ruin_level", ruin_level), ("threshold", threshold)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(SeverityQuery {
            ruin_level,
            threshold,
            psi_mode,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum SeverityOutcome {
    /// Formula value, never clamped.
    Computed { value: f64, validity: Validity },
    NotComputable(String),
}

impl SeverityOutcome {
    pub fn value(&self) -> Option<f64> {
        match self {
            SeverityOutcome::Computed { value, .. } => Some(*value),
            SeverityOutcome::NotComputable(_) => None,
        }
    }

    pub fn validity(&self) -> Validity {
        match self {
            SeverityOutcome::Computed { validity, .. } => *validity,
            SeverityOutcome::NotComputable(_) => Validity::Invalid,
        }
    }
}

fn psi(sys: &SystemLaw, x: f64, mode: PsiMode) -> Result<CdfValue> {
    let c = sys.cdf(x)?;
    Ok(match mode {
        PsiMode::AsWritten => c,
        PsiMode::Survival => CdfValue {
            value: 1.0 - c.value,
            validity: c.validity,
        },
    })
}

fn severity_from(psi_a: CdfValue, psi_az: CdfValue, psi_z: CdfValue) -> SeverityOutcome {
    if psi_a.value == 0.0 {
        return SeverityOutcome::NotComputable("Ψ(a) = 0".into());
    }
    let tail = 1.0 - psi_z.value;
    if tail == 0.0 {
        return SeverityOutcome::NotComputable("1 − Ψ(z) = 0".into());
    }
    let value = (psi_a.value - psi_az.value) / (psi_a.value * tail);
    let in_range = value.is_finite() && (0.0..=1.0).contains(&value);
    let validity = psi_a
        .validity
        .and(psi_az.validity)
        .and(psi_z.validity)
        .and(if in_range { Validity::Valid } else { Validity::Invalid });
    SeverityOutcome::Computed { value, validity }
}

/// `J(z) = [Ψ(a) − Ψ(a+z)] / [Ψ(a) (1 − Ψ(z))]`.
pub fn severity_cdf(sys: &SystemLaw, q: &SeverityQuery) -> Result<SeverityOutcome> {
    let a = q.ruin_level;
    let z = q.threshold;
    Ok(severity_from(
        psi(sys, a, q.psi_mode)?,
        psi(sys, a + z, q.psi_mode)?,
        psi(sys, z, q.psi_mode)?,
    ))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeverityCurve {
    pub ruin_level: f64,
    pub psi_mode: PsiMode,
    pub thresholds: Vec<f64>,
    pub points: Vec<SeverityOutcome>,
    /// Invalid if any point is invalid or the computed values decrease along the grid.
    pub validity: Validity,
}

/// Severity CDF over a grid of thresholds, sharing `Ψ(a)`.
pub fn severity_curve(
    sys: &SystemLaw,
    ruin_level: f64,
    thresholds: &[f64],
    psi_mode: PsiMode,
) -> Result<SeverityCurve> {
    let psi_a = psi(sys, ruin_level, psi_mode)?;
    let mut points = Vec::with_capacity(thresholds.len());
    for &z in thresholds {
        SeverityQuery::new(ruin_level, z, psi_mode)?;
        points.push(severity_from(
            psi_a,
            psi(sys, ruin_level + z, psi_mode)?,
            psi(sys, z, psi_mode)?,
        ));
    }
    let mut validity = points
        .iter()
        .fold(Validity::Valid, |v, p| v.and(p.validity()));
    let mut order: Vec<usize> = (0..thresholds.len()).collect();
    order.sort_by(|&i, &j| thresholds[i].total_cmp(&thresholds[j]));
    let values: Vec<f64> = order.iter().filter_map(|&i| points[i].value()).collect();
    if values.windows(2).any(|w| w[1] < w[0]) {
        validity = Validity::Invalid;
    }
    Ok(SeverityCurve {
        ruin_level,
        psi_mode,
        thresholds: thresholds.to_vec(),
        points,
        validity,
    })
}

/// Mean stage PAoI.
pub fn avg_paoi_stage(law: &StageLaw) -> f64 {
    law.mean()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComputeFormula {
    /// `1/λ + 1/μ + λ(μ + μ²) / (2(1 − ρ))`, returned verbatim.
    AsWritten,
    /// M/M/1 mean PAoI, `1/λ + 1/(μ − λ)`.
    Corrected,
}

impl ComputeFormula {
    pub fn label(self) -> &'static str {
        match self {
            ComputeFormula::AsWritten => "as-written",
            ComputeFormula::Corrected => "corrected",
        }
    }
}

/// Arrival rate assumed for the shared compute queue.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LambdaMode {
    /// `Σ_u μ_u`.
    #[default]
    SumServiceRates,
    /// `Σ_u` stationary stage departure rate.
    EffectiveThroughput,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputeQueueLaw {
    pub arrival_rate: f64,
    pub service_rate: f64,
    pub formula: ComputeFormula,
}

impl ComputeQueueLaw {
    pub fn new(arrival_rate: f64, service_rate: f64, formula: ComputeFormula) -> Result<Self> {
        for (name, v) in [("arrival_rate", arrival_rate), ("service_rate", service_rate)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        Ok(ComputeQueueLaw {
            arrival_rate,
            service_rate,
            formula,
        })
    }

    pub fn from_stages(
        stages: &[StageLaw],
        service_rate: f64,
        lambda: LambdaMode,
        formula: ComputeFormula,
    ) -> Result<Self> {
        let arrival_rate = match lambda {
            LambdaMode::SumServiceRates => stages.iter().map(|s| s.service_rate).sum(),
            LambdaMode::EffectiveThroughput => stages.iter().map(StageLaw::throughput).sum(),
        };
        ComputeQueueLaw::new(arrival_rate, service_rate, formula)
    }

    pub fn load(&self) -> f64 {
        self.arrival_rate / self.service_rate
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComputeAverage {
    pub value: f64,
    /// The as-written third term has units of rate², not time.
    pub dimensional_anomaly: bool,
}

pub fn avg_paoi_compute(law: &ComputeQueueLaw) -> Result<ComputeAverage> {
    let (lambda, mu) = (law.arrival_rate, law.service_rate);
    let rho = law.load();
    match law.formula {
        ComputeFormula::Corrected => {
            if rho >= 1.0 {
                return Err(Error::Unstable {
                    rho,
                    lambda_c: lambda,
                    mu_c: mu,
                });
            }
            Ok(ComputeAverage {
                value: 1.0 / lambda + 1.0 / (mu - lambda),
                dimensional_anomaly: false,
            })
        }
        ComputeFormula::AsWritten => {
            let value = 1.0 / lambda + 1.0 / mu + lambda * (mu + mu * mu) / (2.0 * (1.0 - rho));
            if !value.is_finite() {
                return Err(Error::NotComputable(format!(
                    "as-written compute PAoI is not finite at rho = {rho}"
                )));
            }
            Ok(ComputeAverage {
                value,
                dimensional_anomaly: true,
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct E2eAverage {
    pub value: f64,
    pub compute: f64,
    pub stage_sum: f64,
    pub dimensional_anomaly: bool,
}

/// Compute-queue average plus the sum of the per-user stage averages.
pub fn avg_paoi_e2e(stages: &[StageLaw], compute: &ComputeQueueLaw) -> Result<E2eAverage> {
    let c = avg_paoi_compute(compute)?;
    let stage_sum: f64 = stages.iter().map(StageLaw::mean).sum();
    Ok(E2eAverage {
        value: c.value + stage_sum,
        compute: c.value,
        stage_sum,
        dimensional_anomaly: c.dimensional_anomaly,
    })
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use crate::quadrature::integrate_with_breaks;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    // (r, μ, a, fcfs pdf, fcfs cdf, lcfs pdf, lcfs cdf by quadrature, lcfs cdf as printed)
    // 50-digit mpmath evaluation of the printed formulas.
    const FROZEN: [(f64, f64, f64, f64, f64, f64, f64, f64); 10] = [
        (2.0, 1.0, 0.5, 0.093620295852803192, 0.018121751683288543, 0.12745245185104266, 0.023598559676323398, 0.3163872527438641),
        (2.0, 1.0, 1.0, 0.21285000254822257, 0.096502876187763686, 0.29365751941195049, 0.1323938838573952, 0.37764684463835675),
        (2.0, 1.0, 3.0, 0.21739646437852133, 0.61747289178748765, 0.19754464039682693, 0.7313583983358842, 0.76479659685596685),
        (0.5, 1.0, 1.0, 0.13426190413586698, 0.057030549580621793, 0.14063445613384454, 0.059251079262015534, 0.54975700082393863),
        (0.5, 1.0, 4.0, 0.15602619246383802, 0.64521112433194422, 0.15472304038357562, 0.66636161436970698, 0.69821872275135163),
        (10.0, 1.0, 0.7, 0.1401520689764371, 0.042246995306045746, 0.33395086639282675, 0.1228983875973677, 0.21305077649548521),
        (10.0, 5.0, 0.2, 1.0642500127411129, 0.096502876187763697, 1.4682875970597525, 0.13239388385739521, 0.17849857116690101),
        (10000.0, 1.0, 2.0, 0.27067056782644288, 0.3233506454605785, 0.27068409864873754, 0.59396708593954362, 0.59399415028975592),
        (10000.0, 5.0, 0.3, 1.2553163701369232, 0.19127853380710406, 1.6737549748451217, 0.44200733555713431, 0.44223035420795733),
        (1.5, 5.0, 0.4, 0.83980110023085499, 0.17987243977568768, 0.85732431029920519, 0.18340276665133781, 0.1687901600646634),
    ];

    #[test]
    fn frozen_values() {
        for &(r, mu, a, ff, cf, fl, cl, cl8) in &FROZEN {
            let f = StageLaw::fcfs(r, mu).unwrap();
            let l = StageLaw::lcfs(r, mu).unwrap();
            assert_relative_eq!(f.pdf(a).unwrap(), ff, max_relative = 1e-12);
            assert_relative_eq!(f.cdf_closed_form(a).unwrap().value, cf, max_relative = 1e-12);
            assert_relative_eq!(f.cdf_quadrature(a).unwrap(), cf, epsilon = 1e-9);
            assert_relative_eq!(l.pdf(a).unwrap(), fl, max_relative = 1e-10);
            assert_relative_eq!(l.cdf_quadrature(a).unwrap(), cl, epsilon = 1e-9);
            assert_relative_eq!(l.cdf_closed_form(a).unwrap().value, cl8, max_relative = 1e-12);
        }
    }

    #[test]
    fn near_singular_values() {
        // mpmath at r = μ(1 ± 1e-8), a = 1.3/μ: (μ, sign, fcfs pdf, fcfs cdf, lcfs pdf, lcfs cdf printed)
        let rows = [
            (1.0, 1.0, 0.23028936576622718, 0.14288751140699065, 0.26469422331550105, 0.45762707263804869),
            (1.0, -1.0, 0.23028936446125411, 0.14288751040907007, 0.26469422086754619, 0.45762707418605759),
            (5.0, 1.0, 1.1514468288311359, 0.14288751140699065, 1.3234711165775052, 0.16053276364293921),
            (5.0, -1.0, 1.1514468223062705, 0.14288751040907007, 1.323471104337731, 0.16053275746649597),
        ];
        for (mu, sign, ff, cf, fl, cl8) in rows {
            let r = mu * (1.0 + sign * 1e-8);
            let a = 1.3 / mu;
            let f = StageLaw::fcfs(r, mu).unwrap();
            let l = StageLaw::lcfs(r, mu).unwrap();
            assert!(f.is_near_singular());
            assert_relative_eq!(f.pdf(a).unwrap(), ff, max_relative = 1e-12);
            assert_relative_eq!(f.cdf_closed_form(a).unwrap().value, cf, max_relative = 1e-12);
            assert_relative_eq!(l.pdf(a).unwrap(), fl, max_relative = 1e-12);
            assert_relative_eq!(l.cdf_closed_form(a).unwrap().value, cl8, max_relative = 1e-9);
        }
    }

    #[test]
    fn continuity_across_singular_band() {
        let mu = 2.0;
        for a in [0.1, 0.7, 3.0] {
            let inside = StageLaw::lcfs(mu * (1.0 + 0.99e-6), mu).unwrap();
            let outside = StageLaw::lcfs(mu * (1.0 + 1.01e-6), mu).unwrap();
            assert!(inside.is_near_singular() && !outside.is_near_singular());
            assert_relative_eq!(inside.pdf(a).unwrap(), outside.pdf(a).unwrap(), max_relative = 1e-7);
            let inside = StageLaw::fcfs(mu * (1.0 + 0.99e-6), mu).unwrap();
            let outside = StageLaw::fcfs(mu * (1.0 + 1.01e-6), mu).unwrap();
            assert_relative_eq!(inside.pdf(a).unwrap(), outside.pdf(a).unwrap(), max_relative = 1e-7);
        }
    }

    #[test]
    fn densities_vanish_at_zero() {
        for (r, mu) in [(2.0, 1.0), (0.3, 4.0), (1e4, 5.0)] {
            assert_eq!(StageLaw::fcfs(r, mu).unwrap().pdf(0.0).unwrap(), 0.0);
            assert!(StageLaw::lcfs(r, mu).unwrap().pdf(0.0).unwrap().abs() < 1e-12);
        }
    }

    #[test]
    fn spot_values() {
        let f = StageLaw::fcfs(2.0, 1.0).unwrap();
        let e = std::f64::consts::E;
        let oracle = 2.0 / 3.0 * e.powi(-2) + e.recip() / 3.0;
        assert_relative_eq!(f.pdf(1.0).unwrap(), oracle, max_relative = 1e-14);
        assert_eq!(f.cdf_closed_form(0.0).unwrap().value, 0.0);
        let cdf1 = 1.0 - e.powi(-2) / 3.0 - 7.0 / 3.0 * e.recip();
        assert_relative_eq!(f.cdf_closed_form(1.0).unwrap().value, cdf1, max_relative = 1e-14);

        let l = StageLaw::lcfs(2.0, 1.0).unwrap();
        let c = l.cdf_closed_form(0.0).unwrap();
        assert!((c.value + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(c.validity, Validity::Invalid);
        assert!((l.cdf_discrepancy(0.0).unwrap() + 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn negative_age_is_rejected() {
        let f = StageLaw::fcfs(2.0, 1.0).unwrap();
        assert!(f.pdf(-1e-9).is_err());
        assert!(f.cdf(-1.0, CdfSource::Quadrature).is_err());
        assert!(StageLaw::fcfs(0.0, 1.0).is_err());
        assert!(StageLaw::lcfs(1.0, f64::NAN).is_err());
    }

    #[test]
    fn stage_means() {
        let f = StageLaw::fcfs(2.0, 1.0).unwrap();
        assert_relative_eq!(f.mean(), 17.0 / 6.0, max_relative = 1e-15);
        let l = StageLaw::lcfs(2.0, 1.0).unwrap();
        assert_relative_eq!(l.mean(), 0.5 + 1.0 + 2.0 / 9.0 + 2.0 / 3.0, max_relative = 1e-15);
        assert_relative_eq!(StageLaw::fcfs(1e12, 4.0).unwrap().mean(), 0.75, max_relative = 1e-10);
    }

    #[test]
    fn first_moment_by_quadrature() {
        for disc in [Discipline::FcfsMm12, Discipline::LcfsMm12Star] {
            for (r, mu) in [(0.5, 1.0), (2.0, 1.0), (10.0, 5.0), (1e4, 1.0)] {
                let law = StageLaw::new(r, mu, disc).unwrap();
                let hi = law.quadrature_limit();
                let m = integrate_with_breaks(
                    |x| x * law.pdf(x).unwrap(),
                    &[0.0, 1.0 / (r + mu), 1.0 / mu, hi],
                    QuadOptions::default(),
                )
                .unwrap()
                .value;
                assert_relative_eq!(m, law.mean(), epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn system_cdf_modes() {
        let f = StageLaw::fcfs(2.0, 1.0).unwrap();
        let one = SystemLaw::new(vec![f], ExponentMode::HomogeneousPower).unwrap();
        assert_eq!(one.cdf(1.3).unwrap().value, f.cdf_closed_form(1.3).unwrap().value);

        let three = SystemLaw::new(vec![f; 3], ExponentMode::HomogeneousPower).unwrap();
        assert_eq!(three.cdf(1.3).unwrap().value, f.cdf_closed_form(1.3).unwrap().value.powi(3));

        let g = StageLaw::fcfs(5.0, 1.0).unwrap();
        let het = SystemLaw::new(vec![f, g], ExponentMode::HeterogeneousProduct).unwrap();
        let expect = f.cdf_closed_form(2.0).unwrap().value * g.cdf_closed_form(2.0).unwrap().value;
        assert_relative_eq!(het.cdf(2.0).unwrap().value, expect, max_relative = 1e-15);

        // far tail: every stage CDF is 1
        assert_relative_eq!(het.cdf(200.0).unwrap().value, 1.0, max_relative = 1e-12);
        assert!(SystemLaw::new(vec![], ExponentMode::HomogeneousPower).is_err());

        let printed = SystemLaw::new(vec![StageLaw::lcfs(2.0, 1.0).unwrap()], ExponentMode::HomogeneousPower)
            .unwrap()
            .with_source(CdfSource::ClosedForm);
        assert_eq!(printed.cdf(1.0).unwrap().validity, Validity::Invalid);
    }

    #[test]
    fn severity_worked_point() {
        let sys = SystemLaw::new(vec![StageLaw::fcfs(2.0, 1.0).unwrap()], ExponentMode::HomogeneousPower).unwrap();
        let c = |x: f64| StageLaw::fcfs(2.0, 1.0).unwrap().cdf_closed_form(x).unwrap().value;
        let oracle = (c(1.0) - c(2.0)) / (c(1.0) * (1.0 - c(1.0)));
        let q = SeverityQuery::new(1.0, 1.0, PsiMode::AsWritten).unwrap();
        match severity_cdf(&sys, &q).unwrap() {
            SeverityOutcome::Computed { value, validity } => {
                assert_relative_eq!(value, oracle, max_relative = 1e-13);
                assert!((value + 3.05).abs() < 0.01, "{value}");
                assert_eq!(validity, Validity::Invalid);
            }
            other => panic!("{other:?}"),
        }
        let q = SeverityQuery::new(1.0, 1.0, PsiMode::Survival).unwrap();
        match severity_cdf(&sys, &q).unwrap() {
            SeverityOutcome::Computed { value, validity } => {
                assert!((value - 3.05).abs() < 0.01, "{value}");
                assert_eq!(validity, Validity::Invalid);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn severity_small_threshold_limit() {
        // Ψ(0+) = 0 < 1 under the CDF reading, so J(z) → 0.
        let sys = SystemLaw::new(vec![StageLaw::fcfs(2.0, 1.0).unwrap()], ExponentMode::HomogeneousPower).unwrap();
        let mut last = f64::INFINITY;
        for z in [1e-2, 1e-3, 1e-4, 1e-5] {
            let q = SeverityQuery::new(1.0, z, PsiMode::AsWritten).unwrap();
            let v = severity_cdf(&sys, &q).unwrap().value().unwrap().abs();
            assert!(v < last);
            last = v;
        }
        assert!(last < 1e-3);
    }

    #[test]
    fn severity_not_computable_when_psi_a_vanishes() {
        let sys = SystemLaw::new(vec![StageLaw::fcfs(2.0, 1.0).unwrap()], ExponentMode::HomogeneousPower).unwrap();
        // survival is exactly 0 beyond the tail where the CDF rounds to 1
        let q = SeverityQuery::new(1e4, 1.0, PsiMode::Survival).unwrap();
        assert!(matches!(severity_cdf(&sys, &q).unwrap(), SeverityOutcome::NotComputable(_)));
        assert!(SeverityQuery::new(0.0, 1.0, PsiMode::Survival).is_err());
    }

    #[test]
    fn severity_curve_flags_are_deterministic() {
        let sys = SystemLaw::new(vec![StageLaw::lcfs(3.0, 1.0).unwrap(); 2], ExponentMode::HeterogeneousProduct).unwrap();
        let zs = [0.5, 1.0, 2.0, 3.0, 5.0];
        let c1 = severity_curve(&sys, 1.5, &zs, PsiMode::Survival).unwrap();
        let c2 = severity_curve(&sys, 1.5, &zs, PsiMode::Survival).unwrap();
        assert_eq!(c1, c2);
        assert_eq!(c1.points.len(), zs.len());
    }

    #[test]
    fn compute_queue_averages() {
        let c = ComputeQueueLaw::new(75.0, 100.0, ComputeFormula::Corrected).unwrap();
        assert_relative_eq!(avg_paoi_compute(&c).unwrap().value, 1.0 / 75.0 + 1.0 / 25.0, max_relative = 1e-15);

        let w = ComputeQueueLaw::new(75.0, 100.0, ComputeFormula::AsWritten).unwrap();
        let out = avg_paoi_compute(&w).unwrap();
        assert!((out.value - 1_515_000.023_333_333_3).abs() < 1e-6, "{}", out.value);
        assert!(out.dimensional_anomaly);

        let sat = ComputeQueueLaw::new(100.0, 100.0, ComputeFormula::Corrected).unwrap();
        assert!(matches!(avg_paoi_compute(&sat), Err(Error::Unstable { .. })));
        let near = ComputeQueueLaw::new(100.0 - 1e-9, 100.0, ComputeFormula::Corrected).unwrap();
        assert!(avg_paoi_compute(&near).unwrap().value > 1e8);
    }

    #[test]
    fn e2e_sums_compute_and_stage_terms() {
        let c = ComputeQueueLaw::new(10.0, 100.0, ComputeFormula::Corrected).unwrap();
        let alone = avg_paoi_e2e(&[], &c).unwrap();
        assert_eq!(alone.value, avg_paoi_compute(&c).unwrap().value);
        let s = StageLaw::fcfs(40.0, 5.0).unwrap();
        let four = avg_paoi_e2e(&[s; 4], &c).unwrap();
        assert_relative_eq!(four.value, alone.value + 4.0 * s.mean(), max_relative = 1e-15);

        let stages = [StageLaw::fcfs(2.0, 5.0).unwrap(), StageLaw::fcfs(1e4, 5.0).unwrap()];
        let sum = ComputeQueueLaw::from_stages(&stages, 100.0, LambdaMode::SumServiceRates, ComputeFormula::Corrected).unwrap();
        assert_eq!(sum.arrival_rate, 10.0);
        let thr = ComputeQueueLaw::from_stages(&stages, 100.0, LambdaMode::EffectiveThroughput, ComputeFormula::Corrected).unwrap();
        assert!(thr.arrival_rate < 10.0);
    }

    #[test]
    fn throughput_of_capacity_two_stage() {
        // ρ = 1: π0 = 1/3
        let s = StageLaw::fcfs(3.0, 3.0).unwrap();
        assert_relative_eq!(s.throughput(), 2.0, max_relative = 1e-15);
    }

    proptest! {
        #[test]
        fn lcfs_quadrature_cdf_is_a_distribution(r in 0.05f64..50.0, mu in 0.1f64..10.0, a in 0.0f64..5.0, da in 0.0f64..5.0) {
            let l = StageLaw::lcfs(r, mu).unwrap();
            let lo = l.cdf_quadrature(a / mu).unwrap();
            let hi = l.cdf_quadrature((a + da) / mu).unwrap();
            prop_assert!(lo >= -1e-9 && hi <= 1.0 + 1e-9);
            prop_assert!(hi >= lo - 1e-9);
        }

        #[test]
        fn densities_are_non_negative(r in 0.01f64..1e4, mu in 0.1f64..20.0, a in 0.0f64..40.0) {
            let a = a / mu;
            prop_assert!(StageLaw::fcfs(r, mu).unwrap().pdf(a).unwrap() >= 0.0);
            prop_assert!(StageLaw::lcfs(r, mu).unwrap().pdf(a).unwrap() >= -1e-12);
        }

        #[test]
        fn fcfs_closed_form_matches_quadrature(r in 0.05f64..100.0, mu in 0.2f64..10.0, a in 0.0f64..20.0) {
            let f = StageLaw::fcfs(r, mu).unwrap();
            let a = a / mu;
            let diff = f.cdf_closed_form(a).unwrap().value - f.cdf_quadrature(a).unwrap();
            prop_assert!(diff.abs() < 1e-6);
        }
    }
}
