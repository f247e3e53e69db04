//! Discrete-event simulation of per-user capacity-2 stage queues feeding a shared
//! FCFS compute queue.
//!
//! Freshness is observed at three points:
//!
//! * [`Stage::Stage1`]: output of each user's stage queue.
//! * [`Stage::E2e`]: output of the compute queue, per user. A compute delivery
//!   carries the generation time of the stage update it serves.
//! * [`Stage::Compute`]: the compute queue on its own, with the compute arrival
//!   instant as the update timestamp (single-source M/M/1 PAoI).
//!
//! While a stage buffer is full, its Poisson arrivals only matter through how many
//! there were and, for M/M/1/2*, when the last one happened. Those are sampled
//! exactly at the next service completion instead of being simulated one by one,
//! which keeps the event count proportional to the service rate when `r ≫ μ`.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Poisson};
use serde::{Deserialize, Serialize};

use crate::aoi_analytic::Discipline;
use crate::error::{Error, Result};

/// How the compute queue is fed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ComputeFeed {
    /// Stage departures enter the compute queue.
    #[default]
    Tandem,
    /// Compute arrivals form an independent Poisson stream of rate `Σ μ_u`,
    /// each tagged with a user drawn in proportion to `μ_u`.
    #[serde(alias = "independent")]
    IndependentPoisson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QueueConfig {
    pub discipline: Discipline,
    pub stage_service_rate: f64,
    pub compute_service_rate: f64,
    #[serde(default)]
    pub compute_feed: ComputeFeed,
    /// Fraction of the horizon discarded before statistics are collected.
    #[serde(default = "default_warmup")]
    pub warmup_fraction: f64,
}

fn default_warmup() -> f64 {
    0.01
}

impl QueueConfig {
    pub fn new(discipline: Discipline, stage_service_rate: f64, compute_service_rate: f64) -> Self {
        QueueConfig {
            discipline,
            stage_service_rate,
            compute_service_rate,
            compute_feed: ComputeFeed::Tandem,
            warmup_fraction: default_warmup(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("stage_service_rate", self.stage_service_rate),
            ("compute_service_rate", self.compute_service_rate),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.warmup_fraction) {
            return Err(Error::domain("warmup_fraction must be in [0, 1)"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    Stage1,
    E2e,
    Compute,
}

impl Stage {
    pub fn label(self) -> &'static str {
        match self {
            Stage::Stage1 => "stage1",
            Stage::E2e => "e2e",
            Stage::Compute => "compute",
        }
    }
}

/// One PAoI observation: the age just before a fresh delivery at `time`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub time: f64,
    pub peak: f64,
}

/// A delivery of an update generated at `generation`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Delivery {
    pub time: f64,
    pub generation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserCounters {
    pub arrivals: u64,
    pub stage_deliveries: u64,
    pub drops: u64,
    pub preemptions: u64,
    pub in_system_at_horizon: u64,
    pub max_occupancy: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PaoiSamples {
    pub horizon: f64,
    pub warmup_end: f64,
    pub stage1: Vec<Vec<Sample>>,
    pub e2e: Vec<Vec<Sample>>,
    pub compute: Vec<Sample>,
    /// Stage-output deliveries after warm-up, per user.
    pub stage1_trace: Vec<Vec<Delivery>>,
    pub counters: Vec<UserCounters>,
    /// Compute-queue arrivals after warm-up.
    pub compute_arrivals: u64,
}

impl PaoiSamples {
    pub fn users(&self) -> usize {
        self.stage1.len()
    }

    pub fn series(&self, user: usize, stage: Stage) -> Result<&[Sample]> {
        match stage {
            Stage::Compute => Ok(&self.compute),
            Stage::Stage1 | Stage::E2e => {
                let all = if stage == Stage::Stage1 { &self.stage1 } else { &self.e2e };
                all.get(user)
                    .map(Vec::as_slice)
                    .ok_or_else(|| Error::domain(format!("user {user} out of range")))
            }
        }
    }

    pub fn peaks(&self, user: usize, stage: Stage) -> Result<Vec<f64>> {
        Ok(self.series(user, stage)?.iter().map(|s| s.peak).collect())
    }

    /// Compute-queue arrival rate measured after warm-up.
    pub fn compute_arrival_rate(&self) -> f64 {
        self.compute_arrivals as f64 / (self.horizon - self.warmup_end)
    }

    pub fn total_drops(&self) -> u64 {
        self.counters.iter().map(|c| c.drops).sum()
    }

    pub fn total_preemptions(&self) -> u64 {
        self.counters.iter().map(|c| c.preemptions).sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Event {
    Arrival(usize),
    StageDone(usize),
    ComputeArrival,
    ComputeDone,
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // min-heap on (time, seq)
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

#[derive(Debug, Clone, Copy)]
struct ComputePacket {
    user: usize,
    generation: Option<f64>,
    arrival: f64,
}

struct UserState {
    rate: f64,
    arrival_rng: ChaCha8Rng,
    service_rng: ChaCha8Rng,
    in_service: Option<f64>,
    waiting: Option<f64>,
    /// Instant the waiting slot filled; arrivals are sampled lazily from here.
    blocked_since: Option<f64>,
    last_stage_generation: Option<f64>,
    last_e2e_generation: Option<f64>,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

const COMPUTE_SERVICE_STREAM: u64 = u64::MAX;
const COMPUTE_ARRIVAL_STREAM: u64 = u64::MAX - 1;

fn exp_sample<R: Rng>(rng: &mut R, rate: f64) -> f64 {
    Exp::new(rate).expect("positive rate").sample(rng)
}

fn poisson_count<R: Rng>(rng: &mut R, mean: f64) -> u64 {
    if mean <= 0.0 {
        return 0;
    }
    let n: f64 = Poisson::new(mean).expect("finite positive mean").sample(rng);
    n as u64
}

struct Sim<'a> {
    cfg: &'a QueueConfig,
    users: Vec<UserState>,
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    compute_queue: VecDeque<ComputePacket>,
    compute_rng: ChaCha8Rng,
    compute_arrival_rng: ChaCha8Rng,
    last_compute_arrival_delivered: Option<f64>,
    out: PaoiSamples,
}

impl Sim<'_> {
    fn schedule(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
    }

    fn occupancy(&self, u: usize) -> u64 {
        let s = &self.users[u];
        u64::from(s.in_service.is_some()) + u64::from(s.waiting.is_some())
    }

    fn on_arrival(&mut self, u: usize, t: f64) {
        self.out.counters[u].arrivals += 1;
        let mu = self.cfg.stage_service_rate;
        let user = &mut self.users[u];
        if user.in_service.is_none() {
            user.in_service = Some(t);
            let done = t + exp_sample(&mut user.service_rng, mu);
            let next = t + exp_sample(&mut user.arrival_rng, user.rate);
            self.schedule(done, Event::StageDone(u));
            self.schedule(next, Event::Arrival(u));
        } else {
            user.waiting = Some(t);
            user.blocked_since = Some(t);
        }
        let occ = self.occupancy(u);
        let c = &mut self.out.counters[u];
        c.max_occupancy = c.max_occupancy.max(occ);
    }

    /// Accounts for the arrivals to a full buffer during `(since, until]`.
    fn resolve_blocked(&mut self, u: usize, since: f64, until: f64) {
        let discipline = self.cfg.discipline;
        let user = &mut self.users[u];
        let span = until - since;
        let counters = &mut self.out.counters[u];
        match discipline {
            Discipline::FcfsMm12 => {
                let n = poisson_count(&mut user.arrival_rng, user.rate * span);
                counters.arrivals += n;
                counters.drops += n;
            }
            Discipline::LcfsMm12Star => {
                // Looking back from `until`, the last arrival is an Exp(r) gap away.
                let back = exp_sample(&mut user.arrival_rng, user.rate);
                if back < span {
                    let n = 1 + poisson_count(&mut user.arrival_rng, user.rate * (span - back));
                    counters.arrivals += n;
                    counters.preemptions += n;
                    user.waiting = Some(until - back);
                }
            }
        }
    }

    fn on_stage_done(&mut self, u: usize, t: f64) {
        if let Some(since) = self.users[u].blocked_since.take() {
            self.resolve_blocked(u, since, t);
            let user = &mut self.users[u];
            let next = t + exp_sample(&mut user.arrival_rng, user.rate);
            self.schedule(next, Event::Arrival(u));
        }
        let warm = t >= self.out.warmup_end;
        let mu = self.cfg.stage_service_rate;
        let user = &mut self.users[u];
        let generation = user.in_service.take().expect("departure from an idle stage");
        if let Some(prev) = user.last_stage_generation {
            if warm {
                self.out.stage1[u].push(Sample {
                    time: t,
                    peak: t - prev,
                });
            }
        }
        if warm {
            self.out.stage1_trace[u].push(Delivery {
                time: t,
                generation,
            });
        }
        user.last_stage_generation = Some(generation);
        self.out.counters[u].stage_deliveries += 1;

        if let Some(w) = user.waiting.take() {
            user.in_service = Some(w);
            let done = t + exp_sample(&mut user.service_rng, mu);
            self.schedule(done, Event::StageDone(u));
        }

        if self.cfg.compute_feed == ComputeFeed::Tandem {
            self.enqueue_compute(
                ComputePacket {
                    user: u,
                    generation: Some(generation),
                    arrival: t,
                },
                t,
            );
        }
    }

    fn enqueue_compute(&mut self, packet: ComputePacket, t: f64) {
        if t >= self.out.warmup_end {
            self.out.compute_arrivals += 1;
        }
        self.compute_queue.push_back(packet);
        if self.compute_queue.len() == 1 {
            let done = t + exp_sample(&mut self.compute_rng, self.cfg.compute_service_rate);
            self.schedule(done, Event::ComputeDone);
        }
    }

    fn on_compute_arrival(&mut self, t: f64) {
        let weights_total = self.cfg.stage_service_rate * self.users.len() as f64;
        // equal μ_u: uniform user
        let u = self.compute_arrival_rng.random_range(0..self.users.len());
        let generation = self.users[u].last_stage_generation;
        self.enqueue_compute(
            ComputePacket {
                user: u,
                generation,
                arrival: t,
            },
            t,
        );
        let next = t + exp_sample(&mut self.compute_arrival_rng, weights_total);
        self.schedule(next, Event::ComputeArrival);
    }

    fn on_compute_done(&mut self, t: f64) {
        let p = self.compute_queue.pop_front().expect("departure from an idle compute queue");
        let warm = t >= self.out.warmup_end;
        if let Some(prev) = self.last_compute_arrival_delivered {
            if warm {
                self.out.compute.push(Sample {
                    time: t,
                    peak: t - prev,
                });
            }
        }
        self.last_compute_arrival_delivered = Some(p.arrival);

        if let Some(g) = p.generation {
            let user = &mut self.users[p.user];
            match user.last_e2e_generation {
                Some(prev) if g > prev => {
                    if warm {
                        self.out.e2e[p.user].push(Sample {
                            time: t,
                            peak: t - prev,
                        });
                    }
                    user.last_e2e_generation = Some(g);
                }
                Some(_) => {}
                None => user.last_e2e_generation = Some(g),
            }
        }

        if !self.compute_queue.is_empty() {
            let done = t + exp_sample(&mut self.compute_rng, self.cfg.compute_service_rate);
            self.schedule(done, Event::ComputeDone);
        }
    }
}

/// Runs the tandem network until `horizon` seconds.
///
/// Each user has its own arrival and service random streams derived from `seed`,
/// so adding users leaves the streams of existing users unchanged.
pub fn run(config: &QueueConfig, per_user_rates: &[f64], horizon: f64, seed: u64) -> Result<PaoiSamples> {
    config.validate()?;
    if per_user_rates.is_empty() {
        return Err(Error::domain("simulation needs at least one user"));
    }
    if !(horizon.is_finite() && horizon > 0.0) {
        return Err(Error::domain(format!("horizon must be finite and > 0, got {horizon}")));
    }
    if let Some(r) = per_user_rates.iter().find(|r| !(r.is_finite() && **r > 0.0)) {
        return Err(Error::domain(format!("update rate must be finite and > 0, got {r}")));
    }
    let n = per_user_rates.len();
    let users = per_user_rates
        .iter()
        .enumerate()
        .map(|(u, &rate)| UserState {
            rate,
            arrival_rng: stream(seed, 2 * u as u64),
            service_rng: stream(seed, 2 * u as u64 + 1),
            in_service: None,
            waiting: None,
            blocked_since: None,
            last_stage_generation: None,
            last_e2e_generation: None,
        })
        .collect();
    let mut sim = Sim {
        cfg: config,
        users,
        heap: BinaryHeap::new(),
        seq: 0,
        compute_queue: VecDeque::new(),
        compute_rng: stream(seed, COMPUTE_SERVICE_STREAM),
        compute_arrival_rng: stream(seed, COMPUTE_ARRIVAL_STREAM),
        last_compute_arrival_delivered: None,
        out: PaoiSamples {
            horizon,
            warmup_end: horizon * config.warmup_fraction,
            stage1: vec![Vec::new(); n],
            e2e: vec![Vec::new(); n],
            compute: Vec::new(),
            stage1_trace: vec![Vec::new(); n],
            counters: vec![UserCounters::default(); n],
            compute_arrivals: 0,
        },
    };
    for u in 0..n {
        let user = &mut sim.users[u];
        let first = exp_sample(&mut user.arrival_rng, user.rate);
        sim.schedule(first, Event::Arrival(u));
    }
    if config.compute_feed == ComputeFeed::IndependentPoisson {
        let total = config.stage_service_rate * n as f64;
        let first = exp_sample(&mut sim.compute_arrival_rng, total);
        sim.schedule(first, Event::ComputeArrival);
    }

    while let Some(next) = sim.heap.pop() {
        if next.time > horizon {
            break;
        }
        match next.event {
            Event::Arrival(u) => sim.on_arrival(u, next.time),
            Event::StageDone(u) => sim.on_stage_done(u, next.time),
            Event::ComputeArrival => sim.on_compute_arrival(next.time),
            Event::ComputeDone => sim.on_compute_done(next.time),
        }
    }

    for u in 0..n {
        if let Some(since) = sim.users[u].blocked_since.take() {
            sim.resolve_blocked(u, since, horizon);
        }
        let occ = sim.occupancy(u);
        sim.out.counters[u].in_system_at_horizon = occ;
    }
    Ok(sim.out)
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalCdf {
    sorted: Vec<f64>,
}

impl EmpiricalCdf {
    pub fn new(mut values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Empty("empirical CDF of an empty sample".into()));
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::domain("NaN sample"));
        }
        values.sort_by(f64::total_cmp);
        Ok(EmpiricalCdf { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted(&self) -> &[f64] {
        &self.sorted
    }

    /// Fraction of samples `<= x`.
    pub fn eval(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|v| *v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// Sup-norm distance to a reference CDF whose values at [`Self::sorted`] are given.
    pub fn ks_distance_values(&self, reference: &[f64]) -> Result<f64> {
        if reference.len() != self.sorted.len() {
            return Err(Error::domain("reference CDF values must align with the sorted samples"));
        }
        let n = self.sorted.len() as f64;
        let mut d: f64 = 0.0;
        let mut i = 0;
        while i < self.sorted.len() {
            let x = self.sorted[i];
            let mut j = i + 1;
            while j < self.sorted.len() && self.sorted[j] == x {
                j += 1;
            }
            let f = reference[i];
            d = d.max(j as f64 / n - f).max(f - i as f64 / n);
            i = j;
        }
        Ok(d)
    }

    /// Sup-norm distance to `reference`, checked on both sides of every jump.
    pub fn ks_distance<F: Fn(f64) -> f64>(&self, reference: F) -> f64 {
        let values: Vec<f64> = self.sorted.iter().map(|&x| reference(x)).collect();
        self.ks_distance_values(&values).expect("aligned by construction")
    }
}

pub fn empirical_cdf(samples: &PaoiSamples, user: usize, stage: Stage) -> Result<EmpiricalCdf> {
    EmpiricalCdf::new(samples.peaks(user, stage)?)
}

pub fn ks_distance<F: Fn(f64) -> f64>(empirical: &EmpiricalCdf, analytic: F) -> f64 {
    empirical.ks_distance(analytic)
}

/// Worst age across users: `t − min_u g_u(t)`, starting once every user has
/// delivered at least once. Returned as a delivery trace of the minimum
/// generation time.
pub fn worst_of(traces: &[Vec<Delivery>]) -> Vec<Delivery> {
    let mut events: Vec<(f64, usize, f64)> = traces
        .iter()
        .enumerate()
        .flat_map(|(u, tr)| tr.iter().map(move |d| (d.time, u, d.generation)))
        .collect();
    events.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut current: Vec<Option<f64>> = vec![None; traces.len()];
    let mut out: Vec<Delivery> = Vec::new();
    for (time, u, g) in events {
        current[u] = Some(current[u].map_or(g, |c: f64| c.max(g)));
        if current.iter().all(Option::is_some) {
            let min = current.iter().flatten().copied().fold(f64::INFINITY, f64::min);
            match out.last_mut() {
                Some(last) if last.generation == min => {}
                Some(last) if last.time == time => last.generation = min,
                _ => out.push(Delivery {
                    time,
                    generation: min,
                }),
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExcursionStats {
    pub ruin_level: f64,
    /// `max AoI − a` over each completed excursion above `a`.
    pub exceedances: Vec<f64>,
}

impl ExcursionStats {
    /// Fraction of excursions whose maximum exceedance is at most `z`.
    pub fn severity_cdf(&self, z: f64) -> f64 {
        let n = self.exceedances.iter().filter(|e| **e <= z).count();
        n as f64 / self.exceedances.len() as f64
    }
}

/// Exceedances of the sawtooth AoI process above `ruin_level`.
///
/// The AoI grows at unit slope from `t_k − g_k` after delivery `k` to the peak
/// `t_{k+1} − g_k` just before the next one. An excursion ends at the first
/// delivery that brings the age back to `ruin_level` or below; an excursion still
/// open at the end of the trace is discarded.
pub fn excursion_severity(trace: &[Delivery], ruin_level: f64) -> Result<ExcursionStats> {
    if !(ruin_level.is_finite() && ruin_level > 0.0) {
        return Err(Error::domain(format!("ruin level must be > 0, got {ruin_level}")));
    }
    let mut exceedances = Vec::new();
    let mut open: Option<f64> = None;
    for w in trace.windows(2) {
        let (prev, next) = (w[0], w[1]);
        let after_reset = prev.time - prev.generation;
        let peak = next.time - prev.generation;
        if after_reset > ruin_level && open.is_none() {
            open = Some(after_reset);
        }
        if peak > ruin_level {
            open = Some(open.map_or(peak, |m: f64| m.max(peak)));
        }
        let reset = next.time - next.generation;
        if reset <= ruin_level {
            if let Some(max) = open.take() {
                exceedances.push(max - ruin_level);
            }
        }
    }
    if exceedances.is_empty() {
        return Err(Error::Empty(format!("no completed excursion above {ruin_level}")));
    }
    Ok(ExcursionStats {
        ruin_level,
        exceedances,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanEstimate {
    pub mean: f64,
    /// 95% batch-means confidence half-width.
    pub half_width: f64,
    pub n: usize,
}

const BATCHES: usize = 20;


/// Sample mean with a batch-means 95% half-width (samples taken in time order).
pub fn batch_means(values: &[f64]) -> Result<MeanEstimate> {
    let n = values.len();
    if n < 2 {
        return Err(Error::Empty(format!("need at least 2 samples, got {n}")));
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let k = BATCHES.min(n);
    let size = n / k;
    let batch: Vec<f64> = values
        .chunks_exact(size)
        .take(k)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let bm = batch.iter().sum::<f64>() / k as f64;
    let var = batch.iter().map(|b| (b - bm) * (b - bm)).sum::<f64>() / (k - 1) as f64;
    let half_width = crate::scenario::t975(k - 1) * (var / k as f64).sqrt();
    Ok(MeanEstimate { mean, half_width, n })
}

/// Mean PAoI at `stage`, pooled over users (or the compute series).
pub fn estimate_avg(samples: &PaoiSamples, stage: Stage) -> Result<MeanEstimate> {
    let mut pooled: Vec<Sample> = match stage {
        Stage::Compute => samples.compute.clone(),
        Stage::Stage1 => samples.stage1.iter().flatten().copied().collect(),
        Stage::E2e => samples.e2e.iter().flatten().copied().collect(),
    };
    pooled.sort_by(|a, b| a.time.total_cmp(&b.time));
    let values: Vec<f64> = pooled.iter().map(|s| s.peak).collect();
    batch_means(&values)
}

/// Compute-queue mean PAoI plus the sum of the per-user stage means: the empirical
/// counterpart of the additive end-to-end average.
pub fn estimate_additive_e2e(samples: &PaoiSamples) -> Result<MeanEstimate> {
    let compute = batch_means(&samples.peaks(0, Stage::Compute)?)?;
    let mut mean = compute.mean;
    let mut var = compute.half_width * compute.half_width;
    let mut n = compute.n;
    for u in 0..samples.users() {
        let s = batch_means(&samples.peaks(u, Stage::Stage1)?)?;
        mean += s.mean;
        var += s.half_width * s.half_width;
        n += s.n;
    }
    Ok(MeanEstimate {
        mean,
        half_width: var.sqrt(),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aoi_analytic::StageLaw;
    use approx::assert_relative_eq;

    fn cfg(d: Discipline) -> QueueConfig {
        QueueConfig::new(d, 1.0, 100.0)
    }

    #[test]
    fn rejects_bad_inputs() {
        let c = cfg(Discipline::FcfsMm12);
        assert!(run(&c, &[], 10.0, 1).is_err());
        assert!(run(&c, &[1.0], 0.0, 1).is_err());
        assert!(run(&c, &[0.0], 10.0, 1).is_err());
    }

    #[test]
    fn tiny_rate_yields_no_samples() {
        let s = run(&cfg(Discipline::FcfsMm12), &[1e-12], 100.0, 3).unwrap();
        assert!(s.stage1[0].is_empty());
        assert_eq!(s.counters[0].arrivals, 0);
        assert!(empirical_cdf(&s, 0, Stage::Stage1).is_err());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        for d in [Discipline::FcfsMm12, Discipline::LcfsMm12Star] {
            let a = run(&cfg(d), &[2.0, 30.0], 500.0, 11).unwrap();
            let b = run(&cfg(d), &[2.0, 30.0], 500.0, 11).unwrap();
            assert_eq!(a, b);
            let c = run(&cfg(d), &[2.0, 30.0], 500.0, 12).unwrap();
            assert_ne!(a.stage1, c.stage1);
        }
    }

    #[test]
    fn adding_users_keeps_existing_streams() {
        let mut c = cfg(Discipline::FcfsMm12);
        c.compute_feed = ComputeFeed::Tandem;
        let one = run(&c, &[2.0], 300.0, 5).unwrap();
        let two = run(&c, &[2.0, 7.0], 300.0, 5).unwrap();
        assert_eq!(one.stage1[0], two.stage1[0]);
    }

    #[test]
    fn conservation_and_occupancy() {
        for d in [Discipline::FcfsMm12, Discipline::LcfsMm12Star] {
            for feed in [ComputeFeed::Tandem, ComputeFeed::IndependentPoisson] {
                let mut c = cfg(d);
                c.compute_feed = feed;
                let s = run(&c, &[0.7, 4.0, 250.0], 2_000.0, 9).unwrap();
                for k in &s.counters {
                    assert_eq!(
                        k.arrivals,
                        k.stage_deliveries + k.drops + k.preemptions + k.in_system_at_horizon
                    );
                    assert!(k.max_occupancy <= 2);
                    match d {
                        Discipline::FcfsMm12 => assert_eq!(k.preemptions, 0),
                        Discipline::LcfsMm12Star => assert_eq!(k.drops, 0),
                    }
                }
            }
        }
    }

    #[test]
    fn peaks_match_sawtooth_reconstruction() {
        let s = run(&cfg(Discipline::LcfsMm12Star), &[3.0], 2_000.0, 4).unwrap();
        let trace = &s.stage1_trace[0];
        let samples = &s.stage1[0];
        // every sample after the first traced delivery pairs with consecutive deliveries
        let offset = trace.len() - samples.len();
        assert!(offset <= 1);
        for (k, smp) in samples.iter().enumerate().skip(1) {
            let prev = trace[k + offset - 1];
            let cur = trace[k + offset];
            assert_eq!(smp.time, cur.time);
            assert_relative_eq!(smp.peak, (cur.time - prev.time) + (prev.time - prev.generation), max_relative = 1e-12);
            assert!(smp.peak > 0.0);
            assert!(cur.generation >= prev.generation);
        }
    }

    #[test]
    fn stage_means_converge() {
        let horizon = 130_000.0; // ≈ 1e5 deliveries at μ = 1, r = 2
        let f = run(&cfg(Discipline::FcfsMm12), &[2.0], horizon, 21).unwrap();
        let est = estimate_avg(&f, Stage::Stage1).unwrap();
        assert!(est.n > 80_000);
        assert!((est.mean / (17.0 / 6.0) - 1.0).abs() < 0.02, "{est:?}");

        let l = run(&cfg(Discipline::LcfsMm12Star), &[2.0], horizon, 22).unwrap();
        let est = estimate_avg(&l, Stage::Stage1).unwrap();
        assert!((est.mean / StageLaw::lcfs(2.0, 1.0).unwrap().mean() - 1.0).abs() < 0.02, "{est:?}");
    }

    #[test]
    fn fcfs_density_histogram_near_one() {
        // fraction of PAoI samples in [0.9, 1.1] ≈ ∫ pdf ≈ 0.2 · pdf(1) = 0.0426
        let s = run(&cfg(Discipline::FcfsMm12), &[2.0], 200_000.0, 8).unwrap();
        let peaks = s.peaks(0, Stage::Stage1).unwrap();
        let frac = peaks.iter().filter(|p| (0.9..1.1).contains(*p)).count() as f64 / peaks.len() as f64;
        let law = StageLaw::fcfs(2.0, 1.0).unwrap();
        let exact = law.cdf_closed_form(1.1).unwrap().value - law.cdf_closed_form(0.9).unwrap().value;
        assert!((frac - exact).abs() < 0.003, "{frac} vs {exact}");
        assert!((exact / 0.2 - 0.2128).abs() < 0.002);
    }

    #[test]
    fn ecdf_steps() {
        let one = EmpiricalCdf::new(vec![3.0]).unwrap();
        assert_eq!(one.eval(2.999), 0.0);
        assert_eq!(one.eval(3.0), 1.0);
        let two = EmpiricalCdf::new(vec![2.0, 1.0]).unwrap();
        assert_eq!(two.eval(0.5), 0.0);
        assert_eq!(two.eval(1.0), 0.5);
        assert_eq!(two.eval(1.999), 0.5);
        assert_eq!(two.eval(2.0), 1.0);
        assert!(EmpiricalCdf::new(vec![]).is_err());
    }

    #[test]
    fn ks_edge_cases() {
        let e = EmpiricalCdf::new(vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.ks_distance(|_| 0.0), 1.0);
        // reference passing through the middle of each jump
        let mid = |x: f64| (x - 0.5) / 4.0;
        assert_relative_eq!(e.ks_distance(mid), 1.0 / 8.0, max_relative = 1e-12);
        let ties = EmpiricalCdf::new(vec![1.0, 1.0]).unwrap();
        assert_eq!(ties.ks_distance(|_| 0.5), 0.5);
    }

    #[test]
    fn ks_exponential_self_test() {
        let mut rng = stream(99, 0);
        let exp = Exp::new(1.0).unwrap();
        let xs: Vec<f64> = (0..100_000).map(|_| exp.sample(&mut rng)).collect();
        let e = EmpiricalCdf::new(xs).unwrap();
        let d = e.ks_distance(|x| -(-x).exp_m1());
        assert!(d <= 0.01, "{d}");
    }

    #[test]
    fn excursion_examples() {
        // generations 0, 2, 8; deliveries at 1, 5, 9: ages reset to 1, 3, 1, peaks 5 and 7
        let trace = [
            Delivery { time: 1.0, generation: 0.0 },
            Delivery { time: 5.0, generation: 2.0 },
            Delivery { time: 9.0, generation: 8.0 },
        ];
        let ex = excursion_severity(&trace, 3.0).unwrap();
        // ages: [1 → 5] reset 3 (≤ 3 ends first excursion), [3 → 7] reset 1
        assert_eq!(ex.exceedances, vec![2.0, 4.0]);
        assert!(excursion_severity(&trace, 10.0).is_err());

        let single = [
            Delivery { time: 2.0, generation: 1.0 },
            Delivery { time: 6.0, generation: 5.0 },
        ];
        let ex = excursion_severity(&single, 3.0).unwrap();
        assert_eq!(ex.exceedances, vec![2.0]);
        assert_eq!(ex.severity_cdf(2.0), 1.0);
        assert_eq!(ex.severity_cdf(1.9), 0.0);
    }

    #[test]
    fn excursion_spanning_several_teeth() {
        // reset ages stay above 2 until the last delivery
        let trace = [
            Delivery { time: 0.0, generation: -1.0 },
            Delivery { time: 4.0, generation: 1.0 },
            Delivery { time: 5.0, generation: 1.5 },
            Delivery { time: 6.0, generation: 5.5 },
        ];
        let ex = excursion_severity(&trace, 2.0).unwrap();
        assert_eq!(ex.exceedances, vec![5.0 - 2.0]);
    }

    #[test]
    fn worst_of_tracks_min_generation() {
        let a = vec![
            Delivery { time: 1.0, generation: 0.5 },
            Delivery { time: 3.0, generation: 2.5 },
        ];
        let b = vec![
            Delivery { time: 2.0, generation: 1.0 },
            Delivery { time: 4.0, generation: 3.9 },
        ];
        let w = worst_of(&[a.clone(), b]);
        assert_eq!(
            w,
            vec![
                Delivery { time: 2.0, generation: 0.5 },
                Delivery { time: 3.0, generation: 1.0 },
                Delivery { time: 4.0, generation: 2.5 },
            ]
        );
        assert_eq!(worst_of(&[a.clone()]), a);
    }

    #[test]
    fn batch_means_cases() {
        let c = batch_means(&[2.0; 4]).unwrap();
        assert_eq!((c.mean, c.half_width), (2.0, 0.0));
        let alt: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { 3.0 }).collect();
        assert_eq!(batch_means(&alt).unwrap().mean, 2.0);
        assert!(batch_means(&[1.0]).is_err());
    }

    #[test]
    fn independent_feed_rate_matches_sum_of_service_rates() {
        let mut c = QueueConfig::new(Discipline::FcfsMm12, 5.0, 100.0);
        c.compute_feed = ComputeFeed::IndependentPoisson;
        let s = run(&c, &[50.0, 80.0], 4_000.0, 2).unwrap();
        assert!((s.compute_arrival_rate() / 10.0 - 1.0).abs() < 0.03);
        let t = run(&QueueConfig::new(Discipline::FcfsMm12, 5.0, 100.0), &[1.0, 1.0], 4_000.0, 2).unwrap();
        // finite buffers throttle the stage output well below Σ μ_u
        assert!(t.compute_arrival_rate() < 0.5 * 10.0);
    }
}
