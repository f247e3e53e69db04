//! THz uplink budget between an AR user and its serving RIS.
//!
//! The chain is channel gain -> SNR (with RIS array gain N² at the optimal phase
//! configuration) -> Shannon rate over the whole band -> packetised update rate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, SPEED_OF_LIGHT};
use crate::error::{Error, Result};

/// Thermal noise floor used in the denominator of the SINR.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NoiseModel {
    /// `N0 = (W λ² / 4π) k_B T0`.
    #[default]
    AsWritten,
    /// `N0 = k_B T0 W`.
    Conventional,
}

/// Which RIS distances enter the interference sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InterferenceMode {
    /// Every RIS, including the serving one.
    #[default]
    All,
    /// Every RIS except the serving one.
    ExcludeServing,
}

/// Radio constants shared by every link in a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkParams {
    pub bandwidth_hz: f64,
    pub carrier_hz: f64,
    pub tx_power_w: f64,
    /// Molecular absorption coefficient, used both in the path gain and the
    /// interference term.
    pub absorption_per_m: f64,
    pub temperature_k: f64,
    /// Meta-surface elements per RIS. No default: it must be configured.
    pub meta_surfaces: u32,
    pub image_size_bits: f64,
    #[serde(default)]
    pub noise_model: NoiseModel,
    #[serde(default)]
    pub interference: InterferenceMode,
}

impl LinkParams {
    /// Indoor 1 THz parameters with the given meta-surface count.
    pub fn indoor_1thz(meta_surfaces: u32) -> Self {
        LinkParams {
            bandwidth_hz: 10e9,
            carrier_hz: 1e12,
            tx_power_w: 1.0,
            absorption_per_m: 0.0016,
            temperature_k: 300.0,
            meta_surfaces,
            image_size_bits: 10e6,
            noise_model: NoiseModel::AsWritten,
            interference: InterferenceMode::All,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("bandwidth_hz", self.bandwidth_hz),
            ("carrier_hz", self.carrier_hz),
            ("tx_power_w", self.tx_power_w),
            ("absorption_per_m", self.absorption_per_m),
            ("temperature_k", self.temperature_k),
            ("image_size_bits", self.image_size_bits),
        ];
        for (name, v) in fields {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::domain(format!("{name} must be finite and > 0, got {v}")));
            }
        }
        if self.meta_surfaces == 0 {
            return Err(Error::domain("meta_surfaces must be >= 1"));
        }
        Ok(())
    }

    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Thermal noise floor `N0` for the configured noise model.
    pub fn thermal_noise(&self) -> f64 {
        let kt = BOLTZMANN * self.temperature_k;
        match self.noise_model {
            NoiseModel::AsWritten => {
                let lambda = self.wavelength();
                self.bandwidth_hz * lambda * lambda / (4.0 * PI) * kt
            }
            NoiseModel::Conventional => kt * self.bandwidth_hz,
        }
    }

    /// Interference aperture `A0 = c² / (16 π² f²)`.
    pub fn aperture(&self) -> f64 {
        let f = self.carrier_hz;
        SPEED_OF_LIGHT * SPEED_OF_LIGHT / (16.0 * PI * PI * f * f)
    }
}

/// Distances from one user to every RIS in the room, and which one serves it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkGeometry {
    serving: usize,
    ris_distances: Vec<f64>,
}

impl LinkGeometry {
    pub fn new(serving: usize, ris_distances: Vec<f64>) -> Result<Self> {
        if ris_distances.is_empty() {
            return Err(Error::domain("RIS distance list is empty"));
        }
        if serving >= ris_distances.len() {
            return Err(Error::domain(format!(
                "serving index {serving} out of range for {} RISs",
                ris_distances.len()
            )));
        }
        if let Some(d) = ris_distances.iter().find(|d| !(d.is_finite() && **d > 0.0)) {
            return Err(Error::domain(format!("RIS distance must be finite and > 0, got {d}")));
        }
        Ok(LinkGeometry {
            serving,
            ris_distances,
        })
    }

    /// Geometry with `count` RISs all at the same distance, the first one serving.
    pub fn uniform(distance: f64, count: usize) -> Result<Self> {
        LinkGeometry::new(0, vec![distance; count])
    }

    pub fn serving_index(&self) -> usize {
        self.serving
    }

    pub fn serving_distance(&self) -> f64 {
        self.ris_distances[self.serving]
    }

    pub fn ris_distances(&self) -> &[f64] {
        &self.ris_distances
    }
}

/// Phase configuration of the serving RIS relative to the user channel.
#[derive(Debug, Clone, PartialEq)]
pub enum PhaseProfile<'a> {
    /// θ = ψ on every element.
    Aligned,
    /// Explicit per-element offsets θ_n − ψ_n in radians.
    Offsets(&'a [f64]),
}

/// Free-space gain with molecular absorption, `(λ / 4πd)² e^{-2kd}`.
pub fn channel_gain(distance: f64, params: &LinkParams) -> Result<f64> {
    if !(distance.is_finite() && distance > 0.0) {
        return Err(Error::domain(format!("distance must be > 0, got {distance}")));
    }
    let spread = params.wavelength() / (4.0 * PI * distance);
    Ok(spread * spread * (-2.0 * params.absorption_per_m * distance).exp())
}

/// `N0 + Σ_b p A0 d_b⁻² (1 − e^{−K d_b})`.
pub fn noise_plus_interference(geom: &LinkGeometry, params: &LinkParams) -> Result<f64> {
    if geom.ris_distances.is_empty() {
        return Err(Error::domain("RIS distance list is empty"));
    }
    let pa = params.tx_power_w * params.aperture();
    let k = params.absorption_per_m;
    let interference: f64 = geom
        .ris_distances
        .iter()
        .enumerate()
        .filter(|(b, _)| {
            params.interference == InterferenceMode::All || *b != geom.serving
        })
        .map(|(_, &d)| pa / (d * d) * -(-k * d).exp_m1())
        .sum();
    Ok(params.thermal_noise() + interference)
}

/// `|Σ_n e^{j(θ_n − ψ_n)}|²` for an `elements`-element RIS.
pub fn ris_array_gain(elements: u32, phases: PhaseProfile<'_>) -> Result<f64> {
    if elements == 0 {
        return Err(Error::domain("RIS needs at least one element"));
    }
    match phases {
        PhaseProfile::Aligned => {
            let n = f64::from(elements);
            Ok(n * n)
        }
        PhaseProfile::Offsets(offsets) => {
            if offsets.len() != elements as usize {
                return Err(Error::domain(format!(
                    "{} phase offsets supplied for {elements} elements",
                    offsets.len()
                )));
            }
            let (re, im) = offsets
                .iter()
                .fold((0.0, 0.0), |(re, im), d| (re + d.cos(), im + d.sin()));
            Ok(re * re + im * im)
        }
    }
}

/// Received SNR with the serving RIS optimally phased.
pub fn snr(geom: &LinkGeometry, params: &LinkParams) -> Result<f64> {
    params.validate()?;
    let h = channel_gain(geom.serving_distance(), params)?;
    let array = ris_array_gain(params.meta_surfaces, PhaseProfile::Aligned)?;
    let noise = noise_plus_interference(geom, params)?;
    Ok(params.tx_power_w * h * array / noise)
}

/// Shannon rate `W log2(1 + snr)`.
pub fn rate_from_snr(bandwidth_hz: f64, snr: f64) -> Result<f64> {
    if !(snr >= 0.0) {
        return Err(Error::domain(format!("SNR must be >= 0, got {snr}")));
    }
    Ok(bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2)
}

/// Uplink rate in bit/s from a user to its serving RIS.
pub fn rate_bps(geom: &LinkGeometry, params: &LinkParams) -> Result<f64> {
    rate_from_snr(params.bandwidth_hz, snr(geom, params)?)
}

/// AR update rate `R / M` in updates per second.
pub fn update_rate(rate_bps: f64, params: &LinkParams) -> Result<f64> {
    if !(rate_bps >= 0.0) {
        return Err(Error::domain(format!("rate must be >= 0, got {rate_bps}")));
    }
    if !(params.image_size_bits > 0.0) {
        return Err(Error::domain("image_size_bits must be > 0"));
    }
    Ok(rate_bps / params.image_size_bits)
}

#[cfg(test)]
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn params() -> LinkParams {
        LinkParams::indoor_1thz(100)
    }

    #[test]
    fn gain_is_unity_at_reference_distance() {
        let mut p = params();
        p.absorption_per_m = 1e-300;
        let d = p.wavelength() / (4.0 * PI);
        assert_relative_eq!(channel_gain(d, &p).unwrap(), 1.0, max_relative = 1e-14);
    }

    #[test]
    fn gain_at_10m_matches_high_precision_value() {
        // mpmath, 50 digits, exact c
        assert_relative_eq!(
            channel_gain(10.0, &params()).unwrap(),
            5.512_190_958_410_510_9e-12,
            max_relative = 1e-13
        );
        assert_relative_eq!(
            channel_gain(20.0, &params()).unwrap(),
            1.334_648_306_224_505e-12,
            max_relative = 1e-13
        );
        // rounded value quoted with λ = 3e-4 m
        assert!((channel_gain(10.0, &params()).unwrap() / 5.52e-12 - 1.0).abs() < 3e-3);
    }

    #[test]
    fn gain_rejects_non_positive_distance() {
        assert!(channel_gain(0.0, &params()).is_err());
        assert!(channel_gain(-1.0, &params()).is_err());
    }

    #[test]
    fn noise_four_ris_at_25m() {
        let geom = LinkGeometry::uniform(25.0, 4).unwrap();
        let n = noise_plus_interference(&geom, &params()).unwrap();
        assert_relative_eq!(n, 1.428_254_518_981_233_4e-13, max_relative = 1e-12);
        assert_relative_eq!(params().thermal_noise(), 2.962_348_024_376_854_6e-19, max_relative = 1e-13);
        assert_relative_eq!(params().aperture(), 5.691_433_657_143_450_5e-10, max_relative = 1e-13);
    }

    #[test]
    fn noise_collapses_to_floor() {
        let mut p = params();
        let far = LinkGeometry::uniform(1e12, 1).unwrap();
        assert_relative_eq!(
            noise_plus_interference(&far, &p).unwrap(),
            p.thermal_noise(),
            max_relative = 1e-9
        );
        p.absorption_per_m = 0.0;
        let near = LinkGeometry::uniform(5.0, 4).unwrap();
        assert_eq!(noise_plus_interference(&near, &p).unwrap(), p.thermal_noise());
    }

    #[test]
    fn empty_geometry_is_rejected() {
        assert!(LinkGeometry::new(0, vec![]).is_err());
        assert!(LinkGeometry::new(2, vec![1.0, 2.0]).is_err());
        assert!(LinkGeometry::new(0, vec![1.0, 0.0]).is_err());
    }

    #[test]
    fn array_gain_cases() {
        assert_eq!(ris_array_gain(1, PhaseProfile::Aligned).unwrap(), 1.0);
        assert_eq!(ris_array_gain(100, PhaseProfile::Aligned).unwrap(), 10_000.0);
        let g = ris_array_gain(2, PhaseProfile::Offsets(&[0.0, PI])).unwrap();
        assert!(g.abs() < 1e-30);
        assert!(ris_array_gain(0, PhaseProfile::Aligned).is_err());
        assert!(ris_array_gain(3, PhaseProfile::Offsets(&[0.0])).is_err());
    }

    #[test]
    fn rate_from_unit_snr_is_bandwidth() {
        assert_eq!(rate_from_snr(10e9, 1.0).unwrap(), 10e9);
        assert_eq!(rate_from_snr(10e9, 0.0).unwrap(), 0.0);
        assert!(rate_from_snr(10e9, 1e-300).unwrap() < 1e-280);
    }

    #[test]
    fn rate_at_25m() {
        let geom = LinkGeometry::uniform(25.0, 4).unwrap();
        let r = rate_bps(&geom, &params()).unwrap();
        assert_relative_eq!(r, 158_449_322_081.593_29, max_relative = 1e-12);
        assert_relative_eq!(update_rate(r, &params()).unwrap(), 15_844.932_208_159_33, max_relative = 1e-12);

        let mut conv = params();
        conv.noise_model = NoiseModel::Conventional;
        assert_relative_eq!(rate_bps(&geom, &conv).unwrap(), 76_671_447_613.673_21, max_relative = 1e-12);

        let mut excl = params();
        excl.interference = InterferenceMode::ExcludeServing;
        assert_relative_eq!(rate_bps(&geom, &excl).unwrap(), 162_599_625_820.627_7, max_relative = 1e-12);
    }

    #[test]
    fn update_rate_division() {
        let p = params();
        assert_eq!(update_rate(1e8, &p).unwrap(), 10.0);
        assert_eq!(update_rate(0.0, &p).unwrap(), 0.0);
        assert!(update_rate(-1.0, &p).is_err());
    }

    proptest! {
        #[test]
        fn gain_decreasing_in_distance_and_absorption(d in 0.1f64..200.0, step in 0.01f64..50.0, k in 1e-5f64..0.1, dk in 1e-5f64..0.1) {
            let mut p = params();
            p.absorption_per_m = k;
            prop_assert!(channel_gain(d, &p).unwrap() > channel_gain(d + step, &p).unwrap());
            let g = channel_gain(d, &p).unwrap();
            p.absorption_per_m = k + dk;
            prop_assert!(channel_gain(d, &p).unwrap() < g);
        }

        #[test]
        fn noise_bounded_below_by_floor(ds in proptest::collection::vec(0.5f64..100.0, 1..6)) {
            let p = params();
            let geom = LinkGeometry::new(0, ds).unwrap();
            prop_assert!(noise_plus_interference(&geom, &p).unwrap() > p.thermal_noise());
        }

        #[test]
        fn rate_grows_with_elements_and_power(d in 1.0f64..60.0, n in 1u32..200, p_w in 0.01f64..5.0) {
            let geom = LinkGeometry::new(1, vec![d + 3.0, d, d + 10.0]).unwrap();
            let mut p = params();
            p.meta_surfaces = n;
            p.tx_power_w = p_w;
            let base = rate_bps(&geom, &p).unwrap();
            let mut more = p.clone();
            more.meta_surfaces = 2 * n;
            prop_assert!(rate_bps(&geom, &more).unwrap() > base);
            let mut louder = p.clone();
            louder.tx_power_w = 2.0 * p_w;
            prop_assert!(rate_bps(&geom, &louder).unwrap() > base);
        }

        #[test]
        fn update_rate_is_linear(rate in 0.0f64..1e12, c in 0.0f64..100.0) {
            let p = params();
            let lhs = update_rate(c * rate, &p).unwrap();
            let rhs = c * update_rate(rate, &p).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-12 * rhs.abs().max(1e-300));
        }
    }
}
