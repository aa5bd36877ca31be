//! Device-to-device parameter sampling for Monte Carlo robustness runs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceParams;

#[derive(Debug, Error, PartialEq)]
pub enum SamplingError {
    #[error("relative sigma {0} outside [0, 0.5]")]
    InvalidSigma(f64),
    #[error("verify window {0} must be >= 1")]
    InvalidWindow(f64),
    #[error("no sample satisfied the parameter invariants after {0} retries")]
    SamplingFailed(u32),
}

/// Relative spreads applied on top of the nominal parameters.
///
/// `r_lrs` and `r_hrs` get independent lognormal multipliers, `v_th` a
/// truncated normal; samples are redrawn until they land inside the
/// configured bands, the write-verify window and the `DeviceParams`
/// invariants.
///
/// The window models iterative program-and-verify: cells are re-programmed
/// until the resistance lands within `r_window` of the target, so the
/// population that actually computes is much tighter than the raw
/// device-to-device spread. Without it, two nominally identical LRS cells
/// can differ by over 2x and the voltage-divider margins of the
/// non-switching gate corners collapse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VariabilitySpec {
    /// Relative sigma of the v_th normal distribution.
    pub sigma_v_th: f64,
    /// Lognormal sigma applied to both resistance states.
    pub sigma_r: f64,
    /// Write-verify acceptance window: resistances are redrawn until they
    /// fall within nominal/r_window ..= nominal*r_window. Must be >= 1.
    pub r_window: f64,
    /// Support half-width of the v_th distribution, in sigmas; draws
    /// outside nominal +/- v_th_support * sigma are rejected.
    pub v_th_support: f64,
    /// Sampled r_lrs is kept at or below this band edge.
    pub lrs_max: f64,
    /// Sampled r_hrs is kept at or above this band edge.
    pub hrs_min: f64,
    /// Resample budget before giving up.
    pub max_retries: u32,
}

impl Default for VariabilitySpec {
    fn default() -> Self {
        VariabilitySpec {
            sigma_v_th: 0.05,
            sigma_r: 0.20,
            r_window: 1.25,
            v_th_support: 2.0,
            lrs_max: 10e3,
            hrs_min: 100e3,
            max_retries: 1000,
        }
    }
}

impl VariabilitySpec {
    pub fn none() -> Self {
        VariabilitySpec {
            sigma_v_th: 0.0,
            sigma_r: 0.0,
            ..Default::default()
        }
    }

    pub fn is_zero(&self) -> bool {
        self.sigma_v_th == 0.0 && self.sigma_r == 0.0
    }
}

/// Draw one device from the nominal parameters. Deterministic for a given
/// seed; `sigma = 0` returns the nominal parameters bit-identically.
pub fn sample_device(
    nominal: &DeviceParams,
    spec: &VariabilitySpec,
    seed: u64,
) -> Result<DeviceParams, SamplingError> {
    for s in [spec.sigma_v_th, spec.sigma_r] {
        if !(0.0..=0.5).contains(&s) {
            return Err(SamplingError::InvalidSigma(s));
        }
    }
    if spec.r_window < 1.0 {
        return Err(SamplingError::InvalidWindow(spec.r_window));
    }
    if spec.is_zero() {
        return Ok(*nominal);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lrs_dist = LogNormal::new(nominal.r_lrs.ln(), spec.sigma_r).expect("valid lognormal");
    let hrs_dist = LogNormal::new(nominal.r_hrs.ln(), spec.sigma_r).expect("valid lognormal");
    let vth_dist = Normal::new(nominal.v_th, spec.sigma_v_th * nominal.v_th).expect("valid normal");
    let vth_half = spec.v_th_support * spec.sigma_v_th * nominal.v_th;
    let in_window = |r: f64, nom: f64| r >= nom / spec.r_window && r <= nom * spec.r_window;
    for _ in 0..spec.max_retries {
        let mut p = *nominal;
        p.r_lrs = lrs_dist.sample(&mut rng);
        p.r_hrs = hrs_dist.sample(&mut rng);
        p.v_th = vth_dist.sample(&mut rng);
        let in_bands = p.r_lrs <= spec.lrs_max && p.r_hrs >= spec.hrs_min;
        let verified = in_window(p.r_lrs, nominal.r_lrs) && in_window(p.r_hrs, nominal.r_hrs);
        let vth_ok = (p.v_th - nominal.v_th).abs() <= vth_half;
        if in_bands && verified && vth_ok && p.validate().is_ok() {
            return Ok(p);
        }
    }
    Err(SamplingError::SamplingFailed(spec.max_retries))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_sigma_returns_nominal() {
        let nominal = DeviceParams::default();
        let s = sample_device(&nominal, &VariabilitySpec::none(), 42).unwrap();
        assert_eq!(s, nominal);
    }

    #[test]
    fn same_seed_same_result() {
        let nominal = DeviceParams::default();
        let spec = VariabilitySpec::default();
        let a = sample_device(&nominal, &spec, 7).unwrap();
        let b = sample_device(&nominal, &spec, 7).unwrap();
        assert_eq!(a, b);
        let c = sample_device(&nominal, &spec, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn samples_stay_in_bands() {
        let nominal = DeviceParams::default();
        let spec = VariabilitySpec::default();
        for seed in 0..500 {
            let p = sample_device(&nominal, &spec, seed).unwrap();
            assert!(p.r_lrs <= spec.lrs_max);
            assert!(p.r_hrs >= spec.hrs_min);
            assert!(p.r_lrs >= nominal.r_lrs / spec.r_window);
            assert!(p.r_lrs <= nominal.r_lrs * spec.r_window);
            assert!(p.r_hrs >= nominal.r_hrs / spec.r_window);
            assert!(p.r_hrs <= nominal.r_hrs * spec.r_window);
            assert!((p.v_th - nominal.v_th).abs() <= 2.0 * 0.05 * nominal.v_th);
            p.validate().unwrap();
        }
    }

    #[test]
    fn empirical_mean_tracks_nominal() {
        // law-of-large-numbers check at sigma_r = 0.1
        let nominal = DeviceParams::default();
        let spec = VariabilitySpec {
            sigma_r: 0.1,
            sigma_v_th: 0.0,
            ..Default::default()
        };
        let n = 1000;
        let mean: f64 = (0..n)
            .map(|s| sample_device(&nominal, &spec, s).unwrap().r_lrs)
            .sum::<f64>()
            / n as f64;
        assert!(
            (mean - nominal.r_lrs).abs() / nominal.r_lrs < 0.03,
            "mean {mean}"
        );
    }

    #[test]
    fn rejects_out_of_range_sigma() {
        let nominal = DeviceParams::default();
        let spec = VariabilitySpec {
            sigma_r: 0.6,
            ..Default::default()
        };
        assert_eq!(
            sample_device(&nominal, &spec, 0),
            Err(SamplingError::InvalidSigma(0.6))
        );
    }

    #[test]
    fn impossible_bands_fail_after_budget() {
        let nominal = DeviceParams::default();
        let spec = VariabilitySpec {
            sigma_r: 0.01,
            lrs_max: 1.0, // unreachable band
            max_retries: 16,
            ..Default::default()
        };
        assert_eq!(
            sample_device(&nominal, &spec, 0),
            Err(SamplingError::SamplingFailed(16))
        );
    }
}
