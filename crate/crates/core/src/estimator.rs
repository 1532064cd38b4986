//! Noise-power and SNR estimation.
//!
//! With a known (calibrated) noise floor and a Gaussian primary signal, the
//! maximum-likelihood SNR estimate is the excess-power estimator
//! `max(0, mean|y|^2 / σ̂² - 1)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::SampleBlock;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub gamma_hat: f64,
    pub n_used: usize,
    pub noise_power_used: f64,
}

impl SnrEstimate {
    pub fn new(gamma_hat: f64, n_used: usize, noise_power_used: f64) -> Result<Self> {
        if !(gamma_hat.is_finite() && gamma_hat >= 0.0) {
            return Err(Error::domain(format!("gamma_hat must be >= 0, got {gamma_hat}")));
        }
        if n_used == 0 {
            return Err(Error::domain("estimate must be backed by at least one sample"));
        }
        if !(noise_power_used.is_finite() && noise_power_used > 0.0) {
            return Err(Error::domain(format!(
                "noise power must be positive, got {noise_power_used}"
            )));
        }
        Ok(SnrEstimate {
            gamma_hat,
            n_used,
            noise_power_used,
        })
    }

    pub fn gamma_db(&self) -> f64 {
        crate::signals::linear_to_db(self.gamma_hat)
    }
}

/// Mean `|w(n)|^2` of a block assumed to be noise only.
///
/// An all-zero block yields 0; [`estimate_snr`] rejects that downstream.
pub fn estimate_noise_power(noise_block: &SampleBlock) -> f64 {
    noise_block.mean_power()
}

pub fn estimate_snr(block: &SampleBlock, noise_power: f64) -> Result<SnrEstimate> {
    excess_power_snr(block.mean_power(), block.len(), noise_power)
}

/// Excess-power estimate from an already-computed mean power.
pub fn excess_power_snr(mean_power: f64, n_used: usize, noise_power: f64) -> Result<SnrEstimate> {
    if !(noise_power.is_finite() && noise_power > 0.0) {
        return Err(Error::domain(format!(
            "noise power must be positive, got {noise_power}"
        )));
    }
    let gamma_hat = (mean_power / noise_power - 1.0).max(0.0);
    SnrEstimate::new(gamma_hat, n_used, noise_power)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::{gen_block, Hypothesis, NoiseModel, Snr};
    use num_complex::Complex64;
    use proptest::prelude::*;

    #[test]
    fn zero_block_gives_zero_power_and_snr_rejects_it() {
        let b = SampleBlock::new(vec![Complex64::new(0.0, 0.0); 8]).unwrap();
        let p = estimate_noise_power(&b);
        assert_eq!(p, 0.0);
        assert!(matches!(estimate_snr(&b, p), Err(Error::Domain(_))));
    }

    #[test]
    fn constant_magnitude_two() {
        let b = SampleBlock::new(
            (0..10)
                .map(|k| Complex64::from_polar(2.0, k as f64))
                .collect(),
        )
        .unwrap();
        assert!((estimate_noise_power(&b) - 4.0).abs() < 1e-14);
        let exact = SampleBlock::new(vec![Complex64::new(2.0, 0.0), Complex64::new(0.0, -2.0)])
            .unwrap();
        assert_eq!(estimate_noise_power(&exact), 4.0);
    }

    #[test]
    fn noise_power_lln() {
        let b = gen_block(
            Hypothesis::NoiseOnly,
            100_000,
            Snr::new(0.0).unwrap(),
            &NoiseModel::exact(1.0).unwrap(),
            2024,
        )
        .unwrap();
        let p = estimate_noise_power(&b);
        assert!((0.99..=1.01).contains(&p), "{p}");
    }

    #[test]
    fn noise_only_clips_to_zero_or_near() {
        let noise = NoiseModel::exact(1.0).unwrap();
        let b = gen_block(Hypothesis::NoiseOnly, 10_000, Snr::new(0.0).unwrap(), &noise, 8).unwrap();
        let est = estimate_snr(&b, 1.0).unwrap();
        assert!(est.gamma_hat < 0.05);
        assert!(est.gamma_hat >= 0.0);
    }

    #[test]
    fn exact_double_power_is_zero_db() {
        let b = SampleBlock::new(vec![Complex64::new(1.0, 1.0); 4]).unwrap();
        let est = estimate_snr(&b, 1.0).unwrap();
        assert_eq!(est.gamma_hat, 1.0);
        assert_eq!(est.n_used, 4);
        assert_eq!(est.gamma_db(), 0.0);
    }

    #[test]
    fn monte_carlo_bias_at_zero_db() {
        let noise = NoiseModel::exact(1.0).unwrap();
        let snr = Snr::new(1.0).unwrap();
        let mean: f64 = (0..100)
            .map(|seed| {
                let b = gen_block(Hypothesis::SignalPlusNoise, 10_000, snr, &noise, seed).unwrap();
                estimate_snr(&b, 1.0).unwrap().gamma_hat
            })
            .sum::<f64>()
            / 100.0;
        assert!(crate::signals::linear_to_db(mean).abs() <= 0.5, "{mean}");
    }

    #[test]
    fn rejects_nonpositive_noise() {
        let b = SampleBlock::new(vec![Complex64::new(1.0, 0.0)]).unwrap();
        assert!(estimate_snr(&b, 0.0).is_err());
        assert!(estimate_snr(&b, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn nonnegative_and_monotone(p1 in 0.0f64..10.0, dp in 0.0f64..5.0, noise in 0.1f64..5.0) {
            let a = excess_power_snr(p1, 10, noise).unwrap().gamma_hat;
            let b = excess_power_snr(p1 + dp, 10, noise).unwrap().gamma_hat;
            prop_assert!(a >= 0.0);
            prop_assert!(b >= a);
        }

        #[test]
        fn ratio_invariant(p in 0.0f64..10.0, noise in 0.1f64..5.0, k in 0.01f64..100.0) {
            let a = excess_power_snr(p, 10, noise).unwrap().gamma_hat;
            let b = excess_power_snr(p * k, 10, noise * k).unwrap().gamma_hat;
            prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
        }
    }
}
