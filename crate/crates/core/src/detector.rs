//! Generalized energy statistic `(1/N) Σ |y(n)|^p` and the threshold test.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::SampleBlock;

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    #[inline]
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub(crate) fn total(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Blocks at least this long are accumulated with compensation.
const COMPENSATED_MIN_LEN: usize = 1_000_000;

fn mean_of(samples: &[Complex64], f: impl Fn(&Complex64) -> f64) -> f64 {
    let n = samples.len() as f64;
    if samples.len() >= COMPENSATED_MIN_LEN {
        let mut acc = CompensatedSum::default();
        samples.iter().for_each(|s| acc.add(f(s)));
        acc.total() / n
    } else {
        samples.iter().map(f).sum::<f64>() / n
    }
}

/// Mean `|y|^2`; callers guarantee a non-empty slice.
pub(crate) fn mean_power(samples: &[Complex64]) -> f64 {
    mean_of(samples, Complex64::norm_sqr)
}

pub fn energy_statistic(block: &SampleBlock, p: f64) -> Result<f64> {
    energy_statistic_of(block.samples(), p)
}

/// [`energy_statistic`] over a raw slice.
pub fn energy_statistic_of(samples: &[Complex64], p: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::domain("energy statistic of an empty block"));
    }
    if !(p.is_finite() && p > 0.0) {
        return Err(Error::domain(format!("exponent p must be positive, got {p}")));
    }
    Ok(if p == 2.0 {
        mean_power(samples)
    } else if p == 1.0 {
        mean_of(samples, |s| s.norm())
    } else {
        mean_of(samples, |s| s.norm().powf(p))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occupancy {
    Occupied,
    Vacant,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Decision {
    pub occupancy: Occupancy,
    pub statistic: f64,
}

impl Decision {
    pub fn is_occupied(&self) -> bool {
        self.occupancy == Occupancy::Occupied
    }
}

/// Occupied iff `statistic > threshold`; a tie is Vacant.
pub fn decide(statistic: f64, threshold: f64) -> Decision {
    let occupancy = if statistic > threshold {
        Occupancy::Occupied
    } else {
        Occupancy::Vacant
    };
    Decision {
        occupancy,
        statistic,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    p: f64,
    threshold: f64,
}

impl DetectorConfig {
    pub fn new(p: f64, threshold: f64) -> Result<Self> {
        if !(p.is_finite() && p > 0.0) {
            return Err(Error::domain(format!("exponent p must be positive, got {p}")));
        }
        if !(threshold.is_finite() && threshold >= 0.0) {
            return Err(Error::domain(format!(
                "threshold must be finite and >= 0, got {threshold}"
            )));
        }
        Ok(DetectorConfig { p, threshold })
    }

    /// Conventional (p = 2) energy detector.
    pub fn energy(threshold: f64) -> Result<Self> {
        Self::new(2.0, threshold)
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn detect(&self, block: &SampleBlock) -> Result<Decision> {
        Ok(decide(energy_statistic(block, self.p)?, self.threshold))
    }

    pub(crate) fn detect_samples(&self, samples: &[Complex64]) -> Result<Decision> {
        Ok(decide(energy_statistic_of(samples, self.p)?, self.threshold))
    }
}
