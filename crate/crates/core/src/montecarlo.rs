//! Empirical detection and false-alarm rates, ROC sweeps and
//! samples-vs-SNR tables.
//!
//! Every trial draws from its own ChaCha stream keyed by
//! `(master seed, 2 * trial index + hypothesis)`, so counts do not depend on
//! how rayon splits the work, and a run over `0..n` equals the pooled runs
//! over `0..k` and `k..n`.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adaptive::{compute_threshold, solve_samples, Targets};
use crate::detector::{energy_statistic_of, mean_power, DetectorConfig};
use crate::error::{Error, Result};
use crate::signals::{fill_samples, stream_rng, Hypothesis, NoiseModel, SignalKind, Snr};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub snr: Snr,
    pub noise: NoiseModel,
    pub block_len: usize,
    #[serde(default)]
    pub signal: SignalKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialConfig {
    pub detector: DetectorConfig,
    pub scenario: Scenario,
    /// Trials per hypothesis.
    pub trials: u64,
    pub seed: u64,
}

/// Occupied fraction with a 95% Wald half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEstimate {
    pub occupied: u64,
    pub trials: u64,
    pub rate: f64,
    pub half_width: f64,
}

impl RateEstimate {
    pub fn from_counts(occupied: u64, trials: u64) -> Result<Self> {
        if trials == 0 {
            return Err(Error::UndefinedEstimate("rate over zero trials".into()));
        }
        let rate = occupied as f64 / trials as f64;
        Ok(RateEstimate {
            occupied,
            trials,
            rate,
            half_width: Z95 * (rate * (1.0 - rate) / trials as f64).sqrt(),
        })
    }

    /// Binomial standard deviation at the observed rate.
    pub fn std_error(&self) -> f64 {
        (self.rate * (1.0 - self.rate) / self.trials as f64).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub pf: RateEstimate,
    pub pd: RateEstimate,
}

#[inline]
fn trial_stream(trial: u64, hyp: Hypothesis) -> u64 {
    trial.wrapping_mul(2).wrapping_add(hyp.stream_tag())
}

fn validate_scenario(s: &Scenario) -> Result<()> {
    if s.block_len == 0 {
        return Err(Error::domain("block length must be >= 1"));
    }
    Ok(())
}

/// Number of Occupied decisions over the given trial indices.
pub fn count_occupied(config: &TrialConfig, hyp: Hypothesis, trials: Range<u64>) -> Result<u64> {
    validate_scenario(&config.scenario)?;
    let sc = config.scenario;
    let det = config.detector;
    // validates p once; the per-trial calls below cannot fail
    energy_statistic_of(&[Complex64::new(1.0, 0.0)], det.p())?;
    let count = trials
        .into_par_iter()
        .map_init(Vec::new, |buf: &mut Vec<Complex64>, i| {
            let mut rng = stream_rng(config.seed, trial_stream(i, hyp));
            let noise_power = sc.noise.realize_with(&mut rng);
            fill_samples(&mut rng, buf, sc.block_len, hyp, sc.snr, noise_power, sc.signal);
            det.detect_samples(buf).map(|d| d.is_occupied()).unwrap_or(false)
        })
        .filter(|&occupied| occupied)
        .count();
    Ok(count as u64)
}

/// Occupied fraction under one hypothesis.
pub fn estimate_rate(config: &TrialConfig, hyp: Hypothesis) -> Result<RateEstimate> {
    if config.trials == 0 {
        return Err(Error::UndefinedEstimate(format!("zero {hyp:?} trials")));
    }
    let occupied = count_occupied(config, hyp, 0..config.trials)?;
    RateEstimate::from_counts(occupied, config.trials)
}

/// Empirical Pf (H0 trials) and Pd (H1 trials).
pub fn run_trials(config: &TrialConfig) -> Result<TrialOutcome> {
    Ok(TrialOutcome {
        pf: estimate_rate(config, Hypothesis::NoiseOnly)?,
        pd: estimate_rate(config, Hypothesis::SignalPlusNoise)?,
    })
}

/// Scenario shared by the two detectors of an ROC comparison.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocScenario {
    pub snr: Snr,
    /// Nominal power plus how the per-trial actual power is drawn.
    pub noise: NoiseModel,
    pub n_samples: usize,
    /// Noise-only samples the adaptive detector re-estimates σ̂² from.
    pub calibration_len: usize,
    #[serde(default)]
    pub signal: SignalKind,
}

impl RocScenario {
    /// Uses the solver's sample count for the scenario SNR.
    pub fn with_planned_samples(mut self, targets: &Targets) -> Result<Self> {
        self.n_samples = solve_samples(self.snr, targets)?;
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub pf_target: f64,
    pub pf: f64,
    pub pd: f64,
    pub pf_half_width: f64,
    pub pd_half_width: f64,
    pub trials: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    pub label: String,
    pub points: Vec<RocPoint>,
}

impl RocCurve {
    fn new(label: &str, mut points: Vec<RocPoint>) -> Self {
        points.sort_by(|a, b| a.pf.total_cmp(&b.pf).then(a.pd.total_cmp(&b.pd)));
        RocCurve {
            label: label.to_string(),
            points,
        }
    }

    /// Piecewise-linear Pd at a false-alarm rate, anchored at (0, 0) and (1, 1).
    pub fn pd_at(&self, pf: f64) -> f64 {
        let mut knots = Vec::with_capacity(self.points.len() + 2);
        knots.push((0.0, 0.0));
        knots.extend(self.points.iter().map(|p| (p.pf, p.pd)));
        knots.push((1.0, 1.0));
        let pf = pf.clamp(0.0, 1.0);
        // last knot at or left of pf, first knot at or right of it
        let right = knots.iter().position(|&(x, _)| x >= pf).unwrap_or(knots.len() - 1);
        let (x1, y1) = knots[right];
        if x1 == pf || right == 0 {
            // several knots may share pf; take the best
            return knots
                .iter()
                .filter(|&&(x, _)| x == x1)
                .map(|&(_, y)| y)
                .fold(y1, f64::max);
        }
        let (x0, y0) = knots[right - 1];
        y0 + (y1 - y0) * (pf - x0) / (x1 - x0)
    }

    /// Pd nondecreasing in Pf up to the pooled half-widths of neighbours.
    pub fn is_monotone(&self) -> bool {
        self.points.windows(2).all(|w| {
            let slack = w[0].pd_half_width + w[1].pd_half_width + 1e-12;
            w[1].pd + slack >= w[0].pd
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocPair {
    pub adaptive: RocCurve,
    pub conventional: RocCurve,
}

/// Largest adaptive-minus-conventional Pd gap, over adaptive points with
/// empirical Pf at most `max_pf`, comparing at the adaptive point's Pf.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchedGap {
    pub pf: f64,
    pub adaptive_pd: f64,
    pub conventional_pd: f64,
    pub gap: f64,
}

impl RocPair {
    pub fn best_gap(&self, max_pf: f64) -> Option<MatchedGap> {
        self.adaptive
            .points
            .iter()
            .filter(|p| p.pf <= max_pf)
            .map(|p| {
                let conventional_pd = self.conventional.pd_at(p.pf);
                MatchedGap {
                    pf: p.pf,
                    adaptive_pd: p.pd,
                    conventional_pd,
                    gap: p.pd - conventional_pd,
                }
            })
            .max_by(|a, b| a.gap.total_cmp(&b.gap))
    }
}

/// Adaptive vs fixed-threshold ROC under the same random draws.
///
/// Each trial realizes a noise power from the scenario's model, draws a
/// noise-only calibration block and a sensing block at that power. The
/// adaptive detector thresholds at `compute_threshold(σ̂², N, pf)` with σ̂²
/// from the calibration block; the conventional one at
/// `compute_threshold(nominal, N, pf)`.
pub fn roc_sweep(scenario: &RocScenario, pf_grid: &[f64], trials: u64, seed: u64) -> Result<RocPair> {
    if pf_grid.is_empty() {
        return Err(Error::domain("pf grid is empty"));
    }
    if !pf_grid.windows(2).all(|w| w[0] < w[1]) || pf_grid[0] <= 0.0 || pf_grid[pf_grid.len() - 1] >= 1.0 {
        return Err(Error::domain("pf grid must be strictly increasing inside (0, 1)"));
    }
    if trials == 0 {
        return Err(Error::UndefinedEstimate("zero ROC trials".into()));
    }
    if scenario.n_samples == 0 || scenario.calibration_len == 0 {
        return Err(Error::domain("sample and calibration lengths must be >= 1"));
    }
    // λ = σ² · scale for each grid point
    let scales: Vec<f64> = pf_grid
        .iter()
        .map(|&pf| compute_threshold(1.0, scenario.n_samples, pf))
        .collect::<Result<_>>()?;
    let nominal = scenario.noise.nominal_power();
    let k = scales.len();

    let counts_for = |hyp: Hypothesis| -> Vec<u64> {
        (0..trials)
            .into_par_iter()
            .fold(
                || (vec![0u64; 2 * k], Vec::new()),
                |(mut counts, mut buf): (Vec<u64>, Vec<Complex64>), i| {
                    let mut rng = stream_rng(seed, trial_stream(i, hyp));
                    let power = scenario.noise.realize_with(&mut rng);
                    let none = Snr::new(0.0).expect("zero SNR is valid");
                    fill_samples(&mut rng, &mut buf, scenario.calibration_len, Hypothesis::NoiseOnly, none, power, scenario.signal);
                    let noise_hat = mean_power(&buf);
                    fill_samples(&mut rng, &mut buf, scenario.n_samples, hyp, scenario.snr, power, scenario.signal);
                    let stat = mean_power(&buf);
                    for (j, scale) in scales.iter().enumerate() {
                        counts[j] += u64::from(stat > noise_hat * scale);
                        counts[k + j] += u64::from(stat > nominal * scale);
                    }
                    (counts, buf)
                },
            )
            .map(|(counts, _)| counts)
            .reduce(
                || vec![0u64; 2 * k],
                |mut a, b| {
                    a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                    a
                },
            )
    };
    let h0 = counts_for(Hypothesis::NoiseOnly);
    let h1 = counts_for(Hypothesis::SignalPlusNoise);

    let curve = |label: &str, offset: usize| -> Result<RocCurve> {
        let points = pf_grid
            .iter()
            .enumerate()
            .map(|(j, &pf_target)| {
                let pf = RateEstimate::from_counts(h0[offset + j], trials)?;
                let pd = RateEstimate::from_counts(h1[offset + j], trials)?;
                Ok(RocPoint {
                    pf_target,
                    pf: pf.rate,
                    pd: pd.rate,
                    pf_half_width: pf.half_width,
                    pd_half_width: pd.half_width,
                    trials,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(RocCurve::new(label, points))
    };
    Ok(RocPair {
        adaptive: curve("adaptive", 0)?,
        conventional: curve("conventional", k)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplesRow {
    pub snr_db: f64,
    /// `None` when no finite sample count exists.
    pub n_samples: Option<usize>,
    pub satisfiable: bool,
}

/// Inclusive dB grid `from, from + step, …` up to `to`.
pub fn db_grid(from: f64, to: f64, step: f64) -> Result<Vec<f64>> {
    if !(from.is_finite() && to.is_finite() && step.is_finite() && step > 0.0 && to >= from) {
        return Err(Error::domain(format!(
            "bad dB grid from={from} to={to} step={step}"
        )));
    }
    let count = ((to - from) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| from + i as f64 * step).collect())
}

pub fn samples_vs_snr(grid_db: &[f64], targets: &Targets) -> Result<Vec<SamplesRow>> {
    if grid_db.is_empty() {
        return Err(Error::domain("SNR grid is empty"));
    }
    let mut rows = grid_db
        .iter()
        .map(|&db| {
            let n = Snr::from_db(db).and_then(|s| solve_samples(s, targets));
            match n {
                Ok(n) => Ok(SamplesRow {
                    snr_db: db,
                    n_samples: Some(n),
                    satisfiable: true,
                }),
                Err(Error::Unsatisfiable(_)) => Ok(SamplesRow {
                    snr_db: db,
                    n_samples: None,
                    satisfiable: false,
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db));
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::adaptive::closed_form_probabilities;
    use crate::signals::NoiseRealization;

    fn config(threshold: f64, snr_lin: f64, block_len: usize, trials: u64, seed: u64) -> TrialConfig {
        TrialConfig {
            detector: DetectorConfig::energy(threshold).unwrap(),
            scenario: Scenario {
                snr: Snr::new(snr_lin).unwrap(),
                noise: NoiseModel::exact(1.0).unwrap(),
                block_len,
                signal: SignalKind::Gaussian,
            },
            trials,
            seed,
        }
    }

    #[test]
    fn zero_threshold_always_detects() {
        let out = run_trials(&config(0.0, 0.1, 16, 500, 1)).unwrap();
        assert_eq!(out.pd.rate, 1.0);
        assert_eq!(out.pf.rate, 1.0);
    }

    #[test]
    fn huge_threshold_never_fires() {
        let out = run_trials(&config(1e3, 0.1, 16, 500, 1)).unwrap();
        assert_eq!(out.pf.rate, 0.0);
        assert_eq!(out.pf.half_width, 0.0);
    }

    #[test]
    fn zero_trials_is_undefined() {
        let err = run_trials(&config(1.0, 0.1, 16, 0, 1)).unwrap_err();
        assert!(matches!(err, Error::UndefinedEstimate(_)));
    }

    #[test]
    fn split_runs_pool_exactly() {
        let cfg = config(1.05, 0.1, 64, 3000, 77);
        for hyp in [Hypothesis::NoiseOnly, Hypothesis::SignalPlusNoise] {
            let full = count_occupied(&cfg, hyp, 0..3000).unwrap();
            let a = count_occupied(&cfg, hyp, 0..1234).unwrap();
            let b = count_occupied(&cfg, hyp, 1234..3000).unwrap();
            assert_eq!(full, a + b);
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = config(1.1, 0.2, 50, 4000, 9);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| run_trials(&cfg).unwrap())
        };
        assert_eq!(run(1), run(4));
    }

    #[test]
    fn empirical_matches_closed_form_in_clt_regime() {
        // three grid points at N = 1000
        for (pf_target, g) in [(0.05, 0.05), (0.1, 0.08), (0.3, 0.03)] {
            let n = 1000;
            let lambda = compute_threshold(1.0, n, pf_target).unwrap();
            let out = run_trials(&config(lambda, g, n, 20_000, 5)).unwrap();
            let cf = closed_form_probabilities(lambda, 1.0, Snr::new(g).unwrap(), n).unwrap();
            let pf_tol = 3.0 * (cf.pf * (1.0 - cf.pf) / 20_000.0).sqrt();
            let pd_tol = 3.0 * (cf.pd * (1.0 - cf.pd) / 20_000.0).sqrt();
            // the exact gamma law is skewed; allow for the finite-N bias on top
            let skew_bias = 0.01;
            assert!((out.pf.rate - cf.pf).abs() <= pf_tol + skew_bias, "pf {} vs {}", out.pf.rate, cf.pf);
            assert!((out.pd.rate - cf.pd).abs() <= pd_tol + skew_bias, "pd {} vs {}", out.pd.rate, cf.pd);
        }
    }

    #[test]
    fn rate_estimate_half_width() {
        let r = RateEstimate::from_counts(25, 100).unwrap();
        assert_eq!(r.rate, 0.25);
        assert!((r.half_width - Z95 * (0.25f64 * 0.75 / 100.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn samples_table() {
        let targets = Targets::new(0.1, 0.7).unwrap();
        let rows = samples_vs_snr(&[0.0, -10.0], &targets).unwrap();
        assert_eq!(rows[0].snr_db, -10.0);
        assert_eq!(rows[0].n_samples, Some(345));
        assert_eq!(rows[1].n_samples, Some(5));
        let rows = samples_vs_snr(&[f64::NEG_INFINITY], &targets).unwrap();
        assert!(!rows[0].satisfiable);
        assert!(samples_vs_snr(&[], &targets).is_err());
    }

    #[test]
    fn grid_is_inclusive() {
        let g = db_grid(-15.0, 0.0, 1.0).unwrap();
        assert_eq!(g.len(), 16);
        assert_eq!(g[15], 0.0);
        assert!(db_grid(0.0, -1.0, 1.0).is_err());
        assert!(db_grid(0.0, 1.0, 0.0).is_err());
    }

    fn roc_scenario(rho: f64, realization: NoiseRealization) -> RocScenario {
        RocScenario {
            snr: Snr::from_db(-10.0).unwrap(),
            noise: NoiseModel::new(1.0, rho, realization).unwrap(),
            n_samples: 345,
            calibration_len: 20_000,
            signal: SignalKind::Gaussian,
        }
    }

    #[test]
    fn roc_curves_coincide_without_uncertainty() {
        let grid = [0.01, 0.05, 0.1, 0.2, 0.4];
        let pair = roc_sweep(&roc_scenario(0.0, NoiseRealization::Nominal), &grid, 4000, 3).unwrap();
        for (a, c) in pair.adaptive.points.iter().zip(&pair.conventional.points) {
            assert!((a.pf - c.pf).abs() <= a.pf_half_width + c.pf_half_width);
            assert!((a.pd - c.pd).abs() <= a.pd_half_width + c.pd_half_width);
        }
        assert!(pair.adaptive.is_monotone() && pair.conventional.is_monotone());
    }

    #[test]
    fn roc_gap_under_uncertainty() {
        let targets = Targets::new(0.1, 0.7).unwrap();
        let scenario = RocScenario {
            snr: Snr::from_db(-12.0).unwrap(),
            ..roc_scenario(1.0, NoiseRealization::UniformDraw)
        }
        .with_planned_samples(&targets)
        .unwrap();
        assert_eq!(scenario.n_samples, 849);
        let grid = [0.01, 0.02, 0.05, 0.1, 0.2, 0.3];
        let pair = roc_sweep(&scenario, &grid, 3000, 4).unwrap();
        let gap = pair.best_gap(1.0).unwrap();
        assert!(gap.gap >= 0.5, "{gap:?}");
        assert!(pair.adaptive.is_monotone());
        assert!(pair.conventional.is_monotone());
    }

    #[test]
    fn roc_rejects_bad_grid() {
        let s = roc_scenario(0.0, NoiseRealization::Nominal);
        assert!(roc_sweep(&s, &[0.2, 0.1], 10, 1).is_err());
        assert!(roc_sweep(&s, &[0.0, 0.1], 10, 1).is_err());
        assert!(roc_sweep(&s, &[], 10, 1).is_err());
    }

    #[test]
    fn pd_interpolation() {
        let pt = |pf, pd| RocPoint {
            pf_target: pf,
            pf,
            pd,
            pf_half_width: 0.0,
            pd_half_width: 0.0,
            trials: 1,
        };
        let c = RocCurve::new("x", vec![pt(0.5, 0.9), pt(0.2, 0.6)]);
        assert_eq!(c.points[0].pf, 0.2);
        assert!((c.pd_at(0.1) - 0.3).abs() < 1e-12);
        assert!((c.pd_at(0.35) - 0.75).abs() < 1e-12);
        assert_eq!(c.pd_at(0.2), 0.6);
        assert!((c.pd_at(0.75) - 0.95).abs() < 1e-12);
        assert_eq!(c.pd_at(0.0), 0.0);
    }
}
