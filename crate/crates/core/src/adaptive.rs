//! Closed-form detection theory for the p = 2 energy statistic, the CFAR
//! threshold, the sample-count solver and the iterative sensing loop.
//!
//! For `N` complex circular Gaussian noise samples of power `σ²` the
//! statistic is asymptotically normal with
//!
//! ```text
//! H0:  μ0 = σ²           σ0 = σ² / √N
//! H1:  μ1 = σ²(1 + γ)    σ1 = σ² √(2γ + 1) / √N
//! ```
//!
//! so `Pf = Q((λ - μ0)/σ0)` and `Pd = Q((λ - μ1)/σ1)`. The CFAR threshold
//! pins `Pf` and the solver picks the smallest `N` that lifts `Pd` to target.

use num_complex::Complex64;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detector::{decide, energy_statistic, Decision};
use crate::error::{Error, Result};
use crate::estimator::{estimate_noise_power, excess_power_snr, SnrEstimate};
use crate::numerics::{q, q_inv, Probability};
use crate::signals::{fill_samples, stream_rng, Hypothesis, SampleBlock, SignalKind, Snr};

/// Desired false-alarm and detection probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawTargets", into = "RawTargets")]
pub struct Targets {
    pf: Probability,
    pd: Probability,
}

#[derive(Serialize, Deserialize)]
struct RawTargets {
    pf_target: f64,
    pd_target: f64,
}

impl TryFrom<RawTargets> for Targets {
    type Error = Error;

    fn try_from(raw: RawTargets) -> Result<Self> {
        Targets::new(raw.pf_target, raw.pd_target)
    }
}

impl From<Targets> for RawTargets {
    fn from(t: Targets) -> Self {
        RawTargets {
            pf_target: t.pf(),
            pd_target: t.pd(),
        }
    }
}

impl Targets {
    /// Requires `0 < pf < pd < 1`.
    pub fn new(pf: f64, pd: f64) -> Result<Self> {
        if !(pf > 0.0 && pf < pd && pd < 1.0) {
            return Err(Error::domain(format!(
                "targets need 0 < pf < pd < 1, got pf={pf} pd={pd}"
            )));
        }
        Ok(Targets {
            pf: Probability::new(pf)?,
            pd: Probability::new(pd)?,
        })
    }

    pub fn pf(&self) -> f64 {
        self.pf.get()
    }

    pub fn pd(&self) -> f64 {
        self.pd.get()
    }
}

/// Gaussian approximation of the statistic under each hypothesis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionStats {
    pub mu0: f64,
    pub sigma0: f64,
    pub mu1: f64,
    pub sigma1: f64,
}

impl DetectionStats {
    pub fn new(noise_power: f64, gamma: f64, n: usize) -> Self {
        let root_n = (n as f64).sqrt();
        DetectionStats {
            mu0: noise_power,
            sigma0: noise_power / root_n,
            mu1: noise_power * (1.0 + gamma),
            sigma1: noise_power * (2.0 * gamma + 1.0).sqrt() / root_n,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingPoint {
    pub pf: f64,
    pub pd: f64,
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} must be positive, got {v}")))
    }
}

pub fn closed_form_probabilities(
    threshold: f64,
    noise_power: f64,
    snr: Snr,
    n: usize,
) -> Result<OperatingPoint> {
    check_positive("threshold", threshold)?;
    check_positive("noise power", noise_power)?;
    check_positive("snr", snr.linear())?;
    if n == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let s = DetectionStats::new(noise_power, snr.linear(), n);
    Ok(OperatingPoint {
        pf: q((threshold - s.mu0) / s.sigma0)?.get(),
        pd: q((threshold - s.mu1) / s.sigma1)?.get(),
    })
}

/// CFAR threshold `λ = μ0 + σ0 · Q⁻¹(pf)`.
///
/// The value can be negative when `pf > 0.5` and `n` is small; callers that
/// need a usable threshold (see [`plan_sensing`]) reject that case.
pub fn compute_threshold(noise_power: f64, n: usize, pf_target: f64) -> Result<f64> {
    check_positive("noise power", noise_power)?;
    if n == 0 {
        return Err(Error::domain("sample count must be >= 1"));
    }
    let s = DetectionStats::new(noise_power, 0.0, n);
    Ok(s.mu0 + s.sigma0 * q_inv(pf_target)?)
}

/// Closed-form Pd at `n` samples with the CFAR threshold, unit noise power.
fn cfar_pd(gamma: f64, n: usize, targets: &Targets) -> Result<f64> {
    let s = DetectionStats::new(1.0, gamma, n);
    let lambda = s.mu0 + s.sigma0 * q_inv(targets.pf())?;
    Ok(q((lambda - s.mu1) / s.sigma1)?.get())
}

/// Smallest `N` whose CFAR threshold reaches the Pd target.
pub fn solve_samples(snr: Snr, targets: &Targets) -> Result<usize> {
    let gamma = snr.linear();
    if gamma <= 0.0 {
        return Err(Error::Unsatisfiable(
            "zero SNR: no finite sample count reaches the detection target".into(),
        ));
    }
    let root = (q_inv(targets.pf())? - q_inv(targets.pd())? * (2.0 * gamma + 1.0).sqrt()) / gamma;
    let real = if root > 0.0 { root * root } else { 0.0 };
    if !real.is_finite() || real > usize::MAX as f64 / 2.0 {
        return Err(Error::Unsatisfiable(format!(
            "required sample count overflows at gamma={gamma}"
        )));
    }
    let mut n = (real.ceil() as usize).max(1);
    // The ceiling can land one off when `real` sits on an integer boundary.
    while cfar_pd(gamma, n, targets)? < targets.pd() {
        n += 1;
    }
    while n > 1 && cfar_pd(gamma, n - 1, targets)? >= targets.pd() {
        n -= 1;
    }
    Ok(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdPlan {
    pub threshold: f64,
    pub n_samples: usize,
    pub snr_used: f64,
    pub noise_power_used: f64,
    pub targets: Targets,
}

impl ThresholdPlan {
    pub fn closed_form(&self) -> Result<OperatingPoint> {
        closed_form_probabilities(
            self.threshold,
            self.noise_power_used,
            Snr::new(self.snr_used)?,
            self.n_samples,
        )
    }
}

pub fn plan_sensing(estimate: &SnrEstimate, targets: &Targets) -> Result<ThresholdPlan> {
    let snr = Snr::new(estimate.gamma_hat)?;
    let n = solve_samples(snr, targets)?;
    let threshold = compute_threshold(estimate.noise_power_used, n, targets.pf())?;
    if threshold <= 0.0 {
        return Err(Error::Unsatisfiable(format!(
            "CFAR threshold {threshold} is not positive at N={n}, pf={}",
            targets.pf()
        )));
    }
    Ok(ThresholdPlan {
        threshold,
        n_samples: n,
        snr_used: snr.linear(),
        noise_power_used: estimate.noise_power_used,
        targets: *targets,
    })
}

/// Anything that can hand out consecutive blocks of received samples.
pub trait SampleSource {
    fn draw(&mut self, n: usize) -> Result<SampleBlock>;
}

/// Endless simulated receiver under a fixed hypothesis.
#[derive(Debug, Clone)]
pub struct SimulatedSource {
    hypothesis: Hypothesis,
    snr: Snr,
    noise_power: f64,
    kind: SignalKind,
    rng: ChaCha8Rng,
    buf: Vec<Complex64>,
}

impl SimulatedSource {
    pub fn new(
        hypothesis: Hypothesis,
        snr: Snr,
        noise_power: f64,
        kind: SignalKind,
        seed: u64,
    ) -> Result<Self> {
        check_positive("noise power", noise_power)?;
        Ok(SimulatedSource {
            hypothesis,
            snr,
            noise_power,
            kind,
            rng: stream_rng(seed, 0),
            buf: Vec::new(),
        })
    }
}

impl SampleSource for SimulatedSource {
    fn draw(&mut self, n: usize) -> Result<SampleBlock> {
        if n == 0 {
            return Err(Error::domain("cannot draw an empty block"));
        }
        fill_samples(
            &mut self.rng,
            &mut self.buf,
            n,
            self.hypothesis,
            self.snr,
            self.noise_power,
            self.kind,
        );
        SampleBlock::new(self.buf.clone())
    }
}

/// Finite recorded stream, consumed front to back.
#[derive(Debug, Clone)]
pub struct RecordedSource {
    samples: Vec<Complex64>,
    cursor: usize,
}

impl RecordedSource {
    pub fn new(block: SampleBlock) -> Self {
        RecordedSource {
            samples: block.into_samples(),
            cursor: 0,
        }
    }

    pub fn remaining(&self) -> usize {
        self.samples.len() - self.cursor
    }
}

impl SampleSource for RecordedSource {
    fn draw(&mut self, n: usize) -> Result<SampleBlock> {
        if n == 0 {
            return Err(Error::domain("cannot draw an empty block"));
        }
        if self.remaining() < n {
            return Err(Error::SourceExhausted {
                requested: n,
                available: self.remaining(),
            });
        }
        let block = SampleBlock::new(self.samples[self.cursor..self.cursor + n].to_vec())?;
        self.cursor += n;
        Ok(block)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensingConfig {
    /// Samples drawn for the initial SNR estimate.
    pub probe_len: usize,
    pub max_rounds: usize,
    /// Relative change in γ̂ that triggers another planning round.
    pub replan_tolerance: f64,
    /// Lowest SNR the plan is sized for. With `None`, an estimate of zero
    /// (typical under H0) is unsatisfiable.
    pub snr_floor: Option<Snr>,
}

impl Default for SensingConfig {
    fn default() -> Self {
        SensingConfig {
            probe_len: 1000,
            max_rounds: 3,
            replan_tolerance: 0.1,
            snr_floor: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensingOutcome {
    pub decision: Decision,
    pub trace: Vec<ThresholdPlan>,
    pub noise_power: f64,
    /// SNR estimate pooled over every received sample of the session.
    pub estimate: SnrEstimate,
}

/// A failed sensing session together with the plans made before the failure.
#[derive(Debug, Error)]
#[error("{error} (after {} plan(s))", trace.len())]
pub struct SensingError {
    #[source]
    pub error: Error,
    pub trace: Vec<ThresholdPlan>,
}

/// The iterative loop: calibrate the noise floor, probe, estimate γ̂, plan,
/// sense, and re-plan while γ̂ keeps moving by more than the tolerance.
///
/// γ̂ is re-estimated over all samples received so far, so later rounds
/// refine rather than replace the probe estimate.
pub fn sense_adaptive<S: SampleSource + ?Sized>(
    source: &mut S,
    noise_calibration: &SampleBlock,
    targets: &Targets,
    config: &SensingConfig,
) -> std::result::Result<SensingOutcome, SensingError> {
    let mut trace = Vec::new();
    macro_rules! bail {
        ($e:expr) => {
            match $e {
                Ok(v) => v,
                Err(error) => return Err(SensingError { error, trace }),
            }
        };
    }
    if config.max_rounds == 0 {
        bail!(Err(Error::domain("max_rounds must be >= 1")));
    }
    if config.probe_len == 0 {
        bail!(Err(Error::domain("probe length must be >= 1")));
    }

    let noise_power = estimate_noise_power(noise_calibration);
    let probe = bail!(source.draw(config.probe_len));
    let mut pooled_energy = probe.mean_power() * probe.len() as f64;
    let mut pooled_n = probe.len();
    let mut estimate = bail!(excess_power_snr(pooled_energy / pooled_n as f64, pooled_n, noise_power));
    let floor = config.snr_floor.map_or(0.0, Snr::linear);
    let mut gamma = estimate.gamma_hat.max(floor);

    for round in 1..=config.max_rounds {
        let effective = bail!(SnrEstimate::new(gamma, estimate.n_used, noise_power));
        let plan = bail!(plan_sensing(&effective, targets));
        trace.push(plan);
        let block = bail!(source.draw(plan.n_samples));
        let statistic = bail!(energy_statistic(&block, 2.0));
        let decision = decide(statistic, plan.threshold);

        pooled_energy += statistic * block.len() as f64;
        pooled_n += block.len();
        estimate = bail!(excess_power_snr(pooled_energy / pooled_n as f64, pooled_n, noise_power));
        let next = estimate.gamma_hat.max(floor);
        let moved = (next - gamma).abs() > config.replan_tolerance * gamma;
        if round == config.max_rounds || !moved {
            return Ok(SensingOutcome {
                decision,
                trace,
                noise_power,
                estimate,
            });
        }
        gamma = next;
    }
    unreachable!("loop returns on its final round")
}
