//! Sample generation under the two sensing hypotheses.
//!
//! Noise is circularly-symmetric complex Gaussian. The primary-user signal
//! is either complex Gaussian (the default, for which the energy statistic
//! is an exact gamma variate) or constant-modulus with uniformly random
//! phase. All randomness flows from an explicit seed: [`stream_rng`] maps a
//! `(seed, stream)` pair to an independent ChaCha stream, which is how the
//! Monte Carlo harness keeps per-trial draws order independent.

use std::f64::consts::TAU;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A finite, non-empty run of complex baseband samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBlock {
    samples: Vec<Complex64>,
    sample_rate: Option<f64>,
}

impl SampleBlock {
    pub fn new(samples: Vec<Complex64>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::domain("sample block must hold at least one sample"));
        }
        let bad: Vec<usize> = samples
            .iter()
            .enumerate()
            .filter(|(_, s)| !(s.re.is_finite() && s.im.is_finite()))
            .map(|(i, _)| i)
            .collect();
        if !bad.is_empty() {
            return Err(Error::NonFinite { indices: bad });
        }
        Ok(SampleBlock {
            samples,
            sample_rate: None,
        })
    }

    pub fn with_sample_rate(mut self, sample_rate: f64) -> Result<Self> {
        if !(sample_rate.is_finite() && sample_rate > 0.0) {
            return Err(Error::domain(format!(
                "sample rate must be positive, got {sample_rate}"
            )));
        }
        self.sample_rate = Some(sample_rate);
        Ok(self)
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<Complex64> {
        self.samples
    }

    pub fn sample_rate(&self) -> Option<f64> {
        self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    /// Always false; kept for the usual `len`/`is_empty` pairing.
    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn mean_power(&self) -> f64 {
        crate::detector::mean_power(&self.samples)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Hypothesis {
    /// `y(n) = w(n)`
    NoiseOnly,
    /// `y(n) = s(n) + w(n)`
    SignalPlusNoise,
}

impl Hypothesis {
    pub(crate) fn stream_tag(self) -> u64 {
        match self {
            Hypothesis::NoiseOnly => 0,
            Hypothesis::SignalPlusNoise => 1,
        }
    }
}

/// How the actual noise power is drawn from the uncertainty interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseRealization {
    Nominal,
    Upper,
    Lower,
    /// Uniform in dB over `[-rho, +rho]` around the nominal power.
    UniformDraw,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    nominal_power: f64,
    uncertainty_db: f64,
    realization: NoiseRealization,
}

impl NoiseModel {
    pub fn new(
        nominal_power: f64,
        uncertainty_db: f64,
        realization: NoiseRealization,
    ) -> Result<Self> {
        if !(nominal_power.is_finite() && nominal_power > 0.0) {
            return Err(Error::domain(format!(
                "nominal noise power must be positive, got {nominal_power}"
            )));
        }
        if !(uncertainty_db.is_finite() && uncertainty_db >= 0.0) {
            return Err(Error::domain(format!(
                "noise uncertainty must be >= 0 dB, got {uncertainty_db}"
            )));
        }
        Ok(NoiseModel {
            nominal_power,
            uncertainty_db,
            realization,
        })
    }

    /// Nominal power with no uncertainty.
    pub fn exact(nominal_power: f64) -> Result<Self> {
        Self::new(nominal_power, 0.0, NoiseRealization::Nominal)
    }

    pub fn nominal_power(&self) -> f64 {
        self.nominal_power
    }

    pub fn uncertainty_db(&self) -> f64 {
        self.uncertainty_db
    }

    pub fn realization(&self) -> NoiseRealization {
        self.realization
    }

    pub fn upper_bound(&self) -> f64 {
        self.nominal_power * db_to_linear(self.uncertainty_db)
    }

    pub fn lower_bound(&self) -> f64 {
        self.nominal_power * db_to_linear(-self.uncertainty_db)
    }

    /// Draws the realized noise power. Only `UniformDraw` touches `rng`.
    pub fn realize_with<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self.realization {
            NoiseRealization::Nominal => self.nominal_power,
            NoiseRealization::Upper => self.upper_bound(),
            NoiseRealization::Lower => self.lower_bound(),
            NoiseRealization::UniformDraw => {
                if self.uncertainty_db == 0.0 {
                    return self.nominal_power;
                }
                let offset_db = rng.random_range(-self.uncertainty_db..=self.uncertainty_db);
                self.nominal_power * db_to_linear(offset_db)
            }
        }
    }
}

/// Linear signal-to-noise power ratio.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Snr(f64);

impl Snr {
    pub fn new(gamma: f64) -> Result<Self> {
        if gamma.is_finite() && gamma >= 0.0 {
            Ok(Snr(gamma))
        } else {
            Err(Error::domain(format!("SNR must be finite and >= 0, got {gamma}")))
        }
    }

    pub fn from_db(db: f64) -> Result<Self> {
        if db.is_nan() || db == f64::INFINITY {
            return Err(Error::domain(format!("invalid SNR {db} dB")));
        }
        Self::new(db_to_linear(db))
    }

    pub fn linear(self) -> f64 {
        self.0
    }

    pub fn db(self) -> f64 {
        linear_to_db(self.0)
    }
}

impl TryFrom<f64> for Snr {
    type Error = Error;

    fn try_from(value: f64) -> Result<Self> {
        Snr::new(value)
    }
}

impl From<Snr> for f64 {
    fn from(s: Snr) -> f64 {
        s.0
    }
}

/// Primary-user waveform model.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalKind {
    #[default]
    Gaussian,
    /// Unit-modulus samples with i.i.d. uniform phase, scaled to the target power.
    ConstantModulus,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Independent random stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

// Stream ids used by the seeded single-block helpers.
const BLOCK_STREAM: u64 = 0;
const NOISE_STREAM: u64 = 1;
const FIXTURE_STREAM: u64 = 2;

/// Circularly-symmetric complex Gaussian sample with `E|z|^2 = power`.
#[inline]
pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R, power: f64) -> Complex64 {
    let scale = (0.5 * power).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(scale * re, scale * im)
}

#[inline]
fn signal_sample<R: Rng + ?Sized>(rng: &mut R, kind: SignalKind, power: f64) -> Complex64 {
    match kind {
        SignalKind::Gaussian => complex_gaussian(rng, power),
        SignalKind::ConstantModulus => {
            Complex64::from_polar(power.sqrt(), rng.random::<f64>() * TAU)
        }
    }
}

/// Fills `out` with `n` samples under `hyp` at a known realized noise power.
///
/// Used directly by the Monte Carlo loops so a trial can reuse its buffer.
pub fn fill_samples<R: Rng + ?Sized>(
    rng: &mut R,
    out: &mut Vec<Complex64>,
    n: usize,
    hyp: Hypothesis,
    snr: Snr,
    noise_power: f64,
    kind: SignalKind,
) {
    out.clear();
    out.reserve(n);
    let signal_power = snr.linear() * noise_power;
    match hyp {
        Hypothesis::NoiseOnly => {
            out.extend((0..n).map(|_| complex_gaussian(rng, noise_power)));
        }
        Hypothesis::SignalPlusNoise => {
            out.extend((0..n).map(|_| {
                let w = complex_gaussian(rng, noise_power);
                w + signal_sample(rng, kind, signal_power)
            }));
        }
    }
}

/// Realized noise power for a model and seed.
///
/// `Nominal`, `Upper` and `Lower` are deterministic; `UniformDraw` draws
/// uniformly in dB from the seed's noise stream.
pub fn realize_noise_power(noise: &NoiseModel, seed: u64) -> f64 {
    noise.realize_with(&mut stream_rng(seed, NOISE_STREAM))
}

/// Generates `n` samples under `hyp` with a Gaussian primary-user signal.
pub fn gen_block(
    hyp: Hypothesis,
    n: usize,
    snr: Snr,
    noise: &NoiseModel,
    seed: u64,
) -> Result<SampleBlock> {
    gen_block_with(hyp, n, snr, noise, SignalKind::Gaussian, seed)
}

pub fn gen_block_with(
    hyp: Hypothesis,
    n: usize,
    snr: Snr,
    noise: &NoiseModel,
    kind: SignalKind,
    seed: u64,
) -> Result<SampleBlock> {
    if n == 0 {
        return Err(Error::domain("block length must be >= 1"));
    }
    let noise_power = realize_noise_power(noise, seed);
    let mut rng = stream_rng(seed, BLOCK_STREAM);
    let mut samples = Vec::new();
    fill_samples(&mut rng, &mut samples, n, hyp, snr, noise_power, kind);
    SampleBlock::new(samples)
}

/// One complex exponential in a fixture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tone {
    /// Offset from the center frequency, Hz.
    pub offset_hz: f64,
    /// Total tone power, linear units.
    pub power: f64,
}

/// Recipe for a synthetic IQ recording.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
    pub tones: Vec<Tone>,
    pub noise_power: f64,
    pub duration_s: f64,
}

/// Radio metadata carried next to a raw IQ file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IqMetadata {
    pub sample_rate_hz: f64,
    pub center_freq_hz: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IqFixture {
    pub block: SampleBlock,
    pub metadata: IqMetadata,
}

/// Synthesizes tones plus AWGN.
///
/// Every I and Q component is rounded to `f32` so the fixture survives the
/// 32-bit float file format bit for bit.
pub fn gen_iq_fixture(spec: &FixtureSpec, seed: u64) -> Result<IqFixture> {
    let fs = spec.sample_rate_hz;
    if !(fs.is_finite() && fs > 0.0) {
        return Err(Error::domain(format!("sample rate must be positive, got {fs}")));
    }
    if !spec.center_freq_hz.is_finite() {
        return Err(Error::domain("center frequency must be finite"));
    }
    if !(spec.noise_power.is_finite() && spec.noise_power >= 0.0) {
        return Err(Error::domain(format!(
            "noise power must be >= 0, got {}",
            spec.noise_power
        )));
    }
    for tone in &spec.tones {
        if !(tone.offset_hz >= -fs / 2.0 && tone.offset_hz < fs / 2.0) {
            return Err(Error::domain(format!(
                "tone offset {} Hz outside the Nyquist band [-{}, {}) Hz",
                tone.offset_hz,
                fs / 2.0,
                fs / 2.0
            )));
        }
        if !(tone.power.is_finite() && tone.power >= 0.0) {
            return Err(Error::domain(format!("tone power must be >= 0, got {}", tone.power)));
        }
    }
    if !(spec.duration_s.is_finite() && spec.duration_s > 0.0) {
        return Err(Error::domain(format!(
            "duration must be positive, got {} s",
            spec.duration_s
        )));
    }
    let n = (spec.duration_s * fs).round() as usize;
    if n == 0 {
        return Err(Error::domain("duration shorter than one sample"));
    }

    let mut rng = stream_rng(seed, FIXTURE_STREAM);
    let phases: Vec<f64> = spec.tones.iter().map(|_| rng.random::<f64>() * TAU).collect();
    let samples = (0..n)
        .map(|i| {
            let t = i as f64 / fs;
            let mut y = complex_gaussian(&mut rng, spec.noise_power);
            for (tone, phase) in spec.tones.iter().zip(&phases) {
                y += Complex64::from_polar(tone.power.sqrt(), TAU * tone.offset_hz * t + phase);
            }
            Complex64::new(y.re as f32 as f64, y.im as f32 as f64)
        })
        .collect();
    let block = SampleBlock::new(samples)?.with_sample_rate(fs)?;
    Ok(IqFixture {
        block,
        metadata: IqMetadata {
            sample_rate_hz: fs,
            center_freq_hz: spec.center_freq_hz,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn unit_noise() -> NoiseModel {
        NoiseModel::exact(1.0).unwrap()
    }

    #[test]
    fn noise_only_power_converges() {
        let block =
            gen_block(Hypothesis::NoiseOnly, 100_000, Snr::new(0.0).unwrap(), &unit_noise(), 7)
                .unwrap();
        let p = block.mean_power();
        assert!((0.99..=1.01).contains(&p), "{p}");
    }

    #[test]
    fn signal_plus_noise_power_converges() {
        let block = gen_block(
            Hypothesis::SignalPlusNoise,
            100_000,
            Snr::new(1.0).unwrap(),
            &unit_noise(),
            11,
        )
        .unwrap();
        let p = block.mean_power();
        assert!((1.97..=2.03).contains(&p), "{p}");
    }

    #[test]
    fn constant_modulus_signal_power_converges() {
        let block = gen_block_with(
            Hypothesis::SignalPlusNoise,
            100_000,
            Snr::new(1.0).unwrap(),
            &unit_noise(),
            SignalKind::ConstantModulus,
            3,
        )
        .unwrap();
        let p = block.mean_power();
        assert!((1.98..=2.02).contains(&p), "{p}");
    }

    #[test]
    fn same_seed_same_block() {
        let snr = Snr::from_db(-3.0).unwrap();
        let a = gen_block(Hypothesis::SignalPlusNoise, 64, snr, &unit_noise(), 99).unwrap();
        let b = gen_block(Hypothesis::SignalPlusNoise, 64, snr, &unit_noise(), 99).unwrap();
        let c = gen_block(Hypothesis::SignalPlusNoise, 64, snr, &unit_noise(), 100).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn zero_length_block_rejected() {
        let err = gen_block(Hypothesis::NoiseOnly, 0, Snr::new(0.0).unwrap(), &unit_noise(), 1);
        assert!(matches!(err, Err(Error::Domain(_))));
    }

    #[test]
    fn non_finite_samples_listed() {
        let err = SampleBlock::new(vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(f64::NAN, 0.0),
            Complex64::new(0.0, f64::INFINITY),
        ])
        .unwrap_err();
        match err {
            Error::NonFinite { indices } => assert_eq!(indices, vec![1, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn realize_bounds() {
        for mode in [
            NoiseRealization::Nominal,
            NoiseRealization::Upper,
            NoiseRealization::Lower,
            NoiseRealization::UniformDraw,
        ] {
            let m = NoiseModel::new(2.5, 0.0, mode).unwrap();
            assert_eq!(realize_noise_power(&m, 5), 2.5);
        }
        let up = NoiseModel::new(1.0, 1.0, NoiseRealization::Upper).unwrap();
        let lo = NoiseModel::new(1.0, 1.0, NoiseRealization::Lower).unwrap();
        assert!((realize_noise_power(&up, 0) - 1.258_925_411_794_167_2).abs() < 1e-12);
        assert!((realize_noise_power(&lo, 0) - 0.794_328_234_724_281_4).abs() < 1e-12);
    }

    #[test]
    fn uniform_draw_spans_interval() {
        let m = NoiseModel::new(1.0, 1.0, NoiseRealization::UniformDraw).unwrap();
        let draws: Vec<f64> = (0..2000).map(|s| linear_to_db(realize_noise_power(&m, s))).collect();
        assert!(draws.iter().all(|d| (-1.0..=1.0).contains(d)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!(mean.abs() < 0.05, "{mean}");
        assert!(draws.iter().any(|&d| d > 0.9) && draws.iter().any(|&d| d < -0.9));
    }

    #[test]
    fn noise_model_validation() {
        assert!(NoiseModel::new(0.0, 0.0, NoiseRealization::Nominal).is_err());
        assert!(NoiseModel::new(1.0, -0.5, NoiseRealization::Nominal).is_err());
        assert!(Snr::new(-1.0).is_err());
        assert_eq!(Snr::from_db(f64::NEG_INFINITY).unwrap().linear(), 0.0);
    }

    fn two_tone_spec() -> FixtureSpec {
        FixtureSpec {
            sample_rate_hz: 10e6,
            center_freq_hz: 2.405e9,
            tones: vec![
                Tone { offset_hz: -3e6, power: 0.1 },
                Tone { offset_hz: 2e6, power: 0.1 },
            ],
            noise_power: 1.0,
            duration_s: 1e-3,
        }
    }

    #[test]
    fn fixture_metadata_and_length() {
        let fx = gen_iq_fixture(&two_tone_spec(), 1).unwrap();
        assert_eq!(fx.block.len(), 10_000);
        assert_eq!(fx.metadata.center_freq_hz, 2.405e9);
        assert_eq!(fx.block.sample_rate(), Some(10e6));
        let expected = 1.0 + 0.2;
        assert!((fx.block.mean_power() - expected).abs() < 0.05);
    }

    #[test]
    fn fixture_rejects_bad_specs() {
        let mut spec = two_tone_spec();
        spec.tones.push(Tone { offset_hz: 6e6, power: 1.0 });
        assert!(matches!(gen_iq_fixture(&spec, 1), Err(Error::Domain(_))));
        let mut spec = two_tone_spec();
        spec.duration_s = 0.0;
        assert!(matches!(gen_iq_fixture(&spec, 1), Err(Error::Domain(_))));
    }

    proptest! {
        #[test]
        fn upper_monotone_lower_antitone(rho_a in 0.0f64..6.0, extra in 0.01f64..3.0) {
            let rho_b = rho_a + extra;
            let up = |r| NoiseModel::new(1.3, r, NoiseRealization::Upper).unwrap().upper_bound();
            let lo = |r| NoiseModel::new(1.3, r, NoiseRealization::Lower).unwrap().lower_bound();
            prop_assert!(up(rho_b) > up(rho_a));
            prop_assert!(lo(rho_b) < lo(rho_a));
        }
    }
}
