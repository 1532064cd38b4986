//! Helpers shared by the integration test targets.

#![allow(dead_code)]

use std::path::Path;
use std::process::{Command, Output};

use num_complex::Complex64;
use sensecore::scanner::iq::IqRecording;
use sensecore::signals::{gen_iq_fixture, FixtureSpec, Tone};

pub const FIXTURE_RATE_HZ: f64 = 10e6;
pub const FIXTURE_CENTER_HZ: f64 = 2.405e9;
pub const FIXTURE_SAMPLES: usize = 262_144;
/// Per-tone power 20 dB above the per-bin noise floor at nfft = 1024.
pub const FIXTURE_TONE_POWER: f64 = 100.0 / 1024.0;

/// Blind second/fourth-moment SNR estimate for a constant-modulus signal in
/// complex circular Gaussian noise.
///
/// With `M2 = E|y|^2` and `M4 = E|y|^4`, the signal power is
/// `S = sqrt(2 M2^2 - M4)` and the noise power `M2 - S`. Returns `None`
/// when the moments leave no room for a signal or for noise.
pub fn m2m4_snr(samples: &[Complex64]) -> Option<f64> {
    let n = samples.len() as f64;
    let (mut m2, mut m4) = (0.0, 0.0);
    for z in samples {
        let p = z.norm_sqr();
        m2 += p;
        m4 += p * p;
    }
    m2 /= n;
    m4 /= n;
    let s = (2.0 * m2 * m2 - m4).max(0.0).sqrt();
    let noise = m2 - s;
    if s <= 0.0 || noise <= 0.0 {
        return None;
    }
    Some(s / noise)
}

pub fn db(x: f64) -> f64 {
    10.0 * x.log10()
}

fn fixture(tones: Vec<Tone>, seed: u64) -> IqRecording {
    let spec = FixtureSpec {
        sample_rate_hz: FIXTURE_RATE_HZ,
        center_freq_hz: FIXTURE_CENTER_HZ,
        tones,
        noise_power: 1.0,
        duration_s: FIXTURE_SAMPLES as f64 / FIXTURE_RATE_HZ,
    };
    let fx = gen_iq_fixture(&spec, seed).expect("fixture");
    IqRecording::new(fx.block, fx.metadata).expect("recording")
}

/// Tones at -3 MHz and +2 MHz around 2.405 GHz.
pub fn two_tone_recording(seed: u64) -> IqRecording {
    fixture(
        vec![
            Tone {
                offset_hz: -3e6,
                power: FIXTURE_TONE_POWER,
            },
            Tone {
                offset_hz: 2e6,
                power: FIXTURE_TONE_POWER,
            },
        ],
        seed,
    )
}

pub fn noise_only_recording(seed: u64) -> IqRecording {
    fixture(Vec::new(), seed)
}

/// Runs the CLI binary with a clean seed environment.
pub fn run_cli(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sensecore"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SENSECORE_SEED")
        .output()
        .expect("spawn sensecore")
}

/// Writes the two-tone fixture through the CLI; returns the IQ and meta names.
pub fn cli_two_tone(cwd: &Path, seed: u64) -> (String, String) {
    let seed = seed.to_string();
    let out = run_cli(
        &[
            "gen-iq",
            "--iq-out",
            "two_tone.iq",
            "--sample-rate",
            "10e6",
            "--center-freq",
            "2.405e9",
            "--tone=-3e6:-10.103",
            "--tone=2e6:-10.103",
            "--samples",
            "262144",
            "--seed",
            &seed,
        ],
        cwd,
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    ("two_tone.iq".into(), "two_tone.meta".into())
}
