//! Offline band scanning of IQ recordings.
//!
//! A recording is cut into frames of `segments` non-overlapping
//! `nfft`-point windows; each frame is a Welch-averaged periodogram in
//! ascending absolute frequency. A frame is scanned by estimating its noise
//! floor from the median bin, setting a CFAR threshold over the `segments`
//! averages, and grouping bins into occupied runs (one peak each) and
//! vacant runs (spectrum holes).

pub mod iq;

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::adaptive::{compute_threshold, Targets};
use crate::detector::decide;
use crate::error::{Error, Result};
use crate::signals::db_to_linear;

pub use iq::{read_iq, read_metadata, write_iq, write_metadata, IqRecording};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    #[default]
    Rectangular,
    Hann,
}

impl Window {
    fn coefficients(self, n: usize) -> Vec<f64> {
        match self {
            Window::Rectangular => vec![1.0; n],
            // periodic Hann
            Window::Hann => (0..n)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PsdConfig {
    pub nfft: usize,
    pub segments: usize,
    #[serde(default)]
    pub window: Window,
}

impl PsdConfig {
    fn validate(&self) -> Result<()> {
        if self.nfft < 2 || !self.nfft.is_power_of_two() {
            return Err(Error::domain(format!(
                "nfft must be a power of two >= 2, got {}",
                self.nfft
            )));
        }
        if self.segments == 0 {
            return Err(Error::domain("segment count must be >= 1"));
        }
        Ok(())
    }

    pub fn frame_len(&self) -> usize {
        self.nfft * self.segments
    }
}

/// Averaged power per bin, FFT-shifted so bin 0 is the lowest frequency.
///
/// Bins are normalized by the window energy `Σ w²`, so white noise of
/// power σ² reads σ² per bin for any window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PsdFrame {
    pub bins: Vec<f64>,
    pub bin_width: f64,
    pub center_freq: f64,
    /// Periodograms averaged into each bin.
    pub averages: usize,
}

impl PsdFrame {
    pub fn nfft(&self) -> usize {
        self.bins.len()
    }

    pub fn frequency(&self, bin: usize) -> f64 {
        self.center_freq + (bin as f64 - (self.nfft() / 2) as f64) * self.bin_width
    }

    /// Bin containing an absolute frequency, if inside the band.
    pub fn bin_of(&self, freq_hz: f64) -> Option<usize> {
        let k = ((freq_hz - self.center_freq) / self.bin_width).round() + (self.nfft() / 2) as f64;
        (k >= 0.0 && k < self.nfft() as f64).then_some(k as usize)
    }

    /// Mean of several frames, counting every constituent average.
    pub fn mean_of(frames: &[PsdFrame]) -> Result<PsdFrame> {
        let first = frames
            .first()
            .ok_or_else(|| Error::domain("no frames to combine"))?;
        if frames.iter().any(|f| {
            f.nfft() != first.nfft() || f.bin_width != first.bin_width || f.center_freq != first.center_freq
        }) {
            return Err(Error::domain("frames differ in layout"));
        }
        let mut bins = vec![0.0; first.nfft()];
        for f in frames {
            bins.iter_mut().zip(&f.bins).for_each(|(a, b)| *a += b);
        }
        let n = frames.len() as f64;
        bins.iter_mut().for_each(|b| *b /= n);
        Ok(PsdFrame {
            bins,
            bin_width: first.bin_width,
            center_freq: first.center_freq,
            averages: frames.iter().map(|f| f.averages).sum(),
        })
    }

    /// Two-column `frequency_hz,power_db` table.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("frequency_hz,power_db\n");
        for (k, p) in self.bins.iter().enumerate() {
            let db = 10.0 * p.log10();
            let _ = writeln!(out, "{},{}", self.frequency(k), db);
        }
        out
    }
}

fn frame_from(samples: &[Complex64], rec: &IqRecording, config: &PsdConfig) -> PsdFrame {
    let nfft = config.nfft;
    let window = config.window.coefficients(nfft);
    let energy: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(nfft);
    let mut acc = vec![0.0; nfft];
    let mut buf = vec![Complex64::new(0.0, 0.0); nfft];
    for seg in samples.chunks_exact(nfft).take(config.segments) {
        buf.iter_mut()
            .zip(seg.iter().zip(&window))
            .for_each(|(b, (s, w))| *b = s * w);
        fft.process(&mut buf);
        for (k, a) in acc.iter_mut().enumerate() {
            // shift: output bin k holds FFT bin (k + nfft/2) mod nfft
            *a += buf[(k + nfft / 2) % nfft].norm_sqr();
        }
    }
    let scale = energy * config.segments as f64;
    acc.iter_mut().for_each(|a| *a /= scale);
    PsdFrame {
        bins: acc,
        bin_width: rec.sample_rate / nfft as f64,
        center_freq: rec.center_freq,
        averages: config.segments,
    }
}

/// Welch average of the first `segments` windows of the recording.
pub fn periodogram(rec: &IqRecording, config: &PsdConfig) -> Result<PsdFrame> {
    config.validate()?;
    let need = config.frame_len();
    if rec.samples.len() < need {
        return Err(Error::domain(format!(
            "periodogram needs {need} samples ({} x {}), recording has {}",
            config.nfft,
            config.segments,
            rec.samples.len()
        )));
    }
    Ok(frame_from(&rec.samples.samples()[..need], rec, config))
}

/// Every whole frame of the recording, in time order.
pub fn periodogram_frames(rec: &IqRecording, config: &PsdConfig) -> Result<Vec<PsdFrame>> {
    periodogram(rec, config)?;
    Ok(rec
        .samples
        .samples()
        .par_chunks_exact(config.frame_len())
        .map(|chunk| frame_from(chunk, rec, config))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinPower {
    pub bin: usize,
    pub freq_hz: f64,
    pub power: f64,
}

/// Contiguous vacant bins `start_bin..=end_bin`, with outer band edges in Hz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Hole {
    pub start_bin: usize,
    pub end_bin: usize,
    pub start_hz: f64,
    pub end_hz: f64,
}

impl Hole {
    pub fn contains(&self, freq_hz: f64) -> bool {
        (self.start_hz..=self.end_hz).contains(&freq_hz)
    }

    pub fn bandwidth_hz(&self) -> f64 {
        self.end_hz - self.start_hz
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub occupied: Vec<BinPower>,
    pub peaks: Vec<BinPower>,
    pub holes: Vec<Hole>,
    pub threshold_used: f64,
    pub noise_floor_estimate: f64,
}

/// Median-to-mean ratio of an average of `k` unit exponentials.
///
/// Equals `ln 2` for a single periodogram and tends to 1 as `k` grows.
pub fn median_to_mean_ratio(k: usize) -> f64 {
    if k <= 1 {
        return std::f64::consts::LN_2;
    }
    let k = k as f64;
    Gamma::new(k, k)
        .map(|g| g.inverse_cdf(0.5))
        .unwrap_or(1.0 - 1.0 / (3.0 * k))
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Scans one frame.
///
/// The floor is `median / median_to_mean_ratio(averages)`, raised by the
/// `uncertainty_db` upper bound before the CFAR threshold is set.
pub fn scan_band(psd: &PsdFrame, targets: &Targets, uncertainty_db: f64) -> Result<ScanReport> {
    if psd.bins.is_empty() {
        return Err(Error::domain("empty frame"));
    }
    if psd.bins.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::domain("frame bins must be finite and >= 0"));
    }
    if !(uncertainty_db.is_finite() && uncertainty_db >= 0.0) {
        return Err(Error::domain(format!(
            "noise uncertainty must be >= 0 dB, got {uncertainty_db}"
        )));
    }
    let med = median(&psd.bins);
    if med <= 0.0 {
        return Err(Error::DegenerateFloor(if psd.bins.iter().all(|&b| b == 0.0) {
            "all bins are zero".into()
        } else {
            "median bin power is zero".into()
        }));
    }
    let floor = med / median_to_mean_ratio(psd.averages);
    let upper = floor * db_to_linear(uncertainty_db);
    let threshold = compute_threshold(upper, psd.averages.max(1), targets.pf())?;
    if threshold <= 0.0 {
        return Err(Error::Unsatisfiable(format!(
            "non-positive bin threshold at pf={} with {} averages",
            targets.pf(),
            psd.averages
        )));
    }

    let entry = |bin: usize| BinPower {
        bin,
        freq_hz: psd.frequency(bin),
        power: psd.bins[bin],
    };
    let flags: Vec<bool> = psd
        .bins
        .iter()
        .map(|&p| decide(p, threshold).is_occupied())
        .collect();

    let mut occupied = Vec::new();
    let mut peaks = Vec::new();
    let mut holes = Vec::new();
    let mut start = 0;
    while start < flags.len() {
        let mut end = start;
        while end + 1 < flags.len() && flags[end + 1] == flags[start] {
            end += 1;
        }
        if flags[start] {
            occupied.extend((start..=end).map(entry));
            let top = (start..=end)
                .reduce(|best, k| if psd.bins[k] > psd.bins[best] { k } else { best })
                .expect("non-empty run");
            peaks.push(entry(top));
        } else {
            holes.push(Hole {
                start_bin: start,
                end_bin: end,
                start_hz: psd.frequency(start) - psd.bin_width / 2.0,
                end_hz: psd.frequency(end) + psd.bin_width / 2.0,
            });
        }
        start = end + 1;
    }

    Ok(ScanReport {
        occupied,
        peaks,
        holes,
        threshold_used: threshold,
        noise_floor_estimate: floor,
    })
}

/// Scans the mean of `frames`; with two or more frames a peak is kept only
/// if its bin (±1) is occupied in at least two consecutive single-frame scans.
pub fn scan_frames(frames: &[PsdFrame], targets: &Targets, uncertainty_db: f64) -> Result<ScanReport> {
    let combined = PsdFrame::mean_of(frames)?;
    let mut report = scan_band(&combined, targets, uncertainty_db)?;
    if frames.len() < 2 {
        return Ok(report);
    }
    let per_frame: Vec<Vec<bool>> = frames
        .par_iter()
        .map(|f| {
            let r = scan_band(f, targets, uncertainty_db)?;
            let mut flags = vec![false; f.nfft()];
            r.occupied.iter().for_each(|o| flags[o.bin] = true);
            Ok(flags)
        })
        .collect::<Result<_>>()?;
    let near = |flags: &[bool], bin: usize| {
        let lo = bin.saturating_sub(1);
        let hi = (bin + 1).min(flags.len() - 1);
        flags[lo..=hi].iter().any(|&f| f)
    };
    report.peaks.retain(|p| {
        per_frame
            .windows(2)
            .any(|w| near(&w[0], p.bin) && near(&w[1], p.bin))
    });
    Ok(report)
}

/// Periodogram frames of a recording plus the scan of their mean.
pub fn scan_recording(
    rec: &IqRecording,
    config: &PsdConfig,
    targets: &Targets,
    uncertainty_db: f64,
) -> Result<(PsdFrame, ScanReport)> {
    let frames = periodogram_frames(rec, config)?;
    let report = scan_frames(&frames, targets, uncertainty_db)?;
    Ok((PsdFrame::mean_of(&frames)?, report))
}
