//! Raw IQ files: interleaved little-endian `f32` I/Q pairs, with a
//! `key=value` metadata sidecar carrying `sample_rate_hz` and
//! `center_freq_hz`.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signals::{IqMetadata, SampleBlock};

/// Bytes per complex sample (two `f32`).
pub const SAMPLE_BYTES: usize = 8;

#[derive(Debug, Clone, PartialEq)]
pub struct IqRecording {
    pub samples: SampleBlock,
    pub center_freq: f64,
    pub sample_rate: f64,
}

impl IqRecording {
    pub fn new(samples: SampleBlock, meta: IqMetadata) -> Result<Self> {
        if !(meta.sample_rate_hz.is_finite() && meta.sample_rate_hz > 0.0) {
            return Err(Error::domain(format!(
                "sample rate must be positive, got {}",
                meta.sample_rate_hz
            )));
        }
        if !meta.center_freq_hz.is_finite() {
            return Err(Error::domain("center frequency must be finite"));
        }
        let samples = samples.with_sample_rate(meta.sample_rate_hz)?;
        Ok(IqRecording {
            samples,
            center_freq: meta.center_freq_hz,
            sample_rate: meta.sample_rate_hz,
        })
    }

    pub fn metadata(&self) -> IqMetadata {
        IqMetadata {
            sample_rate_hz: self.sample_rate,
            center_freq_hz: self.center_freq,
        }
    }
}

/// Decodes interleaved `f32` I/Q bytes.
pub fn decode_cf32(bytes: &[u8], path: &Path) -> Result<Vec<Complex64>> {
    if !bytes.len().is_multiple_of(SAMPLE_BYTES) {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: bytes.len() as u64,
            message: format!(
                "file ends mid-sample: {} trailing byte(s) after the last complete I/Q pair",
                bytes.len() % SAMPLE_BYTES
            ),
        });
    }
    if bytes.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            offset: 0,
            message: "no samples".into(),
        });
    }
    Ok(bytes
        .chunks_exact(SAMPLE_BYTES)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            Complex64::new(re as f64, im as f64)
        })
        .collect())
}

pub fn read_iq(path: impl AsRef<Path>, meta: IqMetadata) -> Result<IqRecording> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let samples = SampleBlock::new(decode_cf32(&bytes, path)?)?;
    IqRecording::new(samples, meta)
}

/// Writes samples as `f32` pairs; values are narrowed from `f64`.
pub fn write_iq(path: impl AsRef<Path>, block: &SampleBlock) -> Result<()> {
    let mut out = BufWriter::new(fs::File::create(path)?);
    for s in block.samples() {
        out.write_all(&(s.re as f32).to_le_bytes())?;
        out.write_all(&(s.im as f32).to_le_bytes())?;
    }
    out.flush()?;
    Ok(())
}

pub fn parse_metadata(text: &str, path: &Path) -> Result<IqMetadata> {
    let mut sample_rate = None;
    let mut center = None;
    let mut offset = 0u64;
    for line in text.split_inclusive('\n') {
        let line_offset = offset;
        offset += line.len() as u64;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            offset: line_offset,
            message,
        };
        let (key, value) = trimmed
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected key=value, got {trimmed:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let number = || {
            value
                .parse::<f64>()
                .map_err(|e| parse_err(format!("{key}: {e}")))
        };
        match key {
            "sample_rate_hz" => sample_rate = Some(number()?),
            "center_freq_hz" => center = Some(number()?),
            _ => {}
        }
    }
    let missing = |key: &str| Error::Parse {
        path: path.to_path_buf(),
        offset,
        message: format!("missing {key}"),
    };
    Ok(IqMetadata {
        sample_rate_hz: sample_rate.ok_or_else(|| missing("sample_rate_hz"))?,
        center_freq_hz: center.ok_or_else(|| missing("center_freq_hz"))?,
    })
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<IqMetadata> {
    let path = path.as_ref();
    parse_metadata(&fs::read_to_string(path)?, path)
}

pub fn format_metadata(meta: &IqMetadata) -> String {
    format!(
        "sample_rate_hz={}\ncenter_freq_hz={}\n",
        meta.sample_rate_hz, meta.center_freq_hz
    )
}

pub fn write_metadata(path: impl AsRef<Path>, meta: &IqMetadata) -> Result<()> {
    fs::write(path, format_metadata(meta))?;
    Ok(())
}
