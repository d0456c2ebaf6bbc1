//! Surrogate emitter waveforms and complex baseband traces.
//!
//! Two signature families are generated: a constant-modulus pseudo-random
//! symbol block repeated `repetitions` times (Wi-Fi short-preamble stand-in)
//! and a linear up-chirp repeated the same way (LoRa preamble stand-in).
//! Neither is a standards-conformant modulator; only the repetitive structure
//! matters downstream. Absolute correlation levels seen on real captures are
//! therefore not reproduced, only the detection structure.

use std::f64::consts::PI;
use std::fs;
use std::io::{self, Read, Write};
use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{rng, C64};

#[derive(Debug, Error)]
pub enum SignalError {
    #[error("invalid waveform spec: {0}")]
    InvalidSpec(String),
    #[error("invalid trace: {0}")]
    InvalidTrace(String),
    #[error("signature of {len} samples at offset {offset} does not fit a {buffer_len}-sample buffer")]
    OutOfBounds {
        len: usize,
        offset: usize,
        buffer_len: usize,
    },
    #[error("io error on {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("bad metadata in {path}: {msg}")]
    Metadata { path: PathBuf, msg: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveformKind {
    RepeatedSymbol,
    Chirp,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveformSpec {
    pub kind: WaveformKind,
    /// Samples per pattern instance.
    pub pattern_width: usize,
    pub repetitions: usize,
    /// Hz.
    pub sample_rate: f64,
    /// Meters.
    pub carrier_wavelength: f64,
    /// Hz. Chirp sweep width; ignored by `RepeatedSymbol`.
    pub bandwidth: f64,
}

impl WaveformSpec {
    /// 16-sample pattern repeated 10 times at 20 MHz on a 2.4 GHz carrier.
    pub fn wifi_like() -> Self {
        Self {
            kind: WaveformKind::RepeatedSymbol,
            pattern_width: 16,
            repetitions: 10,
            sample_rate: 20e6,
            carrier_wavelength: 0.125,
            bandwidth: 20e6,
        }
    }

    /// 64-sample up-chirp repeated 10 times, 125 kHz sweep sampled at 500 kHz,
    /// on a 915 MHz carrier.
    pub fn lora_like() -> Self {
        Self {
            kind: WaveformKind::Chirp,
            pattern_width: 64,
            repetitions: 10,
            sample_rate: 500e3,
            carrier_wavelength: 299_792_458.0 / 915e6,
            bandwidth: 125e3,
        }
    }

    pub fn signature_len(&self) -> usize {
        self.pattern_width * self.repetitions
    }

    pub fn validate(&self) -> Result<(), SignalError> {
        let bad = |m: &str| Err(SignalError::InvalidSpec(m.to_string()));
        if self.pattern_width < 2 {
            return bad("pattern_width must be at least 2");
        }
        if self.repetitions < 2 {
            return bad("repetitions must be at least 2");
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return bad("sample_rate must be positive");
        }
        if !(self.carrier_wavelength > 0.0 && self.carrier_wavelength.is_finite()) {
            return bad("carrier_wavelength must be positive");
        }
        if self.kind == WaveformKind::Chirp
            && !(self.bandwidth > 0.0 && self.bandwidth <= self.sample_rate)
        {
            return bad("chirp bandwidth must lie in (0, sample_rate]");
        }
        Ok(())
    }
}

/// Finite complex baseband samples with their sample rate and carrier
/// wavelength.
#[derive(Debug, Clone, PartialEq)]
pub struct IqTrace {
    samples: Vec<C64>,
    sample_rate: f64,
    carrier_wavelength: f64,
}

impl IqTrace {
    pub fn new(
        samples: Vec<C64>,
        sample_rate: f64,
        carrier_wavelength: f64,
    ) -> Result<Self, SignalError> {
        if samples.is_empty() {
            return Err(SignalError::InvalidTrace("trace is empty".into()));
        }
        if let Some(i) = samples.iter().position(|s| !s.re.is_finite() || !s.im.is_finite()) {
            return Err(SignalError::InvalidTrace(format!("sample {i} is not finite")));
        }
        if !(sample_rate > 0.0 && sample_rate.is_finite()) {
            return Err(SignalError::InvalidTrace("sample_rate must be positive".into()));
        }
        if !(carrier_wavelength > 0.0 && carrier_wavelength.is_finite()) {
            return Err(SignalError::InvalidTrace(
                "carrier_wavelength must be positive".into(),
            ));
        }
        Ok(Self {
            samples,
            sample_rate,
            carrier_wavelength,
        })
    }

    /// Builds a trace sharing the metadata of `self`. Sample validity is the
    /// caller's responsibility; used on paths that only transform finite data.
    pub(crate) fn with_samples(&self, samples: Vec<C64>) -> Self {
        debug_assert!(!samples.is_empty());
        Self {
            samples,
            sample_rate: self.sample_rate,
            carrier_wavelength: self.carrier_wavelength,
        }
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn carrier_wavelength(&self) -> f64 {
        self.carrier_wavelength
    }

    /// Mean |x|^2.
    pub fn mean_power(&self) -> f64 {
        energy(&self.samples) / self.samples.len() as f64
    }

    /// Copies a sub-range. Panics if the range is empty or out of bounds.
    pub fn slice(&self, range: Range<usize>) -> Self {
        assert!(range.start < range.end, "empty slice {range:?}");
        self.with_samples(self.samples[range].to_vec())
    }

    pub fn scaled(&self, c: C64) -> Self {
        self.with_samples(self.samples.iter().map(|&s| s * c).collect())
    }
}

/// Sum of |x|^2.
pub fn energy(x: &[C64]) -> f64 {
    x.iter().map(|s| s.norm_sqr()).sum()
}

/// Sum over i of a[i] * conj(b[i]) on the common length.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y.conj()).sum()
}

/// Generates the repeated signature for `spec`.
///
/// `RepeatedSymbol` patterns are drawn uniformly on the unit circle from the
/// seeded stream. `Chirp` patterns sweep linearly from `-bandwidth/2` to
/// `+bandwidth/2` across one pattern width and do not depend on the seed.
/// Either way every sample has unit modulus.
pub fn make_signature(spec: &WaveformSpec, seed: u64) -> Result<IqTrace, SignalError> {
    spec.validate()?;
    let w = spec.pattern_width;
    let pattern: Vec<C64> = match spec.kind {
        WaveformKind::RepeatedSymbol => {
            let mut rng = rng::stream(seed, &[0x5167]);
            (0..w)
                .map(|_| C64::from_polar(1.0, rng.random_range(-PI..PI)))
                .collect()
        }
        WaveformKind::Chirp => {
            let period = w as f64 / spec.sample_rate;
            let slope = spec.bandwidth / period;
            (0..w)
                .map(|n| {
                    let t = n as f64 / spec.sample_rate;
                    let phase = 2.0 * PI * (-0.5 * spec.bandwidth * t + 0.5 * slope * t * t);
                    C64::from_polar(1.0, phase)
                })
                .collect()
        }
    };
    let samples: Vec<C64> = pattern
        .iter()
        .copied()
        .cycle()
        .take(spec.signature_len())
        .collect();
    IqTrace::new(samples, spec.sample_rate, spec.carrier_wavelength)
}

/// Places `signature` in a silent buffer of `buffer_len` samples starting at
/// `offset`.
pub fn embed(signature: &IqTrace, buffer_len: usize, offset: usize) -> Result<IqTrace, SignalError> {
    let len = signature.len();
    if offset.checked_add(len).is_none_or(|end| end > buffer_len) {
        return Err(SignalError::OutOfBounds {
            len,
            offset,
            buffer_len,
        });
    }
    let mut samples = vec![C64::new(0.0, 0.0); buffer_len];
    samples[offset..offset + len].copy_from_slice(signature.samples());
    Ok(signature.with_samples(samples))
}

/// Sidecar record stored next to a raw IQ file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IqMetadata {
    pub sample_rate: f64,
    pub carrier_wavelength: f64,
    pub length: usize,
}

/// Sidecar path for an IQ file: `<file>.meta.toml`.
pub fn metadata_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta.toml");
    PathBuf::from(s)
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> SignalError + '_ {
    move |source| SignalError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes interleaved little-endian f32 I/Q with no header, plus the sidecar
/// metadata record.
pub fn write_iq(path: &Path, trace: &IqTrace) -> Result<(), SignalError> {
    let mut buf = Vec::with_capacity(trace.len() * 8);
    for s in trace.samples() {
        buf.extend_from_slice(&(s.re as f32).to_le_bytes());
        buf.extend_from_slice(&(s.im as f32).to_le_bytes());
    }
    let mut f = fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&buf).map_err(io_err(path))?;

    let meta = IqMetadata {
        sample_rate: trace.sample_rate(),
        carrier_wavelength: trace.carrier_wavelength(),
        length: trace.len(),
    };
    let meta_path = metadata_path(path);
    let text = toml::to_string(&meta).map_err(|e| SignalError::Metadata {
        path: meta_path.clone(),
        msg: e.to_string(),
    })?;
    fs::write(&meta_path, text).map_err(io_err(&meta_path))
}

pub fn read_iq(path: &Path) -> Result<IqTrace, SignalError> {
    let meta_path = metadata_path(path);
    let text = fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: IqMetadata = toml::from_str(&text).map_err(|e| SignalError::Metadata {
        path: meta_path.clone(),
        msg: e.to_string(),
    })?;

    let mut raw = Vec::new();
    fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut raw))
        .map_err(io_err(path))?;
    if raw.len() % 8 != 0 || raw.len() / 8 != meta.length {
        return Err(SignalError::Metadata {
            path: meta_path,
            msg: format!(
                "length {} does not match {} bytes of samples",
                meta.length,
                raw.len()
            ),
        });
    }
    let samples = raw
        .chunks_exact(8)
        .map(|c| {
            let re = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
            let im = f32::from_le_bytes([c[4], c[5], c[6], c[7]]);
            C64::new(re as f64, im as f64)
        })
        .collect();
    IqTrace::new(samples, meta.sample_rate, meta.carrier_wavelength)
}
