//! Lag search against the extracted signature and CFO handling.

use std::f64::consts::PI;

use thiserror::Error;

use crate::detect::SignatureModel;
use crate::geometry::LocalSpherical;
use crate::signal::{energy, IqTrace};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum AlignError {
    #[error("capture of {len} samples is shorter than the {needed} sample signature")]
    CaptureTooShort { len: usize, needed: usize },
    #[error("correlation peak {peak:.3e} is below {required:.3e}")]
    AlignmentFailed { peak: f64, required: f64 },
    #[error("need at least two pattern repetitions to estimate CFO")]
    InsufficientRepetitions,
}

/// One hover position and its aligned capture.
#[derive(Debug, Clone, PartialEq)]
pub struct ReceptionPoint {
    /// True position in the location frame.
    pub position: LocalSpherical,
    /// Position as reported by the positioning system.
    pub measured_position: LocalSpherical,
    /// `W_sig` samples starting at `lag` in the raw capture.
    pub signal: IqTrace,
    /// Start index of `signal` in the raw capture.
    pub lag: usize,
}

/// Returns the lag maximizing `|sum_i raw[lag + i] conj(sig[i])|` and the
/// aligned segment with its native phase. Ties go to the lowest lag.
pub fn align_capture(
    raw: &IqTrace,
    sig: &SignatureModel,
    corr_threshold: f64,
) -> Result<(usize, IqTrace), AlignError> {
    let x = raw.samples();
    let s = sig.signature.samples();
    let w = s.len();
    if x.len() < w {
        return Err(AlignError::CaptureTooShort {
            len: x.len(),
            needed: w,
        });
    }
    let mut best = (0usize, -1.0f64);
    for lag in 0..=x.len() - w {
        let acc: C64 = x[lag..lag + w].iter().zip(s).map(|(a, b)| a * b.conj()).sum();
        let m = acc.norm();
        if m > best.1 {
            best = (lag, m);
        }
    }
    let required = corr_threshold * energy(s);
    if best.1 < required {
        return Err(AlignError::AlignmentFailed {
            peak: best.1,
            required,
        });
    }
    Ok((best.0, raw.slice(best.0..best.0 + w)))
}

/// CFO in Hz from the phase advance between consecutive pattern instances,
/// `angle(sum_n y[n + W_p] conj(y[n])) * fs / (2 pi W_p)`. Unambiguous for
/// `|cfo| < fs / (2 W_p)`; larger offsets alias.
pub fn estimate_cfo(y: &IqTrace, sig: &SignatureModel) -> Result<f64, AlignError> {
    let wp = sig.pattern_width;
    let x = y.samples();
    if wp == 0 || x.len() < 2 * wp {
        return Err(AlignError::InsufficientRepetitions);
    }
    let acc: C64 = (0..x.len() - wp).map(|n| x[n + wp] * x[n].conj()).sum();
    Ok(acc.arg() * y.sample_rate() / (2.0 * PI * wp as f64))
}

/// Removes `cfo` from a segment that starts at absolute index `start` of its
/// capture.
pub fn derotate(y: &IqTrace, cfo: f64, start: usize) -> IqTrace {
    if cfo == 0.0 {
        return y.clone();
    }
    let step = -2.0 * PI * cfo / y.sample_rate();
    let out = y
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| s * C64::from_polar(1.0, step * (start + i) as f64))
        .collect();
    y.with_samples(out)
}

/// Applies one CFO correction to every point, indexing each sample by its
/// position in the raw capture so that every capture sees the same rotation
/// law.
pub fn correct_cfo(points: &[ReceptionPoint], cfo: f64) -> Vec<ReceptionPoint> {
    points
        .iter()
        .map(|p| ReceptionPoint {
            signal: derotate(&p.signal, cfo, p.lag),
            ..p.clone()
        })
        .collect()
}
