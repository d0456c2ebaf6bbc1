//! Blind signature detection on the first capture.
//!
//! Three steps: an energy gate finds where a burst starts, correlating the
//! gated window against the capture reveals the period of the repeated
//! pattern, and correlating one pattern instance against the capture marks
//! every repetition. The edges of the repetition chain are then fixed to the
//! sample by a matched-template score, which keeps the indices exact when the
//! gated window straddles silence or noise.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::signal::{energy, IqTrace};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum DetectError {
    #[error("invalid detector config: {0}")]
    InvalidConfig(String),
    #[error("trace of {len} samples is shorter than the {window} sample window")]
    TraceTooShort { len: usize, window: usize },
    #[error("no window reaches the energy threshold")]
    NoEnergyFound,
    #[error("fewer than two correlation peaks; no repeated pattern")]
    NoPatternFound,
    #[error("pattern does not repeat; no signature")]
    NoSignatureFound,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Energy window length `L`, samples.
    pub window_len: usize,
    /// Energy threshold `eta1`. `None` uses 0.3 times the mean power of the
    /// strongest window in the trace.
    pub energy_threshold: Option<f64>,
    /// Correlation threshold `eta2` in `(0, 1]`.
    pub corr_threshold: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            window_len: 200,
            energy_threshold: None,
            corr_threshold: 0.5,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectError> {
        if self.window_len < 2 {
            return Err(DetectError::InvalidConfig("window_len must be >= 2".into()));
        }
        if !(self.corr_threshold > 0.0 && self.corr_threshold <= 1.0) {
            return Err(DetectError::InvalidConfig(
                "corr_threshold must be in (0, 1]".into(),
            ));
        }
        if let Some(e) = self.energy_threshold {
            if !(e > 0.0 && e.is_finite()) {
                return Err(DetectError::InvalidConfig(
                    "energy_threshold must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// The extracted signature and the indices that located it in the capture.
#[derive(Debug, Clone, PartialEq)]
pub struct SignatureModel {
    /// One instance of the pattern, `y1[m1..m2]`.
    pub pattern: IqTrace,
    /// The full signature, `y1[m3..m4 + pattern_width]`.
    pub signature: IqTrace,
    pub pattern_width: usize,
    pub signature_width: usize,
    pub repetition_count: usize,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub m4: usize,
}

impl SignatureModel {
    /// Builds a model directly from a known clean signature of `repetitions`
    /// copies, located at index 0.
    pub fn from_known(signature: &IqTrace, pattern_width: usize) -> Self {
        let w = signature.len();
        let reps = w / pattern_width;
        Self {
            pattern: signature.slice(0..pattern_width),
            signature: signature.clone(),
            pattern_width,
            signature_width: w,
            repetition_count: reps,
            m1: 0,
            m2: pattern_width,
            m3: 0,
            m4: w - pattern_width,
        }
    }

    pub fn summary(&self) -> SignatureSummary {
        SignatureSummary {
            m1: self.m1,
            m2: self.m2,
            m3: self.m3,
            m4: self.m4,
            pattern_width: self.pattern_width,
            signature_width: self.signature_width,
            repetition_count: self.repetition_count,
        }
    }
}

/// Index record of a [`SignatureModel`] for text output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignatureSummary {
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
    pub m4: usize,
    pub pattern_width: usize,
    pub signature_width: usize,
    pub repetition_count: usize,
}

/// Trailing-window mean powers; entry `i` belongs to the window ending at
/// sample `i + L - 1`.
fn window_means(x: &[C64], l: usize) -> Vec<f64> {
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for s in x {
        prefix.push(prefix.last().unwrap() + s.norm_sqr());
    }
    (l..=x.len())
        .map(|end| (prefix[end] - prefix[end - l]) / l as f64)
        .collect()
}

/// Threshold in force for `y1`: the configured value, or 0.3 times the mean
/// power of the strongest window.
pub fn resolve_energy_threshold(y1: &IqTrace, cfg: &DetectorConfig) -> Result<f64, DetectError> {
    if let Some(e) = cfg.energy_threshold {
        return Ok(e);
    }
    if y1.len() < cfg.window_len {
        return Err(DetectError::TraceTooShort {
            len: y1.len(),
            window: cfg.window_len,
        });
    }
    let best = window_means(y1.samples(), cfg.window_len)
        .into_iter()
        .fold(0.0, f64::max);
    if best <= 0.0 {
        return Err(DetectError::NoEnergyFound);
    }
    Ok(0.3 * best)
}

/// Returns the first index `n >= L - 1` whose trailing `L`-sample mean
/// power reaches the threshold, and the window `y1[n - L + 1 ..= n]`.
pub fn energy_gate(y1: &IqTrace, cfg: &DetectorConfig) -> Result<(usize, IqTrace), DetectError> {
    cfg.validate()?;
    let l = cfg.window_len;
    if y1.len() < l {
        return Err(DetectError::TraceTooShort {
            len: y1.len(),
            window: l,
        });
    }
    let eta1 = resolve_energy_threshold(y1, cfg)?;
    let start = window_means(y1.samples(), l)
        .iter()
        .position(|&m| m >= eta1)
        .ok_or(DetectError::NoEnergyFound)?;
    Ok((start + l - 1, y1.slice(start..start + l)))
}

/// `|sum_i x[m + i] conj(t[i])| / sum |t|^2` for `m` in `0..=len(x) - len(t)`.
pub fn normalized_xcorr(x: &[C64], t: &[C64]) -> Vec<f64> {
    let norm = energy(t);
    if norm == 0.0 || x.len() < t.len() {
        return vec![0.0; x.len().saturating_sub(t.len()) + 1];
    }
    (0..=x.len() - t.len())
        .map(|m| {
            let acc: C64 = x[m..m + t.len()]
                .iter()
                .zip(t)
                .map(|(a, b)| a * b.conj())
                .sum();
            acc.norm() / norm
        })
        .collect()
}

/// Local maxima of `r` at or above `threshold`, at least `spacing` apart.
/// Ties compare earlier indices as larger, so a plateau yields its first
/// sample. When two maxima are closer than `spacing` the larger one stays.
pub fn threshold_peaks(r: &[f64], threshold: f64, spacing: usize) -> Vec<usize> {
    let mut peaks: Vec<usize> = Vec::new();
    for m in 0..r.len() {
        let v = r[m];
        if v < threshold {
            continue;
        }
        let left_ok = m == 0 || v > r[m - 1];
        let right_ok = m + 1 == r.len() || v >= r[m + 1];
        if !(left_ok && right_ok) {
            continue;
        }
        match peaks.last() {
            Some(&p) if m - p < spacing => {
                if v > r[p] {
                    *peaks.last_mut().unwrap() = m;
                }
            }
            _ => peaks.push(m),
        }
    }
    peaks
}

/// The lag within 2 samples of `wp0` that maximizes `|sum_n x[n + lag]
/// conj(x[n])|`. Wide correlation peaks (chirps) put the two lowest
/// crossings a sample off the period under noise; the lagged product sums
/// over every repetition at once.
fn refine_period(x: &[C64], wp0: usize) -> usize {
    let lo = wp0.saturating_sub(2).max(1);
    let hi = (wp0 + 2).min(x.len().saturating_sub(1)).max(lo);
    let score = |lag: usize| -> f64 {
        x[lag..].iter().zip(x).map(|(a, b)| a * b.conj()).sum::<C64>().norm()
    };
    let mut best = (wp0, score(wp0));
    for lag in lo..=hi {
        let v = score(lag);
        if v > best.1 {
            best = (lag, v);
        }
    }
    best.0
}

/// Finds the pattern period from the gated window `u`.
///
/// Returns the lowest correlation peak `m1`, `m2 = m1 + W_p` and one pattern
/// instance of width `m2 - m1`. The instance is the most energetic one on
/// the grid `m1 + k (m2 - m1)`, so it never sits in the silence that may
/// lead the gated window.
pub fn find_pattern(
    y1: &IqTrace,
    u: &IqTrace,
    cfg: &DetectorConfig,
) -> Result<(usize, usize, IqTrace), DetectError> {
    cfg.validate()?;
    let x = y1.samples();
    let r = normalized_xcorr(x, u.samples());
    let peaks = threshold_peaks(&r, cfg.corr_threshold, 2);
    if peaks.len() < 2 {
        return Err(DetectError::NoPatternFound);
    }
    let m1 = peaks[0];
    let wp = refine_period(x, peaks[1] - m1);
    let m2 = m1 + wp;
    let mut best = (m1, energy(&x[m1..m2]));
    let mut start = m1 + wp;
    while start + wp <= x.len() {
        let e = energy(&x[start..start + wp]);
        if e > best.1 * (1.0 + 1e-9) {
            best = (start, e);
        }
        start += wp;
    }
    Ok((m1, m2, y1.slice(best.0..best.0 + wp)))
}

/// Marks every repetition of `pattern` in `y1` and returns the signature.
pub fn extract_signature(
    y1: &IqTrace,
    pattern: &IqTrace,
    cfg: &DetectorConfig,
) -> Result<SignatureModel, DetectError> {
    cfg.validate()?;
    let x = y1.samples();
    let wp = pattern.len();
    if wp == 0 || x.len() < wp {
        return Err(DetectError::NoSignatureFound);
    }
    let r = normalized_xcorr(x, pattern.samples());
    let chain = threshold_peaks(&r, cfg.corr_threshold, (wp / 2).max(1));
    let (&c0, &clast) = match (chain.first(), chain.last()) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(DetectError::NoSignatureFound),
    };
    let k = ((clast - c0) as f64 / wp as f64).round() as usize + 1;
    if k < 2 {
        return Err(DetectError::NoSignatureFound);
    }

    // average template over the interior of the chain
    let interior: Vec<usize> = if chain.len() >= 3 {
        chain[1..chain.len() - 1].to_vec()
    } else {
        chain.clone()
    };
    let mut template = vec![C64::new(0.0, 0.0); wp];
    for &c in &interior {
        for (t, s) in template.iter_mut().zip(&x[c..c + wp]) {
            *t += s;
        }
    }
    for t in &mut template {
        *t /= interior.len() as f64;
    }

    // per-sample log-likelihood of "pattern present", phase-locked to c0
    let mut prefix = Vec::with_capacity(x.len() + 1);
    prefix.push(0.0);
    for (t, s) in x.iter().enumerate() {
        let p = template[(t + wp - c0 % wp) % wp];
        let l = 2.0 * (s * p.conj()).re - p.norm_sqr();
        prefix.push(prefix.last().unwrap() + l);
    }

    let mut best: Option<(f64, usize, usize)> = None;
    let s_lo = c0.saturating_sub(wp - 1);
    for s in s_lo..c0 + wp {
        for reps in (k - 1).max(2)..=k + 1 {
            let end = s + reps * wp;
            if end > x.len() {
                continue;
            }
            let score = prefix[end] - prefix[s];
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, s, reps));
            }
        }
    }
    let (_, m3, reps) = best.ok_or(DetectError::NoSignatureFound)?;
    let w_sig = reps * wp;
    Ok(SignatureModel {
        pattern: y1.slice(m3..m3 + wp),
        signature: y1.slice(m3..m3 + w_sig),
        pattern_width: wp,
        signature_width: w_sig,
        repetition_count: reps,
        m1: m3,
        m2: m3 + wp,
        m3,
        m4: m3 + w_sig - wp,
    })
}

/// All three detection steps.
pub fn detect(y1: &IqTrace, cfg: &DetectorConfig) -> Result<SignatureModel, DetectError> {
    let (_, u) = energy_gate(y1, cfg)?;
    let (_, _, pattern) = find_pattern(y1, &u, cfg)?;
    extract_signature(y1, &pattern, cfg)
}
