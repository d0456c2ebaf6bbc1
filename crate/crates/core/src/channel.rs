//! Emitter-to-receiver propagation and impairments.
//!
//! Propagation is a carrier-phase rotation only: asynchronous captures carry
//! no usable time of flight, so no fractional delay is modelled. The
//! impairment chain is applied in a fixed order: far-field phase, multipath,
//! additive noise, carrier frequency offset.

use std::f64::consts::PI;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{d_prime, LocalSpherical, SteeringDirection, Vec3};
use crate::signal::IqTrace;
use crate::{rng, C64};

#[derive(Debug, Error, PartialEq)]
pub enum ChannelError {
    #[error("emitter range {range} m is inside the far-field limit of {limit} m")]
    FarFieldViolation { range: f64, limit: f64 },
    #[error("invalid impairment config: {0}")]
    InvalidConfig(String),
}

/// Emitter position relative to a location's local origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterTruth {
    /// Meters.
    pub range: f64,
    pub direction: SteeringDirection,
}

impl EmitterTruth {
    pub fn from_offset(offset: &Vec3) -> Self {
        Self {
            range: offset.norm(),
            direction: SteeringDirection::from_vector(offset),
        }
    }

    pub fn position(&self) -> Vec3 {
        self.range * self.direction.unit_vector()
    }

    /// Requires `range >= 10 * sphere_radius`.
    pub fn check_far_field(&self, sphere_radius: f64) -> Result<(), ChannelError> {
        let limit = 10.0 * sphere_radius;
        if self.range < limit || self.range <= 0.0 {
            return Err(ChannelError::FarFieldViolation {
                range: self.range,
                limit,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "model", rename_all = "snake_case")]
pub enum Multipath {
    #[default]
    None,
    /// Three-tap FIR at sample spacing with complex Gaussian taps and an
    /// exponentially decaying power profile (1, e^-1, e^-2, normalized).
    Rayleigh,
    /// Direct path plus a specular ground reflection. The ground plane lies
    /// `receiver_height` meters below the local origin.
    TwoRay {
        reflection_coefficient: f64,
        receiver_height: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImpairmentConfig {
    /// Signal-to-noise ratio against the active signal power; `None` is
    /// noiseless.
    pub snr_db: Option<f64>,
    #[serde(default)]
    pub multipath: Multipath,
    #[serde(default)]
    pub cfo_hz: f64,
    /// Standard deviation of the per-axis receiver position error, meters.
    #[serde(default)]
    pub pos_error_sigma: f64,
    #[serde(default)]
    pub seed: u64,
}

impl ImpairmentConfig {
    pub fn clean() -> Self {
        Self {
            snr_db: None,
            multipath: Multipath::None,
            cfo_hz: 0.0,
            pos_error_sigma: 0.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ChannelError> {
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return Err(ChannelError::InvalidConfig("snr_db must be finite".into()));
            }
        }
        if !(self.pos_error_sigma >= 0.0) {
            return Err(ChannelError::InvalidConfig(
                "pos_error_sigma must be non-negative".into(),
            ));
        }
        if !self.cfo_hz.is_finite() {
            return Err(ChannelError::InvalidConfig("cfo_hz must be finite".into()));
        }
        Ok(())
    }
}

/// Complex white Gaussian noise sample of total variance `var`.
pub(crate) fn cgauss(rng: &mut rng::Rng, var: f64) -> C64 {
    let n = Normal::new(0.0, (var / 2.0).sqrt()).expect("variance is finite");
    C64::new(n.sample(rng), n.sample(rng))
}

/// Passes `signal` from the emitter to the receiver at `point`.
///
/// The output is `signal * exp(j 2pi/lambda (a - d_prime))`, then
/// multipath, then noise at `snr_db` relative to the mean power of the
/// nonzero input samples, then a CFO rotation indexed from the first sample
/// of the trace. `sphere_radius` sets the far-field limit.
pub fn propagate(
    signal: &IqTrace,
    point: &LocalSpherical,
    truth: &EmitterTruth,
    cfg: &ImpairmentConfig,
    sphere_radius: f64,
) -> Result<IqTrace, ChannelError> {
    truth.check_far_field(sphere_radius)?;
    cfg.validate()?;
    let k = 2.0 * PI / signal.carrier_wavelength();
    let mut rng = rng::stream(cfg.seed, &[0xC4A2]);

    let direct = C64::from_polar(1.0, k * (truth.range - d_prime(point, &truth.direction)));
    let gain = match cfg.multipath {
        Multipath::TwoRay {
            reflection_coefficient,
            receiver_height,
        } => {
            let image = image_emitter(truth, receiver_height);
            let reflected = C64::from_polar(
                reflection_coefficient * truth.range / image.range,
                k * (image.range - d_prime(point, &image.direction)),
            );
            direct + reflected
        }
        _ => direct,
    };
    let mut out: Vec<C64> = signal.samples().iter().map(|&s| s * gain).collect();

    if cfg.multipath == Multipath::Rayleigh {
        let profile = [1.0, (-1.0f64).exp(), (-2.0f64).exp()];
        let total: f64 = profile.iter().sum();
        let taps: Vec<C64> = profile
            .iter()
            .map(|p| cgauss(&mut rng, p / total))
            .collect();
        out = (0..out.len())
            .map(|n| {
                taps.iter()
                    .enumerate()
                    .filter(|(d, _)| *d <= n)
                    .map(|(d, t)| t * out[n - d])
                    .sum()
            })
            .collect();
    }

    if let Some(snr_db) = cfg.snr_db {
        let active: Vec<f64> = signal
            .samples()
            .iter()
            .map(|s| s.norm_sqr())
            .filter(|&p| p > 0.0)
            .collect();
        if !active.is_empty() {
            let reference = active.iter().sum::<f64>() / active.len() as f64;
            let var = reference / 10f64.powf(snr_db / 10.0);
            for s in &mut out {
                *s += cgauss(&mut rng, var);
            }
        }
    }

    if cfg.cfo_hz != 0.0 {
        let step = 2.0 * PI * cfg.cfo_hz / signal.sample_rate();
        for (n, s) in out.iter_mut().enumerate() {
            *s *= C64::from_polar(1.0, step * n as f64);
        }
    }

    Ok(signal.with_samples(out))
}

/// Mirror image of the emitter through a ground plane `receiver_height`
/// below the local origin.
pub fn image_emitter(truth: &EmitterTruth, receiver_height: f64) -> EmitterTruth {
    let p = truth.position();
    let ground = -receiver_height;
    EmitterTruth::from_offset(&Vec3::new(p.x, p.y, 2.0 * ground - p.z))
}

/// Adds independent zero-mean Gaussian error of standard deviation `sigma`
/// to each rectangular axis.
pub fn perturb_position(position: &Vec3, sigma: f64, seed: u64) -> Vec3 {
    if sigma == 0.0 {
        return *position;
    }
    let mut rng = rng::stream(seed, &[0x905]);
    let n = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    position + Vec3::new(n.sample(&mut rng), n.sample(&mut rng), n.sample(&mut rng))
}

/// Uniform point in a ball of radius `radius`.
pub fn uniform_in_ball(rng: &mut rng::Rng, radius: f64) -> Vec3 {
    loop {
        let v = Vec3::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if v.norm_squared() < 1.0 {
            return radius * v;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{embed, make_signature, WaveformSpec};

    fn truth() -> EmitterTruth {
        EmitterTruth {
            range: 100.0,
            direction: SteeringDirection::from_degrees(70.0, 60.0),
        }
    }

    fn sig() -> IqTrace {
        make_signature(&WaveformSpec::wifi_like(), 4).unwrap()
    }

    #[test]
    fn origin_gets_range_phase() {
        let s = sig();
        let out = propagate(&s, &LocalSpherical::ORIGIN, &truth(), &ImpairmentConfig::clean(), 1.0)
            .unwrap();
        let expected = C64::from_polar(1.0, 2.0 * PI / 0.125 * 100.0);
        for (o, i) in out.samples().iter().zip(s.samples()) {
            assert!((o / i - expected).norm() < 1e-9);
        }
    }

    #[test]
    fn phase_difference_matches_path_difference() {
        let s = sig();
        let p1 = LocalSpherical { r: 0.4, psi: 1.1, zeta: -0.3 };
        let p2 = LocalSpherical { r: 0.9, psi: -2.0, zeta: 2.5 };
        let cfg = ImpairmentConfig::clean();
        let o1 = propagate(&s, &p1, &truth(), &cfg, 1.0).unwrap();
        let o2 = propagate(&s, &p2, &truth(), &cfg, 1.0).unwrap();
        let k = 2.0 * PI / 0.125;
        // d_k = a - d'_k, so the phase difference is k (d'_2 - d'_1)
        let dir = truth().direction;
        let expected = k * (d_prime(&p2, &dir) - d_prime(&p1, &dir));
        let ratio = o1.samples()[7] / o2.samples()[7];
        let err = crate::geometry::wrap_pi(ratio.arg() - expected);
        assert!(err.abs() < 1e-9);
    }

    #[test]
    fn far_field_violation() {
        let t = EmitterTruth { range: 5.0, ..truth() };
        let r = propagate(&sig(), &LocalSpherical::ORIGIN, &t, &ImpairmentConfig::clean(), 1.0);
        assert!(matches!(r, Err(ChannelError::FarFieldViolation { .. })));
    }

    #[test]
    fn snr_calibration_on_noise_tail() {
        let spec = WaveformSpec { repetitions: 1000, ..WaveformSpec::wifi_like() };
        let s = make_signature(&spec, 1).unwrap();
        let buf = embed(&s, 16_000 + 100_000, 0).unwrap();
        let cfg = ImpairmentConfig { snr_db: Some(14.0), seed: 77, ..ImpairmentConfig::clean() };
        let out = propagate(&buf, &LocalSpherical::ORIGIN, &truth(), &cfg, 1.0).unwrap();
        let tail = &out.samples()[16_000..];
        let noise = tail.iter().map(|x| x.norm_sqr()).sum::<f64>() / tail.len() as f64;
        let snr = 10.0 * (1.0 / noise).log10();
        assert!((snr - 14.0).abs() < 0.5, "snr {snr}");
    }

    #[test]
    fn two_ray_vanishes_with_zero_reflection() {
        let s = sig();
        let p = LocalSpherical { r: 0.5, psi: 0.7, zeta: 0.2 };
        let base = propagate(&s, &p, &truth(), &ImpairmentConfig::clean(), 1.0).unwrap();
        let cfg = ImpairmentConfig {
            multipath: Multipath::TwoRay { reflection_coefficient: 0.0, receiver_height: 20.0 },
            ..ImpairmentConfig::clean()
        };
        let tr = propagate(&s, &p, &truth(), &cfg, 1.0).unwrap();
        for (a, b) in base.samples().iter().zip(tr.samples()) {
            assert!((a - b).norm() < 1e-12);
        }
        let cfg = ImpairmentConfig {
            multipath: Multipath::TwoRay { reflection_coefficient: -1.0, receiver_height: 20.0 },
            ..ImpairmentConfig::clean()
        };
        let tr = propagate(&s, &p, &truth(), &cfg, 1.0).unwrap();
        assert!((tr.samples()[0] - base.samples()[0]).norm() > 1e-3);
    }

    #[test]
    fn cfo_rotation_is_linear_phase() {
        let s = sig();
        let cfg = ImpairmentConfig { cfo_hz: 10e3, ..ImpairmentConfig::clean() };
        let out = propagate(&s, &LocalSpherical::ORIGIN, &truth(), &cfg, 1.0).unwrap();
        let clean = propagate(&s, &LocalSpherical::ORIGIN, &truth(), &ImpairmentConfig::clean(), 1.0)
            .unwrap();
        let step = 2.0 * PI * 10e3 / 20e6;
        for n in [0usize, 1, 50, 159] {
            let r = out.samples()[n] / clean.samples()[n];
            assert!((r - C64::from_polar(1.0, step * n as f64)).norm() < 1e-9);
        }
    }

    #[test]
    fn perturbation_statistics() {
        let p = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(perturb_position(&p, 0.0, 5), p);
        // Monte-Carlo std estimate per axis
        let n = 100_000;
        let sigma = 0.025;
        let mut sums = [0.0f64; 3];
        let mut sq = [0.0f64; 3];
        let mut mean_disp = 0.0;
        for i in 0..n {
            let d = perturb_position(&p, sigma, i) - p;
            mean_disp += d.norm();
            for a in 0..3 {
                sums[a] += d[a];
                sq[a] += d[a] * d[a];
            }
        }
        for a in 0..3 {
            let mean = sums[a] / n as f64;
            let std = (sq[a] / n as f64 - mean * mean).sqrt();
            assert!((std / sigma - 1.0).abs() < 0.02, "axis {a} std {std}");
        }
        // Maxwell mean sigma * sqrt(8/pi) ~ 4 cm: the centimeter RTK error scale
        let mean_disp = mean_disp / n as f64;
        assert!((mean_disp - sigma * (8.0 / PI).sqrt()).abs() < 1e-3);
    }
}
