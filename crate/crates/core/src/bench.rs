//! Runtime scaling of the beamformer and MUSIC sweeps with the number of
//! points.

use std::f64::consts::PI;
use std::hint::black_box;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::beamform::{sweep_spectrum, AngularGrid, ArrayFactor};
use crate::channel::uniform_in_ball;
use crate::geometry::{SteeringDirection, Vec3};
use crate::music::{covariance, noise_projector, MusicSpectrum};
use crate::{rng, C64};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    #[serde(default = "defaults::m_values")]
    pub m_values: Vec<usize>,
    #[serde(default = "defaults::grid")]
    pub grid: AngularGrid,
    #[serde(default = "defaults::reps")]
    pub reps: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    use super::AngularGrid;
    pub fn m_values() -> Vec<usize> {
        vec![8, 12, 16, 20]
    }
    pub fn grid() -> AngularGrid {
        AngularGrid::exhaustive(2.0)
    }
    pub fn reps() -> usize {
        5
    }
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            m_values: defaults::m_values(),
            grid: defaults::grid(),
            reps: defaults::reps(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub m: usize,
    /// Median seconds per sweep.
    pub beamform_s: f64,
    pub music_s: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

/// Least-squares line through `(x, y)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx) * (a - mx)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_res: f64 = x.iter().zip(y).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    let ss_tot: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    LinearFit {
        slope,
        intercept,
        r2: if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 },
    }
}

/// Marginal cost per point over the last interval divided by that over the
/// first. About 1 for linear growth, above 1 for superlinear growth.
pub fn growth_ratio(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let first = (y[1] - y[0]) / (x[1] - x[0]);
    let last = (y[n - 1] - y[n - 2]) / (x[n - 1] - x[n - 2]);
    last / first
}

fn median_time(reps: usize, mut f: impl FnMut()) -> f64 {
    let mut t: Vec<f64> = (0..reps.max(1))
        .map(|_| {
            let s = Instant::now();
            f();
            s.elapsed().as_secs_f64()
        })
        .collect();
    crate::scenario::median(&mut t).unwrap_or(0.0)
}

pub fn run_bench(cfg: &BenchConfig) -> Vec<BenchRow> {
    let wavelength = 0.125;
    let k = 2.0 * PI / wavelength;
    let truth = SteeringDirection::from_degrees(70.0, 60.0);
    cfg.m_values
        .iter()
        .map(|&m| {
            let mut r = rng::stream(cfg.seed, &[0xBE, m as u64]);
            let pos: Vec<Vec3> = (0..m).map(|_| uniform_in_ball(&mut r, 1.0)).collect();
            let ph: Vec<C64> = pos
                .iter()
                .map(|p| C64::from_polar(1.0, -k * p.dot(&truth.unit_vector())))
                .collect();
            let af = ArrayFactor::from_phasors(pos.clone(), ph.clone(), wavelength);
            let cov = covariance(&[ph]).expect("one snapshot");
            let ms = MusicSpectrum::new(&pos, noise_projector(&cov, 1).expect("m >= 2"), wavelength);
            BenchRow {
                m,
                beamform_s: median_time(cfg.reps, || {
                    black_box(sweep_spectrum(&af, &cfg.grid).expect("valid grid"));
                }),
                music_s: median_time(cfg.reps, || {
                    black_box(sweep_spectrum(&ms, &cfg.grid).expect("valid grid"));
                }),
            }
        })
        .collect()
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from("m,beamform_s,music_s\n");
    for r in rows {
        s.push_str(&format!("{},{:.6},{:.6}\n", r.m, r.beamform_s, r.music_s));
    }
    s
}
