//! Subspace baseline: MUSIC over the per-point channel scalars.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beamform::{sweep_spectrum, AngularGrid, Beampattern, BeamformError, Spectrum};
use crate::channel::cgauss;
use crate::geometry::Vec3;
use crate::{rng, C64};

#[derive(Debug, Error, PartialEq)]
pub enum MusicError {
    #[error("no snapshots")]
    NoSnapshots,
    #[error("snapshot {index} has length {len}, expected {expected}")]
    DimensionMismatch {
        index: usize,
        len: usize,
        expected: usize,
    },
    #[error("num_sources must be in [1, N)")]
    InvalidSources,
    #[error(transparent)]
    Beamform(#[from] BeamformError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MusicConfig {
    pub num_sources: usize,
    pub snapshots: usize,
    pub grid: AngularGrid,
}

impl Default for MusicConfig {
    fn default() -> Self {
        Self {
            num_sources: 1,
            snapshots: 100,
            grid: AngularGrid::default(),
        }
    }
}

/// Average of the snapshot outer products `v v^H`.
pub fn covariance(snapshots: &[Vec<C64>]) -> Result<DMatrix<C64>, MusicError> {
    let n = snapshots.first().ok_or(MusicError::NoSnapshots)?.len();
    let mut cov = DMatrix::<C64>::zeros(n, n);
    for (index, s) in snapshots.iter().enumerate() {
        if s.len() != n {
            return Err(MusicError::DimensionMismatch {
                index,
                len: s.len(),
                expected: n,
            });
        }
        let v = DVector::from_column_slice(s);
        cov += &v * v.adjoint();
    }
    Ok(cov.unscale(snapshots.len() as f64))
}

/// Eigenvalues in ascending order with matching eigenvector columns.
pub fn hermitian_eigen(cov: &DMatrix<C64>) -> (Vec<f64>, DMatrix<C64>) {
    let eig = cov.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_columns(
        &order
            .iter()
            .map(|&i| eig.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (values, vectors)
}

/// `E_n E_n^H` for the eigenvectors of the `N - num_sources` smallest
/// eigenvalues.
pub fn noise_projector(cov: &DMatrix<C64>, num_sources: usize) -> Result<DMatrix<C64>, MusicError> {
    let n = cov.nrows();
    if num_sources == 0 || num_sources >= n {
        return Err(MusicError::InvalidSources);
    }
    let (_, v) = hermitian_eigen(cov);
    let en = v.columns(0, n - num_sources);
    Ok(en * en.adjoint())
}

/// `1 / (a^H E_n E_n^H a)` with `a_k = exp(-j 2pi/lambda p_k . u)`, the
/// phase a plane wave from `u` leaves at point `k`.
#[derive(Debug, Clone)]
pub struct MusicSpectrum {
    positions: Vec<Vec3>,
    projector: DMatrix<C64>,
}

impl MusicSpectrum {
    pub fn new(positions: &[Vec3], projector: DMatrix<C64>, wavelength: f64) -> Self {
        let k = 2.0 * PI / wavelength;
        Self {
            positions: positions.iter().map(|p| p * k).collect(),
            projector,
        }
    }

    /// `a^H P a`, evaluated as a full quadratic form.
    pub fn denominator(&self, u: &Vec3) -> f64 {
        let a: Vec<C64> = self
            .positions
            .iter()
            .map(|p| C64::from_polar(1.0, -p.dot(u)))
            .collect();
        let n = a.len();
        let mut acc = C64::new(0.0, 0.0);
        for i in 0..n {
            let mut row = C64::new(0.0, 0.0);
            for j in 0..n {
                row += self.projector[(i, j)] * a[j];
            }
            acc += a[i].conj() * row;
        }
        acc.re
    }
}

impl Spectrum for MusicSpectrum {
    fn value(&self, u: &Vec3) -> f64 {
        1.0 / self.denominator(u).max(1e-12)
    }
}

/// Pseudospectrum over `grid`, normalized to a peak of 1.
pub fn music_spectrum(
    cov: &DMatrix<C64>,
    positions: &[Vec3],
    wavelength: f64,
    num_sources: usize,
    grid: &AngularGrid,
) -> Result<Beampattern, MusicError> {
    let spec = MusicSpectrum::new(positions, noise_projector(cov, num_sources)?, wavelength);
    let bp = sweep_spectrum(&spec, grid)?;
    let peak = bp.peak_value;
    Ok(bp.normalized(peak))
}

/// Snapshots of the per-point channel scalars: the noiseless phasors plus
/// fresh complex Gaussian noise of variance `1 / snr` in every snapshot.
pub fn synth_snapshots(phasors: &[C64], snr: f64, count: usize, seed: u64) -> Vec<Vec<C64>> {
    let mut r = rng::stream(seed, &[0x3A5]);
    let var = 1.0 / snr;
    (0..count)
        .map(|_| phasors.iter().map(|g| g + cgauss(&mut r, var)).collect())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beamform::ArrayFactor;
    use crate::geometry::SteeringDirection;

    fn scene(seed: u64, truth: SteeringDirection) -> (Vec<Vec3>, Vec<C64>) {
        let mut r = rng::stream(seed, &[7]);
        let k = 2.0 * PI / 0.125;
        let pos: Vec<Vec3> = (0..10).map(|_| crate::channel::uniform_in_ball(&mut r, 1.0)).collect();
        let ph = pos.iter().map(|p| C64::from_polar(1.0, -k * p.dot(&truth.unit_vector()))).collect();
        (pos, ph)
    }

    fn fro(m: &DMatrix<C64>) -> f64 {
        m.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    #[test]
    fn single_snapshot_rank_one() {
        let v = vec![C64::new(1.0, 2.0), C64::new(-0.5, 0.3), C64::new(0.0, -1.0)];
        let c = covariance(&[v.clone()]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((c[(i, j)] - v[i] * v[j].conj()).norm() < 1e-15);
            }
        }
        assert!(fro(&(&c - c.adjoint())) < 1e-12);
        let bad = covariance(&[v, vec![C64::new(0.0, 0.0)]]);
        assert!(matches!(bad, Err(MusicError::DimensionMismatch { index: 1, .. })));
    }

    #[test]
    fn white_noise_spectrum_is_flat() {
        let snaps = synth_snapshots(&[C64::new(0.0, 0.0); 6], 1.0, 10_000, 3);
        let (vals, _) = hermitian_eigen(&covariance(&snaps).unwrap());
        let mean = vals.iter().sum::<f64>() / vals.len() as f64;
        for v in vals {
            assert!((v / mean - 1.0).abs() < 0.1, "{v}");
        }
    }

    #[test]
    fn eigen_residual() {
        let (_, ph) = scene(1, SteeringDirection::from_degrees(20.0, 30.0));
        let cov = covariance(&synth_snapshots(&ph, 100.0, 50, 2)).unwrap();
        let (vals, v) = hermitian_eigen(&cov);
        let lam = DMatrix::from_diagonal(&DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&x| C64::new(x, 0.0)),
        ));
        let recon = &v * lam * v.adjoint();
        assert!(fro(&(&cov - recon)) <= 1e-9 * fro(&cov));
    }

    #[test]
    fn steering_vector_is_orthogonal_to_noise() {
        let truth = SteeringDirection::from_degrees(70.0, 60.0);
        let (pos, ph) = scene(4, truth);
        let cov = covariance(&[ph]).unwrap();
        let spec = MusicSpectrum::new(&pos, noise_projector(&cov, 1).unwrap(), 0.125);
        assert!(spec.denominator(&truth.unit_vector()) <= 1e-9);
    }

    #[test]
    fn peak_agrees_with_beamformer() {
        let truth = SteeringDirection::from_degrees(-35.0, 25.0);
        let (pos, ph) = scene(6, truth);
        let cov = covariance(&synth_snapshots(&ph, 1e4, 100, 8)).unwrap();
        let grid = AngularGrid::default();
        let m = music_spectrum(&cov, &pos, 0.125, 1, &grid).unwrap();
        let b = sweep_spectrum(&ArrayFactor::from_phasors(pos.clone(), ph, 0.125), &grid).unwrap();
        assert!(m.peak_dir.angle_to(&b.peak_dir) <= 1.5f64.to_radians());
        assert!((m.peak_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn common_scaling_invariance() {
        let truth = SteeringDirection::from_degrees(10.0, -20.0);
        let (pos, ph) = scene(2, truth);
        let snaps = synth_snapshots(&ph, 10.0, 40, 1);
        let rot = C64::from_polar(1.0, 0.77);
        let rotated: Vec<Vec<C64>> = snaps.iter().map(|s| s.iter().map(|x| x * rot).collect()).collect();
        let a = MusicSpectrum::new(&pos, noise_projector(&covariance(&snaps).unwrap(), 1).unwrap(), 0.125);
        let b = MusicSpectrum::new(&pos, noise_projector(&covariance(&rotated).unwrap(), 1).unwrap(), 0.125);
        for d in [(0.0, 0.0), (10.0, -20.0), (120.0, 45.0)] {
            let u = SteeringDirection::from_degrees(d.0, d.1).unit_vector();
            assert!((a.denominator(&u) - b.denominator(&u)).abs() < 1e-9);
        }
    }
}
