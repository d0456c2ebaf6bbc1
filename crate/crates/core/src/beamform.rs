//! Receive beamforming over the virtual array of hover positions.
//!
//! Each aligned capture is reduced to one complex channel scalar by matched
//! filtering against the signature. Steering those scalars with the
//! far-field weights and summing gives the array factor; its squared
//! magnitude over a grid of directions is the beampattern, and its maximum
//! is the direction of arrival.
//!
//! Only the canonical half of the direction grid (`theta` in
//! `[-90°, 90°)`) is evaluated; the other half holds the same directions.

use std::cell::RefCell;
use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::ReceptionPoint;
use crate::geometry::{SteeringDirection, Vec3};
use crate::signal::{inner, IqTrace};
use crate::C64;

#[derive(Debug, Error, PartialEq)]
pub enum BeamformError {
    #[error("no reception points")]
    EmptyArray,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Search grid. The finest level has the stated resolutions; each coarser
/// level doubles them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AngularGrid {
    /// Degrees, final `phi` step.
    pub az_resolution: f64,
    /// Degrees, final `theta` step.
    pub el_resolution: f64,
    /// 1 is an exhaustive scan at the final resolution.
    pub refinement_levels: usize,
    /// Degrees, half-width of the window rescanned around each lobe.
    #[serde(default = "default_window")]
    pub window_deg: f64,
    /// Coarse lobes carried into refinement.
    #[serde(default = "default_max_lobes")]
    pub max_lobes: usize,
}

fn default_window() -> f64 {
    6.0
}

fn default_max_lobes() -> usize {
    16
}

impl Default for AngularGrid {
    fn default() -> Self {
        Self {
            az_resolution: 1.0,
            el_resolution: 1.0,
            refinement_levels: 2,
            window_deg: default_window(),
            max_lobes: default_max_lobes(),
        }
    }
}

impl AngularGrid {
    pub fn exhaustive(resolution: f64) -> Self {
        Self {
            az_resolution: resolution,
            el_resolution: resolution,
            refinement_levels: 1,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), BeamformError> {
        if self.refinement_levels < 1 {
            return Err(BeamformError::InvalidGrid(
                "refinement_levels must be >= 1".into(),
            ));
        }
        for l in 0..self.refinement_levels {
            let (az, el) = self.level_resolution(l);
            for (name, step, span) in [("az", az, 360.0), ("el", el, 180.0)] {
                let n = span / step;
                if !(step > 0.0) || (n - n.round()).abs() > 1e-9 || n.round() < 2.0 {
                    return Err(BeamformError::InvalidGrid(format!(
                        "{name} step {step}° at level {l} does not divide {span}°"
                    )));
                }
            }
        }
        if !(self.window_deg > 0.0) || self.max_lobes == 0 {
            return Err(BeamformError::InvalidGrid(
                "window_deg and max_lobes must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Resolution of level `l`, with level 0 the coarsest.
    pub fn level_resolution(&self, l: usize) -> (f64, f64) {
        let f = (1u64 << (self.refinement_levels - 1 - l)) as f64;
        (self.az_resolution * f, self.el_resolution * f)
    }
}

/// A power map over directions.
pub trait Spectrum {
    /// Value at the unit direction vector `u`.
    fn value(&self, u: &Vec3) -> f64;

    /// Value at cell `cell` of grid level `level`, whose direction is `u`.
    fn value_at(&self, _level: usize, _cell: (usize, usize), u: &Vec3) -> f64 {
        self.value(u)
    }
}

/// One level of the direction grid: `phi_i = -180° + i daz`,
/// `theta_j = -90° + j del`.
#[derive(Debug, Clone, PartialEq)]
pub struct GridLevel {
    pub az_step: f64,
    pub el_step: f64,
    pub n_az: usize,
    pub n_el: usize,
}

impl GridLevel {
    fn new(az_step: f64, el_step: f64) -> Self {
        Self {
            az_step,
            el_step,
            n_az: (360.0 / az_step).round() as usize,
            n_el: (180.0 / el_step).round() as usize,
        }
    }

    pub fn direction(&self, i: usize, j: usize) -> SteeringDirection {
        SteeringDirection::from_degrees(
            -180.0 + i as f64 * self.az_step,
            -90.0 + j as f64 * self.el_step,
        )
    }

    /// Canonical cell of a possibly out-of-range index pair.
    fn canonical(&self, i: i64, j: i64) -> (usize, usize) {
        let na = self.n_az as i64;
        let ne = self.n_el as i64;
        let mut i = i.rem_euclid(na);
        let mut j = j;
        if j < 0 || j >= ne {
            i = (na - i).rem_euclid(na);
            j = j.rem_euclid(ne);
        }
        (i as usize, j as usize)
    }

    /// Nearest cell to a direction given in degrees.
    fn nearest(&self, phi_deg: f64, theta_deg: f64) -> (usize, usize) {
        let i = ((phi_deg + 180.0) / self.az_step).round() as i64;
        let j = ((theta_deg + 90.0) / self.el_step).round() as i64;
        self.canonical(i, j)
    }
}

/// A direction with its spectrum value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lobe {
    pub direction: SteeringDirection,
    pub value: f64,
}

/// Result of a sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct Beampattern {
    pub grid: AngularGrid,
    /// The fully scanned first level.
    pub base: GridLevel,
    /// Values of the first level, index `i * n_el + j`.
    pub base_values: Vec<f64>,
    /// Every cell evaluated at the final resolution, ordered by `(phi, theta)`.
    pub fine_cells: Vec<Lobe>,
    /// Local maxima at the final resolution, strongest first.
    pub lobes: Vec<Lobe>,
    pub peak_dir: SteeringDirection,
    pub peak_value: f64,
}

impl Beampattern {
    /// Divides every value by `scale`.
    pub(crate) fn normalized(mut self, scale: f64) -> Self {
        if scale > 0.0 {
            self.base_values.iter_mut().for_each(|v| *v /= scale);
            self.fine_cells.iter_mut().for_each(|c| c.value /= scale);
            self.lobes.iter_mut().for_each(|c| c.value /= scale);
            self.peak_value /= scale;
        }
        self
    }

    /// Rows `(phi_deg, theta_deg, value)` for the base level followed by
    /// refined cells not already on it.
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        let b = &self.base;
        let mut rows = Vec::with_capacity(self.base_values.len() + self.fine_cells.len());
        for i in 0..b.n_az {
            for j in 0..b.n_el {
                let (p, t) = b.direction(i, j).to_degrees();
                rows.push((p, t, self.base_values[i * b.n_el + j]));
            }
        }
        if self.grid.refinement_levels > 1 {
            for c in &self.fine_cells {
                let (p, t) = c.direction.to_degrees();
                rows.push((p, t, c.value));
            }
        }
        rows
    }

    /// CSV text with header `phi_deg,theta_deg,P`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("phi_deg,theta_deg,P\n");
        for (p, t, v) in self.rows() {
            s.push_str(&format!("{p:.2},{t:.2},{v:.6e}\n"));
        }
        s
    }
}

/// Ordering key: larger value first, then lower `(i, j)`.
fn better(a: (f64, (usize, usize)), b: (f64, (usize, usize))) -> bool {
    a.0 > b.0 || (a.0 == b.0 && a.1 < b.1)
}

fn unit_table(level: &GridLevel) -> (Vec<(f64, f64)>, Vec<(f64, f64)>) {
    let az = (0..level.n_az)
        .map(|i| (-PI + i as f64 * level.az_step.to_radians()).sin_cos())
        .collect();
    let el = (0..level.n_el)
        .map(|j| (-PI / 2.0 + j as f64 * level.el_step.to_radians()).sin_cos())
        .collect();
    (az, el)
}

fn unit((sp, cp): (f64, f64), (st, ct): (f64, f64)) -> Vec3 {
    Vec3::new(cp, sp * ct, sp * st)
}

/// Local maxima of a full level under the [`better`] order, with `phi`
/// wrapping and `theta` continuing through the mirrored half.
fn dense_maxima(level: &GridLevel, values: &[f64]) -> Vec<(f64, (usize, usize))> {
    let mut out = Vec::new();
    for i in 0..level.n_az {
        for j in 0..level.n_el {
            let key = (values[i * level.n_el + j], (i, j));
            let mut is_max = true;
            'n: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    let c = if ni >= 0 && nj >= 0 && (ni as usize) < level.n_az && (nj as usize) < level.n_el {
                        (ni as usize, nj as usize)
                    } else {
                        level.canonical(ni, nj)
                    };
                    if c == (i, j) {
                        continue;
                    }
                    if better((values[c.0 * level.n_el + c.1], c), key) {
                        is_max = false;
                        break 'n;
                    }
                }
            }
            if is_max {
                out.push(key);
            }
        }
    }
    out.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    out
}

/// Sweeps `spectrum` over `grid`.
///
/// With one level every cell is evaluated. Otherwise the coarsest level is
/// scanned in full, and the strongest `max_lobes` local maxima are each
/// re-centered on the best cell within `window_deg` at every finer level.
pub fn sweep_spectrum<S: Spectrum + ?Sized>(
    spectrum: &S,
    grid: &AngularGrid,
) -> Result<Beampattern, BeamformError> {
    grid.validate()?;
    let (az0, el0) = grid.level_resolution(0);
    let base = GridLevel::new(az0, el0);
    let (taz, tel) = unit_table(&base);
    let mut base_values = Vec::with_capacity(base.n_az * base.n_el);
    for (i, a) in taz.iter().enumerate() {
        for (j, e) in tel.iter().enumerate() {
            base_values.push(spectrum.value_at(0, (i, j), &unit(*a, *e)));
        }
    }
    let maxima = dense_maxima(&base, &base_values);

    let (lobes_idx, fine_level, fine_values): (Vec<_>, GridLevel, HashMap<(usize, usize), f64>) =
        if grid.refinement_levels == 1 {
            let cells = (0..base.n_az)
                .flat_map(|i| (0..base.n_el).map(move |j| (i, j)))
                .map(|c| (c, base_values[c.0 * base.n_el + c.1]))
                .collect();
            (maxima, base.clone(), cells)
        } else {
            let mut centers: Vec<(f64, (usize, usize))> =
                maxima.into_iter().take(grid.max_lobes).collect();
            let mut prev = base.clone();
            let mut cache = HashMap::new();
            for l in 1..grid.refinement_levels {
                let (az, el) = grid.level_resolution(l);
                let level = GridLevel::new(az, el);
                cache = HashMap::new();
                let wi = (grid.window_deg / az).round() as i64;
                let wj = (grid.window_deg / el).round() as i64;
                centers = centers
                    .iter()
                    .map(|&(_, (ci, cj))| {
                        let (p, t) = prev.direction(ci, cj).to_degrees();
                        let (i0, j0) = level.nearest(p, t);
                        let mut best: Option<(f64, (usize, usize))> = None;
                        for di in -wi..=wi {
                            for dj in -wj..=wj {
                                let c = level.canonical(i0 as i64 + di, j0 as i64 + dj);
                                let v = *cache.entry(c).or_insert_with(|| {
                                    spectrum.value_at(l, c, &level.direction(c.0, c.1).unit_vector())
                                });
                                if best.is_none_or(|b| better((v, c), b)) {
                                    best = Some((v, c));
                                }
                            }
                        }
                        best.expect("window is non-empty")
                    })
                    .collect();
                centers.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
                centers.dedup_by(|a, b| a.1 == b.1);
                prev = level;
            }
            (centers, prev, cache)
        };

    let mut fine_cells: Vec<_> = fine_values.into_iter().collect();
    fine_cells.sort_by_key(|a| a.0);
    let fine_cells = fine_cells
        .into_iter()
        .map(|((i, j), v)| Lobe {
            direction: fine_level.direction(i, j),
            value: v,
        })
        .collect();
    let lobes: Vec<Lobe> = lobes_idx
        .iter()
        .map(|&(v, (i, j))| Lobe {
            direction: fine_level.direction(i, j),
            value: v,
        })
        .collect();
    let peak = lobes[0];
    Ok(Beampattern {
        grid: *grid,
        base,
        base_values,
        fine_cells,
        lobes,
        peak_dir: peak.direction.canonical(),
        peak_value: peak.value,
    })
}

/// Matched-filter channel scalar of each point, scaled to unit modulus.
pub fn channel_phasors(points: &[ReceptionPoint], signature: &IqTrace) -> Vec<C64> {
    let norm = inner(signature.samples(), signature.samples()).re;
    points
        .iter()
        .map(|p| {
            let g = inner(p.signal.samples(), signature.samples()) / norm;
            if g.norm() > 0.0 {
                g / g.norm()
            } else {
                g
            }
        })
        .collect()
}

/// The normalized array factor of a set of points, ready to sweep.
#[derive(Debug, Clone)]
pub struct ArrayFactor {
    /// Measured positions scaled by the wavenumber.
    positions: Vec<Vec3>,
    phasors: Vec<C64>,
}

impl ArrayFactor {
    pub fn new(
        points: &[ReceptionPoint],
        signature: &IqTrace,
        wavelength: f64,
    ) -> Result<Self, BeamformError> {
        if points.is_empty() {
            return Err(BeamformError::EmptyArray);
        }
        Ok(Self::from_phasors(
            points.iter().map(|p| p.measured_position.to_rect()).collect(),
            channel_phasors(points, signature),
            wavelength,
        ))
    }

    /// From rectangular positions and one phasor per position.
    pub fn from_phasors(positions: Vec<Vec3>, phasors: Vec<C64>, wavelength: f64) -> Self {
        let k = 2.0 * PI / wavelength;
        Self {
            positions: positions.into_iter().map(|p| p * k).collect(),
            phasors,
        }
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// `F = (1/N) sum_k w_k g_k` toward the unit vector `u`.
    pub fn evaluate(&self, u: &Vec3) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for (p, g) in self.positions.iter().zip(&self.phasors) {
            acc += C64::from_polar(1.0, p.dot(u)) * g;
        }
        acc / self.positions.len() as f64
    }

    /// The sub-array made of the given point indices.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            positions: idx.iter().map(|&i| self.positions[i]).collect(),
            phasors: idx.iter().map(|&i| self.phasors[i]).collect(),
        }
    }
}

impl Spectrum for ArrayFactor {
    fn value(&self, u: &Vec3) -> f64 {
        self.evaluate(u).norm_sqr()
    }
}

/// Steered per-point terms `w_k g_k` of one array, memoized per grid cell
/// so that repeated sub-array sweeps over the same grid only add them up.
#[derive(Debug)]
pub struct TermCache<'a> {
    af: &'a ArrayFactor,
    grid: AngularGrid,
    levels: Vec<GridLevel>,
    /// Per level, the arena offset of each cell's terms or `u32::MAX`.
    slots: RefCell<Vec<Vec<u32>>>,
    arena: RefCell<Vec<C64>>,
}

impl<'a> TermCache<'a> {
    pub fn new(af: &'a ArrayFactor, grid: &AngularGrid) -> Result<Self, BeamformError> {
        grid.validate()?;
        let levels: Vec<GridLevel> = (0..grid.refinement_levels)
            .map(|l| {
                let (az, el) = grid.level_resolution(l);
                GridLevel::new(az, el)
            })
            .collect();
        let slots = levels.iter().map(|g| vec![u32::MAX; g.n_az * g.n_el]).collect();
        Ok(Self {
            af,
            grid: *grid,
            levels,
            slots: RefCell::new(slots),
            arena: RefCell::new(Vec::new()),
        })
    }

    /// Same result as sweeping `af.subset(idx)` over the cache's grid.
    pub fn sweep(&self, idx: &[usize]) -> Result<Beampattern, BeamformError> {
        if idx.is_empty() {
            return Err(BeamformError::EmptyArray);
        }
        sweep_spectrum(&CachedSubset { cache: self, idx }, &self.grid)
    }
}

struct CachedSubset<'c, 'a> {
    cache: &'c TermCache<'a>,
    idx: &'c [usize],
}

impl Spectrum for CachedSubset<'_, '_> {
    fn value(&self, u: &Vec3) -> f64 {
        self.cache.af.subset(self.idx).value(u)
    }

    fn value_at(&self, level: usize, cell: (usize, usize), u: &Vec3) -> f64 {
        let c = self.cache;
        let slot = cell.0 * c.levels[level].n_el + cell.1;
        let mut slots = c.slots.borrow_mut();
        let mut arena = c.arena.borrow_mut();
        let mut off = slots[level][slot];
        if off == u32::MAX {
            off = arena.len() as u32;
            arena.extend(
                c.af.positions
                    .iter()
                    .zip(&c.af.phasors)
                    .map(|(p, g)| C64::from_polar(1.0, p.dot(u)) * g),
            );
            slots[level][slot] = off;
        }
        let terms = &arena[off as usize..off as usize + c.af.len()];
        let mut acc = C64::new(0.0, 0.0);
        for &k in self.idx {
            acc += terms[k];
        }
        (acc / self.idx.len() as f64).norm_sqr()
    }
}

pub fn array_factor(
    points: &[ReceptionPoint],
    signature: &IqTrace,
    dir: &SteeringDirection,
    wavelength: f64,
) -> Result<C64, BeamformError> {
    Ok(ArrayFactor::new(points, signature, wavelength)?.evaluate(&dir.unit_vector()))
}

pub fn sweep(
    points: &[ReceptionPoint],
    signature: &IqTrace,
    wavelength: f64,
    grid: &AngularGrid,
) -> Result<Beampattern, BeamformError> {
    sweep_spectrum(&ArrayFactor::new(points, signature, wavelength)?, grid)
}

/// Lobes within 3 dB of the peak, canonical and distinct.
pub fn harvest_lobes(bp: &Beampattern) -> Vec<SteeringDirection> {
    bp.lobes
        .iter()
        .filter(|l| l.value >= bp.peak_value / 2.0)
        .map(|l| l.direction.canonical())
        .collect()
}

/// Every final-resolution cell within 3 dB of the peak.
pub fn harvest_band(bp: &Beampattern) -> Vec<SteeringDirection> {
    bp.fine_cells
        .iter()
        .filter(|l| l.value >= bp.peak_value / 2.0)
        .map(|l| l.direction.canonical())
        .collect()
}

/// Expected beampattern of `n` points whose positions carry zero-mean
/// Gaussian spread of standard deviation `sigma_prime` along the steering
/// difference, at angle `phi` from the emitter.
pub fn average_beampattern(n: usize, sigma_prime: f64, wavelength: f64, phi: f64) -> f64 {
    let nf = n as f64;
    let x = 4.0 * PI * (phi / 2.0).sin();
    let main = (-x * x * sigma_prime * sigma_prime / (2.0 * wavelength * wavelength)).exp();
    1.0 / nf + (1.0 - 1.0 / nf) * main * main
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{wrap_pi, LocalSpherical};

    fn synthetic(n: usize, truth: SteeringDirection, seed: u64) -> ArrayFactor {
        let mut rng = crate::rng::stream(seed, &[1]);
        let k = 2.0 * PI / 0.125;
        let pos: Vec<Vec3> = (0..n)
            .map(|_| crate::channel::uniform_in_ball(&mut rng, 1.0))
            .collect();
        let ph = pos
            .iter()
            .map(|p| C64::from_polar(1.0, -k * p.dot(&truth.unit_vector())))
            .collect();
        ArrayFactor::from_phasors(pos, ph, 0.125)
    }

    #[test]
    fn cached_subsets_match_direct_sweeps() {
        let af = synthetic(12, SteeringDirection::from_degrees(-20.0, 35.0), 5);
        for grid in [AngularGrid::default(), AngularGrid::exhaustive(4.0)] {
            let cache = TermCache::new(&af, &grid).unwrap();
            for idx in [vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9], vec![11, 3, 7, 0, 5, 2], (0..12).collect()] {
                let a = cache.sweep(&idx).unwrap();
                let b = sweep_spectrum(&af.subset(&idx), &grid).unwrap();
                assert_eq!(a, b);
            }
        }
        assert_eq!(
            TermCache::new(&af, &AngularGrid::default()).unwrap().sweep(&[]),
            Err(BeamformError::EmptyArray)
        );
    }

    #[test]
    fn single_point_is_isotropic() {
        let af = ArrayFactor::from_phasors(
            vec![Vec3::new(0.3, -0.2, 0.5)],
            vec![C64::from_polar(1.0, 0.7)],
            0.125,
        );
        for d in [(0.0, 0.0), (70.0, 60.0), (-120.0, 33.0)] {
            let u = SteeringDirection::from_degrees(d.0, d.1).unit_vector();
            assert!((af.evaluate(&u).norm() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn truth_gives_unit_factor() {
        let t = SteeringDirection::from_degrees(70.0, 60.0);
        let af = synthetic(20, t, 3);
        assert!((af.evaluate(&t.unit_vector()).norm() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn flat_pattern_ties_to_lowest_cell() {
        let af = ArrayFactor::from_phasors(vec![Vec3::zeros(); 5], vec![C64::new(1.0, 0.0); 5], 0.125);
        for grid in [AngularGrid::exhaustive(4.0), AngularGrid::default()] {
            let bp = sweep_spectrum(&af, &grid).unwrap();
            assert_eq!(bp.lobes.len(), 1);
            assert!((bp.peak_value - 1.0).abs() < 1e-12);
            let (p, t) = bp.peak_dir.to_degrees();
            assert!((p + 180.0).abs() < 1e-9 && (t + 90.0).abs() < 1e-9, "{p} {t}");
        }
    }

    #[test]
    fn peak_at_truth_and_bounded() {
        let t = SteeringDirection::from_degrees(70.0, 60.0);
        let af = synthetic(20, t, 9);
        let bp = sweep_spectrum(&af, &AngularGrid::default()).unwrap();
        let (p, th) = bp.peak_dir.to_degrees();
        assert!((p - 70.0).abs() < 0.5 && (th - 60.0).abs() < 0.5, "{p} {th}");
        assert!(bp.base_values.iter().all(|v| (0.0..=1.0 + 1e-12).contains(v)));
        assert_eq!(harvest_lobes(&bp)[0], bp.peak_dir);
    }

    #[test]
    fn level_resolutions_and_validation() {
        let g = AngularGrid::default();
        assert_eq!(g.level_resolution(0), (2.0, 2.0));
        assert_eq!(g.level_resolution(1), (1.0, 1.0));
        let three = AngularGrid { refinement_levels: 3, ..g };
        assert_eq!(three.level_resolution(0), (4.0, 4.0));
        assert_eq!(three.level_resolution(2), (1.0, 1.0));
        assert!(AngularGrid::exhaustive(7.0).validate().is_err());
        assert!(AngularGrid { refinement_levels: 0, ..g }.validate().is_err());
    }

    #[test]
    fn mirrored_neighbors() {
        let l = GridLevel::new(10.0, 10.0);
        // theta = -100 at phi = 30 is theta = 80 at phi = -30
        let (i, j) = l.canonical(21, -1);
        let d = l.direction(i, j).to_degrees();
        assert!((d.0 + 30.0).abs() < 1e-9 && (d.1 - 80.0).abs() < 1e-9);
        let a = SteeringDirection::from_degrees(30.0, -100.0).unit_vector();
        assert!((a - l.direction(i, j).unit_vector()).norm() < 1e-12);
    }

    #[test]
    fn lobe_threshold() {
        // two pure lobes with a controlled ratio
        let make = |ratio: f64| {
            struct Two(Vec3, Vec3, f64);
            impl Spectrum for Two {
                fn value(&self, u: &Vec3) -> f64 {
                    let a = (-(u - self.0).norm_squared() * 200.0).exp();
                    let b = self.2 * (-(u - self.1).norm_squared() * 200.0).exp();
                    a.max(b)
                }
            }
            Two(
                SteeringDirection::from_degrees(40.0, 10.0).unit_vector(),
                SteeringDirection::from_degrees(120.0, -30.0).unit_vector(),
                ratio,
            )
        };
        let g = AngularGrid::exhaustive(2.0);
        let bp = sweep_spectrum(&make(10f64.powf(-0.2)), &g).unwrap();
        assert_eq!(harvest_lobes(&bp).len(), 2);
        let bp = sweep_spectrum(&make(10f64.powf(-0.4)), &g).unwrap();
        assert_eq!(harvest_lobes(&bp).len(), 1);
    }

    #[test]
    fn average_pattern_limits() {
        assert_eq!(average_beampattern(20, 0.05, 0.125, 0.0), 1.0);
        assert!((average_beampattern(20, 100.0, 0.125, 0.3) - 0.05).abs() < 1e-12);
    }

    #[test]
    fn global_phase_invariance() {
        let t = SteeringDirection::from_degrees(-40.0, 20.0);
        let af = synthetic(12, t, 2);
        let rot = C64::from_polar(1.0, 1.234);
        let af2 = ArrayFactor {
            positions: af.positions.clone(),
            phasors: af.phasors.iter().map(|g| g * rot).collect(),
        };
        for (p, th) in [(0.0, 0.0), (-40.0, 20.0), (100.0, -70.0)] {
            let u = SteeringDirection::from_degrees(p, th).unit_vector();
            assert!((af.value(&u) - af2.value(&u)).abs() < 1e-12);
        }
    }

    #[test]
    fn measured_positions_drive_weights() {
        let sig = crate::signal::make_signature(&crate::signal::WaveformSpec::wifi_like(), 1).unwrap();
        let truth = SteeringDirection::from_degrees(25.0, -15.0);
        let k = 2.0 * PI / 0.125;
        let pts: Vec<ReceptionPoint> = (0..4)
            .map(|i| {
                let pos = LocalSpherical { r: 0.2 * i as f64, psi: 0.3 * i as f64, zeta: -0.5 };
                let ph = -k * crate::geometry::d_prime(&pos, &truth);
                ReceptionPoint {
                    position: pos,
                    measured_position: pos,
                    signal: sig.scaled(C64::from_polar(1.0, ph)),
                    lag: 0,
                }
            })
            .collect();
        let f = array_factor(&pts, &sig, &truth, 0.125).unwrap();
        assert!((f.norm() - 1.0).abs() < 1e-9);
        assert!(wrap_pi(f.arg()).abs() < 1e-9);
        assert_eq!(array_factor(&[], &sig, &truth, 0.125), Err(BeamformError::EmptyArray));
    }
}
