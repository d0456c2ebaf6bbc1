//! Subset expansion, k-means over candidate directions, and the iterative
//! direction-of-arrival loop.
//!
//! Each iteration beamforms a random subset of the hover positions and adds
//! the strong lobes of its pattern to a growing candidate set. Subsets that
//! avoid badly aligned or badly positioned points agree with each other, so
//! their candidates form a tight cluster; the loop stops once the tightest
//! cluster is small enough and reports its median.

use std::collections::HashSet;
use std::f64::consts::{PI, TAU};

use rand::Rng as _;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beamform::{
    harvest_band, harvest_lobes, sweep_spectrum, AngularGrid, ArrayFactor, BeamformError, TermCache,
};
use crate::geometry::{wrap_pi, SteeringDirection};
use crate::rng;

#[derive(Debug, Error, PartialEq)]
pub enum ClusterError {
    #[error("subset size {m} is outside [{lo}, {hi}] for {n} points")]
    InvalidM { n: usize, m: usize, lo: usize, hi: usize },
    #[error("all {0} distinct subsets already drawn")]
    SubsetsExhausted(u128),
    #[error("no candidate directions")]
    EmptyCandidates,
    #[error("invalid algorithm config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Beamform(#[from] BeamformError),
}

/// `n choose k`.
pub fn binom(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    acc
}

/// Smallest and largest subset sizes of the iterative loop, `ceil(N/2)` and
/// `N - 2`.
pub fn subset_range(n: usize) -> (usize, usize) {
    (n.div_ceil(2), n.saturating_sub(2))
}

/// Draws distinct uniformly random `m`-subsets of `0..n`, each sorted.
#[derive(Debug, Clone)]
pub struct SubsetSampler {
    n: usize,
    m: usize,
    total: u128,
    seen: HashSet<Vec<usize>>,
    rng: rng::Rng,
}

impl SubsetSampler {
    pub fn new(n: usize, m: usize, seed: u64) -> Result<Self, ClusterError> {
        let (lo, hi) = subset_range(n);
        if m < lo || m > hi || m == 0 {
            return Err(ClusterError::InvalidM { n, m, lo, hi });
        }
        Ok(Self {
            n,
            m,
            total: binom(n, m),
            seen: HashSet::new(),
            rng: rng::stream(seed, &[0x5B, m as u64]),
        })
    }

    pub fn available(&self) -> u128 {
        self.total
    }

    pub fn next_subset(&mut self) -> Result<Vec<usize>, ClusterError> {
        if self.seen.len() as u128 >= self.total {
            return Err(ClusterError::SubsetsExhausted(self.total));
        }
        loop {
            let mut s = rand::seq::index::sample(&mut self.rng, self.n, self.m).into_vec();
            s.sort_unstable();
            if self.seen.insert(s.clone()) {
                return Ok(s);
            }
        }
    }
}

/// The first `count` distinct subsets for `(n, m, seed)`.
pub fn subsets(n: usize, m: usize, count: usize, seed: u64) -> Result<Vec<Vec<usize>>, ClusterError> {
    let mut s = SubsetSampler::new(n, m, seed)?;
    (0..count).map(|_| s.next_subset()).collect()
}

/// A candidate direction as `(phi, theta)` radians.
pub type Angles = (f64, f64);

fn sq_dist(a: Angles, b: Angles) -> f64 {
    let dp = wrap_diff(a.0 - b.0);
    let dt = wrap_diff(a.1 - b.1);
    dp * dp + dt * dt
}

/// [`wrap_pi`] with a fast path for differences of two wrapped angles.
fn wrap_diff(d: f64) -> f64 {
    if (-PI..PI).contains(&d) {
        d
    } else if (-TAU..-PI).contains(&d) {
        d + TAU
    } else if (PI..TAU).contains(&d) {
        d - TAU
    } else {
        wrap_pi(d)
    }
}

/// Point minimizing the sum of squared wrapped differences to `values`.
///
/// The optimum is the plain mean of one of the `n` unwrappings obtained by
/// cutting the sorted circle between consecutive values; all are tried.
pub fn circular_ls_mean(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|&a| wrap_pi(a)).collect();
    v.sort_by(f64::total_cmp);
    ls_mean_sorted(&v)
}

/// [`circular_ls_mean`] of values already wrapped and sorted.
fn ls_mean_sorted(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    let mut sum: f64 = v.iter().sum();
    let mut sum_sq: f64 = v.iter().map(|x| x * x).sum();
    let mut best = (sum_sq - sum * sum / n, sum / n);
    // move the lowest value up by a full turn, one at a time
    for &x in v.iter().take(v.len().saturating_sub(1)) {
        let y = x + TAU;
        sum += y - x;
        sum_sq += y * y - x * x;
        let sse = sum_sq - sum * sum / n;
        if sse < best.0 - 1e-12 {
            best = (sse, sum / n);
        }
    }
    wrap_pi(best.1)
}

/// Median of angles unwrapped around `center`.
fn circular_median(values: &[f64], center: f64) -> f64 {
    let mut v: Vec<f64> = values.iter().map(|&a| center + wrap_pi(a - center)).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let m = if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    };
    wrap_pi(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub centroids: Vec<Angles>,
    /// Cluster index of every candidate.
    pub assignments: Vec<usize>,
    /// Total objective, squared radians.
    pub objective: f64,
    pub per_cluster: Vec<f64>,
    pub counts: Vec<usize>,
    pub dominant: usize,
    /// `sqrt(L_r / N_r)` of the dominant cluster, radians.
    pub dominant_radius: f64,
    pub dominant_count: usize,
    /// Whether the dominant cluster met the minimum size.
    pub qualified: bool,
    /// Objective after every assignment step.
    pub history: Vec<f64>,
}

impl ClusterResult {
    pub fn members<'a>(&'a self, candidates: &'a [Angles]) -> impl Iterator<Item = Angles> + 'a {
        self.assignments
            .iter()
            .zip(candidates)
            .filter(move |(a, _)| **a == self.dominant)
            .map(|(_, c)| *c)
    }
}

fn assign(candidates: &[Angles], centroids: &[Angles]) -> Vec<usize> {
    candidates
        .iter()
        .map(|&c| {
            let mut best = (0usize, f64::INFINITY);
            for (r, &m) in centroids.iter().enumerate() {
                let d = sq_dist(c, m);
                if d < best.1 {
                    best = (r, d);
                }
            }
            best.0
        })
        .collect()
}

fn objective(candidates: &[Angles], centroids: &[Angles], assignments: &[usize]) -> Vec<f64> {
    let mut per = vec![0.0; centroids.len()];
    for (c, &a) in candidates.iter().zip(assignments) {
        per[a] += sq_dist(*c, centroids[a]);
    }
    per
}

/// k-means on wrapped angle pairs with farthest-point seeding.
///
/// `k` is capped at the number of candidates. The dominant cluster is the
/// one with the smallest radius among clusters of at least
/// `min_cluster_size` members; ties prefer more members, then the lower
/// index. When no cluster is large enough, the largest one is reported and
/// `qualified` is false.
pub fn kmeans(
    candidates: &[Angles],
    k: usize,
    seed: u64,
    min_cluster_size: usize,
) -> Result<ClusterResult, ClusterError> {
    if candidates.is_empty() {
        return Err(ClusterError::EmptyCandidates);
    }
    if k == 0 {
        return Err(ClusterError::InvalidConfig("k must be >= 1".into()));
    }
    let k = k.min(candidates.len());
    let mut r = rng::stream(seed, &[0x63]);
    let mut centroids = vec![candidates[r.random_range(0..candidates.len())]];
    let mut nearest: Vec<f64> = candidates.iter().map(|&c| sq_dist(c, centroids[0])).collect();
    while centroids.len() < k {
        let mut best = (0usize, -1.0);
        for (i, &d) in nearest.iter().enumerate() {
            if d > best.1 {
                best = (i, d);
            }
        }
        let c = candidates[best.0];
        centroids.push(c);
        for (d, &x) in nearest.iter_mut().zip(candidates) {
            *d = d.min(sq_dist(x, c));
        }
    }

    let mut assignments = assign(candidates, &centroids);
    let mut history = vec![objective(candidates, &centroids, &assignments).iter().sum()];
    let sorted = |f: fn(&Angles) -> f64| {
        let mut v: Vec<(f64, usize)> = candidates.iter().enumerate().map(|(i, c)| (wrap_pi(f(c)), i)).collect();
        v.sort_by(|a, b| a.0.total_cmp(&b.0));
        v
    };
    let by_phi = sorted(|c| c.0);
    let by_theta = sorted(|c| c.1);
    let mut buf = Vec::with_capacity(candidates.len());
    let mut mean_of = |order: &[(f64, usize)], assignments: &[usize], r: usize| {
        buf.clear();
        buf.extend(order.iter().filter(|(_, i)| assignments[*i] == r).map(|(x, _)| *x));
        (!buf.is_empty()).then(|| ls_mean_sorted(&buf))
    };
    for _ in 0..200 {
        for (r, centroid) in centroids.iter_mut().enumerate() {
            if let (Some(p), Some(t)) = (mean_of(&by_phi, &assignments, r), mean_of(&by_theta, &assignments, r)) {
                *centroid = (p, t);
            }
        }
        let next = assign(candidates, &centroids);
        history.push(objective(candidates, &centroids, &next).iter().sum());
        if next == assignments {
            break;
        }
        assignments = next;
    }

    let per_cluster = objective(candidates, &centroids, &assignments);
    let mut counts = vec![0usize; k];
    for &a in &assignments {
        counts[a] += 1;
    }
    let radius = |r: usize| (per_cluster[r] / counts[r] as f64).sqrt();
    let pick = |eligible: &dyn Fn(usize) -> bool| {
        let mut best: Option<usize> = None;
        for r in (0..k).filter(|&r| counts[r] > 0 && eligible(r)) {
            best = match best {
                None => Some(r),
                Some(b) => {
                    let (rr, rb) = (radius(r), radius(b));
                    if rr < rb || (rr == rb && counts[r] > counts[b]) {
                        Some(r)
                    } else {
                        Some(b)
                    }
                }
            };
        }
        best
    };
    let (dominant, qualified) = match pick(&|r| counts[r] >= min_cluster_size) {
        Some(d) => (d, true),
        None => {
            let mut d = 0;
            for r in 1..k {
                if counts[r] > counts[d] {
                    d = r;
                }
            }
            (d, false)
        }
    };
    Ok(ClusterResult {
        objective: per_cluster.iter().sum(),
        dominant_radius: radius(dominant),
        dominant_count: counts[dominant],
        centroids,
        assignments,
        per_cluster,
        counts,
        dominant,
        qualified,
        history,
    })
}

/// What a sweep contributes to the candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum HarvestMode {
    /// Local maxima within 3 dB of the peak.
    #[default]
    Maxima,
    /// Every final-resolution cell within 3 dB of the peak.
    Band,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmConfig {
    /// Iteration cap per subset size.
    #[serde(default = "defaults::n_max")]
    pub n_max: usize,
    /// Degrees.
    #[serde(default = "defaults::r_th")]
    pub radius_threshold_deg: f64,
    #[serde(default = "defaults::k")]
    pub k: usize,
    #[serde(default = "defaults::min_cluster_size")]
    pub min_cluster_size: usize,
    #[serde(default)]
    pub harvest: HarvestMode,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    pub fn n_max() -> usize {
        40
    }
    pub fn r_th() -> f64 {
        5.0
    }
    pub fn k() -> usize {
        3
    }
    pub fn min_cluster_size() -> usize {
        3
    }
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            n_max: defaults::n_max(),
            radius_threshold_deg: defaults::r_th(),
            k: defaults::k(),
            min_cluster_size: defaults::min_cluster_size(),
            harvest: HarvestMode::Maxima,
            seed: 0,
        }
    }
}

impl AlgorithmConfig {
    pub fn validate(&self) -> Result<(), ClusterError> {
        if self.n_max == 0 || self.k == 0 || self.min_cluster_size == 0 {
            return Err(ClusterError::InvalidConfig(
                "n_max, k and min_cluster_size must be >= 1".into(),
            ));
        }
        if !(self.radius_threshold_deg > 0.0) {
            return Err(ClusterError::InvalidConfig(
                "radius_threshold_deg must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoaSource {
    SingleSweep,
    Clustered,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DoaEstimate {
    /// Canonical direction.
    pub direction: SteeringDirection,
    pub source: DoaSource,
}

/// One iteration of the loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TelemetryRow {
    pub m: usize,
    pub n: usize,
    pub candidates: usize,
    pub dominant_radius_deg: f64,
    pub centroid_phi_deg: f64,
    pub centroid_theta_deg: f64,
    pub qualified: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DoaOutcome {
    pub estimate: DoaEstimate,
    pub telemetry: Vec<TelemetryRow>,
    /// Smallest qualified dominant radius seen, radians; infinite if none.
    pub dominant_radius: f64,
    pub candidates: Vec<Angles>,
}

impl DoaOutcome {
    pub fn iterations(&self) -> usize {
        self.telemetry.len()
    }
}

/// Direction of the full-array beampattern peak.
pub fn single_sweep(af: &ArrayFactor, grid: &AngularGrid) -> Result<DoaEstimate, ClusterError> {
    let bp = sweep_spectrum(af, grid)?;
    Ok(DoaEstimate {
        direction: bp.peak_dir,
        source: DoaSource::SingleSweep,
    })
}

/// The iterative subset/cluster loop.
///
/// Subset sizes run from `N - 2` down to `ceil(N/2)`, with up to `n_max`
/// subsets each. The candidate set persists across sizes. The loop keeps
/// the clustering with the smallest qualified dominant radius and stops as
/// soon as that radius is below the threshold; the estimate is the
/// component-wise median of that cluster.
pub fn algorithm1(
    af: &ArrayFactor,
    cfg: &AlgorithmConfig,
    grid: &AngularGrid,
) -> Result<DoaOutcome, ClusterError> {
    cfg.validate()?;
    let n = af.len();
    let (lo, hi) = subset_range(n);
    if n < 4 || lo > hi {
        return Err(ClusterError::InvalidM { n, m: hi, lo, hi });
    }
    let r_th = cfg.radius_threshold_deg.to_radians();
    let mut candidates: Vec<Angles> = Vec::new();
    let mut telemetry = Vec::new();
    let mut best: Option<(f64, Vec<Angles>, Angles)> = None;
    let mut fallback: Option<(Vec<Angles>, Angles)> = None;
    let cache = TermCache::new(af, grid)?;

    'outer: for m in (lo..=hi).rev() {
        let mut sampler = SubsetSampler::new(n, m, cfg.seed)?;
        for it in 0..cfg.n_max {
            let idx = match sampler.next_subset() {
                Ok(s) => s,
                Err(ClusterError::SubsetsExhausted(_)) => break,
                Err(e) => return Err(e),
            };
            let bp = cache.sweep(&idx)?;
            let dirs = match cfg.harvest {
                HarvestMode::Maxima => harvest_lobes(&bp),
                HarvestMode::Band => harvest_band(&bp),
            };
            candidates.extend(dirs.iter().map(|d| (d.phi, d.theta)));
            let res = kmeans(&candidates, cfg.k, cfg.seed, cfg.min_cluster_size)?;
            let members: Vec<Angles> = res.members(&candidates).collect();
            let centroid = res.centroids[res.dominant];
            telemetry.push(TelemetryRow {
                m,
                n: it,
                candidates: candidates.len(),
                dominant_radius_deg: res.dominant_radius.to_degrees(),
                centroid_phi_deg: centroid.0.to_degrees(),
                centroid_theta_deg: centroid.1.to_degrees(),
                qualified: res.qualified,
            });
            if res.qualified {
                if best.as_ref().is_none_or(|b| res.dominant_radius < b.0) {
                    best = Some((res.dominant_radius, members, centroid));
                }
                if res.dominant_radius < r_th {
                    break 'outer;
                }
            } else {
                fallback = Some((members, centroid));
            }
        }
    }

    let (radius, members, centroid) = match (best, fallback) {
        (Some(b), _) => b,
        (None, Some((m, c))) => (f64::INFINITY, m, c),
        (None, None) => return Err(ClusterError::EmptyCandidates),
    };
    let phis: Vec<f64> = members.iter().map(|a| a.0).collect();
    let thetas: Vec<f64> = members.iter().map(|a| a.1).collect();
    let direction = SteeringDirection::new(
        circular_median(&phis, centroid.0),
        circular_median(&thetas, centroid.1),
    )
    .canonical();
    Ok(DoaOutcome {
        estimate: DoaEstimate {
            direction,
            source: DoaSource::Clustered,
        },
        telemetry,
        dominant_radius: radius,
        candidates,
    })
}

/// Angular error of an estimate against the representation of `truth`
/// nearest to it: `(|d phi|, |d theta|)` in radians.
pub fn component_errors(estimate: &SteeringDirection, truth: &SteeringDirection) -> (f64, f64) {
    let e = |t: &SteeringDirection| {
        (
            wrap_pi(estimate.phi - t.phi).abs(),
            wrap_pi(estimate.theta - t.theta).abs(),
        )
    };
    let a = e(truth);
    let b = e(&truth.mirror());
    if a.0 * a.0 + a.1 * a.1 <= b.0 * b.0 + b.1 * b.1 {
        a
    } else {
        b
    }
}
