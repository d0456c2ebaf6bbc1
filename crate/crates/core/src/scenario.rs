//! Scenario files and Monte-Carlo runs of the full pipeline.
//!
//! A trial synthesizes captures at `N` hover positions around each of two
//! locations, detects the signature blindly on the first capture, aligns
//! and CFO-corrects every capture, estimates one direction per location and
//! intersects the two bearings.

use std::time::Instant;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::align::{align_capture, correct_cfo, estimate_cfo, ReceptionPoint};
use crate::beamform::{channel_phasors, AngularGrid, ArrayFactor};
use crate::channel::{
    perturb_position, propagate, uniform_in_ball, EmitterTruth, ImpairmentConfig, Multipath,
};
use crate::cluster::{algorithm1, component_errors, single_sweep, AlgorithmConfig, TelemetryRow};
use crate::detect::{detect, DetectorConfig, SignatureModel};
use crate::fix::{error_metrics, localize, ErrorMetrics, FixResult};
use crate::music::{covariance, music_spectrum, synth_snapshots};
use crate::geometry::{relative_location, LocalSpherical, SteeringDirection, Vec3};
use crate::signal::{embed, make_signature, IqTrace, WaveformSpec};
use crate::rng;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub waveform: WaveformSpec,
    /// World east-north-up meters.
    pub emitter: [f64; 3],
    pub locations: [[f64; 3]; 2],
    #[serde(default = "defaults::sphere_radius")]
    pub sphere_radius: f64,
    #[serde(default = "defaults::points")]
    pub points_per_location: usize,
    pub impairments: ImpairmentConfig,
    #[serde(default)]
    pub algorithm: AlgorithmConfig,
    #[serde(default)]
    pub detector: DetectorConfig,
    #[serde(default)]
    pub grid: AngularGrid,
    #[serde(default)]
    pub method: DoaMethod,
    /// Snapshots per location for the MUSIC method.
    #[serde(default = "defaults::snapshots")]
    pub music_snapshots: usize,
    /// Each aligned capture is moved by a uniform integer in
    /// `[-alignment_jitter, alignment_jitter]` samples.
    #[serde(default)]
    pub alignment_jitter: usize,
    /// Samples of silence budgeted on each side of the signature.
    #[serde(default = "defaults::guard")]
    pub guard: usize,
    #[serde(default = "defaults::trials")]
    pub trials: usize,
    #[serde(default)]
    pub seed: u64,
}

/// Direction finder applied at each location.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DoaMethod {
    /// The subset/cluster loop.
    #[default]
    Cluster,
    /// One full-array beamformer sweep.
    Single,
    /// MUSIC pseudospectrum over the same channel phasors.
    Music,
}

mod defaults {
    pub fn sphere_radius() -> f64 {
        1.0
    }
    pub fn points() -> usize {
        20
    }
    pub fn snapshots() -> usize {
        100
    }
    pub fn guard() -> usize {
        200
    }
    pub fn trials() -> usize {
        1
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let s: Self = toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Wi-Fi-like waveform, two locations 20 m apart at 20 m altitude and an
    /// emitter on the ground, 14 dB, 2.5 cm position error.
    pub fn paper_regime() -> Self {
        Self {
            name: "wifi_14db".into(),
            waveform: WaveformSpec::wifi_like(),
            emitter: [10.0, 20.0, 0.0],
            locations: [[0.0, 0.0, 20.0], [20.0, 0.0, 20.0]],
            sphere_radius: 1.0,
            points_per_location: 20,
            impairments: ImpairmentConfig {
                snr_db: Some(14.0),
                multipath: Multipath::None,
                cfo_hz: 0.0,
                pos_error_sigma: 0.025,
                seed: 0,
            },
            algorithm: AlgorithmConfig::default(),
            detector: DetectorConfig::default(),
            grid: AngularGrid::default(),
            method: DoaMethod::Cluster,
            music_snapshots: 100,
            alignment_jitter: 0,
            guard: 200,
            trials: 200,
            seed: 1,
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let inv = |m: String| Err(ScenarioError::Invalid(m));
        self.waveform
            .validate()
            .or_else(|e| inv(e.to_string()))?;
        self.impairments
            .validate()
            .or_else(|e| inv(e.to_string()))?;
        self.algorithm
            .validate()
            .or_else(|e| inv(e.to_string()))?;
        self.detector
            .validate()
            .or_else(|e| inv(e.to_string()))?;
        self.grid.validate().or_else(|e| inv(e.to_string()))?;
        if !(self.sphere_radius > 0.0) {
            return inv("sphere_radius must be positive".into());
        }
        if self.points_per_location < 4 {
            return inv("points_per_location must be >= 4".into());
        }
        let e = Vec3::from(self.emitter);
        for (i, l) in self.locations.iter().enumerate() {
            let r = (e - Vec3::from(*l)).norm();
            if r < 10.0 * self.sphere_radius {
                return inv(format!(
                    "emitter is {r:.2} m from location {}; far field needs >= {:.2} m",
                    i + 1,
                    10.0 * self.sphere_radius
                ));
            }
        }
        if relative_location(&Vec3::from(self.locations[0]), &Vec3::from(self.locations[1])).is_err() {
            return inv("locations coincide".into());
        }
        if matches!(self.impairments.multipath, Multipath::TwoRay { .. })
            && (self.emitter[2] <= 0.0 || self.locations.iter().any(|l| l[2] <= 0.0))
        {
            return inv("two-ray needs the emitter and both locations above the ground".into());
        }
        if self.method == DoaMethod::Music && self.music_snapshots == 0 {
            return inv("music_snapshots must be positive".into());
        }
        if self.guard < self.alignment_jitter + 4 {
            return inv("guard must exceed alignment_jitter".into());
        }
        if self.waveform.signature_len() + 2 * self.guard < self.detector.window_len {
            return inv("capture is shorter than the detector window".into());
        }
        Ok(())
    }

    pub fn capture_len(&self) -> usize {
        self.waveform.signature_len() + 2 * self.guard
    }
}

/// Captures and ground truth of one location in one trial.
#[derive(Debug, Clone)]
pub struct LocationData {
    pub world: Vec3,
    /// World position of the first hover point as measured.
    pub measured_world: Vec3,
    pub truth: EmitterTruth,
    pub raw: Vec<IqTrace>,
    pub true_positions: Vec<Vec3>,
    /// Positions relative to the measured first point.
    pub measured_positions: Vec<Vec3>,
}

/// Synthesizes the captures of location `loc` for the trial seeded with
/// `seed`.
pub fn capture_location(
    s: &Scenario,
    signature: &IqTrace,
    seed: u64,
    loc: usize,
) -> Result<LocationData, String> {
    let world = Vec3::from(s.locations[loc]);
    let truth = EmitterTruth::from_offset(&(Vec3::from(s.emitter) - world));
    let mut r = rng::stream(seed, &[0x10C, loc as u64]);
    let n = s.points_per_location;
    let true_positions: Vec<Vec3> = (0..n)
        .map(|k| {
            if k == 0 {
                Vec3::zeros()
            } else {
                uniform_in_ball(&mut r, s.sphere_radius)
            }
        })
        .collect();
    let noisy: Vec<Vec3> = true_positions
        .iter()
        .enumerate()
        .map(|(k, p)| {
            perturb_position(p, s.impairments.pos_error_sigma, rng::derive(seed, &[0x905, loc as u64, k as u64]))
        })
        .collect();
    let measured_positions = noisy.iter().map(|p| p - noisy[0]).collect();
    let buffer = s.capture_len();
    let (lo, hi) = (s.guard / 4, buffer - signature.len() - s.guard / 4);
    let multipath = match s.impairments.multipath {
        Multipath::TwoRay { reflection_coefficient, .. } => Multipath::TwoRay {
            reflection_coefficient,
            receiver_height: world.z,
        },
        m => m,
    };
    let mut raw = Vec::with_capacity(n);
    for (k, p) in true_positions.iter().enumerate() {
        let offset = r.random_range(lo..=hi);
        let buf = embed(signature, buffer, offset).map_err(|e| e.to_string())?;
        let cfg = ImpairmentConfig {
            multipath,
            seed: rng::derive(seed, &[0xC4, loc as u64, k as u64]),
            ..s.impairments
        };
        raw.push(
            propagate(&buf, &LocalSpherical::from_rect(p), &truth, &cfg, s.sphere_radius)
                .map_err(|e| e.to_string())?,
        );
    }
    Ok(LocationData {
        world,
        measured_world: world + noisy[0],
        truth,
        raw,
        true_positions,
        measured_positions,
    })
}

/// Aligns, jitters and CFO-corrects the captures of one location.
pub fn reception_points(
    s: &Scenario,
    data: &LocationData,
    sig: &SignatureModel,
    seed: u64,
    loc: usize,
) -> Result<Vec<ReceptionPoint>, String> {
    let mut r = rng::stream(seed, &[0x717, loc as u64]);
    let j = s.alignment_jitter as i64;
    let w = sig.signature_width;
    let mut points = Vec::with_capacity(data.raw.len());
    for (k, raw) in data.raw.iter().enumerate() {
        // a capture that fails to align (deep fade) is dropped
        let (mut lag, mut y) = match align_capture(raw, sig, s.detector.corr_threshold) {
            Ok(a) => a,
            Err(_) => continue,
        };
        if j > 0 {
            let shifted = (lag as i64 + r.random_range(-j..=j)).clamp(0, (raw.len() - w) as i64) as usize;
            lag = shifted;
            y = raw.slice(lag..lag + w);
        }
        points.push(ReceptionPoint {
            position: LocalSpherical::from_rect(&data.true_positions[k]),
            measured_position: LocalSpherical::from_rect(&data.measured_positions[k]),
            signal: y,
            lag,
        });
    }
    if points.len() < 4 {
        return Err(format!(
            "align: only {} of {} captures aligned",
            points.len(),
            data.raw.len()
        ));
    }
    let cfo = estimate_cfo(&points[0].signal, sig).map_err(|e| format!("cfo: {e}"))?;
    Ok(correct_cfo(&points, cfo))
}

/// Everything a trial produces before direction finding.
#[derive(Debug, Clone)]
pub struct PreparedTrial {
    pub seed: u64,
    pub signature: SignatureModel,
    pub locations: Vec<LocationData>,
    pub points: Vec<Vec<ReceptionPoint>>,
}

impl PreparedTrial {
    pub fn array_factor(&self, loc: usize) -> ArrayFactor {
        ArrayFactor::new(
            &self.points[loc],
            &self.signature.signature,
            self.signature.signature.carrier_wavelength(),
        )
        .expect("locations have points")
    }
}

/// Runs synthesis, detection, alignment and CFO correction.
pub fn prepare_trial(s: &Scenario, trial_id: u64) -> Result<PreparedTrial, String> {
    let seed = rng::trial_seed(s.seed, trial_id);
    let signature = make_signature(&s.waveform, rng::derive(seed, &[0x516]))
        .map_err(|e| e.to_string())?;
    let locations = (0..2)
        .map(|l| capture_location(s, &signature, seed, l))
        .collect::<Result<Vec<_>, _>>()?;
    // the first capture that yields a signature; later ones only matter
    // when the first sits in a fade
    let mut attempts = locations[0].raw.iter().map(|raw| detect(raw, &s.detector));
    let first = attempts.next().expect("locations have captures");
    let model = match first {
        Ok(m) => m,
        Err(e) => attempts.find_map(Result::ok).ok_or_else(|| format!("detect: {e}"))?,
    };
    let points = (0..2)
        .map(|l| reception_points(s, &locations[l], &model, seed, l))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(PreparedTrial {
        seed,
        signature: model,
        locations,
        points,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocationRecord {
    pub true_doa: SteeringDirection,
    pub estimate: Option<SteeringDirection>,
    /// Degrees.
    pub az_err: Option<f64>,
    pub el_err: Option<f64>,
    pub gc_err: Option<f64>,
    pub dominant_radius: Option<f64>,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial_id: u64,
    pub status: String,
    pub locations: [LocationRecord; 2],
    pub fix: Option<FixResult>,
    pub errors: Option<ErrorMetrics>,
    pub wall_time: f64,
}

impl TrialRecord {
    pub fn ok(&self) -> bool {
        self.status == "ok"
    }

    pub fn iterations(&self) -> usize {
        self.locations.iter().map(|l| l.iterations).sum()
    }
}

#[derive(Debug, Clone)]
pub struct TrialOutput {
    pub record: TrialRecord,
    /// `(location, row)`.
    pub telemetry: Vec<(usize, TelemetryRow)>,
}

fn blank(truth: SteeringDirection) -> LocationRecord {
    LocationRecord {
        true_doa: truth,
        estimate: None,
        az_err: None,
        el_err: None,
        gc_err: None,
        dominant_radius: None,
        iterations: 0,
    }
}

/// One trial, never panicking on stage failures: the failure is recorded in
/// `status`.
fn music_doa(s: &Scenario, prepared: &PreparedTrial, loc: usize) -> Result<SteeringDirection, String> {
    let points = &prepared.points[loc];
    let sig = &prepared.signature.signature;
    let positions: Vec<Vec3> = points.iter().map(|p| p.measured_position.to_rect()).collect();
    let phasors = channel_phasors(points, sig);
    // per-point SNR after matched filtering over the signature
    let snr = s
        .impairments
        .snr_db
        .map_or(1e9, |db| 10f64.powf(db / 10.0) * sig.len() as f64);
    let snaps = synth_snapshots(&phasors, snr, s.music_snapshots, rng::derive(prepared.seed, &[0x30C, loc as u64]));
    let cov = covariance(&snaps).map_err(|e| e.to_string())?;
    let bp = music_spectrum(&cov, &positions, sig.carrier_wavelength(), 1, &s.grid).map_err(|e| e.to_string())?;
    Ok(bp.peak_dir)
}

pub fn run_trial(s: &Scenario, trial_id: u64) -> TrialOutput {
    let start = Instant::now();
    let truths: Vec<SteeringDirection> = s
        .locations
        .iter()
        .map(|l| SteeringDirection::from_vector(&(Vec3::from(s.emitter) - Vec3::from(*l))))
        .collect();
    let mut record = TrialRecord {
        trial_id,
        status: "ok".into(),
        locations: [blank(truths[0]), blank(truths[1])],
        fix: None,
        errors: None,
        wall_time: 0.0,
    };
    let mut telemetry = Vec::new();
    let prepared = match prepare_trial(s, trial_id) {
        Ok(p) => p,
        Err(e) => {
            record.status = e;
            record.wall_time = start.elapsed().as_secs_f64();
            return TrialOutput { record, telemetry };
        }
    };
    let mut estimates = Vec::new();
    for l in 0..2 {
        let af = prepared.array_factor(l);
        let result = match s.method {
            DoaMethod::Cluster => {
                let cfg = AlgorithmConfig {
                    seed: rng::derive(prepared.seed, &[0xA1, l as u64]),
                    ..s.algorithm
                };
                algorithm1(&af, &cfg, &s.grid)
                    .map(|o| {
                        telemetry.extend(o.telemetry.iter().map(|t| (l, *t)));
                        (o.estimate.direction, Some(o.dominant_radius), o.telemetry.len())
                    })
                    .map_err(|e| e.to_string())
            }
            DoaMethod::Single => single_sweep(&af, &s.grid)
                .map(|e| (e.direction, None, 1))
                .map_err(|e| e.to_string()),
            DoaMethod::Music => music_doa(s, &prepared, l).map(|d| (d, None, 1)),
        };
        match result {
            Ok((dir, radius, iters)) => {
                let (az, el) = component_errors(&dir, &truths[l]);
                let rec = &mut record.locations[l];
                rec.estimate = Some(dir);
                rec.az_err = Some(az.to_degrees());
                rec.el_err = Some(el.to_degrees());
                rec.gc_err = Some(dir.angle_to(&truths[l]).to_degrees());
                rec.dominant_radius = radius.map(f64::to_degrees);
                rec.iterations = iters;
                estimates.push(dir);
            }
            Err(e) => {
                record.status = format!("doa{}: {e}", l + 1);
                record.wall_time = start.elapsed().as_secs_f64();
                return TrialOutput { record, telemetry };
            }
        }
    }
    let m1 = prepared.locations[0].measured_world;
    let m2 = prepared.locations[1].measured_world;
    let rel = relative_location(&m1, &m2).expect("validated baseline");
    match localize(&estimates[0], &estimates[1], &rel, &m1) {
        Ok(f) => {
            record.errors = Some(error_metrics(&f.world, &Vec3::from(s.emitter)));
            record.fix = Some(f);
        }
        Err(e) => record.status = format!("fix: {e}"),
    }
    record.wall_time = start.elapsed().as_secs_f64();
    TrialOutput { record, telemetry }
}

/// All trials, in trial order regardless of scheduling.
pub fn run_scenario(s: &Scenario) -> Result<Vec<TrialOutput>, ScenarioError> {
    s.validate()?;
    let mut out: Vec<TrialOutput> = (0..s.trials as u64)
        .into_par_iter()
        .map(|t| run_trial(s, t))
        .collect();
    out.sort_by_key(|o| o.record.trial_id);
    Ok(out)
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map(|x| format!("{x:.digits$}")).unwrap_or_default()
}

pub const RESULT_HEADER: &str = "trial_id,status,\
true_phi1_deg,true_theta1_deg,est_phi1_deg,est_theta1_deg,az_err1_deg,el_err1_deg,gc_err1_deg,dominant_radius1_deg,iterations1,\
true_phi2_deg,true_theta2_deg,est_phi2_deg,est_theta2_deg,az_err2_deg,el_err2_deg,gc_err2_deg,dominant_radius2_deg,iterations2,\
range_m,fix_x_m,fix_y_m,fix_z_m,dx_m,dy_m,dz_m,e2d_m,e3d_m,residual_m";

/// Result CSV. Wall time is kept out so the file depends only on the
/// scenario and seed.
pub fn results_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from(RESULT_HEADER);
    s.push('\n');
    for r in records {
        let mut cols = vec![r.trial_id.to_string(), r.status.replace([',', '\n'], ";")];
        for l in &r.locations {
            let (tp, tt) = l.true_doa.to_degrees();
            let est = l.estimate.map(|d| d.to_degrees());
            cols.extend([
                format!("{tp:.2}"),
                format!("{tt:.2}"),
                opt(est.map(|e| e.0), 2),
                opt(est.map(|e| e.1), 2),
                opt(l.az_err, 2),
                opt(l.el_err, 2),
                opt(l.gc_err, 2),
                opt(l.dominant_radius.filter(|r| r.is_finite()), 2),
                l.iterations.to_string(),
            ]);
        }
        let f = r.fix;
        let e = r.errors;
        cols.extend([
            opt(f.map(|f| f.range), 3),
            opt(f.map(|f| f.world.x), 3),
            opt(f.map(|f| f.world.y), 3),
            opt(f.map(|f| f.world.z), 3),
            opt(e.map(|e| e.dx), 3),
            opt(e.map(|e| e.dy), 3),
            opt(e.map(|e| e.dz), 3),
            opt(e.map(|e| e.e2d), 3),
            opt(e.map(|e| e.e3d), 3),
            opt(f.map(|f| f.residual), 3),
        ]);
        s.push_str(&cols.join(","));
        s.push('\n');
    }
    s
}

pub fn timings_csv(records: &[TrialRecord]) -> String {
    let mut s = String::from("trial_id,wall_time_s\n");
    for r in records {
        s.push_str(&format!("{},{:.6}\n", r.trial_id, r.wall_time));
    }
    s
}

pub fn telemetry_csv(outputs: &[TrialOutput]) -> String {
    let mut s = String::from(
        "trial_id,location,m,n,candidates,dominant_radius_deg,centroid_phi_deg,centroid_theta_deg,qualified\n",
    );
    for o in outputs {
        for (l, t) in &o.telemetry {
            s.push_str(&format!(
                "{},{},{},{},{},{:.2},{:.2},{:.2},{}\n",
                o.record.trial_id,
                l + 1,
                t.m,
                t.n,
                t.candidates,
                t.dominant_radius_deg,
                t.centroid_phi_deg,
                t.centroid_theta_deg,
                t.qualified
            ));
        }
    }
    s
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}

/// Direction errors are medians over every location that produced an
/// estimate; fix errors are medians over successful trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub trials: usize,
    pub succeeded: usize,
    pub median_az_err_deg: Option<f64>,
    pub median_el_err_deg: Option<f64>,
    pub median_gc_err_deg: Option<f64>,
    pub median_abs_dx_m: Option<f64>,
    pub median_abs_dy_m: Option<f64>,
    pub median_abs_dz_m: Option<f64>,
    pub median_e2d_m: Option<f64>,
    pub median_e3d_m: Option<f64>,
}

pub fn summarize(records: &[TrialRecord]) -> Summary {
    let ok: Vec<&TrialRecord> = records.iter().filter(|r| r.ok()).collect();
    let per_loc = |f: &dyn Fn(&LocationRecord) -> Option<f64>| {
        let mut v: Vec<f64> = records
            .iter()
            .flat_map(|r| r.locations.iter().filter_map(f))
            .collect();
        median(&mut v)
    };
    let fixm = |f: &dyn Fn(&ErrorMetrics) -> f64| {
        let mut v: Vec<f64> = ok.iter().filter_map(|r| r.errors.as_ref().map(f)).collect();
        median(&mut v)
    };
    Summary {
        trials: records.len(),
        succeeded: ok.len(),
        median_az_err_deg: per_loc(&|l| l.az_err),
        median_el_err_deg: per_loc(&|l| l.el_err),
        median_gc_err_deg: per_loc(&|l| l.gc_err),
        median_abs_dx_m: fixm(&|e| e.dx.abs()),
        median_abs_dy_m: fixm(&|e| e.dy.abs()),
        median_abs_dz_m: fixm(&|e| e.dz.abs()),
        median_e2d_m: fixm(&|e| e.e2d),
        median_e3d_m: fixm(&|e| e.e3d),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Scenario {
        Scenario {
            impairments: ImpairmentConfig::clean(),
            trials: 2,
            ..Scenario::paper_regime()
        }
    }

    #[test]
    fn toml_round_trip() {
        let s = Scenario::paper_regime();
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn validation_catches_near_field() {
        let s = Scenario { emitter: [0.0, 0.0, 15.0], ..small() };
        assert!(matches!(s.validate(), Err(ScenarioError::Invalid(_))));
        assert!(matches!(Scenario::from_toml("trials = 3"), Err(ScenarioError::Parse(_))));
    }

    // worst fix error when each bearing component is off by half a grid
    // cell, over all sign combinations
    fn quantization_bound(s: &Scenario) -> f64 {
        let l1 = Vec3::from(s.locations[0]);
        let l2 = Vec3::from(s.locations[1]);
        let e = Vec3::from(s.emitter);
        let t1 = SteeringDirection::from_vector(&(e - l1));
        let t2 = SteeringDirection::from_vector(&(e - l2));
        let h = (s.grid.az_resolution / 2.0).to_radians();
        let v = (s.grid.el_resolution / 2.0).to_radians();
        let rel = relative_location(&l1, &l2).unwrap();
        let mut worst: f64 = 0.0;
        for mask in 0..16 {
            let sg = |b: usize| if mask >> b & 1 == 1 { 1.0 } else { -1.0 };
            let d1 = SteeringDirection::new(t1.phi + sg(0) * h, t1.theta + sg(1) * v);
            let d2 = SteeringDirection::new(t2.phi + sg(2) * h, t2.theta + sg(3) * v);
            let f = localize(&d1, &d2, &rel, &l1).unwrap();
            worst = worst.max(error_metrics(&f.world, &e).e3d);
        }
        worst
    }

    #[test]
    fn clean_trial_is_near_exact() {
        let s = small();
        let out = run_trial(&s, 0);
        assert!(out.record.ok(), "{}", out.record.status);
        let e = out.record.errors.unwrap();
        for l in &out.record.locations {
            assert!(l.az_err.unwrap() <= 0.5 + 1e-9 && l.el_err.unwrap() <= 0.5 + 1e-9);
        }
        let bound = quantization_bound(&s);
        assert!(e.e3d <= bound + 1e-9, "e3d {} bound {bound}", e.e3d);
    }

    #[test]
    fn detection_failure_is_recorded() {
        let s = Scenario {
            detector: DetectorConfig { energy_threshold: Some(1e6), ..DetectorConfig::default() },
            ..small()
        };
        let out = run_trial(&s, 0);
        assert!(out.record.status.starts_with("detect"));
        assert!(results_csv(&[out.record]).lines().count() == 2);
    }
}
