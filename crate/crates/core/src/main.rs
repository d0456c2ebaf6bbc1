use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use rxbeam::align::{align_capture, correct_cfo, estimate_cfo, ReceptionPoint};
use rxbeam::beamform::{sweep, AngularGrid};
use rxbeam::bench::{bench_csv, growth_ratio, linear_fit, run_bench, BenchConfig};
use rxbeam::channel::{propagate, EmitterTruth, ImpairmentConfig};
use rxbeam::cluster::{algorithm1, single_sweep, AlgorithmConfig, DoaEstimate};
use rxbeam::detect::{detect, DetectorConfig};
use rxbeam::fix::{localize, FixResult};
use rxbeam::geometry::{relative_location, LocalSpherical, SteeringDirection, Vec3};
use rxbeam::scenario::{
    results_csv, run_scenario, summarize, telemetry_csv, timings_csv, Scenario, TrialRecord,
};
use rxbeam::signal::{embed, make_signature, read_iq, write_iq, WaveformSpec};

#[derive(Parser)]
#[command(name = "rxbeam", version, about = "Emitter localization by distributed receive beamforming")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a capture buffer holding one signature as raw IQ.
    Gen(Io),
    /// Blindly extract the signature from a raw IQ capture.
    Detect(Io),
    /// Estimate the direction of arrival from captures at one location.
    Doa(Io),
    /// Intersect bearings from two locations.
    Localize(Io),
    /// Run a Monte-Carlo scenario.
    Simulate(Io),
    /// Measure sweep runtime against the number of points.
    Bench(Io),
}

#[derive(clap::Args)]
struct Io {
    /// TOML configuration file.
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory, created if missing.
    #[arg(short, long)]
    out: PathBuf,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

type Outcome = Result<(), Failure>;

fn invalid(e: impl ToString) -> Failure {
    Failure::Invalid(e.to_string())
}

fn runtime(e: impl ToString) -> Failure {
    Failure::Runtime(e.to_string())
}

fn load<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = fs::read_to_string(path).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| invalid(format!("{}: {}", path.display(), e.message())))
}

fn write(dir: &Path, name: &str, text: &str) -> Outcome {
    fs::write(dir.join(name), text).map_err(|e| runtime(format!("{name}: {e}")))
}

fn to_toml<T: Serialize>(v: &T) -> String {
    toml::to_string(v).expect("output records serialize")
}

/// Resolves `p` against the directory of the config file.
fn relative_to(config: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        config.parent().unwrap_or(Path::new(".")).join(p)
    }
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct GenConfig {
    waveform: WaveformSpec,
    #[serde(default)]
    seed: u64,
    buffer_len: usize,
    offset: usize,
    #[serde(default)]
    snr_db: Option<f64>,
    #[serde(default)]
    cfo_hz: f64,
}

fn gen(io: &Io) -> Outcome {
    let c: GenConfig = load(&io.config)?;
    let sig = make_signature(&c.waveform, c.seed).map_err(invalid)?;
    let buf = embed(&sig, c.buffer_len, c.offset).map_err(invalid)?;
    let truth = EmitterTruth {
        range: 100.0,
        direction: SteeringDirection::new(0.0, 0.0),
    };
    let cfg = ImpairmentConfig {
        snr_db: c.snr_db,
        cfo_hz: c.cfo_hz,
        seed: c.seed,
        ..ImpairmentConfig::clean()
    };
    let out = propagate(&buf, &LocalSpherical::ORIGIN, &truth, &cfg, 1.0).map_err(invalid)?;
    write_iq(&io.out.join("capture.iq"), &out).map_err(runtime)?;
    println!("wrote {} samples to {}", out.len(), io.out.join("capture.iq").display());
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DetectConfig {
    input: PathBuf,
    #[serde(default)]
    detector: DetectorConfig,
}

fn detect_cmd(io: &Io) -> Outcome {
    let c: DetectConfig = load(&io.config)?;
    c.detector.validate().map_err(invalid)?;
    let trace = read_iq(&relative_to(&io.config, &c.input)).map_err(runtime)?;
    let m = detect(&trace, &c.detector).map_err(runtime)?;
    let text = to_toml(&m.summary());
    write(&io.out, "signature.toml", &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Capture {
    file: PathBuf,
    /// Measured position relative to the location origin, meters.
    position: [f64; 3],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct DoaConfig {
    captures: Vec<Capture>,
    #[serde(default)]
    detector: DetectorConfig,
    #[serde(default)]
    algorithm: AlgorithmConfig,
    #[serde(default)]
    grid: AngularGrid,
    #[serde(default = "yes")]
    clustering: bool,
}

fn yes() -> bool {
    true
}

#[derive(Serialize)]
struct DoaRecord {
    phi_deg: f64,
    theta_deg: f64,
    source: rxbeam::cluster::DoaSource,
    iterations: usize,
}

fn doa_cmd(io: &Io) -> Outcome {
    let c: DoaConfig = load(&io.config)?;
    c.detector.validate().map_err(invalid)?;
    c.algorithm.validate().map_err(invalid)?;
    c.grid.validate().map_err(invalid)?;
    if c.captures.len() < 4 {
        return Err(invalid("need at least 4 captures"));
    }
    let raws = c
        .captures
        .iter()
        .map(|cap| read_iq(&relative_to(&io.config, &cap.file)))
        .collect::<Result<Vec<_>, _>>()
        .map_err(runtime)?;
    let sig = detect(&raws[0], &c.detector).map_err(runtime)?;
    let mut points = Vec::new();
    for (raw, cap) in raws.iter().zip(&c.captures) {
        let (lag, y) = align_capture(raw, &sig, c.detector.corr_threshold).map_err(runtime)?;
        let pos = LocalSpherical::from_rect(&Vec3::from(cap.position));
        points.push(ReceptionPoint {
            position: pos,
            measured_position: pos,
            signal: y,
            lag,
        });
    }
    let cfo = estimate_cfo(&points[0].signal, &sig).map_err(runtime)?;
    let points = correct_cfo(&points, cfo);
    let wavelength = raws[0].carrier_wavelength();
    let bp = sweep(&points, &sig.signature, wavelength, &c.grid).map_err(runtime)?;
    write(&io.out, "beampattern.csv", &bp.to_csv())?;
    let af = rxbeam::beamform::ArrayFactor::new(&points, &sig.signature, wavelength).map_err(runtime)?;
    let (est, iterations): (DoaEstimate, usize) = if c.clustering {
        let o = algorithm1(&af, &c.algorithm, &c.grid).map_err(runtime)?;
        let mut tel = String::from("m,n,candidates,dominant_radius_deg,centroid_phi_deg,centroid_theta_deg,qualified\n");
        for t in &o.telemetry {
            tel.push_str(&format!(
                "{},{},{},{:.2},{:.2},{:.2},{}\n",
                t.m, t.n, t.candidates, t.dominant_radius_deg, t.centroid_phi_deg, t.centroid_theta_deg, t.qualified
            ));
        }
        write(&io.out, "telemetry.csv", &tel)?;
        (o.estimate, o.telemetry.len())
    } else {
        (single_sweep(&af, &c.grid).map_err(runtime)?, 1)
    };
    let (p, t) = est.direction.to_degrees();
    let text = to_toml(&DoaRecord {
        phi_deg: (p * 100.0).round() / 100.0,
        theta_deg: (t * 100.0).round() / 100.0,
        source: est.source,
        iterations,
    });
    write(&io.out, "doa.toml", &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct LocalizeConfig {
    /// `[phi_deg, theta_deg]`.
    doa1: [f64; 2],
    doa2: [f64; 2],
    location1: [f64; 3],
    location2: [f64; 3],
}

#[derive(Serialize)]
struct FixRecord {
    range_m: f64,
    x_m: f64,
    y_m: f64,
    z_m: f64,
    residual_m: f64,
}

impl From<&FixResult> for FixRecord {
    fn from(f: &FixResult) -> Self {
        let mm = |v: f64| (v * 1000.0).round() / 1000.0;
        Self {
            range_m: mm(f.range),
            x_m: mm(f.world.x),
            y_m: mm(f.world.y),
            z_m: mm(f.world.z),
            residual_m: mm(f.residual),
        }
    }
}

fn localize_cmd(io: &Io) -> Outcome {
    let c: LocalizeConfig = load(&io.config)?;
    let (l1, l2) = (Vec3::from(c.location1), Vec3::from(c.location2));
    let rel = relative_location(&l1, &l2).map_err(invalid)?;
    let d1 = SteeringDirection::from_degrees(c.doa1[0], c.doa1[1]);
    let d2 = SteeringDirection::from_degrees(c.doa2[0], c.doa2[1]);
    let f = localize(&d1, &d2, &rel, &l1).map_err(runtime)?;
    let text = to_toml(&FixRecord::from(&f));
    write(&io.out, "fix.toml", &text)?;
    print!("{text}");
    Ok(())
}

fn simulate_cmd(io: &Io) -> Outcome {
    let text = fs::read_to_string(&io.config).map_err(|e| runtime(format!("{}: {e}", io.config.display())))?;
    let s = Scenario::from_toml(&text).map_err(invalid)?;
    let out = run_scenario(&s).map_err(invalid)?;
    let records: Vec<TrialRecord> = out.iter().map(|o| o.record.clone()).collect();
    write(&io.out, "results.csv", &results_csv(&records))?;
    write(&io.out, "timings.csv", &timings_csv(&records))?;
    write(&io.out, "telemetry.csv", &telemetry_csv(&out))?;
    let summary = to_toml(&summarize(&records));
    write(&io.out, "summary.toml", &summary)?;
    print!("{summary}");
    Ok(())
}

#[derive(Serialize)]
struct BenchSummary {
    beamform_r2: f64,
    beamform_growth: f64,
    music_growth: f64,
}

fn bench_cmd(io: &Io) -> Outcome {
    let c: BenchConfig = load(&io.config)?;
    c.grid.validate().map_err(invalid)?;
    if c.m_values.len() < 3 || c.m_values.iter().any(|&m| m < 2) {
        return Err(invalid("need at least three m_values, each >= 2"));
    }
    let rows = run_bench(&c);
    write(&io.out, "bench.csv", &bench_csv(&rows))?;
    let x: Vec<f64> = rows.iter().map(|r| r.m as f64).collect();
    let b: Vec<f64> = rows.iter().map(|r| r.beamform_s).collect();
    let m: Vec<f64> = rows.iter().map(|r| r.music_s).collect();
    let text = to_toml(&BenchSummary {
        beamform_r2: linear_fit(&x, &b).r2,
        beamform_growth: growth_ratio(&x, &b),
        music_growth: growth_ratio(&x, &m),
    });
    write(&io.out, "bench_summary.toml", &text)?;
    print!("{text}");
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let io = match &cli.command {
        Command::Gen(io)
        | Command::Detect(io)
        | Command::Doa(io)
        | Command::Localize(io)
        | Command::Simulate(io)
        | Command::Bench(io) => io,
    };
    if let Err(e) = fs::create_dir_all(&io.out) {
        eprintln!("error: {}: {e}", io.out.display());
        return ExitCode::from(1);
    }
    let result = match &cli.command {
        Command::Gen(io) => gen(io),
        Command::Detect(io) => detect_cmd(io),
        Command::Doa(io) => doa_cmd(io),
        Command::Localize(io) => localize_cmd(io),
        Command::Simulate(io) => simulate_cmd(io),
        Command::Bench(io) => bench_cmd(io),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {}", m.replace('\n', " "));
            ExitCode::from(3)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {}", m.replace('\n', " "));
            ExitCode::from(1)
        }
    }
}
