use std::fs;
use std::path::PathBuf;

use rxbeam::channel::Multipath;
use rxbeam::scenario::{run_scenario, results_csv, DoaMethod, Scenario};

fn presets() -> Vec<(String, Scenario)> {
    let dir = PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios"));
    let mut out: Vec<(String, Scenario)> = fs::read_dir(&dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .map(|p| {
            let text = fs::read_to_string(&p).unwrap();
            let name = p.file_name().unwrap().to_string_lossy().into_owned();
            let s = Scenario::from_toml(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
            (name, s)
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

#[test]
fn every_preset_validates() {
    let all = presets();
    assert!(all.len() >= 9);
    for (name, s) in &all {
        assert_eq!(s.points_per_location, 20, "{name}");
        assert_eq!(s.sphere_radius, 1.0, "{name}");
        assert!(s.trials >= 200, "{name}");
    }
    let altitudes: Vec<f64> = all
        .iter()
        .filter(|(_, s)| matches!(s.impairments.multipath, Multipath::TwoRay { .. }))
        .map(|(_, s)| s.locations[0][2])
        .collect();
    assert_eq!(altitudes, vec![10.0, 20.0, 40.0, 80.0]);
}

#[test]
fn every_preset_runs_a_trial() {
    for (name, s) in presets() {
        let s = Scenario { trials: 2, method: DoaMethod::Single, ..s };
        let out = run_scenario(&s).unwrap();
        let records: Vec<_> = out.into_iter().map(|o| o.record).collect();
        assert_eq!(records.len(), 2, "{name}");
        assert_eq!(results_csv(&records).lines().count(), 3, "{name}");
        for r in &records {
            assert!(r.locations.iter().all(|l| l.estimate.is_some()), "{name}: {}", r.status);
        }
    }
}
