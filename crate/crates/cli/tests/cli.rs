use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use splatreg::io::{RunConfig, SceneSource};
use splatreg::synth::SyntheticPairTemplate;

fn splatreg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splatreg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// A small exact-recovery config so sweeps stay quick.
fn small_config(dir: &Path, trials: usize) -> String {
    let mut template = SyntheticPairTemplate::exact_recovery();
    template.base.num_gaussians = 1200;
    let mut cfg = RunConfig::new(SceneSource::Synthetic { template });
    cfg.trials = trials;
    cfg.seed = 5;
    let path = dir.join("small.toml");
    std::fs::write(&path, cfg.to_toml().unwrap()).unwrap();
    path.to_str().unwrap().to_string()
}

fn strip_timings(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("timings");
            map.remove("mean_time_s");
            map.values_mut().for_each(strip_timings);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_timings),
        _ => {}
    }
}

#[test]
fn missing_input_exits_with_2_and_names_the_path() {
    let out = splatreg(&["register", "--a", "/missing/scene_a.ply", "--b", "/missing/scene_b.ply"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/missing/scene_a.ply"), "{}", stderr(&out));

    let out = splatreg(&["swc", "--static", "/missing/canonical.ply", "--out", "/tmp/unused.ply"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/missing/canonical.ply"));

    let out = splatreg(&["register", "--config", "/missing/run.toml"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("/missing/run.toml"));
}

#[test]
fn bad_arguments_exit_with_2() {
    assert_eq!(splatreg(&["register", "--mode", "sideways"]).status.code(), Some(2));
    assert_eq!(splatreg(&["register", "--trials", "0"]).status.code(), Some(2));
    assert_eq!(splatreg(&["bench", "--format", "csv"]).status.code(), Some(2));
}

#[test]
fn synth_then_register_recovers_the_pose() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair");
    let out = splatreg(&[
        "synth",
        "--preset",
        "exact",
        "--seed",
        "9",
        "--out",
        pair.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    for f in [
        "a_static.ply",
        "a_deformed.ply",
        "b_static.ply",
        "b_deformed.ply",
        "ground_truth.json",
        "pair.toml",
    ] {
        assert!(pair.join(f).exists(), "{f}");
    }
    let out = splatreg(&["register", "--config", pair.join("pair.toml").to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let err = &report["trials"][0]["result"]["error"];
    assert!(err["rotation_error_deg"].as_f64().unwrap() < 0.1, "{err}");
    assert_eq!(
        report["trials"][0]["result"]["transform"]["matrix"]
            .as_array()
            .unwrap()
            .len(),
        16
    );
}

#[test]
fn register_from_files_matches_the_in_memory_preset() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair");
    splatreg(&[
        "synth",
        "--preset",
        "exact",
        "--seed",
        "4",
        "--out",
        pair.to_str().unwrap(),
    ]);
    let from_files = splatreg(&["register", "--config", pair.join("pair.toml").to_str().unwrap()]);
    let in_memory = splatreg(&["register", "--preset", "exact", "--seed", "4"]);
    let mut a: Value = serde_json::from_slice(&from_files.stdout).unwrap();
    let mut b: Value = serde_json::from_slice(&in_memory.stdout).unwrap();
    strip_timings(&mut a);
    strip_timings(&mut b);
    assert_eq!(a["trials"][0]["result"], b["trials"][0]["result"]);
}

#[test]
fn same_seed_gives_identical_reports() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 2);
    let run = || {
        let out = splatreg(&["register", "--config", &cfg]);
        assert!(out.status.success(), "{}", stderr(&out));
        let mut v: Value = serde_json::from_slice(&out.stdout).unwrap();
        strip_timings(&mut v);
        serde_json::to_string(&v).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn ablation_row_counts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    for (sweep, labels) in [
        ("clusters", vec!["0", "5", "10", "15", "20", "25"]),
        ("cascade", vec!["static", "deformed", "both"]),
    ] {
        let out = splatreg(&["ablate", "--sweep", sweep, "--config", &cfg]);
        assert!(out.status.success(), "{}", stderr(&out));
        let text = String::from_utf8(out.stdout).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("sweep_value,dR_deg,dt,time_s,keypoints_a,keypoints_b")
        );
        let got: Vec<&str> = lines.map(|l| l.split(',').next().unwrap()).collect();
        assert_eq!(got, labels, "{sweep}");
    }
}

#[test]
fn out_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    let target = dir.path().join("report.csv");
    let out = splatreg(&[
        "register",
        "--config",
        &cfg,
        "--format",
        "csv",
        "--out",
        target.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(target).unwrap();
    assert_eq!(text.lines().count(), 2);
}

#[test]
fn swc_writes_keypoints() {
    let dir = tempfile::tempdir().unwrap();
    let pair = dir.path().join("pair");
    splatreg(&["synth", "--preset", "exact", "--out", pair.to_str().unwrap()]);
    let kp = dir.path().join("kp.ply");
    let out = splatreg(&[
        "swc",
        "--static",
        pair.join("a_static.ply").to_str().unwrap(),
        "--clusters",
        "3",
        "--drop-rate",
        "0.25",
        "--out",
        kp.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let cloud = splatreg::io::load_ply_gaussians(&kp, Default::default()).unwrap();
    assert!(!cloud.is_empty());
    assert!(cloud.opacities().iter().all(|&o| o > 0.8));
}

#[test]
fn bench_reports_both_pipelines() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path(), 1);
    let out = splatreg(&["bench", "--config", &cfg]);
    assert!(out.status.success(), "{}", stderr(&out));
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["swc_time_s"].as_array().unwrap().len(), 1);
    assert!(v["ratio"].as_f64().unwrap() > 0.0);
}
