use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use catbbm::config::ExperimentConfig;
use catbbm::verify::Theorem;

fn catbbm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_catbbm")).args(args).output().expect("run catbbm")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

/// A short single-atom experiment that runs in well under a second.
fn small_config(dir: &Path) -> PathBuf {
    let mut cfg = ExperimentConfig::preset("point1d").unwrap();
    cfg.name = "small".into();
    cfg.horizons = vec![1.0, 2.0, 3.0];
    cfg.replicas = 300;
    cfg.fk_paths = 2_000;
    let path = dir.join("small.toml");
    fs::write(&path, cfg.to_toml_string().unwrap()).unwrap();
    path
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut reader = csv::Reader::from_path(path).unwrap();
    let header = reader.headers().unwrap().iter().map(String::from).collect();
    let rows = reader.records().map(|r| r.unwrap().iter().map(String::from).collect()).collect();
    (header, rows)
}

#[test]
fn spectral_reports_the_unit_atom_eigenvalue() {
    let out = catbbm(&["spectral", "--preset", "point1d"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((doc["lambda"].as_f64().unwrap() + 0.5).abs() < 1e-12);
    assert!((doc["k"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    assert!((doc["critical_speed"].as_f64().unwrap() - 0.5).abs() < 1e-12);
    let windows = doc["windows"].as_array().unwrap();
    assert_eq!(windows.len(), 2);
    assert_eq!(windows[0]["label"], "front");
    assert!(windows[0]["c_star"].as_f64().unwrap() > 0.0);
}

#[test]
fn spectral_matches_the_library_for_two_atoms() {
    let out = catbbm(&["spectral", "--preset", "twopoint1d"]);
    assert!(out.status.success(), "{}", stderr(&out));
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let sol = ExperimentConfig::preset("twopoint1d").unwrap().solution().unwrap();
    assert_eq!(doc["lambda"].as_f64().unwrap(), sol.lambda());
}

#[test]
fn malformed_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(&path, "name = \"bad\"\nhorizons = [1.0]\nreplicas = \"many\"\n").unwrap();
    let out = catbbm(&["spectral", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("error"));
}

#[test]
fn missing_input_and_unknown_preset_are_rejected() {
    assert_eq!(catbbm(&["spectral"]).status.code(), Some(2));
    assert_eq!(catbbm(&["spectral", "--preset", "torus3d"]).status.code(), Some(2));
}

#[test]
fn zero_replicas_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = catbbm(&["simulate", "--config", cfg.to_str().unwrap(), "--replicas", "0", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("ensemble.csv").exists());
}

#[test]
fn simulate_is_deterministic_in_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let run = |sub: &str, seed: &str| {
        let out_dir = dir.path().join(sub);
        let out = catbbm(&["simulate", "--config", cfg.to_str().unwrap(), "--seed", seed, "--out", out_dir.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read(out_dir.join("ensemble.csv")).unwrap()
    };
    let a = run("a", "7");
    let b = run("b", "7");
    let c = run("c", "8");
    assert_eq!(a, b);
    assert_ne!(a, c);

    let (header, rows) = read_csv(&dir.path().join("a").join("ensemble.csv"));
    assert_eq!(header, ["replica", "t", "population", "max_norm", "martingale", "front", "behind"]);
    assert_eq!(rows.len(), 300 * 3);
    assert!(rows.iter().all(|r| r[2].parse::<u64>().unwrap() >= 1));

    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("a").join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["replicas"], 300);
    assert_eq!(summary["horizons"].as_array().unwrap().len(), 3);
}

#[test]
fn unknown_theorem_exits_before_running() {
    let dir = tempfile::tempdir().unwrap();
    let out = catbbm(&["verify", "--preset", "point1d", "--theorem", "theorem9", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("unknown theorem"));
    assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
}

#[test]
fn consistency_checks_pass_on_a_small_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = catbbm(&["verify", "--config", cfg.to_str().unwrap(), "--theorem", "consistency", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}{}", String::from_utf8_lossy(&out.stdout), stderr(&out));
    for name in ["many_to_one", "many_to_two", "martingale", "paley_zygmund"] {
        let report: serde_json::Value =
            serde_json::from_slice(&fs::read(dir.path().join(format!("{name}.json"))).unwrap()).unwrap();
        assert_eq!(report["verdict"], "pass", "{name}");
        assert_eq!(report["hard"], true, "{name}");
    }
}

#[test]
fn verify_all_writes_one_report_per_theorem() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out_dir = dir.path().join("reports");
    let out = catbbm(&[
        "verify",
        "--config",
        cfg.to_str().unwrap(),
        "--sweep-paths",
        "2000",
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(matches!(out.status.code(), Some(0 | 1 | 3)), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert_eq!(stdout.lines().count(), Theorem::ALL.len());
    for t in Theorem::ALL {
        assert!(out_dir.join(format!("{}.json", t.name())).exists(), "{}", t.name());
    }
}

#[test]
fn plotdata_has_stable_columns_and_one_row_per_horizon() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = catbbm(&["plotdata", "--config", cfg.to_str().unwrap(), "--out", dir.path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let (header, rows) = read_csv(&dir.path().join("plotdata.csv"));
    assert_eq!(header, ["series", "t", "k", "value", "lower", "upper", "reference"]);
    let count = |series: &str| rows.iter().filter(|r| r[0] == series).count();
    assert_eq!(count("normalized_survival"), 3);
    assert_eq!(count("max_norm_over_t"), 3);
    assert!(count("window_pmf") > 0);
    for r in rows.iter().filter(|r| r[0] == "max_norm_over_t") {
        let (lower, value, upper) = (r[4].parse::<f64>().unwrap(), r[3].parse::<f64>().unwrap(), r[5].parse::<f64>().unwrap());
        assert!(lower <= value && value <= upper);
    }
}
