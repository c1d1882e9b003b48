use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spinorbit(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spinorbit"))
        .args(args)
        .current_dir(dir)
        .env_remove("SPINORBIT_CONFIG_DIR")
        .output()
        .expect("binary runs")
}

fn entries(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> =
        fs::read_dir(dir).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    names
}

const SHORT_RUN: [&str; 7] = ["simulate", "--theta0", "1.7", "--thetadot0", "1.75", "--t-end", "200"];

#[test]
fn unknown_flag_exits_one_without_files() {
    let tmp = tempfile::tempdir().unwrap();
    let out = spinorbit(tmp.path(), &["simulate", "--bogus", "1", "--out", "run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--bogus"));
    assert!(entries(tmp.path()).is_empty());
}

#[test]
fn bad_override_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = spinorbit(tmp.path(), &["--set", "zeta=oops", "qp-construct", "--out", "run"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(entries(tmp.path()).is_empty());
}

#[test]
fn kink_operating_point_is_a_domain_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = spinorbit(tmp.path(), &["precapture", "--thetadot0", "1.5", "--out", "run"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_writes_only_inside_out_with_one_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = SHORT_RUN.to_vec();
    args.extend(["--omega0", "1.5", "--out", "run"]);
    let out = spinorbit(tmp.path(), &args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(entries(tmp.path()), ["run"]);
    assert_eq!(entries(&tmp.path().join("run")), ["libration.csv", "manifest.json", "trajectory.csv"]);
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["subcommand"], "simulate");
    assert_eq!(manifest["params"]["n"], 26.0879);
    assert!(manifest["duration_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn replay_regenerates_identical_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = SHORT_RUN.to_vec();
    args.extend(["--set", "lambda=2", "--out", "run"]);
    assert!(spinorbit(tmp.path(), &args).status.success());
    let first = fs::read(tmp.path().join("run/trajectory.csv")).unwrap();
    fs::rename(tmp.path().join("run/manifest.json"), tmp.path().join("saved.json")).unwrap();
    fs::remove_file(tmp.path().join("run/trajectory.csv")).unwrap();
    let out = spinorbit(tmp.path(), &["replay", "saved.json"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(fs::read(tmp.path().join("run/trajectory.csv")).unwrap(), first);
}

#[test]
fn flags_override_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("p.conf"), "# test\nlambda = 3\nS = 0.5\n").unwrap();
    let mut args = SHORT_RUN.to_vec();
    args.extend(["--config", "p.conf", "--set", "lambda=4", "--out", "run"]);
    assert!(spinorbit(tmp.path(), &args).status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["params"]["lambda"], 4.0);
    assert_eq!(manifest["params"]["S"], 0.5);
}

#[test]
fn config_directory_supplies_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let conf = tmp.path().join("conf");
    fs::create_dir(&conf).unwrap();
    fs::write(conf.join("params.conf"), "tau_M = 400\n").unwrap();
    let mut args = SHORT_RUN.to_vec();
    args.extend(["--out", "run"]);
    let out = Command::new(env!("CARGO_BIN_EXE_spinorbit"))
        .args(&args)
        .current_dir(tmp.path())
        .env("SPINORBIT_CONFIG_DIR", &conf)
        .output()
        .unwrap();
    assert!(out.status.success());
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("run/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["params"]["tau_M"], 400.0);
}

#[test]
fn census_of_one_resonance_has_two_branches() {
    let tmp = tempfile::tempdir().unwrap();
    let out = spinorbit(tmp.path(), &["periodic-census", "--resonances", "3", "--out", "run"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(tmp.path().join("run/census.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.starts_with("3,2,")));
    assert!(rows.iter().all(|r| r.rsplit(',').next().unwrap().parse::<bool>().is_ok()));
}

#[test]
fn basins_runs_a_tiny_survey() {
    let tmp = tempfile::tempdir().unwrap();
    let out = spinorbit(
        tmp.path(),
        &["basins", "--n", "2", "--strips", "0", "--seed", "7", "--max-time", "2e5", "--jobs", "1", "--out", "run"],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        entries(&tmp.path().join("run")),
        ["barrier.json", "manifest.json", "outcomes.csv", "strips.csv"]
    );
    let csv = fs::read_to_string(tmp.path().join("run/outcomes.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}
