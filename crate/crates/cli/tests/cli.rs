use std::path::Path;
use std::process::{Command, Output};

const BASE: &str = r#"
seed = 7

[model]
beta = 0.5
horizon = 1.0
kernel = { family = "gamma", kappa = 0.25, rho = 1.0 }
sigma = { kind = "exp_ou", reversion = 1.0, mean_log = 0.0, vol_log = 0.5 }

[grid]
t_start = 0.0
t_end = 1.0
n_steps = 32

[simulate]
n_paths = 2

[counterexample]
n_trials = 20000
"#;

fn bss(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bss")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.toml");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn validate_reports_every_condition() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), BASE);
    let out_dir = tmp.path().join("out");
    let out = bss(&["validate", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let stdout = String::from_utf8_lossy(&out.stdout);
    for id in ["(i)", "(ii)", "(iii)", "(iv)", "(v)", "(vi)"] {
        let line = stdout.lines().find(|l| l.starts_with(id)).unwrap_or_else(|| panic!("no {id} line"));
        assert!(line.contains("passed"), "{line}");
    }
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["passed"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 6);
}

#[test]
fn simulate_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), BASE);
    let before = std::fs::read(&config).unwrap();
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for d in &dirs {
        let out = bss(&["simulate", "--config", &config, "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    for name in ["path_0000.csv", "path_0001.csv", "manifest.txt", "config.resolved.toml"] {
        let a = std::fs::read(dirs[0].join(name)).unwrap();
        let b = std::fs::read(dirs[1].join(name)).unwrap();
        assert!(a == b, "{name} differs");
    }
    let csv = std::fs::read_to_string(dirs[0].join("path_0000.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("t,B,sigma,Y,Z"));
    assert_eq!(csv.lines().count(), 34);
    assert_eq!(std::fs::read(&config).unwrap(), before);
}

#[test]
fn seed_flag_changes_paths_and_is_recorded() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), BASE);
    let dirs = [tmp.path().join("a"), tmp.path().join("b")];
    for (d, seed) in dirs.iter().zip(["7", "8"]) {
        let out = bss(&["simulate", "--config", &config, "--seed", seed, "--out", d.to_str().unwrap()]);
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let a = std::fs::read(dirs[0].join("path_0000.csv")).unwrap();
    let b = std::fs::read(dirs[1].join("path_0000.csv")).unwrap();
    assert_ne!(a, b);
    let resolved = std::fs::read_to_string(dirs[1].join("config.resolved.toml")).unwrap();
    assert!(resolved.lines().any(|l| l.trim() == "seed = 8"), "{resolved}");
}

#[test]
fn counterexample_keeps_the_floor_empty() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), BASE);
    let out_dir = tmp.path().join("out");
    let out = bss(&["counterexample", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_dir.join("counterexample.json")).unwrap()).unwrap();
    assert_eq!(report["below_floor"]["hits"], 0);
    assert!(report["above_floor"]["hits"].as_u64().unwrap() >= 1);
    assert_eq!(report["all_paths_positive"], true);
}

#[test]
fn unknown_key_is_a_config_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &BASE.replace("n_paths = 2", "n_paths = 2\nn_pathz = 3"));
    let out = bss(&["simulate", "--config", &config, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("n_pathz"), "{}", stderr(&out));
}

#[test]
fn kernel_outside_the_admissible_range_fails_validation() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &BASE.replace("kappa = 0.25", "kappa = 0.6"));
    let before = std::fs::read(&config).unwrap();
    let out = bss(&["validate", "--config", &config, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", stderr(&out));
    assert!(stderr(&out).contains("kappa"), "{}", stderr(&out));
    assert_eq!(std::fs::read(&config).unwrap(), before);
}

#[test]
fn stochastic_commands_need_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &BASE.replace("seed = 7", ""));
    let out = bss(&["simulate", "--config", &config, "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("seed"), "{}", stderr(&out));
    let out = bss(&["validate", "--config", &config, "--out", tmp.path().join("v").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

#[test]
fn zero_workers_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), BASE);
    let out = bss(&["validate", "--config", &config, "--workers", "0", "--out", tmp.path().join("o").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn manifest_lists_hashed_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), BASE);
    let out_dir = tmp.path().join("out");
    let out = bss(&["covariance", "--config", &config, "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    let manifest = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(manifest.contains("command: covariance"), "{manifest}");
    assert!(manifest.contains("covariance.json"), "{manifest}");
    assert!(manifest.contains("config_sha256: "), "{manifest}");
    assert!(out_dir.join("sigma.csv").exists());
}
