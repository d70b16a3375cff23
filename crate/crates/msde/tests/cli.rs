use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const OU_RATE: &str = r#"{
  "seed": 3,
  "model": {"name": "ou", "params": {"rate": 1.0}},
  "grid": {"T": 1.0, "N": 512, "M": 32},
  "x0": [0.0],
  "target": [1.0]
}"#;

const REFLECTED: &str = r#"{
  "seed": 11,
  "model": {"name": "brownian", "dim": 1},
  "domain": {"kind": "half_line"},
  "grid": {"T": 1.0, "N": 256},
  "x0": [0.0],
  "eps": 0.5,
  "n_paths": 3
}"#;

fn msde(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_msde")).args(args).output().expect("binary runs")
}

fn run_with(dir: &Path, sub: &str, config: &str, extra: &[&str]) -> Output {
    let cfg = dir.join("config.json");
    fs::write(&cfg, config).unwrap();
    let out = dir.join("out");
    let mut args = vec![sub, "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap(), "--workers", "1"];
    args.extend_from_slice(extra);
    msde(&args)
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn rate_reproduces_ou_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(dir.path(), "rate", OU_RATE, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let r = json(&dir.path().join("out/rate.json"));
    let exact = 1.0 / (1.0 - (-2.0_f64).exp());
    assert!((r["value"].as_f64().unwrap() - exact).abs() < 1e-2, "{r}");
    assert_eq!(r["grid"]["M"], 32);
    let m = json(&dir.path().join("out/manifest.json"));
    assert_eq!(m["subcommand"], "rate");
    assert_eq!(m["seed"], 3);
}

#[test]
fn missing_seed_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(dir.path(), "rate", &OU_RATE.replace("\"seed\": 3,", ""), &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn unknown_key_exits_with_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run_with(dir.path(), "rate", &OU_RATE.replace("\"seed\"", "\"sed\": 1, \"seed\""), &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_flag_is_a_config_error() {
    assert_eq!(msde(&["rate"]).status.code(), Some(2));
}

#[test]
fn simulate_is_byte_reproducible() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for d in [&a, &b] {
        let o = run_with(d.path(), "simulate", REFLECTED, &[]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let mut names: Vec<_> = fs::read_dir(a.path().join("out")).unwrap().map(|e| e.unwrap().file_name()).collect();
    names.sort();
    assert_eq!(names.len(), 5, "{names:?}");
    for n in names {
        let x = fs::read(a.path().join("out").join(&n)).unwrap();
        let y = fs::read(b.path().join("out").join(&n)).unwrap();
        assert_eq!(x, y, "{n:?} differs");
    }
    let props = json(&a.path().join("out/properties.json"));
    assert_eq!(props["passed"], true);
}

#[test]
fn manifest_tracks_config_bytes_and_seed_override() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    run_with(a.path(), "simulate", REFLECTED, &[]);
    run_with(b.path(), "simulate", &format!("{REFLECTED}\n"), &["--seed-override", "12"]);
    let (ma, mb) = (json(&a.path().join("out/manifest.json")), json(&b.path().join("out/manifest.json")));
    assert_ne!(ma["config_sha256"], mb["config_sha256"]);
    assert_eq!(mb["seed"], 12);
    let pa = fs::read(a.path().join("out/path_0000.csv")).unwrap();
    let pb = fs::read(b.path().join("out/path_0000.csv")).unwrap();
    assert_ne!(pa, pb);
}

#[test]
fn verify_ldp_writes_estimates() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{
      "seed": 5,
      "model": {"name": "brownian", "dim": 1},
      "grid": {"T": 1.0, "N": 128, "M": 16},
      "x0": [0.0],
      "eps_list": [0.4, 0.2, 0.1],
      "n_paths": 2000,
      "event": {"kind": "endpoint_beyond", "level": 1.0}
    }"#;
    let o = run_with(dir.path(), "verify-ldp", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(dir.path().join("out/estimates.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("epsilon,p_hat,stderr,neg_eps_log_p,ess"));
    assert_eq!(csv.lines().count(), 4);
    let r = json(&dir.path().join("out/report.json"));
    assert!((r["reference_rate"]["value"].as_f64().unwrap() - 0.5).abs() < 1e-3);
}

#[test]
fn suite_runs_selected_criteria() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"seed": 0, "model": {"name": "brownian", "dim": 1}, "grid": {"T": 1.0, "N": 16},
                  "options": {"criteria": [4, 5]}}"#;
    let o = run_with(dir.path(), "suite", cfg, &[]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stdout));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("criterion")).count(), 2);
    let s = json(&dir.path().join("out/summary.json"));
    assert_eq!(s["criteria"].as_array().unwrap().len(), 2);
}

#[test]
fn bundled_configs_parse() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let text = fs::read_to_string(&path).unwrap();
        msde::ExperimentConfig::from_json(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        count += 1;
    }
    assert!(count >= 5);
}
