use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn phaselat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phaselat")).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn missing_config_exits_2() {
    let dir = scratch("missing");
    let o = phaselat(&["find-pattern", "--config", dir.join("nope.json").to_str().unwrap()]);
    assert_eq!(code(&o), 2);
}

#[test]
fn malformed_config_reports_line_and_column() {
    let dir = scratch("malformed");
    let cfg = dir.join("bad.json");
    fs::write(&cfg, "{\n  \"model\": {\n    \"name\": \"brusselator\",,\n  }\n}\n").unwrap();
    let o = phaselat(&["find-pattern", "--config", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("bad.json:3:"), "{err}");
}

#[test]
fn unknown_keys_and_bad_values_exit_2() {
    let dir = scratch("invalid");
    let cfg = dir.join("typo.json");
    fs::write(&cfg, r#"{"numerics": {"jj": 4}}"#).unwrap();
    assert_eq!(code(&phaselat(&["find-pattern", "--config", cfg.to_str().unwrap()])), 2);
    fs::write(&cfg, r#"{"tolerances": {"d_relative": -1}}"#).unwrap();
    assert_eq!(code(&phaselat(&["find-pattern", "--config", cfg.to_str().unwrap()])), 2);
}

#[test]
fn find_pattern_is_deterministic() {
    let dir = scratch("pattern");
    let (a, b) = (dir.join("a"), dir.join("b"));
    for d in [&a, &b] {
        let o = phaselat(&["find-pattern", "--out", d.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    for f in ["pattern.csv", "pattern.json", "summary.txt"] {
        assert_eq!(fs::read(a.join("find-pattern").join(f)).unwrap(), fs::read(b.join("find-pattern").join(f)).unwrap(), "{f}");
    }
    let m = read_json(&a.join("find-pattern/manifest.json"));
    assert_eq!(m["config_hash"].as_str().unwrap().len(), 64);
    assert_eq!(m["assertions_passed"], Value::Bool(true));
    let csv = fs::read_to_string(a.join("find-pattern/pattern.csv")).unwrap();
    assert!(csv.starts_with("x,u0,u1,du0,du1\n"));
    // 17 significant digits
    let first = csv.lines().nth(1).unwrap().split(',').next().unwrap();
    assert_eq!(first.split('e').next().unwrap().trim_start_matches('-').len(), 18);
}

#[test]
fn fit_d_agrees_with_formula() {
    let dir = scratch("fitd");
    let o = phaselat(&["fit-d", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let d = read_json(&dir.join("fit-d/diffusion.json"));
    assert!(d["relative_discrepancy"].as_f64().unwrap() <= 1e-3);
    assert!(d["d_fit"].as_f64().unwrap() > 0.0);
}

#[test]
fn check_stability_holds_for_default_pattern() {
    let dir = scratch("stability");
    let o = phaselat(&["check-stability", "--out", dir.to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&dir.join("check-stability/stability.json"));
    for k in ["hypothesis_i_ok", "hypothesis_ii_ok", "hypothesis_iii_ok"] {
        assert_eq!(r[k], Value::Bool(true), "{k}");
    }
}

#[test]
fn nf_roundtrip_writes_lattice_state() {
    let dir = scratch("roundtrip");
    let o = phaselat(&["nf-roundtrip", "--out", dir.to_str().unwrap(), "--M", "32"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let csv = fs::read_to_string(dir.join("nf-roundtrip/lattice_state.csv")).unwrap();
    assert!(csv.starts_with("j,theta_j,W_L2,W_Linf\n"));
}

#[test]
fn short_simulation_and_failing_decay_window() {
    let dir = scratch("simulate");
    let args = ["--out", dir.to_str().unwrap(), "--J", "4", "--T", "5", "--M", "32"];
    let o = phaselat(&[&["simulate"][..], &args[..]].concat());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let norms = fs::read_to_string(dir.join("simulate/norms.csv")).unwrap();
    assert_eq!(norms.lines().count(), 1 + 51);
    // the decay window [50, 800] lies beyond T = 5
    assert_eq!(code(&phaselat(&[&["decay-report"][..], &args[..]].concat())), 1);
}
