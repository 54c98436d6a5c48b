use std::path::Path;
use std::process::Command;

use serde_json::Value;

fn dyadlab(dir: &Path, args: &[&str]) -> (i32, Value) {
    let out = dir.join("out");
    let status = Command::new(env!("CARGO_BIN_EXE_dyadlab")).args(args).arg("--out").arg(&out).output().expect("binary runs");
    let report = std::fs::read_to_string(out.join("report.json")).map(|t| serde_json::from_str(&t).unwrap()).unwrap_or(Value::Null);
    (status.status.code().expect("exit code"), report)
}

fn write_config(dir: &Path, v: Value) -> String {
    let path = dir.join("config.json");
    std::fs::write(&path, v.to_string()).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report) = dyadlab(dir.path(), &["selftest"]);
    assert_eq!(code, 0, "{report}");
    let checks = report["certificates"]["checks"].as_array().unwrap();
    assert_eq!(checks.len(), 9);
    assert!(checks.iter().all(|c| c["pass"] == true));
    assert_eq!(report["seed"], 0);
}

#[test]
fn factorize_reconstructs_the_bundled_weight() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report) = dyadlab(dir.path(), &["factorize"]);
    assert_eq!(code, 0);
    assert!(report["certificates"]["reconstruction_residual"].as_f64().unwrap() < 1e-10);
    assert!(dir.path().join("out/factors.csv").exists());
}

#[test]
fn default_counterexample_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report) = dyadlab(dir.path(), &["counterexample"]);
    assert_eq!(code, 2);
    let v = report["violations"].as_array().unwrap();
    assert!(v[0].as_str().unwrap().contains("generations"));
    assert!(dir.path().join("out/divergence.csv").exists());
    assert!(dir.path().join("out/sequence.json").exists());
}

#[test]
fn counterexample_at_c_one_certifies() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), serde_json::json!({"build": {"thresholds": {"kind": "j_log_j", "c": 1.0}, "generations": 4}}));
    let (code, report) = dyadlab(dir.path(), &["counterexample", "--config", &cfg]);
    assert_eq!(code, 0, "{}", report["violations"]);
    assert_eq!(report["certificates"]["completed"], 4);
}

#[test]
fn same_seed_gives_identical_reports() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for cmd in ["constants", "extend-dyadic", "average"] {
        assert_eq!(dyadlab(a.path(), &[cmd, "--seed", "7"]).0, 0, "{cmd}");
        assert_eq!(dyadlab(b.path(), &[cmd, "--seed", "7"]).0, 0, "{cmd}");
        for entry in std::fs::read_dir(a.path().join("out")).unwrap() {
            let name = entry.unwrap().file_name();
            let x = std::fs::read(a.path().join("out").join(&name)).unwrap();
            let y = std::fs::read(b.path().join("out").join(&name)).unwrap();
            assert!(x == y, "{cmd}: {name:?} differs");
        }
    }
}

#[test]
fn randomized_commands_need_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (code, _) = dyadlab(dir.path(), &["extend-dyadic"]);
    assert_eq!(code, 3);
    let cfg = write_config(dir.path(), serde_json::json!({"seed": 5}));
    let (code, report) = dyadlab(dir.path(), &["extend-dyadic", "--config", &cfg]);
    assert_eq!(code, 0);
    assert_eq!(report["seed"], 5);
}

#[test]
fn bad_input_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(dyadlab(dir.path(), &["no-such-command"]).0, 3);
    let cfg = write_config(dir.path(), serde_json::json!({"no_such_key": 1}));
    assert_eq!(dyadlab(dir.path(), &["factorize", "--config", &cfg]).0, 3);
    let cfg = write_config(dir.path(), serde_json::json!({"command": "azuma"}));
    assert_eq!(dyadlab(dir.path(), &["factorize", "--config", &cfg]).0, 3);
    assert_eq!(dyadlab(dir.path(), &["factorize", "--config", "/nonexistent/config.json"]).0, 3);
    assert_eq!(dyadlab(dir.path(), &["--help"]).0, 0);
}

#[test]
fn csv_headers_match_the_report() {
    let dir = tempfile::tempdir().unwrap();
    let (code, report) = dyadlab(dir.path(), &["azuma"]);
    assert_eq!(code, 0);
    let tables = report["tables"].as_array().unwrap();
    assert!(!tables.is_empty());
    for t in tables {
        let names: Vec<&str> = t["columns"].as_array().unwrap().iter().map(|c| c["name"].as_str().unwrap()).collect();
        assert!(t["columns"].as_array().unwrap().iter().all(|c| !c["description"].as_str().unwrap().is_empty()));
        let mut r = csv::Reader::from_path(dir.path().join("out").join(t["file"].as_str().unwrap())).unwrap();
        let header: Vec<String> = r.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(header, names);
        assert!(r.records().count() > 0);
    }
}
