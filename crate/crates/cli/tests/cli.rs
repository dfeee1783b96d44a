use std::path::Path;
use std::process::{Command, Output};

use dimlab::io;
use serde_json::Value;

fn dimlab(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dimlab"))
        .args(args)
        .current_dir(dir)
        .env_remove("DIMLAB_THREADS")
        .output()
        .expect("binary runs")
}

fn json_out(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("bad JSON ({e}): {}", String::from_utf8_lossy(&out.stdout))
    })
}

fn cantor(dir: &Path) {
    let out = dimlab(&["construct", "ifs", "--base", "4", "--keep", "0,3", "--depth", "12", "--out", "cantor.json"], dir);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn cantor_box_and_corr() {
    let dir = tempfile::tempdir().unwrap();
    cantor(dir.path());
    let out = dimlab(&["estimate", "--input", "cantor.json", "--estimator", "box", "--csv", "box.csv"], dir.path());
    assert!(out.status.success());
    let report = json_out(&out);
    assert_eq!(report["estimator"], "box");
    assert!((report["value"].as_f64().unwrap() - 0.5).abs() < 0.02);
    for key in ["value", "window", "residual", "verdict"] {
        assert!(report.get(key).is_some(), "missing {key}");
    }
    let csv = std::fs::read_to_string(dir.path().join("box.csv")).unwrap();
    assert!(csv.starts_with("level,value\n"));
    // symbolic counts travel with the file, so levels past the tree work
    let out = dimlab(&["estimate", "--input", "cantor.json", "--estimator", "box", "--levels", "1..40"], dir.path());
    assert!(out.status.success());
    assert!((json_out(&out)["value"].as_f64().unwrap() - 0.5).abs() < 0.02);
    let out = dimlab(&["estimate", "--input", "cantor.json", "--estimator", "corr", "--levels", "2..12"], dir.path());
    assert!((json_out(&out)["value"].as_f64().unwrap() - 0.5).abs() < 0.02);
}

#[test]
fn round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    cantor(dir.path());
    let out = dimlab(&["construct", "measure", "--set", "cantor.json", "--out", "mu.json"], dir.path());
    assert!(out.status.success());
    for file in ["cantor.json", "mu.json"] {
        let path = dir.path().join(file);
        let text = std::fs::read_to_string(&path).unwrap();
        let again = match io::read_artifact(&path).unwrap() {
            io::Artifact::Set(s, c) => io::set_to_json(&s, c.as_ref()).unwrap(),
            io::Artifact::Measure(m, c) => io::measure_to_json(&m, c.as_ref()).unwrap(),
        };
        assert_eq!(text, again, "{file}");
    }
    // estimates from the stored measure equal those from the stored set
    let a = dimlab(&["estimate", "--input", "mu.json", "--estimator", "corr"], dir.path());
    let b = dimlab(&["estimate", "--input", "cantor.json", "--estimator", "corr"], dir.path());
    assert_eq!(json_out(&a)["value"], json_out(&b)["value"]);
}

#[test]
fn construction_verifications_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dimlab(&["verify", "example1-counts", "--t", "2/5", "--s", "7/10", "--kmax", "12"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(json_out(&out)["pass"], true);
    let out = dimlab(&["verify", "propeq-counts", "--t", "2/5", "--s", "7/10", "--budget", "100000"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let out = dimlab(
        &["construct", "example1", "--t", "2/5", "--s", "7/10", "--depth", "64", "--max-cubes", "1024", "--out", "e1.json", "--plan-out", "plan.json"],
        dir.path(),
    );
    assert!(out.status.success());
    let summary = json_out(&out);
    assert_eq!(summary["n_seq"][2], 4);
    assert_eq!(summary["n_seq"][3], 10);
    let plan: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("plan.json")).unwrap()).unwrap();
    assert_eq!(plan["t"], "2/5");
    let out = dimlab(&["verify", "mlbd-stages", "--set", "e1.json", "--s", "3/10", "--samples", "200"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = json_out(&out);
    assert_eq!(report["heuristic"], false);
    assert_eq!(report["stages"][0]["level"], 7);
}

#[test]
fn set_checks_pass() {
    let dir = tempfile::tempdir().unwrap();
    cantor(dir.path());
    for args in [
        vec!["verify", "lemma22", "--set", "cantor.json", "--levels", "4..12", "--random-measures", "20"],
        vec!["verify", "prop24", "--set", "cantor.json"],
        vec!["verify", "ineq-chain", "--input", "cantor.json", "--levels", "2..12"],
    ] {
        let out = dimlab(&args, dir.path());
        assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn atoms_and_energy() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("one.csv"), "x\n0.3\n").unwrap();
    let out = dimlab(&["construct", "points", "--csv", "one.csv", "--snap-depth", "12", "--out", "p.json", "--measure-out", "pm.json"], dir.path());
    assert!(out.status.success());
    let out = dimlab(&["estimate", "--input", "pm.json", "--estimator", "corr"], dir.path());
    assert_eq!(json_out(&out)["value"].as_f64().unwrap(), 0.0);
    let out = dimlab(&["estimate", "--input", "pm.json", "--estimator", "energy", "--s", "1/2"], dir.path());
    assert_eq!(json_out(&out)["verdict"], "divergent");

    let out = dimlab(&["construct", "ifs", "--base", "2", "--keep", "0,1", "--depth", "10", "--out", "full.json"], dir.path());
    assert!(out.status.success());
    let out = dimlab(&["estimate", "--input", "full.json", "--estimator", "energy", "--s", "1/2"], dir.path());
    let report = json_out(&out);
    let (lo, hi) = (report["window"][0].as_f64().unwrap(), report["window"][1].as_f64().unwrap());
    assert!(lo <= 8.0 / 3.0 && 8.0 / 3.0 <= hi && hi - lo < 1e-3);
}

#[test]
fn fourier_correlation_of_lebesgue() {
    let dir = tempfile::tempdir().unwrap();
    let out = dimlab(&["construct", "ifs", "--base", "2", "--keep", "0,1", "--depth", "8", "--out", "full.json"], dir.path());
    assert!(out.status.success());
    let out = dimlab(&["estimate", "--input", "full.json", "--estimator", "fourier-corr", "--radii", "4..20", "--csv", "curve.csv"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!((json_out(&out)["value"].as_f64().unwrap() - 1.0).abs() < 0.05);
    let csv = std::fs::read_to_string(dir.path().join("curve.csv")).unwrap();
    assert!(csv.starts_with("R,I,err\n"));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    cantor(dir.path());
    // validation: parameter order, decimals, levels past the tree
    let out = dimlab(&["verify", "example1-counts", "--t", "7/10", "--s", "2/5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = dimlab(&["verify", "example1-counts", "--t", "0.4", "--s", "7/10"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let out = dimlab(&["estimate", "--input", "cantor.json", "--estimator", "corr", "--levels", "2..30"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("0..=12"));
    // computation: no admissible stage level for s above the dimension
    let out = dimlab(&["verify", "mlbd-stages", "--set", "cantor.json", "--s", "3/5"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    // verification: a sandwich with no exponent slack and no tolerance
    let out = dimlab(&["verify", "prop41", "--measure", "cantor.json", "--eps", "1/1000", "--tolerance", "0"], dir.path());
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn thread_cap() {
    let dir = tempfile::tempdir().unwrap();
    cantor(dir.path());
    let out = dimlab(&["--threads", "2", "verify", "lemma22", "--set", "cantor.json", "--levels", "4..8"], dir.path());
    assert!(out.status.success());
    let out = Command::new(env!("CARGO_BIN_EXE_dimlab"))
        .args(["verify", "prop24", "--set", "cantor.json"])
        .current_dir(dir.path())
        .env("DIMLAB_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let out = dimlab(&["--threads", "0", "verify", "prop24", "--set", "cantor.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}
