use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn run(out: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_translator-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env("TRANSLATOR_LAB_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn manifest(out: &Path, name: &str) -> Value {
    let text = fs::read_to_string(out.join(name)).unwrap();
    serde_json::from_str(&text).unwrap()
}

#[test]
fn bowl_solve_writes_csv_and_sidecar() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bowl", "solve", "--speed", "mean", "--dim", "3", "--hmax", "100", "--tol", "1e-8"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let csv = fs::read_to_string(dir.path().join("profile_mean_n3.csv")).unwrap();
    let mut lines = csv.split('\n');
    assert_eq!(lines.next(), Some("r,u,u_r,s,kappa_rad,kappa_sph,F,grad_a_sq"));
    assert!(!csv.contains('\r'));
    let first: Vec<f64> = lines.next().unwrap().split(',').map(|c| c.parse().unwrap()).collect();
    assert_eq!(first.len(), 8);
    assert!((first[0] - 1e-4).abs() < 1e-18);

    let sidecar = manifest(dir.path(), "profile_mean_n3.json");
    assert_eq!(sidecar["speed"], "mean");
    assert_eq!(sidecar["n"], 3);
    assert_eq!(sidecar["nodes"].as_u64().unwrap() as usize, csv.lines().count() - 1);

    let m = manifest(dir.path(), "bowl-solve_mean_n3.manifest.json");
    for key in ["config", "reports", "passed"] {
        assert!(m.get(key).is_some(), "missing {key}");
    }
    assert_eq!(m["passed"], true);
}

#[test]
fn verify_all_passes_and_exit_status_is_sound() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "all", "--speed", "mean", "--samples", "2000"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "verify-all_mean_n3.manifest.json");
    let reports = m["reports"].as_array().unwrap();
    let ids: Vec<&str> = reports.iter().map(|r| r["lemma_id"].as_str().unwrap()).collect();
    for id in [
        "lemma-3.1",
        "lemma-3.3",
        "lemma-3.4",
        "lemma-3.5",
        "lemma-3.6",
        "blowdown",
        "corollary-H",
        "claim-4.1",
        "claim-4.2",
        "iccond",
        "linearized-cylinder",
        "jacobi-speed",
        "jacobi-rotation",
    ] {
        assert!(ids.contains(&id), "missing {id}");
    }
    assert!(reports.iter().all(|r| r["passed"] == true));
    let stdout: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(stdout, m);
}

#[test]
fn single_target_keeps_only_its_report() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "corollary-H", "--speed", "two-harmonic-mean"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "verify-corollary-H_two-harmonic-mean_n3.manifest.json");
    let reports = m["reports"].as_array().unwrap();
    assert_eq!(reports.len(), 1);
    assert_eq!(reports[0]["lemma_id"], "corollary-H");
}

#[test]
fn failing_check_exits_nonzero_with_failure_list() {
    // the two-harmonic mean is concave, so the convexity check must fail
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["speeds", "concavity", "--speed", "two-harmonic-mean", "--mode", "convex", "--samples", "500"]);
    assert_eq!(o.status.code(), Some(1));
    let line = String::from_utf8_lossy(&o.stderr);
    let failure: Value = serde_json::from_str(line.trim()).unwrap();
    assert_eq!(failure["failed"][0], "speeds-concavity");
    let m = manifest(dir.path(), "speeds-concavity_two-harmonic-mean_n3.manifest.json");
    assert_eq!(m["passed"], false);
    assert_eq!(m["reports"][0]["passed"], false);
}

#[test]
fn cone_beta2_reports_both_constants() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["cone", "beta2", "--speed", "two-harmonic-mean", "--dim", "3", "--mode", "concave", "--samples", "3000", "--seed", "7"];
    let o = run(dir.path(), &args);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "cone-beta2_two-harmonic-mean_n3.manifest.json");
    let est = &m["reports"][0]["details"]["estimate"];
    assert!((est["beta1"].as_f64().unwrap() - 0.4).abs() < 1e-12);
    let beta2 = est["beta2"].as_f64().unwrap();
    assert!(beta2.is_finite() && beta2 > 0.0);
}

#[test]
fn identical_configs_give_identical_bytes() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let args = ["cone", "beta2", "--speed", "sqrt-scalar", "--samples", "2000", "--seed", "3"];
    let oa = run(a.path(), &args);
    let ob = run(b.path(), &args);
    assert_eq!(oa.status.code(), Some(0));
    assert_eq!(ob.stdout.len(), oa.stdout.len());
    let name = "cone-beta2_sqrt-scalar_n3.manifest.json";
    let mut ja = fs::read_to_string(a.path().join(name)).unwrap();
    let jb = fs::read_to_string(b.path().join(name)).unwrap();
    // the output directory is part of the recorded config
    ja = ja.replace(&a.path().display().to_string(), &b.path().display().to_string());
    assert_eq!(ja, jb);

    let oc = Command::new(env!("CARGO_BIN_EXE_translator-lab"))
        .args(args)
        .arg("--out")
        .arg(b.path())
        .env("TRANSLATOR_LAB_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(oc.status.code(), Some(0));
    assert_eq!(fs::read_to_string(b.path().join(name)).unwrap(), jb);
}

#[test]
fn floats_use_seventeen_significant_digits() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["verify", "linearized-cylinder", "--speed", "scalar-to-mean"]);
    assert_eq!(o.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("verify-linearized-cylinder_scalar-to-mean_n3.manifest.json")).unwrap();
    assert!(text.contains("\"h_max\": 1.0000000000000000e4"), "{text}");
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    for args in [
        vec!["verify", "all", "--speed", "gauss"],
        vec!["bowl", "solve", "--tol", "0.5"],
        vec!["bowl", "solve", "--hmax", "0.1"],
        vec!["bowl", "solve", "--dim", "0"],
        vec!["verify", "lemma-2.7"],
        vec!["frobnicate"],
    ] {
        let o = run(dir.path(), &args);
        assert_eq!(o.status.code(), Some(2), "{args:?}");
    }
    assert!(fs::read_dir(dir.path()).map(|d| d.count() == 0).unwrap_or(true));
}

#[test]
fn domain_errors_exit_one_with_json() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["bowl", "solve", "--speed", "sqrt-scalar", "--dim", "4"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "unsupported_dimension");

    let o = run(dir.path(), &["verify", "jacobi-rotation", "--speed", "two-harmonic-mean", "--hmax", "10"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "invalid_input");

    // decade checks need the profile to reach h = 10³
    let o = run(dir.path(), &["verify", "corollary-H", "--hmax", "10"]);
    assert_eq!(o.status.code(), Some(1));
    let err: Value = serde_json::from_str(String::from_utf8_lossy(&o.stderr).trim()).unwrap();
    assert_eq!(err["error"]["kind"], "out_of_range");
}

#[test]
fn blowdown_and_iccond_point() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(dir.path(), &["blowdown", "--hj", "1e3", "--t", "0,0.5"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let m = manifest(dir.path(), "blowdown_mean_n3.manifest.json");
    assert_eq!(m["reports"][0]["measured"].as_array().unwrap().len(), 2);

    let o = run(dir.path(), &["iccond", "--speed", "two-harmonic-mean", "--z", "1,2"]);
    assert_eq!(o.status.code(), Some(0));
    let m = manifest(dir.path(), "iccond-point_two-harmonic-mean_n3.manifest.json");
    assert_eq!(m["reports"][0]["details"]["z_face"][1], 2.0);
}
