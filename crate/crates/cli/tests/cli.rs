use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const IDENTITY: &str = r#"{"X":{"points":["a","b"],"dist":[[0,1],[1,0]]},"Y":"same","mu":[0.5,0.5],"nu":[0.5,0.5],"cost":[[0,1],[1,0]]}"#;
const CONSTANT: &str = r#"{"X":{"points":["a","b"],"dist":[[0,1],[1,0]]},"Y":"same","mu":[0.25,0.75],"nu":[0.5,0.5],"cost":[[3,3],[3,3]]}"#;
const ZERO: &str = r#"{"X":{"points":["a","b"],"dist":[[0,1],[1,0]]},"Y":"same","mu":[0.5,0.5],"nu":[0.5,0.5],"cost":[[0,0],[0,0]]}"#;
const NOT_METRIC: &str = r#"{"X":{"points":[0,1,2],"dist":[[0,1,5],[1,0,1],[5,1,0]]},"Y":"same","mu":[0.2,0.3,0.5],"nu":[0.4,0.4,0.2],"cost":[[0,1,5],[1,0,1],[5,1,0]]}"#;

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    fn new() -> Self {
        Fixture {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn file(&self, name: &str, body: &str) -> PathBuf {
        let p = self.dir.path().join(name);
        std::fs::write(&p, body).unwrap();
        p
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }
}

fn zt(args: &[&str], problem: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_zt"));
    cmd.args(args);
    if let Some(p) = problem {
        cmd.arg(p);
    }
    cmd.env_remove("ZT_LOG_LEVEL").output().unwrap()
}

fn json(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

#[test]
fn solve_on_constant_cost_gives_product_plan() {
    let fx = Fixture::new();
    let p = fx.file("c.json", CONSTANT);
    let v = json(&zt(&["solve", "--beta", "1"], Some(&p)));
    assert!((f(&v["pressure"]) + 3.0).abs() < 1e-12);
    let mu = [0.25, 0.75];
    for i in 0..2 {
        for j in 0..2 {
            assert!((f(&v["plan"][i][j]) - mu[i] * 0.5).abs() < 1e-12);
        }
    }
    assert_eq!(v["gauge"], "MaxPhiZero");
    assert_eq!(f(&v["phi"][0]), 0.0);
}

#[test]
fn anneal_identity_reaches_minus_log_two() {
    let fx = Fixture::new();
    let p = fx.file("id.json", IDENTITY);
    let v = json(&zt(&["anneal", "--beta-max", "16384"], Some(&p)));
    assert!((f(&v["hMaxEstimate"]) + 2f64.ln()).abs() < 1e-3);
    assert_eq!(v["converged"], true);
    assert!((f(&v["plan"][0][0]) - 0.5).abs() < 1e-3);

    let out = fx.path("run");
    let status = zt(&["anneal", "--out", out.to_str().unwrap()], Some(&p));
    assert!(status.status.success());
    assert!(status.stdout.is_empty());
    let csv = std::fs::read_to_string(fx.path("run.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("beta,pressure,excess,entropy,cost,maxPhiDelta"));
    assert_eq!(lines.count(), 15);
    assert!(!csv.contains('\r'));
    let limit: Value = serde_json::from_str(&std::fs::read_to_string(fx.path("run.json")).unwrap()).unwrap();
    assert_eq!(limit, v);
}

#[test]
fn oracle_on_zero_cost() {
    let fx = Fixture::new();
    let p = fx.file("z.json", ZERO);
    let v = json(&zt(&["oracle"], Some(&p)));
    assert_eq!(f(&v["alpha"]), 0.0);
    assert_eq!(v["vertexCount"], 2);
    for row in v["maxEntropyPlan"].as_array().unwrap() {
        for x in row.as_array().unwrap() {
            assert!((f(x) - 0.25).abs() < 1e-9);
        }
    }
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let fx = Fixture::new();
    let p = fx.file("id.json", IDENTITY);
    for args in [&["solve", "--beta", "3"][..], &["anneal"], &["ldp"], &["duality"]] {
        let a = zt(args, Some(&p));
        let b = zt(args, Some(&p));
        assert!(a.status.success());
        assert_eq!(a.stdout, b.stdout, "{args:?}");
    }
}

#[test]
fn duality_certificate_fields() {
    let fx = Fixture::new();
    let p = fx.file("id.json", IDENTITY);
    let v = json(&zt(&["duality"], Some(&p)));
    let keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys.len(), 5);
    for k in ["primalValue", "dualValue", "gap", "feasible", "conjugate"] {
        assert!(keys.contains(&k));
    }
    assert!(f(&v["gap"]).abs() < 1e-3);
    assert_eq!(v["feasible"], true);
}

#[test]
fn ldp_and_curve_csv() {
    let fx = Fixture::new();
    let p = fx.file("id.json", IDENTITY);
    let out = zt(&["ldp"], Some(&p));
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let rows: Vec<&str> = text.lines().collect();
    assert_eq!(rows[0], "beta,cell,r_beta,I");
    assert_eq!(rows.len(), 1 + 15 * 4);
    let last: Vec<&str> = rows.last().unwrap().split(',').collect();
    assert_eq!(last[1], "1:1");
    let off: Vec<&str> = rows[rows.len() - 3].split(',').collect();
    assert_eq!(off[1], "0:1");
    let (r, i): (f64, f64) = (off[2].parse().unwrap(), off[3].parse().unwrap());
    assert!((r - i).abs() < 5e-3);

    let out = zt(&["pressure-curve"], Some(&p));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("beta,excess\n"));
    let excess: Vec<f64> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(excess.windows(2).all(|w| w[1] <= w[0] + 1e-9));
}

#[test]
fn validate_and_version() {
    let fx = Fixture::new();
    let p = fx.file("id.json", IDENTITY);
    let v = json(&zt(&["validate"], Some(&p)));
    assert_eq!(v["valid"], true);
    assert_eq!(v["distanceCost"], true);
    let out = zt(&["version"], None);
    assert!(out.status.success());
    assert!(String::from_utf8(out.stdout).unwrap().starts_with("zt "));
}

#[test]
fn exit_codes() {
    let fx = Fixture::new();
    let code = |o: Output| o.status.code().unwrap();

    let bad = fx.file("bad.json", "{\"X\": {\"points\": [0]},\n \"mu\": [1]");
    let out = zt(&["validate"], Some(&bad));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
    let missing = fx.file("missing.json", r#"{"X":{"points":[0],"dist":[[0]]},"Y":"same","mu":[1],"cost":[[0]]}"#);
    let out = zt(&["validate"], Some(&missing));
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("nu"));
    assert_eq!(code(zt(&["frobnicate"], None)), 1);
    assert_eq!(code(zt(&["validate"], Some(&fx.path("absent.json")))), 1);
    let p = fx.file("id.json", IDENTITY);
    assert_eq!(code(zt(&["solve", "--tol", "-1"], Some(&p))), 1);
    assert_eq!(code(zt(&["solve", "--format", "csv"], Some(&p))), 1);

    let nm = fx.file("nm.json", NOT_METRIC);
    assert_eq!(code(zt(&["validate"], Some(&nm))), 2);
    assert_eq!(code(zt(&["validate", "--no-triangle-check"], Some(&nm))), 0);

    // three temperatures cannot settle the limit
    assert_eq!(code(zt(&["ldp", "--beta-max", "4"], Some(&p))), 3);
    assert_eq!(code(zt(&["solve", "--beta", "1e4", "--tol", "1e-300", "--no-triangle-check"], Some(&nm))), 3);

    assert_eq!(code(zt(&["oracle", "--oracle-cap", "5", "--no-triangle-check"], Some(&nm))), 4);
}

#[test]
fn log_level_goes_to_stderr() {
    let fx = Fixture::new();
    let p = fx.file("id.json", IDENTITY);
    let out = Command::new(env!("CARGO_BIN_EXE_zt"))
        .args(["solve"])
        .arg(&p)
        .env("ZT_LOG_LEVEL", "debug")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("loaded"));
    serde_json::from_slice::<Value>(&out.stdout).unwrap();
}
