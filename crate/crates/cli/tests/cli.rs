use std::path::PathBuf;
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn wmopt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_wmopt"))
        .args(args)
        .env_remove("WMOPT_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!("{e}: {}\n{}", String::from_utf8_lossy(&out.stdout), String::from_utf8_lossy(&out.stderr))
    })
}

fn num(v: &Value) -> f64 {
    v.as_f64().unwrap_or_else(|| panic!("not a number: {v}"))
}

#[test]
fn optimize_from_moments() {
    let out = wmopt(&["optimize", "--moments", "0,1,0"]);
    assert_eq!(out.status.code(), Some(0));
    let doc = json(&out);
    assert_eq!(doc["tool"], "wmopt");
    assert_eq!(doc["command"], "optimize");
    let e = &doc["payload"]["extrema"];
    assert!((num(&e["max_value"]) - 0.5).abs() < 1e-15);
    assert!((num(&e["min_value"]) + 0.5).abs() < 1e-15);
    let p = &e["max_point"];
    assert_eq!([num(&p["x"]), num(&p["y"]), num(&p["z"])], [1.0, 0.0, 1.0]);
}

#[test]
fn all_zero_moments_exit_three() {
    let out = wmopt(&["optimize", "--moments", "0,0,0"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(out.stdout.is_empty());
}

#[test]
fn oscillator_setup_saturates_the_bound() {
    let setup = fixture("spin_oscillator.json");
    let out = wmopt(&["optimize", setup.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let p = &json(&out)["payload"];
    let sigma_o = num(&p["moments"]["sigma_o"]);
    assert!((sigma_o - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-12);
    assert_eq!(p["tradeoff"]["saturates_sr"], true);
    assert!((num(&p["extrema"]["max_value"]) - sigma_o).abs() < 1e-12);
    // A_w = 1/(λσ_q) = 10√2 at λ = 0.1
    let aw = num(&p["max_point_physical"]["a_w"][0]);
    assert!((aw - 10.0 * 2f64.sqrt()).abs() < 1e-10);
    assert!((num(&p["setup_weak_values"]["a_w"][0]) - 1.0).abs() < 1e-12);
}

#[test]
fn boundary_profile_csv() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("profile.csv");
    let out = wmopt(&["optimize", "--moments", "0.3,1,0.5", "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let max = num(&json(&out)["payload"]["extrema"]["max_value"]);
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("r,theta,x,y,z,value"));
    let values: Vec<f64> = lines.map(|l| l.rsplit(',').next().unwrap().parse().unwrap()).collect();
    assert!(!values.is_empty());
    assert!(values.iter().all(|&v| v <= max + 1e-12));
}

#[test]
fn simulate_writes_the_documented_table() {
    let setup = fixture("spin_oscillator.json");
    let out = wmopt(&["simulate", setup.to_str().unwrap(), "--lambda-grid", "0:0.2:5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("lambda,N_exact,mean_exact,mean_interp,mean_aav,abs_err_interp,abs_err_aav")
    );
    let rows: Vec<Vec<f64>> = lines.map(|l| l.split(',').map(|c| c.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 5);
    let zero = &rows[0];
    assert_eq!(zero[0], 0.0);
    assert!((zero[1] - 0.5).abs() < 1e-12);
    for v in &zero[2..] {
        assert!(v.abs() < 1e-12, "{zero:?}");
    }
    // the exact mean is λ for this setup; the interpolating tier lags at O(λ³)
    for r in &rows[1..] {
        assert!((r[2] - r[0]).abs() < 1e-9, "{r:?}");
        assert!(r[5] > 0.0 && r[5] < r[0].powi(3));
    }
}

#[test]
fn simulate_near_orthogonal_prefers_the_interpolating_tier() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("sim.csv");
    let setup = fixture("near_orthogonal.json");
    let out = wmopt(&["simulate", setup.to_str().unwrap(), "--csv", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let text = std::fs::read_to_string(&csv).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    for r in rows.iter().skip(1) {
        assert!(r[5] < r[6], "{r:?}");
    }
}

#[test]
fn verify_cauchy_passes() {
    let out = wmopt(&["verify", "--suite", "cauchy", "--trials", "1000", "--seed", "42"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let p = &json(&out)["payload"];
    assert_eq!(p["passed"], true);
    assert_eq!(p["suites"][0]["failures"], 0);
    assert!(p["suites"][0]["checks"].as_u64().unwrap() >= 1000);
}

#[test]
fn amplify_reaches_the_requested_ratio() {
    let setup = fixture("amplify_dim4.json");
    let out = wmopt(&["amplify", setup.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let p = &json(&out)["payload"];
    assert_eq!(p["plan"]["feasible"], true);
    assert_eq!(p["plan"]["kernel_dim"], 1);
    let m = &p["moments"];
    // s/σ_o = sqrt(L² − 1) with L = 20
    assert!((num(&m["s"]) / num(&m["sigma_o"]) - 399f64.sqrt()).abs() < 1e-9);
    assert!(num(&p["ratio_max_over_sigma_o"]) > 1.0);
}

#[test]
fn amplify_without_kernel_exits_four() {
    let setup = fixture("trivial_kernel.json");
    let out = wmopt(&["amplify", setup.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("kernel"), "{err}");
}

#[test]
fn invalid_input_names_the_field() {
    let setup = fixture("invalid_operator.json");
    let out = wmopt(&["optimize", setup.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("detector.o"), "{err}");

    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    let text = std::fs::read_to_string(fixture("spin_oscillator.json")).unwrap();
    std::fs::write(&bad, text.replace("\"lambda\": 0.1", "\"lambda\": 0.1, \"extra\": 1")).unwrap();
    let out = wmopt(&["optimize", bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("extra"));

    let out = wmopt(&["simulate", fixture("missing.json").to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn repeated_runs_match_except_for_the_timestamp() {
    let setup = fixture("near_orthogonal.json");
    let run = || {
        let mut doc = json(&wmopt(&["optimize", setup.to_str().unwrap()]));
        doc.as_object_mut().unwrap().remove("timestamp");
        doc
    };
    let a = run();
    assert_eq!(a["seed"], 7);
    assert_eq!(a, run());

    let sim = |threads: &str| {
        let out = Command::new(env!("CARGO_BIN_EXE_wmopt"))
            .args(["--threads", threads, "simulate", setup.to_str().unwrap()])
            .output()
            .unwrap();
        out.stdout
    };
    assert_eq!(sim("1"), sim("4"));
}

#[test]
fn seed_flag_overrides_the_setup_file() {
    let setup = fixture("near_orthogonal.json");
    let doc = json(&wmopt(&["--seed", "11", "optimize", setup.to_str().unwrap()]));
    assert_eq!(doc["seed"], 11);
}
