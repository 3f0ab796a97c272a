use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn scenario(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn noma(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_noma")).args(args).output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = noma(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines().skip(1).map(|l| l.split(',').map(str::to_string).collect()).collect()
}

fn error_line(out: &Output) -> serde_json::Value {
    let stderr = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(stderr.lines().last().unwrap()).unwrap()
}

#[test]
fn sumcap_in_bits() {
    let two_user = scenario("two_user.json");
    let csv = ok(&["sumcap", "--scenario", two_user.to_str().unwrap(), "--unit", "bits"]);
    let r = rows(&csv);
    assert_eq!(r[0][1], "bits");
    let c: f64 = r[0][0].parse().unwrap();
    assert!((c - 4.028291).abs() < 1e-6, "{c}");
}

#[test]
fn corner_for_user_two_first() {
    let two_user = scenario("two_user.json");
    let csv = ok(&["corners", "--scenario", two_user.to_str().unwrap(), "--order", "2,1", "--unit", "bits"]);
    let r = rows(&csv);
    assert_eq!(r.len(), 1);
    assert_eq!(r[0][0], "2-1");
    let (r1, r2): (f64, f64) = (r[0][1].parse().unwrap(), r[0][2].parse().unwrap());
    assert!((r1 - 3.100069).abs() < 1e-6 && (r2 - 0.928221).abs() < 1e-6);
    let all = ok(&["corners", "--scenario", two_user.to_str().unwrap()]);
    assert_eq!(rows(&all).len(), 2);
}

#[test]
fn region_sweep_shape_and_monotone_r2() {
    let two_user = scenario("two_user.json");
    let csv = ok(&["region", "--scenario", two_user.to_str().unwrap(), "--gamma", "1e-3:1e3:61", "--unit", "bits"]);
    assert!(csv.starts_with("gamma_2,R_1,R_2,R_sum,unit\n"));
    let r = rows(&csv);
    assert_eq!(r.len(), 61);
    let r2: Vec<f64> = r.iter().map(|row| row[2].parse().unwrap()).collect();
    assert!(r2.windows(2).all(|w| w[1] >= w[0]));
}

#[test]
fn bits_are_nats_over_ln2_per_column() {
    let two_user = scenario("two_user.json");
    let base = ["region", "--scenario", two_user.to_str().unwrap(), "--gamma", "0.01:100:7", "--unit"];
    let nats = rows(&ok(&[&base[..], &["nats"]].concat()));
    let bits = rows(&ok(&[&base[..], &["bits"]].concat()));
    for (n, b) in nats.iter().zip(&bits) {
        assert_eq!(n[0], b[0]);
        for col in 1..4 {
            let (x, y): (f64, f64) = (n[col].parse().unwrap(), b[col].parse().unwrap());
            assert_eq!(y, x / std::f64::consts::LN_2);
        }
    }
}

#[test]
fn repeated_runs_are_byte_identical() {
    let s = scenario("three_user_complex.json");
    let s = s.to_str().unwrap();
    for args in [
        vec!["region", "--scenario", s, "--gamma", "0.1:10:4", "--gamma", "0.5:2:3"],
        vec!["simulate", "--scenario", s, "--variance", "0.3", "--samples", "5000", "--seed", "42"],
        vec!["evolve", "--scenario", s, "--gamma", "3", "--gamma", "0.2"],
        vec!["track", "--scenario", s, "--points", "25"],
    ] {
        assert_eq!(ok(&args), ok(&args), "{args:?}");
    }
}

#[test]
fn out_and_plot_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("track.csv");
    let two_user = scenario("two_user.json");
    let stdout = ok(&[
        "track",
        "--scenario",
        two_user.to_str().unwrap(),
        "--gamma",
        "100",
        "--points",
        "30",
        "--out",
        out.to_str().unwrap(),
        "--plot",
    ]);
    assert!(stdout.contains("30 track points"));
    let csv = std::fs::read_to_string(&out).unwrap();
    assert!(csv.starts_with("v1,v_1,v_2,rho_1,rho_2\n"));
    assert_eq!(csv.lines().count(), 31);
    let svg = std::fs::read_to_string(dir.path().join("track.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
}

#[test]
fn simulate_and_evolve_outputs() {
    let two_user = scenario("two_user.json");
    let csv = ok(&["simulate", "--scenario", two_user.to_str().unwrap(), "--variance", "0.5", "--variance", "0.2", "--samples", "2000"]);
    assert!(csv.starts_with("user,v_in,mse_pred,mse_emp,stderr,bias,n\n"));
    let r = rows(&csv);
    assert_eq!((r[0][1].as_str(), r[1][1].as_str(), r[1][6].as_str()), ("0.5", "0.2", "2000"));

    let ev = rows(&ok(&["evolve", "--scenario", two_user.to_str().unwrap(), "--backoff", "0.1"]));
    assert_eq!(ev[0][1..3], ["1.0".to_string(), "1.0".to_string()]);
    let last = ev.last().unwrap();
    assert!(last[1..3].iter().all(|v| v.parse::<f64>().unwrap() <= 1e-6));
}

#[test]
fn failures_have_distinct_codes_and_json_errors() {
    let two_user = scenario("two_user.json");
    let two_user = two_user.to_str().unwrap();
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"H_re": [[1.0]], "w": [1.0, 2.0], "noise_var": 1.0}"#).unwrap();
    let unknown = dir.path().join("unknown.json");
    std::fs::write(&unknown, r#"{"H_re": [[1.0]], "w": [1.0], "noise_var": 1.0, "extra": 0}"#).unwrap();

    let cases: [(Vec<&str>, i32, &str); 7] = [
        (vec!["sumcap", "--scenario", "/nonexistent/s.json"], 3, "io"),
        (vec!["sumcap", "--scenario", bad.to_str().unwrap()], 4, "schema"),
        (vec!["sumcap", "--scenario", unknown.to_str().unwrap()], 4, "schema"),
        (vec!["rates", "--scenario", two_user, "--gamma", "1:2:3"], 2, "usage"),
        (vec!["rates", "--scenario", two_user, "--gamma", "-1"], 2, "usage"),
        (vec!["corners", "--scenario", two_user, "--order", "1,1"], 2, "usage"),
        (vec!["sumcap", "--scenario", two_user, "--bogus"], 2, "usage"),
    ];
    for (args, code, kind) in cases {
        let out = noma(&args);
        assert_eq!(out.status.code(), Some(code), "{args:?}");
        let e = error_line(&out);
        assert_eq!(e["error"], kind, "{args:?}");
        assert_eq!(e["code"], code);
        assert!(out.stdout.is_empty());
    }
}
