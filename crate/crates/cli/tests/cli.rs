use std::path::PathBuf;
use std::process::{Command, Output};

fn sbp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sbp")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("sbp-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn verify_one_operator() {
    let out = sbp(&["verify", "--p", "3", "--dim", "2"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let rep = &v[0]["report"];
    assert_eq!(rep["nodes"], 12);
    assert!(rep["accuracy"].as_array().unwrap().iter().all(|a| a.as_f64().unwrap() <= 1e-10));
}

#[test]
fn unsupported_degree_is_usage_error() {
    assert_eq!(sbp(&["cubature", "--p", "5", "--dim", "2"]).status.code(), Some(2));
    assert_eq!(sbp(&["build-ops", "--p", "0"]).status.code(), Some(2));
    assert_eq!(sbp(&["cubature", "--p", "2", "--dim", "4"]).status.code(), Some(2));
    assert_eq!(sbp(&["spectrum", "--scheme", "dsbp", "--p", "1"]).status.code(), Some(2));
    assert_eq!(sbp(&["converge", "--scheme", "fem", "--p", "1"]).status.code(), Some(2));
    assert_eq!(sbp(&["converge", "--scheme", "csbp", "--p", "1", "--n", "8:4:x2"]).status.code(), Some(2));
    assert_eq!(sbp(&["replay", "/nonexistent/manifest.json"]).status.code(), Some(2));
}

#[test]
fn cubature_and_operator_files() {
    let rule = scratch("rule.json");
    let out = sbp(&["cubature", "--p", "2", "--dim", "3", "--out", rule.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&rule).unwrap()).unwrap();
    assert_eq!(v["dim"], 3);

    let out = sbp(&["build-ops", "--p", "1"]);
    assert_eq!(out.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    for key in ["p", "d", "nodes", "M", "Qx", "Qy", "Ex", "Ey", "faces", "metadata"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert!(v.get("Qz").is_none());
}

#[test]
fn tampered_golden_dir_fails() {
    let dir = scratch("golden");
    std::fs::create_dir_all(&dir).unwrap();
    let good = sbp(&["cubature", "--p", "2", "--dim", "2"]);
    let mut v: serde_json::Value = serde_json::from_slice(&good.stdout).unwrap();
    let w = v["orbits"][0]["weight"].as_f64().unwrap();
    v["orbits"][0]["weight"] = serde_json::json!(w * 1.001);
    std::fs::write(dir.join("cubature_d2_p2.json"), v.to_string()).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_sbp"))
        .args(["verify", "--p", "2"])
        .env("SBP_GOLDEN_DIR", &dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn converge_dsbp_p2_slope_and_replay() {
    let csv = scratch("conv.csv");
    let man = scratch("conv.manifest.json");
    let out = sbp(&[
        "converge", "--scheme", "dsbp", "--p", "2", "--n", "4:32:×2", "--out", csv.to_str().unwrap(),
        "--manifest", man.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let first = std::fs::read_to_string(&csv).unwrap();
    let mut rdr = csv::Reader::from_reader(first.as_bytes());
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["scheme", "p", "N", "h", "normalized_error"]);
    let rows: Vec<(f64, f64)> = rdr
        .records()
        .map(|r| {
            let r = r.unwrap();
            (r[3].parse().unwrap(), r[4].parse().unwrap())
        })
        .collect();
    assert_eq!(rows.len(), 4);
    let tail = &rows[1..];
    let x: Vec<f64> = tail.iter().map(|r| r.0.ln()).collect();
    let y: Vec<f64> = tail.iter().map(|r| r.1.ln()).collect();
    let (mx, my) = (x.iter().sum::<f64>() / 3.0, y.iter().sum::<f64>() / 3.0);
    let slope = x.iter().zip(&y).map(|(a, b)| (a - mx) * (b - my)).sum::<f64>()
        / x.iter().map(|a| (a - mx) * (a - mx)).sum::<f64>();
    assert!((slope - 3.0).abs() < 0.5, "slope {slope}");

    let m: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&man).unwrap()).unwrap();
    assert_eq!(m["subcommand"], "converge");
    assert_eq!(m["exit_code"], 0);
    std::fs::remove_file(&csv).unwrap();
    let out = sbp(&["replay", man.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(std::fs::read_to_string(&csv).unwrap(), first);
}

#[test]
fn spectrum_energy_and_cfl_outputs() {
    let out = sbp(&["spectrum", "--scheme", "csbp", "--p", "1", "--n", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("re,im\n"));
    assert_eq!(text.lines().count(), 1 + 16);

    let out = sbp(&["energy", "--scheme", "dsbp", "--p", "1", "--n", "4", "--t", "0.1", "--cfl", "0.1", "--every", "5"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("t,delta_E\n"));
    let last: f64 = text.lines().last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(last <= 0.0);

    let out = sbp(&["cfl", "--scheme", "csbp", "--p", "1", "--n", "8"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("scheme,p,cfl_max\ncsbp,1,"));
}
