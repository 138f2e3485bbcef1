use std::process::Command;

use qtoolkit_cli::{run, EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK};

fn call(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("qtoolkit").chain(args.iter().copied());
    let code = run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

fn csv_rows(text: &str) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().unwrap().iter().map(String::from).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(|x| x.parse().unwrap()).collect())
        .collect();
    (header, rows)
}

fn error_kind(stderr: &str) -> String {
    let line = stderr.lines().last().unwrap();
    let v: serde_json::Value = serde_json::from_str(line).unwrap();
    v["error"]["kind"].as_str().unwrap().to_string()
}

#[test]
fn fermi_occupation_at_log_two() {
    let (code, out, _) = call(&["statmech", "sweep", "--eps", "1", "--stat", "fermi", "--beta", "0.693"]);
    assert_eq!(code, EXIT_OK);
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["beta", "Z", "E", "S", "F", "n1"]);
    let n = rows[0][5];
    let exact = 1.0 / (0.693f64.exp() + 1.0);
    assert!((n - exact).abs() < 1e-15);
    assert!((n - 1.0 / 3.0).abs() < 1e-4);
}

#[test]
fn beta_grid_rows() {
    let (code, out, _) = call(&["statmech", "sweep", "--eps", "1,2,3", "--stat", "bose", "--beta", "0.1:5:0.1", "--out", "csv"]);
    assert_eq!(code, EXIT_OK);
    let (header, rows) = csv_rows(&out);
    assert_eq!(header.len(), 8);
    assert_eq!(rows.len(), 50);
    assert!((rows[49][0] - 5.0).abs() < 1e-12);
    // F = E − S/β
    for r in &rows {
        assert!((r[4] - (r[2] - r[3] / r[0])).abs() < 1e-9 * r[4].abs().max(1.0));
    }
}

#[test]
fn grassmann_cosine() {
    let (code, out, _) = call(&["grassmann", "eval", "cos(e1 e2 + e3 e4)"]);
    assert_eq!(code, EXIT_OK);
    assert_eq!(out, "1 - e1 e2 e3 e4\n");
    let (code, out, _) = call(&["grassmann", "eval", "cos(e1 e2 + e3 e4)", "--format", "json"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["result"], "1 - e1 e2 e3 e4");
    assert_eq!(v["element"]["n"], 4);
}

#[test]
fn unknown_subcommand_exits_two() {
    let out = Command::new(env!("CARGO_BIN_EXE_qtoolkit")).arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_INVALID));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("Usage:"));
    assert_eq!(error_kind(&err), "invalid_arguments");
    assert!(out.stdout.is_empty());
}

#[test]
fn validation_errors_exit_two() {
    let (code, _, err) = call(&["statmech", "sweep", "--eps", "-1", "--stat", "bose", "--beta", "1"]);
    assert_eq!(code, EXIT_INVALID);
    assert_eq!(error_kind(&err), "invalid");
    let (code, _, err) = call(&["statmech", "gibbs", "--hamiltonian", r#"{"kind":"diagonal","eps":[0],"extra":1}"#, "--beta", "1"]);
    assert_eq!(code, EXIT_INVALID);
    assert_eq!(error_kind(&err), "parse");
    let (code, _, _) = call(&["decohere", "--family", "spiral"]);
    assert_eq!(code, EXIT_INVALID);
}

#[test]
fn tolerance_failure_exits_three() {
    let (code, out, err) = call(&["weyl", "check", "--alpha", "3,2", "--beta", "1,-4", "--cutoff", "10"]);
    assert_eq!(code, EXIT_NUMERICAL);
    assert!(out.is_empty());
    assert_eq!(error_kind(&err), "tolerance");
    let (code, out, _) = call(&["weyl", "check", "--alpha", "0.3,0.2", "--beta", "0.1,-0.4"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["defect"].as_f64().unwrap() <= v["tol"].as_f64().unwrap());
}

#[test]
fn overflow_is_never_serialised() {
    let (code, out, err) = call(&["fock", "spectrum", "--stat", "fermi", "--eps", "1e308,1e308"]);
    assert_eq!(code, EXIT_NUMERICAL);
    assert!(out.is_empty());
    assert_eq!(error_kind(&err), "non_finite");
}

#[test]
fn decohere_table_and_determinism() {
    let args = ["decohere", "--family", "gap", "--alpha", "0.2,0.1", "--trials", "3000", "--seed", "7", "--out", "csv"];
    let (code, first, err) = call(&args);
    assert_eq!(code, EXIT_OK);
    assert!(err.contains("\"trials\":3000"));
    let (header, rows) = csv_rows(&first);
    assert_eq!(header, ["alpha", "offdiag", "stderr"]);
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r[2] > 0.0));
    for threads in ["1", "3"] {
        let mut a = args.to_vec();
        a.extend(["--threads", threads]);
        assert_eq!(call(&a).1, first);
    }
    let (_, other, _) = call(&["decohere", "--family", "gap", "--alpha", "0.2,0.1", "--trials", "3000", "--seed", "8"]);
    assert_ne!(other, first);
}

#[test]
fn green_table() {
    let (code, out, err) = call(&["lfunc", "green", "--n", "0.5", "--eps", "1", "--window", "2", "--dt", "0.5"]);
    assert_eq!(code, EXIT_OK);
    assert!(err.contains("tail_bound"));
    let (header, rows) = csv_rows(&out);
    assert_eq!(header, ["tau", "re", "im"]);
    assert_eq!(rows.len(), 4);
    for r in rows {
        // ħ(n + 1) e^{−iετ}
        assert!((r[1] - 1.5 * r[0].cos()).abs() < 1e-12);
        assert!((r[2] + 1.5 * r[0].sin()).abs() < 1e-12);
    }
    let (code, _, err) = call(&["lfunc", "pole", "--eps", "1", "--window", "10", "--dt", "0.1", "--resolution", "0.05"]);
    assert_eq!(code, EXIT_INVALID);
    assert_eq!(error_kind(&err), "window_too_short");
}

#[test]
fn output_to_file() {
    let path = std::env::temp_dir().join(format!("qtoolkit-cli-{}.json", std::process::id()));
    let p = path.to_str().unwrap();
    let (code, out, _) = call(&["fock", "ccr", "--cutoffs", "3,3", "--out", p]);
    assert_eq!(code, EXIT_OK);
    assert!(out.is_empty());
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    std::fs::remove_file(&path).unwrap();
    assert!(v["safe"].as_f64().unwrap() < 1e-12);
    assert!((v["unrestricted"].as_f64().unwrap() - 4.0).abs() < 1e-12);
}

#[test]
fn gns_and_propagator_records() {
    let state = r#"{"rows":2,"cols":2,"data":[[0.75,0],[0,0],[0,0],[0.25,0]]}"#;
    let (code, out, _) = call(&["gns", "construct", "--state", state]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["carrier_dim"], 4);
    let pure = r#"{"rows":2,"cols":2,"data":[[1,0],[0,0],[0,0],[0,0]]}"#;
    let (_, out, _) = call(&["gns", "construct", "--state", pure]);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["carrier_dim"], 2);
    let (code, out, _) = call(&["evolve", "propagate", "--hamiltonian", r#"{"kind":"two_level","eps":1,"delta":0.5}"#, "--t", "1"]);
    assert_eq!(code, EXIT_OK);
    let v: serde_json::Value = serde_json::from_str(&out).unwrap();
    assert!(v["unitarity_defect"].as_f64().unwrap() < 1e-12);
}

#[test]
fn poisson_table_header() {
    let (code, out, _) = call(&["fock", "poisson", "--cutoffs", "8", "--f", "0.5", "--format", "csv"]);
    assert_eq!(code, EXIT_OK);
    assert!(out.starts_with("mode,defect,bound\n"));
}

#[test]
fn help_and_version_succeed() {
    let (code, out, _) = call(&["--help"]);
    assert_eq!(code, EXIT_OK);
    for sub in ["fock", "weyl", "grassmann", "evolve", "decohere", "lfunc", "statmech", "gns"] {
        assert!(out.contains(sub), "{sub}");
    }
    assert_eq!(call(&["--version"]).0, EXIT_OK);
}
