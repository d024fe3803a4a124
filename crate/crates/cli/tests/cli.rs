use std::fs;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_qsde-cert"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn csv_rows(text: &str) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    assert_eq!(r.headers().unwrap().iter().collect::<Vec<_>>(), ["k", "r", "s", "t", "z_sum", "residual", "mismatch", "bound"]);
    r.records().map(|rec| rec.unwrap().iter().map(String::from).collect()).collect()
}

#[test]
fn kerr_table_default_rows() {
    let o = run(&["kerr-table", "--use-paper-psi"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o));
    let ks: Vec<&str> = rows.iter().map(|r| r[0].as_str()).collect();
    assert_eq!(ks, ["19", "29", "39", "49", "59", "69", "79", "89", "99"]);
    let bounds: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(bounds.windows(2).all(|w| w[1] < w[0]));
    assert!((bounds[0] - 0.2875).abs() < 1e-3, "{}", bounds[0]);
}

#[test]
fn invalid_level_is_usage_error() {
    let o = run(&["kerr-table", "--k", "0"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["kerr-table", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["kerr-table", "--optimize", "--use-paper-psi"]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["ae-table", "--k", "-1", "--intervals", "4"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn optimized_run_is_byte_deterministic() {
    let args = ["kerr-table", "--optimize", "--seed", "7", "--k-list", "4,6", "--max-evals", "300", "--restarts", "0"];
    let a = run(&args);
    let b = run(&args);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    let c = bin().args(args).env("QSDE_THREADS", "1").output().unwrap();
    assert_eq!(a.stdout, c.stdout);
}

#[test]
fn bad_thread_count_is_usage_error() {
    let o = bin().args(["kerr-table", "--k", "3"]).env("QSDE_THREADS", "zero").output().unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn ae_toy_run_decreases_in_k() {
    let dir = tempfile::tempdir().unwrap();
    let approx = dir.path().join("approx.json");
    let start = std::time::Instant::now();
    let o = run(&["ae-table", "--blocks", "1", "--intervals", "10", "--save-approx", approx.to_str().unwrap()]);
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = csv_rows(&stdout(&o));
    assert_eq!(rows.len(), 5);
    let bounds: Vec<f64> = rows.iter().map(|r| r[7].parse().unwrap()).collect();
    assert!(bounds.windows(2).all(|w| w[1] < w[0]), "{bounds:?}");

    // Certifying the saved approximant reproduces the table without optimizing.
    let again = run(&["ae-table", "--intervals", "10", "--approx", approx.to_str().unwrap()]);
    assert!(again.status.success());
    assert_eq!(o.stdout, again.stdout);
}

#[test]
fn json_output_carries_cost() {
    let o = run(&["ae-table", "--intervals", "5", "--k", "1e6", "--format", "json"]);
    assert!(o.status.success());
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let cost = v["cost"].as_f64().unwrap();
    assert!((0.0..0.01).contains(&cost), "{cost}");
    assert_eq!(v["rows"].as_array().unwrap().len(), 1);
}

#[test]
fn verify_quick_passes_and_mutation_fails() {
    let dir = tempfile::tempdir().unwrap();
    let report = dir.path().join("report.json");
    let o = run(&["verify", "--quick", "--out", report.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["passed"], true);

    let o = run(&["verify", "--quick", "--mutate", "flip-drive-coupling"]);
    assert_eq!(o.status.code(), Some(1));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["passed"], false);
    assert!(v["checks"].as_array().unwrap().iter().any(|c| c["passed"] == false));
}

fn kerr_request(extra: &str) -> String {
    format!(
        r#"{{
  "model": {{ "kind": "kerr", "k": 19, "lambda": 25.0, "delta": 50.0, "chi": -0.8333333333333334 }},
  "r": 2,
  "s": 2,
  "f": {{ "breakpoints": [0.0, 5.0], "values": [[[0.1, 0.0]]] }}{extra}
}}"#
    )
}

#[test]
fn bound_request_round_trips_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("req.json");
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    fs::write(&req, kerr_request("")).unwrap();
    let o = run(&["bound", "--request", req.to_str().unwrap(), "--save-request", first.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o2 = run(&["bound", "--request", first.to_str().unwrap(), "--save-request", second.to_str().unwrap()]);
    assert!(o2.status.success());
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    assert_eq!(o.stdout, o2.stdout);
}

#[test]
fn bound_matches_table_path() {
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("req.json");
    let f = r#"{ "breakpoints": [0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0], "values": [[[0.1, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]], [[0.1, 0.0]]] }"#;
    let approx = qsde_cert::scenarios::published_kerr_state(19).unwrap().to_json().unwrap();
    let text = format!(
        r#"{{ "model": {{ "kind": "kerr", "k": 19, "lambda": 25.0, "delta": 50.0, "chi": -0.8333333333333334 }}, "r": 2, "s": 2, "f": {f}, "approx": {approx} }}"#
    );
    fs::write(&req, text).unwrap();
    let o = run(&["bound", "--request", req.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cert: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    let table = run(&["kerr-table", "--k", "19", "--format", "json"]);
    let t: serde_json::Value = serde_json::from_str(&stdout(&table)).unwrap();
    assert_eq!(cert["bound"], t["rows"][0]["bound"]);
}

#[test]
fn zero_coupling_constants_give_zero_z_sum() {
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("req.json");
    let extra = r#",
  "constants": [{ "gamma": 3.0, "q_l": 0.0, "q_a": 1.0, "q_e": 2.0 }],
  "residual": 0.0"#;
    fs::write(&req, kerr_request(extra)).unwrap();
    let o = run(&["bound", "--request", req.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let cert: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(cert["z_sum"].as_f64(), Some(0.0));
    assert_eq!(cert["bound"].as_f64(), Some(0.0));
}

#[test]
fn bound_schema_violations_fail() {
    let dir = tempfile::tempdir().unwrap();
    let req = dir.path().join("req.json");
    fs::write(&req, kerr_request(r#", "surprise": 1"#)).unwrap();
    assert_eq!(run(&["bound", "--request", req.to_str().unwrap()]).status.code(), Some(1));
    let extra = r#", "constants": [{ "gamma": 0.0, "q_l": 1.0, "q_a": 1.0, "q_e": 1.0 }]"#;
    fs::write(&req, kerr_request(extra)).unwrap();
    assert_eq!(run(&["bound", "--request", req.to_str().unwrap()]).status.code(), Some(1));
    let extra = r#", "constants": []"#;
    fs::write(&req, kerr_request(extra)).unwrap();
    assert_eq!(run(&["bound", "--request", req.to_str().unwrap()]).status.code(), Some(1));
}

#[test]
fn optimize_writes_loadable_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("state.json");
    let o = run(&["optimize", "--scenario", "ae", "--intervals", "4", "--out", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let state = qsde_cert::approx::ApproxState::from_json(&fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(state.terms().len(), 5);
    let resumed = dir.path().join("resumed.json");
    let o = run(&["optimize", "--scenario", "ae", "--intervals", "4", "--init", out.to_str().unwrap(), "--out", resumed.to_str().unwrap()]);
    assert!(o.status.success());
}
