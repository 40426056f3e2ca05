//! End-to-end tests of the `contrakt` binary: exit codes, JSON output,
//! artifact layout, and byte-for-byte reproducibility.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_contrakt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn write(dir: &Path, name: &str, content: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, content).expect("write fixture");
    path
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "stdout is not JSON ({e}): {}",
            String::from_utf8_lossy(&out.stdout)
        )
    })
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

/// Complete graph on two nodes, system configs, and starts shared by the
/// tests below.
fn averaging_k2() -> &'static str {
    r#"{"model":"affine_averaging","graph":{"n":2,"directed":false,"edges":[[0,1,1.0]]},"params":{"b":[0.0,0.0]}}"#
}

#[test]
fn measure_reports_zero_for_a_laplacian_negation_and_agrees_with_the_oracle() {
    let dir = tempfile::tempdir().unwrap();
    // Negated Laplacian of the complete graph on three nodes: every
    // absolute row sum equals the diagonal, so the ∞-measure is 0.
    let m = write(
        dir.path(),
        "neg_l.json",
        "[[-2.0,1.0,1.0],[1.0,-2.0,1.0],[1.0,1.0,-2.0]]",
    );
    let out = run(&["measure", "--matrix", m.to_str().unwrap(), "-p", "inf", "--oracle"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["value"], json!(0.0));
    assert_eq!(doc["result"]["p"], json!("inf"));
    let gap = doc["result"]["oracle_gap"].as_f64().unwrap();
    assert!(gap <= 1e-8, "oracle gap {gap}");
    // The manifest echoes the resolved configuration.
    assert_eq!(doc["manifest"]["command"], json!("measure"));
    assert_eq!(doc["manifest"]["params"]["oracle"], json!(true));
}

#[test]
fn missing_input_file_exits_2_with_a_single_line_diagnostic() {
    let out = run(&["measure", "--matrix", "/nonexistent/m.json"]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
    assert!(err.contains("/nonexistent/m.json"), "stderr: {err}");
}

#[test]
fn refuted_semi_certificate_exits_1_with_a_witness() {
    let dir = tempfile::tempdir().unwrap();
    // The rotation-like toy is weakly but not strictly contracting in the
    // plain 2-norm, so a strict certificate must be refuted.
    let sys = write(dir.path(), "sys.json", r#"{"model":"weak_only","params":{}}"#);
    let out = run(&[
        "certify",
        "--system",
        sys.to_str().unwrap(),
        "--kind",
        "semi",
        "-p",
        "2",
        "--box-lo=-1,-1",
        "--box-hi=1,1",
    ]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["status"], json!("refuted"));
    assert!(doc["result"]["witness"]["x"].is_array());
    // The same setup as a weak certificate passes with exit 0.
    let out = run(&[
        "certify",
        "--system",
        sys.to_str().unwrap(),
        "--kind",
        "weak",
        "-p",
        "2",
        "--box-lo=-1,-1",
        "--box-hi=1,1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["status"], json!("certified_on_samples"));
}

#[test]
fn sync_below_threshold_exits_1_and_reports_the_witness() {
    let dir = tempfile::tempdir().unwrap();
    // Oscillator with expansion β = 1 at the origin: the worst sampled
    // 2-measure is 1, so λ₂ = 0.5 leaves a negative margin.
    let sys = write(
        dir.path(),
        "hopf.json",
        r#"{"model":"andronov_hopf","params":{"omega":2.0,"beta":1.0}}"#,
    );
    let out = run(&[
        "sync",
        "--internal",
        sys.to_str().unwrap(),
        "--lambda2",
        "0.5",
        "-p",
        "2",
        "--box-lo=-1,-1",
        "--box-hi=1,1",
    ]);
    assert_eq!(code(&out), 1, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["status"], json!("refuted"));
    let rate = doc["result"]["rate_c"].as_f64().unwrap();
    assert!((rate + 0.5).abs() <= 1e-9, "margin {rate}");
    let witness_value = doc["result"]["witness"]["value"].as_f64().unwrap();
    assert!((witness_value - 1.0).abs() <= 1e-9, "witness {witness_value}");

    // Raising the connectivity above the worst measure flips the verdict.
    let out = run(&[
        "sync",
        "--internal",
        sys.to_str().unwrap(),
        "--lambda2",
        "3.0",
        "-p",
        "2",
        "--box-lo=-1,-1",
        "--box-hi=1,1",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn simulate_is_byte_identical_across_runs_threads_and_config_replay() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write(dir.path(), "sys.json", averaging_k2());
    let x0 = write(dir.path(), "x0.json", "[3.0,1.0]");
    let out_a = dir.path().join("a.csv");
    let out_b = dir.path().join("b.csv");
    let out_c = dir.path().join("c.csv");

    let base = |out: &Path| -> Vec<String> {
        [
            "simulate",
            "--system",
            sys.to_str().unwrap(),
            "--x0",
            x0.to_str().unwrap(),
            "--t-final",
            "5",
            "--out",
            out.to_str().unwrap(),
            "--emit-gnuplot",
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    };

    let ra = bin().args(base(&out_a)).output().unwrap();
    assert_eq!(code(&ra), 0, "{}", String::from_utf8_lossy(&ra.stderr));
    let rb = bin().args(base(&out_b)).output().unwrap();
    assert_eq!(code(&rb), 0);
    let bytes_a = std::fs::read(&out_a).unwrap();
    let bytes_b = std::fs::read(&out_b).unwrap();
    assert_eq!(bytes_a, bytes_b, "same run, different bytes");

    // A capped worker pool must not change the output.
    let rc = bin()
        .args(base(&out_c))
        .env("CONTRAKT_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(code(&rc), 0);
    assert_eq!(bytes_a, std::fs::read(&out_c).unwrap());

    // The CSV has the documented header and the artifacts exist.
    let text = String::from_utf8(bytes_a).unwrap();
    assert!(text.starts_with("t,x_0,x_1\n"), "header: {}", &text[..20]);
    assert!(out_a.with_extension("gp").exists());

    // Replaying the emitted manifest reproduces the CSV byte for byte.
    let manifest = dir.path().join("a.csv.manifest.json");
    assert!(manifest.exists());
    std::fs::remove_file(&out_a).unwrap();
    let replay = run(&["run", "--config", manifest.to_str().unwrap()]);
    assert_eq!(code(&replay), 0, "{}", String::from_utf8_lossy(&replay.stderr));
    assert_eq!(std::fs::read(&out_a).unwrap(), bytes_b);
}

#[test]
fn verify_rate_recovers_the_consensus_rate_of_the_two_node_graph() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write(dir.path(), "sys.json", averaging_k2());
    let x0 = write(dir.path(), "x0.json", "[3.0,1.0]");
    let out = run(&[
        "verify",
        "--kind",
        "rate",
        "--system",
        sys.to_str().unwrap(),
        "--x0",
        x0.to_str().unwrap(),
        "--t-final",
        "8",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    let fitted = doc["result"]["fit"]["rate"].as_f64().unwrap();
    assert!((fitted - 2.0).abs() <= 0.2, "fitted {fitted}");
    assert_eq!(doc["result"]["rate_matches"], json!(true));

    // Demanding an unrelated rate refutes the run with exit 1.
    let out = run(&[
        "verify",
        "--kind",
        "rate",
        "--system",
        sys.to_str().unwrap(),
        "--x0",
        x0.to_str().unwrap(),
        "--t-final",
        "8",
        "--expected",
        "10.0",
    ]);
    assert_eq!(code(&out), 1);
    let doc = stdout_json(&out);
    assert_eq!(doc["result"]["rate_matches"], json!(false));
}

#[test]
fn report_bundles_a_joint_certificate_with_a_matching_rate_fit() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = write(
        dir.path(),
        "scenario.json",
        r#"{
  "system": {
    "model": "affine_averaging",
    "graph": {"n": 3, "directed": false, "edges": [[0,1,1.0],[0,2,1.0],[1,2,1.0]]},
    "params": {"b": [1.0, -2.0, 1.0]}
  },
  "x0": [2.0, -1.0, 0.5],
  "t_final": 8.0
}"#,
    );
    let rpt = dir.path().join("rpt");
    let out = run(&[
        "report",
        "--scenario",
        scenario.to_str().unwrap(),
        "--out-dir",
        rpt.to_str().unwrap(),
        "--emit-gnuplot",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = stdout_json(&out);
    let cert = &doc["result"]["certificate"];
    assert_eq!(cert["kind"], json!("doubly_contracting"));
    assert_eq!(cert["status"], json!("certified_on_samples"));
    // Complete three-node graph: both convergence-rate candidates equal
    // the algebraic connectivity 3.
    let rate = cert["rate_c"].as_f64().unwrap();
    assert!((rate - 3.0).abs() <= 1e-9, "certificate rate {rate}");
    let fitted = doc["result"]["fit"]["rate"].as_f64().unwrap();
    assert!((fitted - 3.0).abs() <= 0.3, "fitted rate {fitted}");
    assert_eq!(doc["result"]["rate_matches"], json!(true));

    for artifact in ["report.json", "manifest.json", "traj.csv", "metric.csv", "traj.gp", "metric.gp"] {
        assert!(rpt.join(artifact).exists(), "missing {artifact}");
    }
    // The bundled report file matches what was printed.
    assert_eq!(
        std::fs::read(rpt.join("report.json")).unwrap(),
        out.stdout
    );
}

#[test]
fn config_file_runs_match_flag_runs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let sys = write(dir.path(), "sys.json", averaging_k2());
    let flags = run(&[
        "certify",
        "--system",
        sys.to_str().unwrap(),
        "--kind",
        "doubly",
        "-p",
        "inf",
        "--box-lo=-2,-2",
        "--box-hi=2,2",
    ]);
    assert_eq!(code(&flags), 0, "{}", String::from_utf8_lossy(&flags.stderr));

    // The same configuration written by hand, mirroring the manifest.
    let config = write(
        dir.path(),
        "cfg.json",
        &serde_json::to_string_pretty(&json!({
            "command": "certify",
            "inputs": {"system": sys.to_str().unwrap()},
            "params": {
                "kind": "doubly",
                "p": "inf",
                "epsilon": 1e-6,
                "box_lo": [-2.0, -2.0],
                "box_hi": [2.0, 2.0]
            },
            "seed": 1_592_642_302_u64
        }))
        .unwrap(),
    );
    let cfg_run = run(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&cfg_run), 0, "{}", String::from_utf8_lossy(&cfg_run.stderr));
    assert_eq!(flags.stdout, cfg_run.stdout);
}

#[test]
fn unknown_keys_are_rejected_at_both_config_levels() {
    let dir = tempfile::tempdir().unwrap();
    let m = write(dir.path(), "m.json", "[[1.0]]");

    // Unknown top-level field.
    let bad_top = write(
        dir.path(),
        "bad_top.json",
        &format!(
            r#"{{"command":"measure","inputs":{{"matrix":{:?}}},"bogus":1}}"#,
            m.to_str().unwrap()
        ),
    );
    let out = run(&["run", "--config", bad_top.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("bogus"));

    // Unknown parameter inside a known command.
    let bad_param = write(
        dir.path(),
        "bad_param.json",
        &format!(
            r#"{{"command":"measure","inputs":{{"matrix":{:?}}},"params":{{"p":"2","typo":1}}}}"#,
            m.to_str().unwrap()
        ),
    );
    let out = run(&["run", "--config", bad_param.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("typo"), "stderr: {err}");
    assert_eq!(err.lines().count(), 1, "stderr: {err}");
}

#[test]
fn invalid_thread_cap_is_rejected_before_any_work() {
    let out = bin()
        .args(["measure", "--matrix", "irrelevant.json"])
        .env("CONTRAKT_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("CONTRAKT_THREADS"));
}
