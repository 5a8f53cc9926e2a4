//! End-to-end checks of the command-line front end: exit codes, report
//! contents, artifact files, and the seed override. Each test drives the
//! compiled binary the way a shell user would.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn netsync(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_netsync"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn stderr_text(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}

/// Triangle v1 -> v2 -> v3 with the chord v1 -> v3.
const TRIANGLE: &str = r#"{
    "vertices": ["v1", "v2", "v3"],
    "edges": [
        {"id": "e1", "source": "v1", "target": "v2"},
        {"id": "e2", "source": "v2", "target": "v3"},
        {"id": "e3", "source": "v1", "target": "v3"}
    ]
}"#;

fn path_graph(n: usize) -> String {
    let vertices: Vec<String> = (1..=n).map(|i| format!("\"v{i}\"")).collect();
    let edges: Vec<String> = (1..n)
        .map(|i| {
            format!(
                "{{\"id\": \"e{i}\", \"source\": \"v{i}\", \"target\": \"v{}\"}}",
                i + 1
            )
        })
        .collect();
    format!(
        "{{\"vertices\": [{}], \"edges\": [{}]}}",
        vertices.join(", "),
        edges.join(", ")
    )
}

#[test]
fn analyze_reports_graph_invariants() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "triangle.json", TRIANGLE);
    let out = netsync(&["analyze", "triangle.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_text(&out));
    let report = stdout_json(&out);
    assert_eq!(report["vertices"], 3);
    assert_eq!(report["edges"], 3);
    assert_eq!(report["cycle_rank"], 1);
    assert_eq!(report["connected"], true);
    assert_eq!(report["spanning_trees"], 3.0);

    // Complete graph on four vertices counts 4^2 = 16 trees.
    let k4 = r#"{
        "vertices": ["a", "b", "c", "d"],
        "edges": [
            {"id": "ab", "source": "a", "target": "b"},
            {"id": "ac", "source": "a", "target": "c"},
            {"id": "ad", "source": "a", "target": "d"},
            {"id": "bc", "source": "b", "target": "c"},
            {"id": "bd", "source": "b", "target": "d"},
            {"id": "cd", "source": "c", "target": "d"}
        ]
    }"#;
    write(dir.path(), "k4.json", k4);
    let out = netsync(&["analyze", "k4.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout_json(&out)["spanning_trees"], 16.0);
}

#[test]
fn analyze_handles_disconnected_graphs_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let split = r#"{
        "vertices": ["a", "b", "c", "d"],
        "edges": [
            {"id": "e1", "source": "a", "target": "b"},
            {"id": "e2", "source": "c", "target": "d"}
        ]
    }"#;
    write(dir.path(), "split.json", split);
    let out = netsync(&["analyze", "split.json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report = stdout_json(&out);
    assert_eq!(report["connected"], false);
    assert_eq!(report["components"], 2);
    assert_eq!(report["spanning_trees"], 0.0);
    assert!(report["jacobi"].is_null());
}

#[test]
fn estimate_direct_matches_the_projection_and_jacobi_follows() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.json", TRIANGLE);
    write(
        dir.path(),
        "m.json",
        r#"{"edges": {"e1": 1.0, "e2": 1.0, "e3": 1.0}}"#,
    );
    let direct = netsync(
        &["estimate", "g.json", "m.json", "--space", "real", "--method", "direct"],
        dir.path(),
    );
    assert_eq!(direct.status.code(), Some(0), "stderr: {}", stderr_text(&direct));
    let report = stdout_json(&direct);
    let est = &report["estimates"];
    assert!(est["v1"].as_f64().unwrap().abs() < 1e-12);
    assert!((est["v2"].as_f64().unwrap() - 2.0 / 3.0).abs() < 1e-12);
    assert!((est["v3"].as_f64().unwrap() - 4.0 / 3.0).abs() < 1e-12);
    assert!(report["max_current_residual"].as_f64().unwrap() < 1e-9);

    let jacobi = netsync(
        &[
            "estimate", "g.json", "m.json", "--space", "real", "--method", "jacobi",
            "--tol", "1e-12",
        ],
        dir.path(),
    );
    assert_eq!(jacobi.status.code(), Some(0), "stderr: {}", stderr_text(&jacobi));
    let jreport = stdout_json(&jacobi);
    assert_eq!(jreport["converged"], true);
    for v in ["v1", "v2", "v3"] {
        let a = est[v].as_f64().unwrap();
        let b = jreport["estimates"][v].as_f64().unwrap();
        assert!((a - b).abs() < 1e-8, "{v}: direct {a} vs jacobi {b}");
    }
}

#[test]
fn estimate_writes_the_report_to_the_out_file() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.json", TRIANGLE);
    write(
        dir.path(),
        "m.json",
        r#"{"edges": {"e1": 1.0, "e2": 1.0, "e3": 1.0}}"#,
    );
    let out = netsync(
        &[
            "estimate", "g.json", "m.json", "--space", "real", "--method", "direct",
            "--out", "report.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    assert!(out.stdout.is_empty(), "report should go to the file, not stdout");
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let report: Value = serde_json::from_str(&text).unwrap();
    assert!(report["estimates"].is_object());
}

#[test]
fn circle_zero_noise_round_trip_reports_zero_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.json", TRIANGLE);
    // Cycle-consistent angles from the truth (0, 0.7, 1.1).
    write(
        dir.path(),
        "m.json",
        r#"{"edges": {"e1": 0.7, "e2": 0.4, "e3": 1.1}}"#,
    );
    write(
        dir.path(),
        "truth.json",
        r#"{"vertices": {"v1": 0.0, "v2": 0.7, "v3": 1.1}}"#,
    );
    for method in ["eigen", "hybrid"] {
        let out = netsync(
            &[
                "estimate", "g.json", "m.json", "--space", "circle", "--method", method,
                "--kappa", "2.0", "--truth", "truth.json",
            ],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(0), "{method} stderr: {}", stderr_text(&out));
        let report = stdout_json(&out);
        assert!(
            report["circular_error"].as_f64().unwrap() < 1e-9,
            "{method} should recover consistent data exactly"
        );
        let est = &report["estimates"];
        assert!(est["v1"].as_f64().unwrap().abs() < 1e-9);
        assert!((est["v2"].as_f64().unwrap() - 0.7).abs() < 1e-6);
        assert!((est["v3"].as_f64().unwrap() - 1.1).abs() < 1e-6);
    }
}

#[test]
fn incompatible_method_and_space_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.json", TRIANGLE);
    write(dir.path(), "m.json", r#"{"edges": {"e1": 1.0, "e2": 1.0, "e3": 1.0}}"#);
    for (space, method) in [("circle", "direct"), ("real", "hybrid"), ("product", "eigen")] {
        let out = netsync(
            &["estimate", "g.json", "m.json", "--space", space, "--method", method],
            dir.path(),
        );
        assert_eq!(out.status.code(), Some(1), "{space}/{method}");
        let err = stderr_text(&out);
        assert!(err.starts_with("netsync: "), "diagnostic line: {err}");
        assert_eq!(err.trim_end().lines().count(), 1, "one-line diagnostic: {err}");
    }
}

#[test]
fn bad_inputs_exit_one_without_a_panic_trace() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.json", TRIANGLE);

    let missing = netsync(&["analyze", "nope.json"], dir.path());
    assert_eq!(missing.status.code(), Some(1));
    assert!(!stderr_text(&missing).contains("panicked"));
    assert_eq!(stderr_text(&missing).trim_end().lines().count(), 1);

    let bad_flag = netsync(&["analyze", "g.json", "--no-such-flag"], dir.path());
    assert_eq!(bad_flag.status.code(), Some(1));
    assert!(!stderr_text(&bad_flag).contains("panicked"));

    let help = netsync(&["--help"], dir.path());
    assert_eq!(help.status.code(), Some(0));
}

#[test]
fn non_convergence_exits_two_but_still_writes_the_report() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "g.json", TRIANGLE);
    write(dir.path(), "m.json", r#"{"edges": {"e1": 1.0, "e2": 1.0, "e3": 1.0}}"#);
    let out = netsync(
        &[
            "estimate", "g.json", "m.json", "--space", "real", "--method", "jacobi",
            "--tol", "1e-14", "--max-iter", "1", "--out", "report.json",
        ],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_text(&out);
    assert!(err.starts_with("netsync: "), "diagnostic line: {err}");
    let text = std::fs::read_to_string(dir.path().join("report.json")).unwrap();
    let report: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(report["converged"], false);
    assert!(report["estimates"].is_object());
}

#[test]
fn simulate_shipped_ring_config_has_the_contracted_shape() {
    let dir = tempfile::tempdir().unwrap();
    let config = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/ring5.json");
    let out = netsync(
        &["simulate", config.to_str().unwrap(), "--out", "results"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_text(&out));

    let summary = std::fs::read_to_string(dir.path().join("results/summary.csv")).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("sweep,estimator,mean_metric,trials,converged"));
    // One row per (sweep value, estimator): 6 x 4.
    assert_eq!(lines.count(), 24);

    let records = std::fs::read_to_string(dir.path().join("results/records.csv")).unwrap();
    let mut lines = records.lines();
    assert_eq!(
        lines.next(),
        Some("sweep,estimator,trial,metric,rounds,converged,messages")
    );
    assert_eq!(lines.count(), 6 * 4 * 400);

    let fisher = std::fs::read_to_string(dir.path().join("results/fisher.csv")).unwrap();
    assert_eq!(fisher.lines().next(), Some("sweep,trace_inv_fisher"));
    assert_eq!(fisher.lines().count(), 1 + 6);
}

#[test]
fn env_seed_overrides_the_config_seed() {
    let dir = tempfile::tempdir().unwrap();
    write(
        dir.path(),
        "config.json",
        r#"{
            "graph": {"kind": "ring", "n": 5},
            "space": {"kind": "circle"},
            "sweep": [2.0],
            "estimators": ["local_Q"],
            "trials": 5,
            "seed": 7
        }"#,
    );
    let run = |out_dir: &str, seed: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_netsync"));
        cmd.args(["simulate", "config.json", "--out", out_dir]).current_dir(dir.path());
        match seed {
            Some(s) => cmd.env("NETSYNC_SEED", s),
            None => cmd.env_remove("NETSYNC_SEED"),
        };
        assert!(cmd.status().unwrap().success());
        std::fs::read(dir.path().join(out_dir).join("records.csv")).unwrap()
    };
    let base = run("a", None);
    let overridden = run("b", Some("12345"));
    let repeated = run("c", Some("12345"));
    assert_ne!(base, overridden, "env seed must change the draw");
    assert_eq!(overridden, repeated, "env seed must stay deterministic");
}

#[test]
fn design_ranks_the_ring_closure_first_from_the_command_line() {
    let dir = tempfile::tempdir().unwrap();
    write(dir.path(), "path5.json", &path_graph(5));
    let out = netsync(&["design", "path5.json"], dir.path());
    assert_eq!(out.status.code(), Some(0), "stderr: {}", stderr_text(&out));
    let table = String::from_utf8_lossy(&out.stdout).into_owned();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("source,target,tree_count,det_fisher,rank"));
    let first = lines.next().unwrap();
    let fields: Vec<&str> = first.split(',').collect();
    // Closing the ring spans the longest cycle: five trees, rank one.
    assert_eq!((fields[0], fields[1]), ("v1", "v5"));
    assert_eq!(fields[4], "1");
    assert!((fields[2].parse::<f64>().unwrap() - 5.0).abs() < 1e-9);
}
