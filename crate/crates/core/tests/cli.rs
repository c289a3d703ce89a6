//! End-to-end runs of the command-line binary.

use std::path::Path;
use std::process::Command;

const BIN: &str = env!("CARGO_BIN_EXE_sparse-kma");

fn run(dir: &Path, args: &[&str]) -> (i32, String) {
    let out = Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("SPARSE_KMA_OUT")
        .env("RUST_LOG", "error")
        .output()
        .unwrap();
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr))
}

fn simulate(dir: &Path, scenario: &str) {
    let (code, msg) = run(dir, &["simulate", "--scenario", scenario, "--n-per-class", "8", "--seed", "7", "--out", "d"]);
    assert_eq!(code, 0, "{msg}");
}

#[test]
fn simulate_writes_data_truth_and_manifest() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), "sim1");
    for f in ["curves.csv", "truth.csv", "manifest.json", "timing.json"] {
        assert!(t.path().join("d").join(f).exists(), "{f}");
    }
    let truth = std::fs::read_to_string(t.path().join("d/truth.csv")).unwrap();
    assert!(truth.starts_with("curve_id,true_label,true_a,true_b\n"));
    assert_eq!(truth.lines().count(), 17);
}

#[test]
fn unknown_scenario_is_a_usage_error() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run(t.path(), &["simulate", "--scenario", "sim3"]).0, 2);
}

#[test]
fn fit_then_eval() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), "sim1");
    let (code, msg) = run(t.path(), &["fit", "d/curves.csv", "--k", "2", "--m", "0.4", "--max-iter", "8", "--out", "f"]);
    assert_eq!(code, 0, "{msg}");
    for f in ["fit.json", "warps.csv", "labels.csv", "weight.csv", "templates.csv", "aligned.csv", "history.csv", "manifest.json"] {
        assert!(t.path().join("f").join(f).exists(), "{f}");
    }
    let doc: serde_json::Value = serde_json::from_slice(&std::fs::read(t.path().join("f/fit.json")).unwrap()).unwrap();
    assert_eq!(doc["schema"], "sparse-kma/v1");
    assert_eq!(doc["curves"].as_array().unwrap().len(), 16);
    let (code, msg) = run(t.path(), &["eval", "--labels", "f/labels.csv", "--truth", "d/truth.csv"]);
    assert_eq!(code, 0, "{msg}");
    let rate: f64 = msg.trim().strip_prefix("misclassification ").unwrap().parse().unwrap();
    assert!((0.0..=0.5).contains(&rate));
}

#[test]
fn sparse_single_cluster_is_rejected() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), "sim1");
    let (code, msg) = run(t.path(), &["fit", "d/curves.csv", "--mode", "sparse", "--k", "1", "--out", "f"]);
    assert_eq!(code, 2);
    assert!(msg.contains("K >= 2"), "{msg}");
}

#[test]
fn missing_input_is_a_data_error() {
    let t = tempfile::tempdir().unwrap();
    assert_eq!(run(t.path(), &["fit", "nope.csv"]).0, 3);
}

#[test]
fn h1_fit_on_multidimensional_csv() {
    let t = tempfile::tempdir().unwrap();
    let mut csv = String::from("curve_id,dim,x,value\n");
    for i in 0..8 {
        let f = if i % 2 == 0 { 2.0 } else { 5.0 };
        for j in 0..50 {
            let x = j as f64 / 49.0;
            csv += &format!("c{i},0,{x},{}\n", (f * x).sin() * (1.0 + 0.1 * i as f64));
            csv += &format!("c{i},1,{x},{}\n", (f * x).cos());
        }
    }
    std::fs::write(t.path().join("multi.csv"), csv).unwrap();
    let (code, msg) = run(t.path(), &["fit", "multi.csv", "--metric", "h1", "--m", "0.3", "--resolution", "50", "--max-iter", "6", "--out", "f"]);
    assert_eq!(code, 0, "{msg}");
    let templates = std::fs::read_to_string(t.path().join("f/templates.csv")).unwrap();
    assert!(templates.lines().any(|l| l.starts_with("1,1,")));
}

#[test]
fn tune_rejects_reversed_range_and_writes_diagnostics() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), "sim2");
    assert_eq!(run(t.path(), &["tune", "d/curves.csv", "--k-range", "4..2"]).0, 2);
    let (code, msg) = run(t.path(), &["tune", "d/curves.csv", "--k-range", "2..3", "--max-iter", "4", "--out", "tn"]);
    assert_eq!(code, 0, "{msg}");
    let tests = std::fs::read_to_string(t.path().join("tn/rank_tests.csv")).unwrap();
    assert!(tests.starts_with("k_from,k_to,median_from,median_to,u,z,p_value\n2,3,"));
    let diag = std::fs::read_to_string(t.path().join("tn/diagnostics.csv")).unwrap();
    assert_eq!(diag.lines().count(), 1 + 2 * 16);
}

#[test]
fn benchmark_single_run_has_empty_sd_and_paired_digests() {
    let t = tempfile::tempdir().unwrap();
    let (code, msg) = run(
        t.path(),
        &["benchmark", "--scenario", "sim1", "--n-per-class", "6", "--runs", "1", "--modes", "sparse,kma", "--max-iter", "4", "--jobs", "1", "--out", "b"],
    );
    assert_eq!(code, 0, "{msg}");
    let summary = std::fs::read_to_string(t.path().join("b/summary.csv")).unwrap();
    let rows: Vec<&str> = summary.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    for r in rows {
        assert_eq!(r.split(',').nth(4), Some(""), "{r}");
    }
    let runs = std::fs::read_to_string(t.path().join("b/runs.csv")).unwrap();
    let digests: Vec<&str> = runs.lines().skip(1).map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(digests[0], digests[1]);
}

#[test]
fn config_file_with_flag_override() {
    let t = tempfile::tempdir().unwrap();
    simulate(t.path(), "sim1");
    std::fs::write(t.path().join("c.toml"), "[engine]\nk = 3\nmode = \"kma\"\nmax_iter = 3\n").unwrap();
    let (code, msg) = run(t.path(), &["fit", "d/curves.csv", "--config", "c.toml", "--k", "2", "--out", "f"]);
    assert_eq!(code, 0, "{msg}");
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(t.path().join("f/manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["k"], 2);
    assert_eq!(manifest["config"]["mode"], "kma");
    assert_eq!(manifest["config"]["max_iter"], 3);
}

#[test]
fn output_directory_from_environment() {
    let t = tempfile::tempdir().unwrap();
    let out = Command::new(BIN)
        .args(["simulate", "--n-per-class", "3"])
        .current_dir(t.path())
        .env("SPARSE_KMA_OUT", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(t.path().join("from_env/curves.csv").exists());
}

#[test]
fn help_per_subcommand() {
    let t = tempfile::tempdir().unwrap();
    for sub in ["simulate", "fit", "tune", "benchmark", "eval"] {
        let (code, msg) = run(t.path(), &[sub, "--help"]);
        assert_eq!(code, 0);
        assert!(msg.contains("Usage"), "{msg}");
    }
}
