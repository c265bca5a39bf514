// Runs the `mmtfl` binary end to end.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mmtfl::io::read_matrix_csv;
use tempfile::TempDir;

fn mmtfl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmtfl"))
        .args(args)
        .env_remove("MMTFL_SEED")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().expect("utf-8 path")
}

fn generate_small(dir: &Path, seed: &str) {
    let out = mmtfl(&["generate", "--pattern", "d1", "--tasks", "3", "--n", "30", "--d", "10", "--seed", seed, "--out", s(dir)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    files.sort();
    files
}

#[test]
fn generate_is_deterministic_in_the_seed() {
    let tmp = TempDir::new().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    generate_small(&a, "5");
    generate_small(&b, "5");
    generate_small(&c, "6");
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    assert_ne!(dir_bytes(&a), dir_bytes(&c));
}

#[test]
fn seed_falls_back_to_the_environment() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    generate_small(&a, "9");
    let out = Command::new(env!("CARGO_BIN_EXE_mmtfl"))
        .args(["generate", "--pattern", "d1", "--tasks", "3", "--n", "30", "--d", "10", "--out", s(&b)])
        .env("MMTFL_SEED", "9")
        .output()
        .unwrap();
    assert_eq!(code(&out), 0);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
}

#[test]
fn non_empty_output_needs_force() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path().join("data");
    generate_small(&dir, "1");
    let args = ["generate", "--pattern", "d1", "--tasks", "3", "--n", "30", "--d", "10", "--out", s(&dir)];
    assert_eq!(code(&mmtfl(&args)), 1);
    let mut forced = args.to_vec();
    forced.push("--force");
    assert_eq!(code(&mmtfl(&forced)), 0);
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&mmtfl(&["no-such-command"])), 1);
    assert_eq!(code(&mmtfl(&["generate", "--pattern", "d3", "--out", s(&tmp.path().join("x"))])), 1);

    let missing = tmp.path().join("missing");
    assert_eq!(code(&mmtfl(&["fit", "--data", s(&missing), "--out", s(&tmp.path().join("fit"))])), 2);

    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"modle": {}}"#).unwrap();
    let data = tmp.path().join("data");
    generate_small(&data, "1");
    let out = mmtfl(&["fit", "--data", s(&data), "--config", s(&config), "--out", s(&tmp.path().join("fit"))]);
    assert_eq!(code(&out), 1);

    fs::write(data.join("task_01.csv"), "feature_1,target\n1,2\n").unwrap();
    let out = mmtfl(&["fit", "--data", s(&data), "--out", s(&tmp.path().join("fit"))]);
    assert_eq!(code(&out), 2);
}

#[test]
fn fit_outputs_satisfy_the_decomposition() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let fit = tmp.path().join("fit");
    generate_small(&data, "2");
    let out = mmtfl(&["fit", "--data", s(&data), "--p", "2", "--k", "1", "--gamma1", "1", "--gamma2", "1", "--out", s(&fit)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let (_, c) = read_matrix_csv(&fit.join("c.csv")).unwrap();
    let (tasks, b) = read_matrix_csv(&fit.join("B.csv")).unwrap();
    let (_, a) = read_matrix_csv(&fit.join("A.csv")).unwrap();
    assert_eq!(tasks.len(), 3);
    assert_eq!(a.shape(), (10, 3));
    for j in 0..10 {
        assert!(c[(j, 0)] >= 0.0);
        for t in 0..3 {
            let expected = c[(j, 0)] * b[(j, t)];
            assert!((a[(j, t)] - expected).abs() <= 1e-12 * expected.abs().max(1.0));
        }
    }

    let (_, trace) = read_matrix_csv(&fit.join("trace.csv")).unwrap();
    for i in 1..trace.nrows() {
        let (prev, next) = (trace[(i - 1, 1)], trace[(i, 1)]);
        assert!(next <= prev + 1e-10 * prev.abs().max(1.0), "objective rose at {i}: {prev} -> {next}");
    }
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(fit.join("fit.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
}

#[test]
fn huge_gate_penalty_closes_every_gate() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let fit = tmp.path().join("fit");
    generate_small(&data, "3");
    let out = mmtfl(&["fit", "--data", s(&data), "--gamma1", "1", "--gamma2", "1e8", "--out", s(&fit)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let (_, c) = read_matrix_csv(&fit.join("c.csv")).unwrap();
    assert!(c.iter().all(|&v| v.abs() < 1e-4), "{c}");
}

#[test]
fn heatmap_has_one_row_per_task() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let fit = tmp.path().join("fit");
    let heat = tmp.path().join("heat.csv");
    assert_eq!(code(&mmtfl(&["generate", "--pattern", "d1", "--seed", "4", "--out", s(&data)])), 0);
    assert_eq!(code(&mmtfl(&["fit", "--data", s(&data), "--out", s(&fit)])), 0);
    assert_eq!(code(&mmtfl(&["export-heatmap", "--fit", s(&fit), "--out", s(&heat)])), 0);
    let (header, m) = read_matrix_csv(&heat).unwrap();
    assert_eq!(header.len(), 100);
    assert_eq!(m.shape(), (10, 100));
    assert!(m.iter().all(|&v| v >= 0.0));

    assert_eq!(code(&mmtfl(&["export-heatmap", "--fit", s(&tmp.path().join("none")), "--out", s(&heat)])), 2);
}

#[test]
fn verify_exit_code_reflects_the_exponent() {
    let tmp = TempDir::new().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(&config, r#"{"verify": {"sigma_trials": 20, "oracle_draws": 3, "equivalence_problems": 4}}"#).unwrap();
    let derived = tmp.path().join("derived.json");
    let typeset = tmp.path().join("typeset.json");
    let out = mmtfl(&["verify", "--config", s(&config), "--seed", "1", "--out", s(&derived)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stdout));
    let out = mmtfl(&["verify", "--config", s(&config), "--seed", "1", "--use-paper-exponent", "--out", s(&typeset)]);
    assert_eq!(code(&out), 3);
    let report: serde_json::Value = serde_json::from_slice(&fs::read(&typeset).unwrap()).unwrap();
    assert_eq!(report["passed"], false);
}

#[test]
fn benchmark_writes_csv_and_json_reports() {
    let tmp = TempDir::new().unwrap();
    let data = tmp.path().join("data");
    let report = tmp.path().join("report");
    generate_small(&data, "5");
    let config = tmp.path().join("config.json");
    fs::write(
        &config,
        r#"{"plan": {"train_fractions": [0.5], "repeats": 2, "cv_folds": 2,
            "methods": ["STL", "MMTFL(2,1)"], "gamma_grid": [[1, 1], [10, 10]]}}"#,
    )
    .unwrap();
    let out = mmtfl(&["benchmark", "--data", s(&data), "--config", s(&config), "--seed", "3", "--out", s(&report)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));

    let csv = fs::read_to_string(report.join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("dataset,method,fraction,mean,std"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].contains(",STL,0.5,") && rows[1].contains(",\"MMTFL(2,1)\",0.5,"), "{csv}");
    let json: serde_json::Value = serde_json::from_slice(&fs::read(report.join("report.json")).unwrap()).unwrap();
    assert!(json.is_object());
}
