use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use alrr::pipeline::{self, RunConfig, RunRecord};

fn alrr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_alrr")).args(args).output().expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn load_record(path: &Path) -> RunRecord {
    RunRecord::from_json(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_spiral_writes_393_labelled_rows_reproducibly() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = alrr(&["synth", "--synthetic", "spiral", "--seed", "3", "--out", path_str(out)]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let file_a = fs::read(a.join("spiral-3.csv")).unwrap();
    assert_eq!(file_a, fs::read(b.join("spiral-3.csv")).unwrap());
    let text = String::from_utf8(file_a).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split(',').count(), 3);
    assert_eq!(lines.count(), 393);
}

#[test]
fn synth_rejects_zero_arms() {
    let dir = tempfile::tempdir().unwrap();
    let o = alrr(&["synth", "--synthetic", "spiral", "--arms", "0", "--out", path_str(dir.path())]);
    assert_eq!(code(&o), 1);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&alrr(&["cluster"])), 1);
    assert_eq!(code(&alrr(&["cluster", "--synthetic", "moons"])), 1);
    assert_eq!(code(&alrr(&["cluster", "--data", "/nonexistent/x.csv"])), 1);
    assert_eq!(code(&alrr(&["frobnicate"])), 1);
    assert_eq!(code(&alrr(&["cluster", "--synthetic", "blobs", "--lambda1=-1"])), 1);
}

#[test]
fn cluster_writes_reloadable_record_and_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = alrr(&["cluster", "--synthetic", "blobs", "--seed", "5", "--out", path_str(&out), "--export", "pgm", "--permute"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let record = load_record(&out.join("run.json"));
    assert_eq!(record.n_samples, 60);
    assert_eq!(record.labels.len(), 60);
    assert_eq!(record.objective_trace.len(), record.iterations);
    assert!(record.metrics.unwrap().acc >= 0.99);
    assert_eq!(fs::read_to_string(out.join("labels.csv")).unwrap().lines().count(), 60);
    let pgm = fs::read(out.join("graph.pgm")).unwrap();
    assert!(pgm.starts_with(b"P5\n60 60\n255\n"));

    // The echoed config alone reproduces the run.
    let again = pipeline::cmd_cluster(&RunConfig { out: None, ..record.config.clone() }).unwrap();
    let (m1, m2) = (record.metrics.unwrap(), again.metrics.unwrap());
    assert!((m1.acc - m2.acc).abs() <= 1e-10 && (m1.fscore - m2.fscore).abs() <= 1e-10);
    for (a, b) in record.objective_trace.iter().zip(&again.objective_trace) {
        assert!((a - b).abs() <= 1e-10);
    }
}

#[test]
fn config_file_keys_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, "synthetic = \"blobs\"\nn = 30\nmax-iter = 7\nlambda1 = 0.5\nweight-mode = \"identity\"\n").unwrap();
    let out = dir.path().join("o");
    let o = alrr(&["cluster", "--config", path_str(&cfg), "--max-iter", "4", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let record = load_record(&out.join("run.json"));
    assert_eq!(record.iterations, 4);
    assert_eq!(record.n_samples, 30);
    assert_eq!(record.config.lambda1, 0.5);
    assert_eq!(record.feature_weights, vec![1.0 / 6.0; 6]);

    fs::write(&cfg, "synthetic = \"blobs\"\nlambda9 = 1\n").unwrap();
    assert_eq!(code(&alrr(&["cluster", "--config", path_str(&cfg)])), 1);
}

#[test]
fn unlabeled_csv_writes_labels_without_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("points.csv");
    let mut text = String::new();
    for i in 0..12 {
        let off = if i < 6 { 0.0 } else { 20.0 };
        text.push_str(&format!("{},{}\n", off + (i % 3) as f64 * 0.1, off + (i % 2) as f64 * 0.2));
    }
    fs::write(&data, text).unwrap();
    let out = dir.path().join("o");
    let o = alrr(&["cluster", "--data", path_str(&data), "--knn", "3", "--normalize", "minmax", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let record = load_record(&out.join("run.json"));
    assert!(record.metrics.is_none());
    let labels: Vec<usize> = fs::read_to_string(out.join("labels.csv")).unwrap().lines().map(|l| l.parse().unwrap()).collect();
    assert_eq!(labels.len(), 12);
    assert!(labels[..6].iter().all(|&l| l == labels[0]));
    assert!(labels[6..].iter().all(|&l| l == labels[6] && l != labels[0]));
}

#[test]
fn overflowing_data_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("huge.csv");
    let text: String = (0..10).map(|i| format!("{}e200,{}e200\n", i + 1, (i * 3) % 7 + 1)).collect();
    fs::write(&data, text).unwrap();
    let o = alrr(&["cluster", "--data", path_str(&data), "--normalize", "none", "--knn", "3"]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("step"));
}

#[test]
fn one_point_sweep_matches_cluster() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_out = dir.path().join("s");
    let o = alrr(&["sweep", "--synthetic", "blobs", "--n", "30", "--grid", "lambda1", "--grid-values", "0.04", "--out", path_str(&sweep_out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let swept = load_record(&sweep_out.join("runs/run-0000.json"));
    let cluster_out = dir.path().join("c");
    let o = alrr(&["cluster", "--synthetic", "blobs", "--n", "30", "--out", path_str(&cluster_out)]);
    assert_eq!(code(&o), 0);
    let clustered = load_record(&cluster_out.join("run.json"));
    assert_eq!(swept.labels, clustered.labels);
    assert_eq!(swept.objective_trace, clustered.objective_trace);
    assert_eq!(swept.metrics, clustered.metrics);
}

#[test]
fn full_grid_on_one_lambda_gives_eleven_records() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = alrr(&[
        "sweep", "--synthetic", "blobs", "--n", "30", "--lambda2", "0.04", "--lambda3", "0.04",
        "--grid", "lambda1", "--grid-values", "full", "--max-iter", "60", "--out", path_str(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(table.lines().count(), 12);
    assert_eq!(fs::read_dir(out.join("runs")).unwrap().count(), 11);
    let accs: Vec<f64> = table.lines().skip(1).map(|l| l.split(',').nth(3).unwrap().parse().unwrap()).collect();
    assert!(accs.windows(2).all(|w| w[0] >= w[1]));
    assert!(out.join("best.json").exists());
}

#[test]
fn failing_cell_is_recorded_and_sweep_completes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("s");
    let o = alrr(&["sweep", "--synthetic", "blobs", "--n", "30", "--grid", "lambda3", "--grid-values", "0.04,inf", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].ends_with(",ok"));
    assert!(rows[1].contains("failed"));
}

#[test]
fn export_graph_round_trips_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("g");
    let o = alrr(&["export-graph", "--synthetic", "blobs", "--n", "20", "--export", "csv", "--out", path_str(&out)]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let w = pipeline::read_graph_csv(&out.join("graph.csv")).unwrap();
    assert_eq!(w.shape(), (20, 20));
    assert_eq!(w, w.transpose());

    let pgm_out = dir.path().join("p");
    let o = alrr(&[
        "export-graph", "--graph", path_str(&out.join("graph.csv")), "--export", "pgm", "--out", path_str(&pgm_out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let pgm = fs::read(pgm_out.join("graph.pgm")).unwrap();
    let pixels = &pgm[pgm.len() - 400..];
    assert_eq!(pixels.iter().copied().max(), Some(255));
}
