use std::path::Path;
use std::process::{Command, Output};

use naf_cli::RunConfig;

fn naf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_naf"))
        .args(args)
        .env_remove("NAF_THREADS")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = naf(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn read(p: impl AsRef<Path>) -> String {
    std::fs::read_to_string(p).unwrap()
}

#[test]
fn train_writes_model_history_and_config() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let stdout = ok(&[
        "train", "--out", out, "--epochs", "8", "--trees", "10", "--rows", "60",
    ]);
    assert!(stdout.contains("loss trend:"));
    let history = read(dir.path().join("loss_history.csv"));
    let mut lines = history.lines();
    assert_eq!(lines.next(), Some("epoch,loss"));
    assert_eq!(lines.count(), 9);
    let cfg = RunConfig::from_toml(&read(dir.path().join("config.toml"))).unwrap();
    assert_eq!(cfg.train.epochs, 8);
    assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    let model = read(dir.path().join("model.json"));
    assert!(model.contains("\"format\": \"naf-model\""));
    assert!(model.contains("\"training\""));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("run.toml");
    std::fs::write(
        &cfg_path,
        "seed = 3\n[data]\ndataset = \"friedman1\"\nn = 40\n[forest]\ntrees = 5\n[train]\nepochs = 2\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    ok(&[
        "train",
        "--config",
        cfg_path.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--epochs",
        "1",
    ]);
    let cfg = RunConfig::from_toml(&read(out.join("config.toml"))).unwrap();
    assert_eq!(
        (cfg.seed, cfg.data.n, cfg.forest.trees, cfg.train.epochs),
        (3, 40, 5, 1)
    );
    assert_eq!(cfg.data.dataset, "friedman1");
}

#[test]
fn predict_is_deterministic_and_accepts_training_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "gen-data",
        "--dataset",
        "friedman3",
        "--rows",
        "50",
        "--out",
        out,
        "--seed",
        "4",
    ]);
    let csv = dir.path().join("friedman3.csv");
    ok(&[
        "train",
        "--csv",
        csv.to_str().unwrap(),
        "--out",
        out,
        "--epochs",
        "3",
        "--trees",
        "8",
        "--min-leaf",
        "3",
    ]);
    ok(&["predict", "--out", out, "--input", csv.to_str().unwrap()]);
    let first = read(dir.path().join("predictions.csv"));
    ok(&["predict", "--out", out, "--input", csv.to_str().unwrap()]);
    assert_eq!(first, read(dir.path().join("predictions.csv")));
    assert_eq!(first.lines().count(), 51);
    assert!(first.starts_with("y_hat,x_hat_x1,x_hat_x2,x_hat_x3,x_hat_x4\n"));
}

#[test]
fn predict_on_header_only_input_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "train", "--out", out, "--epochs", "0", "--trees", "3", "--rows", "30",
    ]);
    let input = dir.path().join("empty.csv");
    std::fs::write(&input, "x1,x2,x3,x4\n").unwrap();
    ok(&["predict", "--out", out, "--input", input.to_str().unwrap()]);
    assert_eq!(read(dir.path().join("predictions.csv")).lines().count(), 1);
}

#[test]
fn predict_dimension_mismatch_reports_row_and_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "train", "--out", out, "--epochs", "0", "--trees", "3", "--rows", "30",
    ]);
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "x1,x2,x3,x4\n1,2,3,4\n1,2,3\n").unwrap();
    let res = naf(&["predict", "--out", out, "--input", input.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&res.stderr).contains("row 2"));
}

#[test]
fn explain_clamps_top_k_and_weights_sum_to_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    ok(&[
        "train",
        "--dataset",
        "two_moons",
        "--rows",
        "25",
        "--out",
        out,
        "--forest",
        "ert",
        "--trees",
        "50",
        "--min-leaf",
        "1",
        "--objective",
        "q-recon",
        "--epochs",
        "5",
    ]);
    ok(&["explain", "--out", out, "--query=-0.5,0.25", "--top-k", "1000"]);
    let csv = read(dir.path().join("explanation.csv"));
    let rows: Vec<Vec<&str>> = csv.lines().skip(1).map(|l| l.split(',').collect()).collect();
    assert_eq!(rows[0][0], "query");
    assert_eq!(rows[1][0], "reconstruction");
    assert!(rows[1][3..].iter().all(|v| v.parse::<f64>().unwrap().is_finite()));
    let neighbors = &rows[2..];
    assert_eq!(neighbors.len(), 25);
    let total: f64 = neighbors.iter().map(|r| r[2].parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-10, "{total}");
}

#[test]
fn bench_is_byte_identical_across_runs() {
    let dir = tempfile::tempdir().unwrap();
    let run = |sub: &str| {
        let out = dir.path().join(sub);
        ok(&[
            "bench",
            "--out",
            out.to_str().unwrap(),
            "--rows",
            "40",
            "--trees",
            "5",
            "--min-leaf",
            "3",
            "--epochs",
            "2",
            "--repetitions",
            "2",
            "--seed",
            "11",
        ]);
        (read(out.join("bench.csv")), read(out.join("bench_meta.json")))
    };
    let (a, meta_a) = run("a");
    let (b, meta_b) = run("b");
    assert_eq!(a, b);
    assert_eq!(meta_a, meta_b);
    assert_eq!(a.lines().filter(|l| l.contains(",mean,")).count(), 6);
    assert_eq!(a.lines().count(), 1 + 6 * 2 + 6);
    assert!(meta_a.contains("repeated hold-out"));
}

#[test]
fn thread_cap_does_not_change_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut outs = Vec::new();
    for threads in ["1", "3"] {
        let out = dir.path().join(threads);
        let res = Command::new(env!("CARGO_BIN_EXE_naf"))
            .args([
                "train",
                "--out",
                out.to_str().unwrap(),
                "--epochs",
                "3",
                "--trees",
                "6",
                "--rows",
                "40",
            ])
            .env("NAF_THREADS", threads)
            .output()
            .unwrap();
        assert!(res.status.success());
        outs.push(read(out.join("model.json")));
    }
    assert_eq!(outs[0], outs[1]);
}

#[test]
fn usage_errors_exit_2() {
    let bad_dataset = naf(&["train", "--dataset", "iris"]);
    assert_eq!(bad_dataset.status.code(), Some(2));
    let msg = String::from_utf8_lossy(&bad_dataset.stderr);
    for name in [
        "friedman1",
        "friedman2",
        "friedman3",
        "two_moons",
        "linear",
        "sparse",
    ] {
        assert!(msg.contains(name), "{msg}");
    }
    assert_eq!(
        naf(&["bench", "--models", "original,naf9"]).status.code(),
        Some(2)
    );
    assert_eq!(naf(&["train", "--forest", "gbm"]).status.code(), Some(2));
    assert_eq!(naf(&["train", "--lr", "-1"]).status.code(), Some(2));
    assert_eq!(naf(&["explain"]).status.code(), Some(2));
    assert_eq!(naf(&["frobnicate"]).status.code(), Some(2));
}

#[test]
fn missing_model_is_a_runtime_error() {
    let dir = tempfile::tempdir().unwrap();
    let res = naf(&["explain", "--out", dir.path().to_str().unwrap(), "--query", "1,2"]);
    assert_eq!(res.status.code(), Some(1));
}
