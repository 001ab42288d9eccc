use std::path::Path;
use std::process::{Command, Output};

fn mrsde(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mrsde"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

const SMALL_TRAIN: &[&str] = &["--iterations", "30", "--eval-every", "10", "--batch-size", "4"];

fn small_config(dir: &Path) -> String {
    let path = dir.join("small.json");
    std::fs::write(
        &path,
        r#"{ "model": { "hidden": [32] }, "data": { "train_count": 8, "eval_count": 2 } }"#,
    )
    .unwrap();
    path.display().to_string()
}

#[test]
fn default_validation_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = mrsde(dir.path(), &["validate"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(String::from_utf8_lossy(&out.stdout).contains("16 of 16 checks passed"));
}

#[test]
fn only_runs_one_group() {
    let dir = tempfile::tempdir().unwrap();
    let out = mrsde(dir.path(), &["validate", "--only", "kernel"]);
    assert_eq!(code(&out), 0);
    let stdout = String::from_utf8_lossy(&out.stdout);
    let rows: Vec<&str> = stdout.lines().skip(1).filter(|l| !l.contains("checks passed")).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|l| l.starts_with("kernel")), "{stdout}");
}

#[test]
fn non_positive_lambda_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), r#"{ "sde": { "lambda_sq": 0.0 } }"#).unwrap();
    let out = mrsde(dir.path(), &["validate", "--config", "bad.json"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("lambda_sq"));
    let out = mrsde(dir.path(), &["validate", "--lambda-sq", "-1"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn parse_errors_name_the_line() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.json"), "{\n  \"sde\": {\n    \"T\": \"many\"\n  }\n}\n").unwrap();
    let out = mrsde(dir.path(), &["validate", "--config", "bad.json"]);
    assert_eq!(code(&out), 2);
    let err = stderr(&out);
    assert!(err.contains("line 3"), "{err}");
    assert!(err.contains("\"T\": \"many\""), "{err}");
}

#[test]
fn unknown_flag_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mrsde(dir.path(), &["validate", "--frobnicate"])), 2);
}

#[test]
fn training_twice_gives_identical_loss_csvs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    for run in ["a", "b"] {
        let mut args = vec!["train", "--config", &cfg, "--objective", "ml", "--seed", "7", "--out", run];
        args.extend_from_slice(SMALL_TRAIN);
        let out = mrsde(dir.path(), &args);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    let a = std::fs::read(dir.path().join("a/loss.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/loss.csv")).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        std::fs::read(dir.path().join("a/model.ckpt")).unwrap(),
        std::fs::read(dir.path().join("b/model.ckpt")).unwrap()
    );
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("iteration,objective,loss,psnr_eval\n"));
    assert_eq!(text.lines().count(), 31);
}

#[test]
fn manifest_alone_reproduces_a_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let mut args = vec!["train", "--config", &cfg, "--objective", "nm", "--seed", "3", "--out", "first"];
    args.extend_from_slice(SMALL_TRAIN);
    assert_eq!(code(&mrsde(dir.path(), &args)), 0);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("first/run.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seed"], 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
    let out = mrsde(dir.path(), &["train", "--config", "first/run.json", "--out", "second"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert_eq!(
        std::fs::read(dir.path().join("first/loss.csv")).unwrap(),
        std::fs::read(dir.path().join("second/loss.csv")).unwrap()
    );
}

fn method_mean(csv_text: &str, method: &str) -> f64 {
    let rows: Vec<f64> = csv_text
        .lines()
        .skip(1)
        .map(|l| l.split(',').collect::<Vec<_>>())
        .filter(|f| f[2] == method)
        .map(|f| f[3].parse().unwrap())
        .collect();
    rows.iter().sum::<f64>() / rows.len() as f64
}

#[test]
fn exact_score_eval_beats_identity() {
    let dir = tempfile::tempdir().unwrap();
    for task in ["blur", "noise"] {
        let data = format!("data_{task}");
        let out = mrsde(dir.path(), &["make-data", "--out", &data, "--task", task, "--train-count", "1", "--eval-count", "4"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let metrics = format!("{task}.csv");
        let out = mrsde(dir.path(), &["eval", "--data", &format!("{data}/eval"), "--out", &metrics, "--jobs", "2"]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        let text = std::fs::read_to_string(dir.path().join(&metrics)).unwrap();
        assert!(text.starts_with("id,task,method,psnr,ssim,mse\n"));
        assert!(method_mean(&text, "exact") >= method_mean(&text, "identity"));
    }
}

#[test]
fn eval_is_independent_of_job_count() {
    let dir = tempfile::tempdir().unwrap();
    for jobs in ["1", "3"] {
        let out = mrsde(dir.path(), &["eval", "--out", &format!("j{jobs}.csv"), "--jobs", jobs]);
        assert_eq!(code(&out), 0, "{}", stderr(&out));
    }
    assert_eq!(
        std::fs::read(dir.path().join("j1.csv")).unwrap(),
        std::fs::read(dir.path().join("j3.csv")).unwrap()
    );
}

#[test]
fn plot_of_empty_csv_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("empty.csv"), "").unwrap();
    std::fs::write(dir.path().join("header.csv"), "iteration,loss\n").unwrap();
    for input in ["empty.csv", "header.csv"] {
        let out = mrsde(dir.path(), &["plot", "--input", input, "--out", "p.svg"]);
        assert_eq!(code(&out), 2, "{input}: {}", stderr(&out));
    }
}

#[test]
fn restore_log_plots_to_svg() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&mrsde(dir.path(), &["make-data", "--out", "d", "--task", "spikes", "--eval-count", "1", "--train-count", "1"])), 0);
    let out = mrsde(
        dir.path(),
        &["restore", "--input", "d/eval/eval_0000_lq.csv", "--exact", "d/eval/eval_0000_hq.csv", "--out", "r.csv", "--log", "log.csv"],
    );
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let log = std::fs::read_to_string(dir.path().join("log.csv")).unwrap();
    assert_eq!(log.lines().count(), 101);
    let out = mrsde(dir.path(), &["plot", "--input", "log.csv", "--x", "step", "--y", "psnr", "--out", "psnr.svg"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let svg = std::fs::read_to_string(dir.path().join("psnr.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("<polyline"));
    assert!(dir.path().join("psnr.run.json").exists());
}

#[test]
fn restore_without_a_score_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("x.csv"), "value\n0.5\n0.5\n").unwrap();
    let out = mrsde(dir.path(), &["restore", "--input", "x.csv", "--out", "y.csv"]);
    assert_eq!(code(&out), 2);
}

fn read_signal(path: &Path) -> Vec<f64> {
    std::fs::read_to_string(path).unwrap().lines().skip(1).map(|l| l.trim().parse().unwrap()).collect()
}

#[test]
fn simulate_snapshots_and_statistics() {
    let dir = tempfile::tempdir().unwrap();
    let clean: Vec<String> = (0..4000).map(|k| format!("{}", 0.5 + 0.3 * (k as f64 * 0.01).sin())).collect();
    std::fs::write(dir.path().join("x.csv"), format!("value\n{}\n", clean.join("\n"))).unwrap();
    let mu: Vec<String> = (0..4000).map(|_| "0.25".to_string()).collect();
    std::fs::write(dir.path().join("mu.csv"), format!("value\n{}\n", mu.join("\n"))).unwrap();
    let run = |out: &str| {
        let o = mrsde(dir.path(), &["simulate", "--input", "x.csv", "--mu", "mu.csv", "--out", out, "--seed", "5", "--every", "50"]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
    };
    run("a");
    run("b");
    assert_eq!(read_signal(&dir.path().join("a/step_0000.csv")), read_signal(&dir.path().join("x.csv")));
    assert_eq!(
        std::fs::read(dir.path().join("a/step_0100.csv")).unwrap(),
        std::fs::read(dir.path().join("b/step_0100.csv")).unwrap()
    );
    // the final snapshot's spread about the theoretical mean matches the kernel variance
    let stats = std::fs::read_to_string(dir.path().join("a/stats.csv")).unwrap();
    let last: Vec<f64> = stats.lines().last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    let (var_theory, var_emp) = (last[3], last[5]);
    let se = var_theory * (2.0 / 4000.0f64).sqrt();
    assert!((var_emp - var_theory).abs() < 4.0 * se, "{var_emp} vs {var_theory}");
}
