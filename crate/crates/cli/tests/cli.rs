use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_prior-rectify"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_string_lossy().into_owned()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    fs::write(dir.path().join(name), text).unwrap();
    path(dir, name)
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_slice(&fs::read(path).unwrap()).unwrap()
}

fn lines(path: impl AsRef<Path>) -> Vec<String> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(str::to_owned)
        .collect()
}

#[test]
fn gen_prior_sigma_zero_from_labels() {
    let dir = TempDir::new().unwrap();
    let labels = write(&dir, "labels.txt", "0\n0\n1\n");
    let out = path(&dir, "k.json");
    assert_eq!(
        code(&cli(&["gen-prior", "--labels", &labels, "-o", &out])),
        0
    );
    let k = json(&out);
    let bounds = k["unary_bounds"].as_array().unwrap();
    assert_eq!(bounds.len(), 2);
    for (b, q) in bounds.iter().zip([2.0 / 3.0, 1.0 / 3.0]) {
        assert!((b["lower"].as_f64().unwrap() - q).abs() < 1e-12);
        assert!((b["upper"].as_f64().unwrap() - q).abs() < 1e-12);
    }
    assert!(k["binary_relationships"].as_array().unwrap().is_empty());
    let manifest = json(format!("{out}.manifest.json"));
    assert_eq!(manifest["command"], "gen-prior");
}

#[test]
fn gen_prior_families() {
    let dir = TempDir::new().unwrap();
    let prior = write(&dir, "q.json", r#"{"probs": [0.5, 0.3, 0.2]}"#);
    let br = path(&dir, "br.json");
    assert_eq!(
        code(&cli(&[
            "gen-prior",
            "--prior",
            &prior,
            "--type",
            "br",
            "-o",
            &br
        ])),
        0
    );
    let k = json(&br);
    assert!(k["unary_bounds"].as_array().unwrap().is_empty());
    let chain: Vec<(u64, u64)> = k["binary_relationships"]
        .as_array()
        .unwrap()
        .iter()
        .map(|r| {
            (
                r["greater"].as_u64().unwrap(),
                r["lesser"].as_u64().unwrap(),
            )
        })
        .collect();
    assert_eq!(chain, vec![(0, 1), (1, 2)]);

    let both = path(&dir, "both.json");
    let args = [
        "gen-prior",
        "--prior",
        &prior,
        "--type",
        "ub+br",
        "--sigma",
        "0.5",
        "-o",
        &both,
    ];
    assert_eq!(code(&cli(&args)), 0);
    let k = json(&both);
    assert_eq!(k["unary_bounds"].as_array().unwrap().len(), 3);
    assert_eq!(k["binary_relationships"].as_array().unwrap().len(), 2);
}

#[test]
fn gen_prior_rejects_malformed_input() {
    let dir = TempDir::new().unwrap();
    let labels = write(&dir, "labels.txt", "0\nx\n");
    let out = cli(&[
        "gen-prior",
        "--labels",
        &labels,
        "-o",
        &path(&dir, "k.json"),
    ]);
    assert_eq!(code(&out), 1);
    assert!(!out.stderr.is_empty());
}

#[test]
fn rectify_without_prior_is_argmax() {
    let dir = TempDir::new().unwrap();
    let probs = write(&dir, "p.csv", "0.2,0.8\n0.6,0.4\n0.5,0.5\n");
    let out = path(&dir, "labels.txt");
    let report = path(&dir, "report.json");
    assert_eq!(
        code(&cli(&[
            "rectify", "--probs", &probs, "-o", &out, "--report", &report
        ])),
        0
    );
    assert_eq!(lines(&out), ["1", "0", "0"]);
    let r = json(&report);
    assert_eq!(r["feasible"], true);
    assert_eq!(r["certified_optimal"], true);
    assert_eq!(r["class_counts"], serde_json::json!([2, 1]));
    assert_eq!(r["penalty_m"].as_f64(), Some(30.0));
    assert!(dir.path().join("labels.txt.manifest.json").exists());
    assert!(dir.path().join("report.json.manifest.json").exists());
}

#[test]
fn rectify_flips_the_cheapest_sample() {
    let dir = TempDir::new().unwrap();
    let probs = write(&dir, "p.csv", "0.9,0.1\n0.8,0.2\n0.6,0.4\n");
    let prior = write(
        &dir,
        "k.json",
        r#"{"num_classes": 2, "unary_bounds": [
            {"class": 0, "lower": 0.3333333333333333, "upper": 1.0},
            {"class": 1, "lower": 0.3333333333333333, "upper": 1.0}]}"#,
    );
    let out = path(&dir, "labels.txt");
    assert_eq!(
        code(&cli(&[
            "rectify", "--probs", &probs, "--prior", &prior, "-o", &out
        ])),
        0
    );
    assert_eq!(lines(&out), ["0", "0", "1"]);
}

#[test]
fn rectify_distances_use_softmax() {
    let dir = TempDir::new().unwrap();
    // Nearest centroid wins: row 0 is close to class 1, row 1 to class 0.
    let d = write(&dir, "d.csv", "3.0,0.5\n0.1,2.0\n");
    let out = path(&dir, "labels.txt");
    let report = path(&dir, "report.json");
    assert_eq!(
        code(&cli(&[
            "rectify",
            "--distances",
            &d,
            "-o",
            &out,
            "--report",
            &report
        ])),
        0
    );
    assert_eq!(lines(&out), ["1", "0"]);
    let expected = 1.0 / (1.0 + (-2.5f64).exp()) + 1.0 / (1.0 + (-1.9f64).exp());
    assert!((json(&report)["objective"].as_f64().unwrap() - expected).abs() < 1e-8);
}

#[test]
fn rectify_exit_codes() {
    let dir = TempDir::new().unwrap();
    let rows: String = (0..30)
        .map(|i| {
            if i % 2 == 0 {
                "0.7,0.2,0.1\n"
            } else {
                "0.1,0.3,0.6\n"
            }
        })
        .collect();
    let probs = write(&dir, "p.csv", &rows);
    let contradictory = write(
        &dir,
        "bad.json",
        r#"{"num_classes": 3, "unary_bounds": [
            {"class": 0, "lower": 0.9, "upper": 1.0},
            {"class": 1, "lower": 0.9, "upper": 1.0}]}"#,
    );
    let out = path(&dir, "labels.txt");
    let report = path(&dir, "report.json");

    let args = [
        "rectify",
        "--probs",
        &probs,
        "--prior",
        &contradictory,
        "--mode",
        "hard",
        "-o",
        &out,
        "--report",
        &report,
    ];
    assert_eq!(code(&cli(&args)), 2);
    assert_eq!(json(&report)["feasible"], false);
    assert_eq!(lines(&out).len(), 30);

    let args = [
        "rectify",
        "--probs",
        &probs,
        "--optimality",
        "exhaustive",
        "-o",
        &out,
    ];
    assert_eq!(code(&cli(&args)), 3);

    assert_eq!(
        code(&cli(&["rectify", "--probs", &probs, "--bogus", "-o", &out])),
        1
    );
    assert_eq!(
        code(&cli(&[
            "rectify",
            "--probs",
            &path(&dir, "missing.csv"),
            "-o",
            &out
        ])),
        1
    );
    let ragged = write(&dir, "ragged.csv", "0.5,0.5\n1.0\n");
    assert_eq!(code(&cli(&["rectify", "--probs", &ragged, "-o", &out])), 1);
    let k2 = write(&dir, "k2.json", r#"{"num_classes": 2}"#);
    assert_eq!(
        code(&cli(&[
            "rectify", "--probs", &probs, "--prior", &k2, "-o", &out
        ])),
        1
    );
}

#[test]
fn help_and_version_succeed() {
    for args in [
        &["--version"][..],
        &["--help"],
        &["rectify", "--help"],
        &["simulate", "--version"],
    ] {
        let out = cli(args);
        assert_eq!(code(&out), 0, "{args:?}");
        assert!(!out.stdout.is_empty());
    }
    assert_eq!(code(&cli(&[])), 1);
}

#[test]
fn eval_metrics() {
    let dir = TempDir::new().unwrap();
    let truth = write(&dir, "truth.txt", "0\n0\n0\n1\n");
    let constant = write(&dir, "pred.txt", "0\n0\n0\n0\n");
    let value = |pred: &str, metric: &str| -> f64 {
        let out = cli(&[
            "eval", "--pred", pred, "--truth", &truth, "--metric", metric,
        ]);
        assert_eq!(code(&out), 0);
        let v: Value = serde_json::from_slice(&out.stdout).unwrap();
        assert_eq!(v["metric"], metric);
        v["value"].as_f64().unwrap()
    };
    assert_eq!(value(&truth, "acc"), 1.0);
    assert_eq!(value(&truth, "kl"), 0.0);
    assert_eq!(value(&constant, "acc"), 0.75);
    assert_eq!(value(&constant, "per-class-acc"), 0.5);
    let short = write(&dir, "short.txt", "0\n");
    assert_eq!(
        code(&cli(&["eval", "--pred", &short, "--truth", &truth])),
        1
    );
}

#[test]
fn simulate_outputs() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "sim");
    let args = [
        "simulate",
        "--arms",
        "baseline",
        "--seeds",
        "1",
        "--iterations",
        "3",
        "-o",
        &out,
    ];
    assert_eq!(code(&cli(&args)), 0);
    let trace = lines(dir.path().join("sim/trace_baseline.jsonl"));
    assert_eq!(trace.len(), 3);
    let first: Value = serde_json::from_str(&trace[0]).unwrap();
    assert_eq!(first["arm"], "baseline");
    assert_eq!(first["iteration"], 1);
    for f in [
        "spec.json",
        "summary.json",
        "summary.csv",
        "histograms_baseline.csv",
        "manifest.json",
    ] {
        assert!(dir.path().join("sim").join(f).exists(), "{f}");
    }

    let args = [
        "simulate",
        "--arms",
        "baseline,ub0",
        "--seeds",
        "2",
        "--iterations",
        "2",
        "-o",
        &out,
    ];
    assert_eq!(code(&cli(&args)), 0);
    let summary = json(dir.path().join("sim/summary.json"));
    let arms: Vec<&str> = summary
        .as_array()
        .unwrap()
        .iter()
        .map(|a| a["arm"].as_str().unwrap())
        .collect();
    assert_eq!(arms, ["baseline", "ub0"]);
    for arm in summary.as_array().unwrap() {
        assert!(arm["metrics"]["first_accuracy_after"]["mean"].is_number());
    }
    let table = lines(dir.path().join("sim/summary.csv"));
    assert_eq!(table[0], "arm,metric,mean,std");

    let bad = write(&dir, "spec.json", r#"{"num_classes": 0}"#);
    assert_eq!(code(&cli(&["simulate", "--spec", &bad, "-o", &out])), 1);
}

#[test]
fn reruns_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let labels = write(&dir, "labels.txt", &"0\n1\n1\n2\n2\n2\n".repeat(4));
    let probs: String = (0..24)
        .map(|i| {
            let a = 0.2 + 0.6 * ((i * 7 % 11) as f64 / 11.0);
            let b = (1.0 - a) * 0.7;
            format!("{a},{b},{}\n", 1.0 - a - b)
        })
        .collect();
    let probs = write(&dir, "p.csv", &probs);
    let features: String = (0..24).map(|i| format!("{},{}\n", i % 5, i / 5)).collect();
    let features = write(&dir, "f.csv", &features);
    let k = path(&dir, "k.json");
    let out = path(&dir, "labels.out");
    let report = path(&dir, "report.json");
    let sim = path(&dir, "sim");
    let commands: Vec<Vec<&str>> = vec![
        vec![
            "gen-prior",
            "--labels",
            &labels,
            "--type",
            "ub+br",
            "--sigma",
            "0.1",
            "--noise-phi",
            "0.3",
            "--rank-phi",
            "1",
            "--partial",
            "random:2",
            "--seed",
            "5",
            "-o",
            &k,
        ],
        vec![
            "rectify",
            "--probs",
            &probs,
            "--prior",
            &k,
            "--features",
            &features,
            "--smooth",
            "-o",
            &out,
            "--report",
            &report,
        ],
        vec![
            "simulate",
            "--arms",
            "baseline,ub0.5~0.25",
            "--seeds",
            "2",
            "--iterations",
            "2",
            "-o",
            &sim,
        ],
    ];
    let files = [
        "k.json",
        "k.json.manifest.json",
        "labels.out",
        "labels.out.manifest.json",
        "report.json",
        "sim/summary.json",
        "sim/summary.csv",
        "sim/trace_ub0.5~0.25.jsonl",
        "sim/histograms_baseline.csv",
    ];
    let snapshot = || -> Vec<Vec<u8>> {
        for args in &commands {
            assert_eq!(code(&cli(args)), 0, "{args:?}");
        }
        files
            .iter()
            .map(|f| fs::read(dir.path().join(f)).unwrap())
            .collect()
    };
    assert_eq!(snapshot(), snapshot());
}
