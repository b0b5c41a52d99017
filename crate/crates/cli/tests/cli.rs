use std::path::Path;
use std::process::{Command, Output};

use mfhover::io::{read_counts_csv, read_labels};
use mfhover::metrics::EvalReport;
use mfhover::nn::checkpoint::save_checkpoint;
use mfhover::nn::{NetConfig, ToyHovernet};
use mfhover::ClassOrder;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mfhover"));
    c.env_remove("MFHOVER_WORKERS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn p(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn synth(dir: &Path, count: usize) -> (String, String, String) {
    let (img, lab, cnt) = (p(dir, "images.npy"), p(dir, "labels.npy"), p(dir, "counts.csv"));
    let n = count.to_string();
    ok(&[
        "synth",
        "--count",
        &n,
        "--seed",
        "3",
        "--out-images",
        &img,
        "--out-labels",
        &lab,
        "--out-counts",
        &cnt,
    ]);
    (img, lab, cnt)
}

#[test]
fn synth_counts_match_labels() {
    let dir = tempfile::tempdir().unwrap();
    let (_, lab, cnt) = synth(dir.path(), 5);
    let labels = read_labels(Path::new(&lab)).unwrap();
    let counts = read_counts_csv(Path::new(&cnt), &ClassOrder::default()).unwrap();
    assert_eq!(labels.len(), 5);
    assert_eq!(labels.iter().map(|l| l.counts()).collect::<Vec<_>>(), counts);
}

#[test]
fn stats_reports_totals_and_chart() {
    let dir = tempfile::tempdir().unwrap();
    let (_, lab, _) = synth(dir.path(), 3);
    let json = p(dir.path(), "stats.json");
    let svg = p(dir.path(), "stats.svg");
    ok(&["stats", "--labels", &lab, "--out-json", &json, "--out-svg", &svg]);
    let report: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    let labels = read_labels(Path::new(&lab)).unwrap();
    let total: u32 = labels.iter().map(|l| l.count()).sum();
    assert_eq!(report["total"], total);
    assert_eq!(report["patches"], 3);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn folds_writes_five_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = ok(&[
        "folds",
        "--count",
        "4981",
        "--seed",
        "1",
        "--out-dir",
        &p(dir.path(), ""),
    ]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("[997, 996, 996, 996, 996]"));
    let mut seen = Vec::new();
    for k in 0..5 {
        let v: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join(format!("fold-{k}.json"))).unwrap()).unwrap();
        assert_eq!(v["fold"], k);
        seen.extend(v["val"].as_array().unwrap().iter().map(|x| x.as_u64().unwrap()));
    }
    seen.sort_unstable();
    assert_eq!(seen, (0..4981).collect::<Vec<u64>>());
}

#[test]
fn eval_of_ground_truth_against_itself_is_perfect() {
    let dir = tempfile::tempdir().unwrap();
    let (_, lab, cnt) = synth(dir.path(), 6);
    let json = p(dir.path(), "eval.json");
    let csv = p(dir.path(), "eval.csv");
    let svg = p(dir.path(), "eval.svg");
    ok(&[
        "eval",
        "--gt-labels",
        &lab,
        "--pred-labels",
        &lab,
        "--gt-counts",
        &cnt,
        "--out-json",
        &json,
        "--out-csv",
        &csv,
        "--out-svg",
        &svg,
    ]);
    let report: EvalReport = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(report.pq, Some(1.0));
    assert_eq!(report.mpq, Some(1.0));
    assert_eq!(report.multi_r, Some(1.0));
    // Synthetic nuclei use two classes, the other four are absent.
    let csv_text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(csv_text.lines().filter(|l| l.contains("undefined")).count(), 4);

    let svg2 = p(dir.path(), "cmp.svg");
    let arg = format!("earlier={json}");
    ok(&[
        "eval",
        "--gt-labels",
        &lab,
        "--pred-labels",
        &lab,
        "--compare",
        &arg,
        "--out-svg",
        &svg2,
        "--out-json",
        &p(dir.path(), "eval2.json"),
    ]);
    let chart = std::fs::read_to_string(&svg2).unwrap();
    assert!(chart.contains("earlier") && chart.contains("prediction"));
}

fn zero_checkpoint(dir: &Path) -> String {
    let path = dir.join("zero.ckpt");
    save_checkpoint(&ToyHovernet::zeros(NetConfig::default()).unwrap(), &path).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn zero_network_pipeline_predicts_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let (img, _, _) = synth(dir.path(), 3);
    let ckpt = zero_checkpoint(dir.path());
    let (lab, cnt) = (p(dir.path(), "pred.npy"), p(dir.path(), "pred.csv"));
    ok(&[
        "pipeline",
        "--checkpoint",
        &ckpt,
        "--images",
        &img,
        "--out-labels",
        &lab,
        "--out-counts",
        &cnt,
    ]);
    let labels = read_labels(Path::new(&lab)).unwrap();
    assert_eq!(labels.len(), 3);
    assert!(labels.iter().all(|l| l.count() == 0));
    let counts = read_counts_csv(Path::new(&cnt), &ClassOrder::default()).unwrap();
    assert!(counts.iter().all(|c| c.total() == 0));
}

#[test]
fn train_infer_postproc_matches_pipeline_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab, _) = synth(dir.path(), 10);
    let ckpt = p(dir.path(), "net.ckpt");
    let trace = p(dir.path(), "trace.csv");
    ok(&[
        "train-toy",
        "--images",
        &img,
        "--labels",
        &lab,
        "--checkpoint",
        &ckpt,
        "--trace",
        &trace,
        "--steps",
        "3",
        "--fold",
        "0",
        "--out-json",
        &p(dir.path(), "train.json"),
    ]);
    let trace_text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(trace_text.lines().count(), 4);
    assert!(trace_text.starts_with("step,mse,ce_np,ce_tp,dice_np,dice_tp,total"));

    let outputs = p(dir.path(), "out.npy");
    ok(&["infer", "--checkpoint", &ckpt, "--images", &img, "--out", &outputs]);
    let (l1, c1) = (p(dir.path(), "a.npy"), p(dir.path(), "a.csv"));
    ok(&[
        "postproc",
        "--outputs",
        &outputs,
        "--out-labels",
        &l1,
        "--out-counts",
        &c1,
    ]);
    let (l2, c2) = (p(dir.path(), "b.npy"), p(dir.path(), "b.csv"));
    ok(&[
        "pipeline",
        "--checkpoint",
        &ckpt,
        "--images",
        &img,
        "--out-labels",
        &l2,
        "--out-counts",
        &c2,
    ]);
    let (l3, c3) = (p(dir.path(), "c.npy"), p(dir.path(), "c.csv"));
    ok(&[
        "--workers",
        "1",
        "pipeline",
        "--checkpoint",
        &ckpt,
        "--images",
        &img,
        "--out-labels",
        &l3,
        "--out-counts",
        &c3,
    ]);
    let bytes = |s: &str| std::fs::read(s).unwrap();
    assert_eq!(bytes(&l1), bytes(&l2));
    assert_eq!(bytes(&c1), bytes(&c2));
    assert_eq!(bytes(&l2), bytes(&l3));
    assert_eq!(bytes(&c2), bytes(&c3));

    let (ckpt2, trace2) = (p(dir.path(), "net2.ckpt"), p(dir.path(), "trace2.csv"));
    ok(&[
        "train-toy",
        "--images",
        &img,
        "--labels",
        &lab,
        "--checkpoint",
        &ckpt2,
        "--trace",
        &trace2,
        "--steps",
        "3",
        "--fold",
        "0",
        "--out-json",
        &p(dir.path(), "train2.json"),
    ]);
    assert_eq!(bytes(&ckpt), bytes(&ckpt2));
    assert_eq!(bytes(&trace), bytes(&trace2));
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let (img, lab, _) = synth(dir.path(), 5);
    let config = dir.path().join("run.json");
    std::fs::write(&config, r#"{"train": {"steps": 2, "batch_size": 2}, "seed": 5}"#).unwrap();
    let json = p(dir.path(), "train.json");
    let cfg = config.to_string_lossy().into_owned();
    ok(&[
        "--config",
        &cfg,
        "train-toy",
        "--images",
        &img,
        "--labels",
        &lab,
        "--checkpoint",
        &p(dir.path(), "n.ckpt"),
        "--batch-size",
        "3",
        "--out-json",
        &json,
    ]);
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&json).unwrap()).unwrap();
    assert_eq!(summary["config"]["train"]["steps"], 2);
    assert_eq!(summary["config"]["train"]["batch_size"], 3);
    assert_eq!(summary["config"]["train"]["seed"], 5);
    assert_eq!(summary["config"]["train"]["adam"]["lr"], 1e-4);
}

#[test]
fn exit_codes_distinguish_usage_format_and_compute_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["stats"]).status.code(), Some(2));
    let missing = p(dir.path(), "missing.npy");
    assert_eq!(run(&["stats", "--labels", &missing]).status.code(), Some(2));

    let garbage = dir.path().join("garbage.npy");
    std::fs::write(&garbage, b"not an array").unwrap();
    let g = garbage.to_string_lossy().into_owned();
    assert_eq!(run(&["stats", "--labels", &g]).status.code(), Some(3));

    let (_, lab, _) = synth(dir.path(), 5);
    let other = p(dir.path(), "other.npy");
    ok(&[
        "synth",
        "--count",
        "4",
        "--seed",
        "9",
        "--out-images",
        &p(dir.path(), "o.npy"),
        "--out-labels",
        &other,
    ]);
    let out = run(&[
        "eval",
        "--gt-labels",
        &lab,
        "--pred-labels",
        &other,
        "--out-json",
        &p(dir.path(), "e.json"),
    ]);
    assert_eq!(out.status.code(), Some(4));

    let big = p(dir.path(), "big.npy");
    ok(&[
        "synth",
        "--count",
        "4",
        "--size",
        "80",
        "--out-images",
        &big,
        "--out-labels",
        &p(dir.path(), "bl.npy"),
    ]);
    let ckpt = zero_checkpoint(dir.path());
    let out = run(&[
        "infer",
        "--checkpoint",
        &ckpt,
        "--images",
        &big,
        "--out",
        &p(dir.path(), "x.npy"),
    ]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn eval_names_the_misaligned_patch() {
    let dir = tempfile::tempdir().unwrap();
    let (_, lab, _) = synth(dir.path(), 4);
    let other = p(dir.path(), "big.npy");
    ok(&[
        "synth",
        "--count",
        "4",
        "--size",
        "80",
        "--out-images",
        &p(dir.path(), "i.npy"),
        "--out-labels",
        &other,
    ]);
    let out = run(&["eval", "--gt-labels", &lab, "--pred-labels", &other]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("patch 0"));
}
