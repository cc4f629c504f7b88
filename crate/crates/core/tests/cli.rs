use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hscf_core::data::{generate_synthetic_cohort, save_cohort, Cohort, Stage};
use serde_json::Value;

fn hscf(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hscf"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn toy_cohort(dir: &Path) -> PathBuf {
    let out = dir.join("toy");
    let o = hscf(&[
        "generate",
        "--out",
        p(&out),
        "--rois",
        "6",
        "--subjects-per-class",
        "4",
        "--seed",
        "3",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    out
}

fn files_under(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn help_and_usage_errors() {
    assert_eq!(hscf(&["--help"]).status.code(), Some(0));
    assert_eq!(hscf(&["--version"]).status.code(), Some(0));
    assert_eq!(hscf(&[]).status.code(), Some(1));
    assert_eq!(
        hscf(&["generate", "--out", "x", "--bogus"]).status.code(),
        Some(1)
    );
    assert_eq!(hscf(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(
        hscf(&["--threads", "0", "gradcheck"]).status.code(),
        Some(1)
    );
}

#[test]
fn generate_is_deterministic_and_sized() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        let o = hscf(&[
            "generate",
            "--out",
            p(out),
            "--seed",
            "1",
            "--rois",
            "10",
            "--subjects-per-class",
            "3",
        ]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let (fa, fb) = (files_under(&a), files_under(&b));
    assert_eq!(fa.len(), 1 + 9 * 3);
    assert_eq!(fa, fb);

    let toy = toy_cohort(dir.path());
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(toy.join("cohort.json")).unwrap()).unwrap();
    assert_eq!(manifest["subjects"].as_array().unwrap().len(), 12);
}

#[test]
fn generate_rejects_bad_signal() {
    let dir = tempfile::tempdir().unwrap();
    let o = hscf(&[
        "generate",
        "--out",
        p(&dir.path().join("c")),
        "--signal",
        "1.5",
    ]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
}

#[test]
fn train_then_eval_reproduces_final_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy_cohort(dir.path());
    let ckpt = dir.path().join("run/model.json");
    let o = hscf(&[
        "train",
        "--data",
        p(&toy),
        "--out",
        p(&ckpt),
        "--epochs",
        "5",
        "--train-fraction",
        "0.5",
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let summary: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    let report = dir.path().join("run/model.report.jsonl");
    assert!(ckpt.exists() && report.exists());
    let lines: Vec<Value> = fs::read_to_string(&report)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 5);
    assert_eq!(lines[4]["epoch"], 5);
    assert_eq!(lines[4]["eval"], summary["final_eval"]);

    let o = hscf(&["eval", "--ckpt", p(&ckpt), "--data", p(&toy)]);
    assert!(o.status.success(), "{}", stderr(&o));
    let metrics: Value = serde_json::from_str(stdout(&o).trim()).unwrap();
    assert_eq!(metrics, summary["final_eval"]);
    let counts = &metrics["counts"];
    let total: u64 = ["tp", "fn", "tn", "fp"]
        .iter()
        .map(|k| counts[k].as_u64().unwrap())
        .sum();
    assert_eq!(total, 4);
    let acc = metrics["acc"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&acc));

    let again = dir.path().join("run/again.json");
    let o = hscf(&[
        "train",
        "--data",
        p(&toy),
        "--out",
        p(&again),
        "--epochs",
        "5",
        "--train-fraction",
        "0.5",
    ]);
    assert!(o.status.success());
    assert_eq!(fs::read(&ckpt).unwrap(), fs::read(&again).unwrap());
}

#[test]
fn train_reports_actionable_errors() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("nowhere");
    let o = hscf(&[
        "train",
        "--data",
        p(&missing),
        "--out",
        p(&dir.path().join("m.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("nowhere"), "{}", stderr(&o));

    let full = generate_synthetic_cohort(2, 3, 6, 0.4).unwrap();
    let no_nc: Vec<_> = full
        .subjects
        .iter()
        .filter(|s| s.label != Stage::Nc)
        .cloned()
        .collect();
    let cohort = Cohort::new(full.atlas.clone(), no_nc).unwrap();
    let data = dir.path().join("no_nc");
    save_cohort(&cohort, &data).unwrap();
    let o = hscf(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&dir.path().join("m.json")),
        "--task",
        "nc-emci",
        "--epochs",
        "1",
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("NC"), "{}", stderr(&o));

    let cfg = dir.path().join("cfg.json");
    fs::write(&cfg, r#"{"epochs": 2, "learning_rate": 0.1}"#).unwrap();
    let toy = toy_cohort(dir.path());
    let o = hscf(&[
        "train",
        "--data",
        p(&toy),
        "--out",
        p(&dir.path().join("m.json")),
        "--config",
        p(&cfg),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));
}

#[test]
fn eval_rejects_roi_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let toy = toy_cohort(dir.path());
    let other = dir.path().join("n8");
    assert!(hscf(&[
        "generate",
        "--out",
        p(&other),
        "--rois",
        "8",
        "--subjects-per-class",
        "2"
    ])
    .status
    .success());
    let ckpt = dir.path().join("m.json");
    assert!(hscf(&[
        "train",
        "--data",
        p(&toy),
        "--out",
        p(&ckpt),
        "--epochs",
        "1"
    ])
    .status
    .success());
    let o = hscf(&["eval", "--ckpt", p(&ckpt), "--data", p(&other)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(
        stderr(&o).contains("6 ROIs") && stderr(&o).contains("8"),
        "{}",
        stderr(&o)
    );
}

#[test]
fn analyze_reports() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("c");
    assert!(hscf(&[
        "generate",
        "--out",
        p(&data),
        "--rois",
        "20",
        "--subjects-per-class",
        "6",
        "--seed",
        "4"
    ])
    .status
    .success());
    let out = dir.path().join("input.json");
    let o = hscf(&[
        "analyze",
        "--data",
        p(&data),
        "--source",
        "input",
        "--out",
        p(&out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(&out).unwrap()).unwrap();
    let pairs = report["stage_pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 2);
    assert_eq!(pairs[0]["quantile"], 0.75);
    assert_eq!(pairs[0]["top_k"], 5);
    assert_eq!(pairs[0]["from"], "NC");
    assert_eq!(pairs[1]["to"], "LMCI");

    let empty = dir.path().join("empty.json");
    let o = hscf(&[
        "analyze",
        "--data",
        p(&data),
        "--source",
        "input",
        "--top-k",
        "0",
        "--out",
        p(&empty),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(&empty).unwrap()).unwrap();
    for pair in report["stage_pairs"].as_array().unwrap() {
        assert!(pair["increased"].as_array().unwrap().is_empty());
        assert!(pair["decreased"].as_array().unwrap().is_empty());
    }

    let ckpt = dir.path().join("m.json");
    assert!(hscf(&[
        "train",
        "--data",
        p(&data),
        "--out",
        p(&ckpt),
        "--epochs",
        "1"
    ])
    .status
    .success());
    let model_out = dir.path().join("model.json");
    let o = hscf(&[
        "analyze",
        "--data",
        p(&data),
        "--ckpt",
        p(&ckpt),
        "--out",
        p(&model_out),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(&model_out).unwrap()).unwrap();
    assert_eq!(report["source"], "model");
    assert_eq!(report["task"], "nc-emci");
    assert!(report["metrics"]["acc"].is_number());

    let o = hscf(&["analyze", "--data", p(&data), "--out", p(&model_out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn analyze_requires_every_stage() {
    let dir = tempfile::tempdir().unwrap();
    let full = generate_synthetic_cohort(2, 3, 6, 0.4).unwrap();
    let subjects: Vec<_> = full
        .subjects
        .iter()
        .filter(|s| s.label != Stage::Lmci)
        .cloned()
        .collect();
    let data = dir.path().join("two");
    save_cohort(&Cohort::new(full.atlas.clone(), subjects).unwrap(), &data).unwrap();
    let o = hscf(&[
        "analyze",
        "--data",
        p(&data),
        "--source",
        "input",
        "--out",
        p(&dir.path().join("a.json")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("LMCI"), "{}", stderr(&o));
}

#[test]
fn gradcheck_passes_and_catches_faults() {
    let o = hscf(&["gradcheck"]);
    assert!(o.status.success(), "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    assert!(text.contains("PASS"));
    for group in ["sep_ss.w1", "rec_fu.w", "clm_fused.w2", "cls.w_out"] {
        assert!(text.contains(group), "{text}");
    }
    let o = hscf(&["gradcheck", "--fault", "matmul"]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stdout(&o).contains("FAIL"));
    assert!(stdout(&o).contains("sep_ss.w2"), "{}", stdout(&o));
}
