use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn cascade(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascade")).args(args).output().expect("binary runs")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

struct Panel {
    dir: TempDir,
}

impl Panel {
    /// Synthetic labels, predictions and a 5-fold split.
    fn new(skill: &str) -> Panel {
        let dir = TempDir::new().unwrap();
        let d = dir.path();
        let out =
            cascade(&["synth", "--out", p(d), "--images", "600", "--models", "3", "--skill", skill, "--seed", "5"]);
        assert!(out.status.success(), "{}", stderr(&out));
        let out = cascade(&["split", "--labels", p(&d.join("labels.csv")), "--out", p(d), "--seed", "5"]);
        assert!(out.status.success(), "{}", stderr(&out));
        Panel { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn calibrate(&self, predictions: &Path, out: &Path) -> Output {
        cascade(&[
            "calibrate",
            "--predictions",
            p(predictions),
            "--labels",
            p(&self.path("labels.csv")),
            "--splits",
            p(&self.path("splits.csv")),
            "--out",
            p(out),
        ])
    }
}

fn thresholds(path: &Path) -> Vec<Value> {
    serde_json::from_str::<Value>(&fs::read_to_string(path).unwrap()).unwrap().as_array().unwrap().clone()
}

#[test]
fn split_writes_every_fold_and_rejects_one_fold() {
    let panel = Panel::new("0.5");
    let text = fs::read_to_string(panel.path("splits.csv")).unwrap();
    let folds: std::collections::BTreeSet<&str> = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap()).collect();
    assert_eq!(folds.into_iter().collect::<Vec<_>>(), ["1", "2", "3", "4", "5"]);
    assert_eq!(text.lines().count(), 1 + 5 * 600);

    let out =
        cascade(&["split", "--labels", p(&panel.path("labels.csv")), "--out", p(panel.dir.path()), "--folds", "1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = cascade(&["split", "--out", p(panel.dir.path())]);
    assert_eq!(out.status.code(), Some(2), "missing --labels is a usage error");
    assert!(stderr(&out).contains("--labels"));
    let out = cascade(&["split", "--labels", p(&panel.path("labels.csv")), "--out", "x", "--ratios", "0.8,0.1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn malformed_labels_are_data_errors() {
    let dir = TempDir::new().unwrap();
    let labels = dir.path().join("labels.csv");
    fs::write(&labels, "image_id,label\na,healthy\nb,Healthy\n").unwrap();
    let out = cascade(&["split", "--labels", p(&labels), "--out", p(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));
}

#[test]
fn calibrate_writes_one_threshold_per_fold_and_stage() {
    let panel = Panel::new("0.5");
    let out = panel.calibrate(&panel.path("predictions.csv"), panel.dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let entries = thresholds(&panel.path("thresholds.json"));
    assert_eq!(entries.len(), 4 * 10);
    assert_eq!(entries.iter().filter(|e| e["method"] == "ensemble").count(), 10);
    for e in &entries {
        let t = e["threshold"].as_f64().unwrap();
        let s = e["achieved_score"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&t) && (0.0..=100.0).contains(&s));
    }
}

#[test]
fn calibrate_names_missing_fold_and_stage() {
    let panel = Panel::new("0.5");
    let full = fs::read_to_string(panel.path("predictions.csv")).unwrap();
    let cut: String = full.lines().filter(|l| !l.contains(",3,stage2,")).map(|l| format!("{l}\n")).collect();
    let cut_path = panel.path("cut.csv");
    fs::write(&cut_path, cut).unwrap();
    let out = panel.calibrate(&cut_path, &panel.path("cut_out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("fold 3 / stage2"), "{}", stderr(&out));
}

#[test]
fn perfect_panel_calibrates_and_evaluates_perfectly() {
    let panel = Panel::new("1.0");
    let out = panel.calibrate(&panel.path("predictions.csv"), panel.dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(thresholds(&panel.path("thresholds.json")).iter().all(|e| e["achieved_score"] == 100.0));

    let out = cascade(&[
        "evaluate",
        "--predictions",
        p(&panel.path("predictions.csv")),
        "--labels",
        p(&panel.path("labels.csv")),
        "--splits",
        p(&panel.path("splits.csv")),
        "--thresholds",
        p(&panel.path("thresholds.json")),
        "--out",
        p(panel.dir.path()),
    ]);
    assert!(out.status.success(), "{}", stderr(&out));
    let report: Value = serde_json::from_str(&fs::read_to_string(panel.path("report.json")).unwrap()).unwrap();
    let methods = report["methods"].as_array().unwrap();
    let names: Vec<&str> = methods.iter().map(|m| m["method"].as_str().unwrap()).collect();
    assert_eq!(names, ["Random Prediction", "model_1", "model_2", "model_3", "Ensemble"]);
    let ensemble = methods.last().unwrap();
    for (name, summary) in ensemble["aggregate"].as_object().unwrap() {
        let means: Vec<f64> = match summary {
            Value::Array(items) => items.iter().map(|s| s["mean"].as_f64().unwrap()).collect(),
            s => vec![s["mean"].as_f64().unwrap()],
        };
        assert!(means.iter().all(|&m| m > 99.0), "{name}: {means:?}");
    }

    let csv = fs::read_to_string(panel.path("report.csv")).unwrap();
    let aggregate = csv.lines().find(|l| l.starts_with("Ensemble,mean,")).unwrap();
    assert!(aggregate.split(',').skip(2).all(|v| v.contains(" ± ") && v.split(" ± ").count() == 2));
    assert_eq!(csv.lines().count(), 1 + 5 * 6);
}

#[test]
fn predict_votes_across_folds_and_lists_gaps() {
    let panel = Panel::new("0.6");
    assert!(panel.calibrate(&panel.path("predictions.csv"), panel.dir.path()).status.success());
    let predict = |predictions: &Path, out: &Path| {
        cascade(&[
            "predict",
            "--predictions",
            p(predictions),
            "--thresholds",
            p(&panel.path("thresholds.json")),
            "--out",
            p(out),
        ])
    };
    let out = predict(&panel.path("predictions.csv"), panel.dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(panel.path("predictions_final.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next(),
        Some("image_id,final_label,p_rubbish,p_healthy_composed,p_unhealthy_composed,votes_stage1,votes_stage2")
    );
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        let r = f[5].matches('R').count();
        assert_eq!(f[5].len(), 5);
        if r >= 3 {
            assert_eq!((f[1], f[6]), ("rubbish", ""));
        } else {
            let h = f[6].matches('H').count();
            assert_eq!(f[1], if h >= 3 { "healthy" } else { "unhealthy" });
        }
        let sum: f64 = f[2..5].iter().map(|v| v.parse::<f64>().unwrap()).sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    let full = fs::read_to_string(panel.path("predictions.csv")).unwrap();
    let cut: String =
        full.lines().filter(|l| !l.starts_with("img_005,model_2,2,stage1")).map(|l| format!("{l}\n")).collect();
    let cut_path = panel.path("cut.csv");
    fs::write(&cut_path, cut).unwrap();
    let out = predict(&cut_path, &panel.path("cut_out"));
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("img_005: fold 2 / stage1"), "{}", stderr(&out));
}

#[test]
fn synth_is_deterministic_and_validates_config() {
    let dir = TempDir::new().unwrap();
    let run = |name: &str| {
        let out = cascade(&["synth", "--out", p(&dir.path().join(name)), "--images", "50", "--seed", "9"]);
        assert!(out.status.success(), "{}", stderr(&out));
        fs::read(dir.path().join(name).join("predictions.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));

    let out = cascade(&["synth", "--out", p(dir.path()), "--priors", "0.5,0.5,0.5,0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("class_priors"));
    let out = cascade(&["synth", "--out", p(dir.path()), "--images", "0"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("n_images"));
}

#[test]
fn flags_override_config_file_and_config_is_persisted() {
    let dir = TempDir::new().unwrap();
    let config = dir.path().join("config.json");
    fs::write(&config, r#"{"seed": 3, "folds": 2, "synthetic": {"n_images": 40, "n_models": 2}}"#).unwrap();
    let out_dir = dir.path().join("run");
    let out = cascade(&["synth", "--config", p(&config), "--seed", "4", "--out", p(&out_dir)]);
    assert!(out.status.success(), "{}", stderr(&out));
    let resolved: Value = serde_json::from_str(&fs::read_to_string(out_dir.join("run_config.json")).unwrap()).unwrap();
    assert_eq!(resolved["seed"], 4);
    assert_eq!(resolved["folds"], 2);
    assert_eq!(resolved["synthetic"]["n_images"], 40);
    assert_eq!(resolved["synthetic"]["model_skill"].as_array().unwrap().len(), 2);

    // the persisted config alone reproduces the run
    let again = dir.path().join("again");
    let out = cascade(&["synth", "--config", p(&out_dir.join("run_config.json")), "--out", p(&again)]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(fs::read(out_dir.join("predictions.csv")).unwrap(), fs::read(again.join("predictions.csv")).unwrap());

    fs::write(&config, r#"{"sede": 3}"#).unwrap();
    let out = cascade(&["synth", "--config", p(&config), "--out", p(&out_dir)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn log_level_comes_from_environment() {
    let panel = Panel::new("0.5");
    let out = Command::new(env!("CARGO_BIN_EXE_cascade"))
        .env("CASCADE_LOG", "info")
        .args(["calibrate", "--predictions", p(&panel.path("predictions.csv"))])
        .args(["--labels", p(&panel.path("labels.csv")), "--splits", p(&panel.path("splits.csv"))])
        .args(["--out", p(panel.dir.path())])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(stderr(&out).contains("thresholds for 4 methods"), "{}", stderr(&out));
}

#[test]
fn split_exports_balanced_class_weights_per_fold() {
    let panel = Panel::new("0.5");
    let labels: std::collections::HashMap<String, String> = fs::read_to_string(panel.path("labels.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| {
            let (id, label) = l.split_once(',').unwrap();
            (id.to_string(), label.to_string())
        })
        .collect();
    let splits = fs::read_to_string(panel.path("splits.csv")).unwrap();
    let weights: Vec<Value> =
        serde_json::from_str(&fs::read_to_string(panel.path("class_weights.json")).unwrap()).unwrap();
    assert_eq!(weights.len(), 5);
    for entry in &weights {
        let fold = entry["fold"].as_u64().unwrap().to_string();
        let train: Vec<&str> = splits
            .lines()
            .skip(1)
            .filter_map(|l| {
                let f: Vec<&str> = l.split(',').collect();
                (f[1] == fold && f[2] == "train").then_some(labels[f[0]].as_str())
            })
            .collect();
        let count = |pred: &dyn Fn(&str) -> bool| train.iter().filter(|l| pred(l)).count() as f64;
        // Each class times its weight contributes N / C.
        let rubbish = count(&|l| l == "rubbish");
        let suitable = train.len() as f64 - rubbish;
        let s1 = &entry["stage1"];
        let half = train.len() as f64 / 2.0;
        assert!((rubbish * s1["rubbish"].as_f64().unwrap() - half).abs() < 1e-9);
        assert!((suitable * s1["suitable"].as_f64().unwrap() - half).abs() < 1e-9);
        let healthy = count(&|l| l == "healthy");
        let unhealthy = count(&|l| l == "unhealthy");
        let half = (healthy + unhealthy) / 2.0;
        let s2 = &entry["stage2"];
        assert!((healthy * s2["healthy"].as_f64().unwrap() - half).abs() < 1e-9);
        assert!((unhealthy * s2["unhealthy"].as_f64().unwrap() - half).abs() < 1e-9);
    }
}
