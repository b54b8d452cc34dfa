//! End-to-end runs of the command-line binary.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn umtsvm(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_umtsvm"))
        .args(args)
        .current_dir(dir)
        .env_remove("UMTSVM_SEED")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a noisy three-task synthetic set and returns its path.
fn synth(dir: &TempDir, per_class: &str, noise: &str) -> PathBuf {
    let path = dir.path().join("data.csv");
    let o = umtsvm(
        &["synth", "--out", "data.csv", "--per-class", per_class, "--noise", noise, "--seed", "11"],
        dir.path(),
    );
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

#[test]
fn train_then_predict_on_separable_training_data() {
    let dir = TempDir::new().unwrap();
    synth(&dir, "20", "0.2");
    let train = umtsvm(
        &[
            "train", "--method", "ls-umtsvm", "--data", "data.csv", "--task-col", "task", "--c1", "1", "--c2", "1",
            "--cu", "0.5", "--cu-star", "0.5", "--mu1", "1", "--mu2", "1", "--eps", "0.3", "--kernel", "gaussian",
            "--gamma", "0.25", "--out", "m.model",
        ],
        dir.path(),
    );
    assert_eq!(train.status.code(), Some(0), "{}", stderr(&train));
    assert!(dir.path().join("m.model").exists());
    assert!(stdout(&train).contains("tasks 3"));

    let pred = umtsvm(&["predict", "--model", "m.model", "--data", "data.csv", "--out", "p.csv"], dir.path());
    assert_eq!(pred.status.code(), Some(0), "{}", stderr(&pred));
    let predicted: Vec<String> = fs::read_to_string(dir.path().join("p.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().to_string())
        .collect();
    let truth: Vec<String> = fs::read_to_string(dir.path().join("data.csv"))
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(2).unwrap().to_string())
        .collect();
    assert_eq!(predicted.len(), truth.len());
    let hits = predicted.iter().zip(&truth).filter(|(p, t)| p == t).count();
    assert!(hits as f64 >= 0.99 * truth.len() as f64, "{hits}/{}", truth.len());
}

#[test]
fn missing_data_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let o = umtsvm(&["train", "--method", "umtsvm", "--out", "m.json"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--data"));
    assert!(stderr(&o).contains("Usage"));
}

#[test]
fn epsilon_outside_unit_interval_is_rejected() {
    let dir = TempDir::new().unwrap();
    synth(&dir, "10", "0.5");
    let o = umtsvm(&["train", "--method", "umtsvm", "--data", "data.csv", "--eps", "1.5"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("epsilon must lie in (0,1)"), "{}", stderr(&o));
}

#[test]
fn unknown_flag_exits_with_validation_code() {
    let dir = TempDir::new().unwrap();
    let o = umtsvm(&["cv", "--no-such-flag"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn cv_prints_table_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    synth(&dir, "15", "0.8");
    let args = ["cv", "--method", "all", "--data", "data.csv", "--seed", "5"];
    let first = umtsvm(&args, dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    let text = stdout(&first);
    assert!(text.contains("Acc(%) ± Std"));
    assert!(text.contains("Time(s)"));
    for label in ["DMTSVM", "MTLS-TWSVM", "UMTSVM", "LS-UMTSVM"] {
        assert!(text.lines().any(|l| l.starts_with(label)), "missing {label}");
    }
    let second = umtsvm(&args, dir.path());
    // Timing columns differ between runs; accuracies must not.
    let strip = |s: &str| -> Vec<String> {
        s.lines()
            .map(|l| l.rsplit_once(char::is_whitespace).map_or(l, |(head, _)| head).trim_end().to_string())
            .collect()
    };
    assert_eq!(strip(&text), strip(&stdout(&second)));
}

#[test]
fn grid_product_and_csv_rows() {
    let dir = TempDir::new().unwrap();
    synth(&dir, "10", "0.8");
    let o = umtsvm(
        &[
            "gridsearch", "--method", "umtsvm", "--data", "data.csv", "--grid", "c1=1,2", "--grid", "mu1=1", "--out",
            "grid.csv",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stdout(&o).contains("configurations 2"));
    let table = fs::read_to_string(dir.path().join("grid.csv")).unwrap();
    assert_eq!(table.lines().count(), 3);
}

#[test]
fn bench_without_universum_matches_baselines() {
    let dir = TempDir::new().unwrap();
    synth(&dir, "15", "1.0");
    let o = umtsvm(&["bench", "--data", "data.csv", "--universum", "off", "--seed", "3"], dir.path());
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = stdout(&o);
    let accuracy = |label: &str| -> String {
        let line = text.lines().find(|l| l.split_whitespace().next() == Some(label)).unwrap();
        line.split_whitespace().take(4).collect::<Vec<_>>().join(" ")
    };
    let strip = |row: String| row.split_once(' ').unwrap().1.to_string();
    assert_eq!(strip(accuracy("UMTSVM")), strip(accuracy("DMTSVM")));
    assert_eq!(strip(accuracy("LS-UMTSVM")), strip(accuracy("MTLS-TWSVM")));
    for line in text.lines().filter(|l| l.contains('±') && !l.starts_with("Method")) {
        let time: f64 = line.split_whitespace().last().unwrap().parse().unwrap();
        assert!(time.is_finite());
    }
}

#[test]
fn predict_edge_cases() {
    let dir = TempDir::new().unwrap();
    synth(&dir, "10", "0.5");
    let train = umtsvm(&["train", "--method", "umtsvm", "--data", "data.csv", "--out", "m.json"], dir.path());
    assert_eq!(train.status.code(), Some(0), "{}", stderr(&train));

    fs::write(dir.path().join("empty.csv"), "").unwrap();
    let empty = umtsvm(&["predict", "--model", "m.json", "--data", "empty.csv"], dir.path());
    assert_eq!(empty.status.code(), Some(0));
    assert!(stdout(&empty).is_empty());

    fs::write(dir.path().join("odd.csv"), "x1,x2,task\n0.1,0.2,42\n").unwrap();
    let odd = umtsvm(&["predict", "--model", "m.json", "--data", "odd.csv"], dir.path());
    assert_eq!(odd.status.code(), Some(1));
    assert!(stderr(&odd).contains("42"), "{}", stderr(&odd));

    fs::write(dir.path().join("narrow.csv"), "x1,task\n0.1,1\n").unwrap();
    let narrow = umtsvm(&["predict", "--model", "m.json", "--data", "narrow.csv"], dir.path());
    assert_eq!(narrow.status.code(), Some(1));
}

#[test]
fn config_file_values_are_overridden_by_flags() {
    let dir = TempDir::new().unwrap();
    synth(&dir, "10", "0.5");
    fs::write(dir.path().join("run.cfg"), "# experiment\nmethod = umtsvm\ndata = data.csv\nout = m.json\neps = 1.5\n").unwrap();
    let bad = umtsvm(&["train", "--config", "run.cfg"], dir.path());
    assert_eq!(bad.status.code(), Some(1));
    let good = umtsvm(&["train", "--config", "run.cfg", "--eps", "0.4"], dir.path());
    assert_eq!(good.status.code(), Some(0), "{}", stderr(&good));
}
