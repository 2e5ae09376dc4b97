use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn phydnn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_phydnn"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn ok(out: Output) -> String {
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

#[test]
fn gen_train_report_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let stdout = ok(phydnn(
        &[
            "gen",
            "--n",
            "400",
            "--seed",
            "3",
            "--noise-rel",
            "0.05",
            "--out",
            "data.csv",
        ],
        d,
    ));
    assert!(stdout.contains("wrote 400 samples"));

    fs::write(
        d.join("cfg.json"),
        r#"{"model": "dnn", "epochs": 2, "batch_size": 50}"#,
    )
    .unwrap();
    let stdout = ok(phydnn(
        &[
            "train",
            "--config",
            "cfg.json",
            "--data",
            "data.csv",
            "--model",
            "phydnn",
            "--seed",
            "1",
            "--train-frac",
            "0.6",
            "--out",
            "run",
        ],
        d,
    ));
    assert!(stdout.contains("aurec bound"));
    let ckpt = fs::read_to_string(d.join("run/checkpoint.json")).unwrap();
    assert!(ckpt.contains("\"model_kind\": \"phydnn\""));
    assert!(ckpt.contains("\"train_fraction\": 0.6"));
    assert!(d.join("run/metrics.json").is_file());

    let stdout = ok(phydnn(
        &[
            "report",
            "--checkpoint",
            "run/checkpoint.json",
            "--split",
            "test",
            "--compare",
            "truth",
            "--bins",
            "8",
            "--out",
            "rep",
        ],
        d,
    ));
    assert!(stdout.contains("outputs in"));
    for f in [
        "drag_curves.csv",
        "improvement.csv",
        "ratio.csv",
        "field_histograms.csv",
        "report.json",
    ] {
        assert!(d.join("rep").join(f).is_file(), "{f}");
    }
}

#[test]
fn gridsearch_and_sweep_flags() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(phydnn(&["gen", "--n", "300", "--out", "data.csv"], d));
    fs::write(
        d.join("grid.json"),
        r#"{"lambda_p": [0.1, 0.01], "lambda_v": [0.001]}"#,
    )
    .unwrap();
    let stdout = ok(phydnn(
        &[
            "gridsearch",
            "--data",
            "data.csv",
            "--epochs",
            "1",
            "--grid",
            "grid.json",
            "--validation-frac",
            "0.25",
            "--out",
            "g",
        ],
        d,
    ));
    assert_eq!(
        stdout
            .lines()
            .filter(|l| l.starts_with("lambda_p="))
            .count(),
        2
    );
    assert_eq!(
        fs::read_to_string(d.join("g/gridsearch.csv"))
            .unwrap()
            .lines()
            .count(),
        3
    );

    let stdout = ok(phydnn(
        &[
            "sweep",
            "--data",
            "data.csv",
            "--epochs",
            "1",
            "--fractions",
            "0.35,0.85",
            "--seeds",
            "0",
            "--models",
            "dnn,mean_baseline",
            "--lambda-modes",
            "static",
            "--out",
            "s",
        ],
        d,
    ));
    assert!(stdout.starts_with("4 cells (0 failed)"));
    assert_eq!(
        fs::read_to_string(d.join("s/sweep.csv"))
            .unwrap()
            .lines()
            .count(),
        5
    );
}

#[test]
fn bad_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = phydnn(&["train", "--data", "missing.csv", "--out", "x"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("No such file"));

    let out = phydnn(&["train", "--model", "resnet", "--out", "x"], d);
    assert!(!out.status.success());

    fs::write(d.join("cfg.json"), r#"{"epoch": 3}"#).unwrap();
    let out = phydnn(&["train", "--config", "cfg.json", "--out", "x"], d);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown field"));
}
