use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn pual(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pual"))
        .args(args)
        .current_dir(cwd)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

/// Labeled positives at 2 and 2.5, unlabeled at -2 and -2.5.
fn write_toy(dir: &Path) {
    fs::write(dir.join("toy.csv"), "x,label\n2,p\n2.5,p\n-2,u\n-2.5,u\n").unwrap();
    fs::write(dir.join("probe.csv"), "x,label\n3,1\n-3,-1\n").unwrap();
}

#[test]
fn separable_toy_trains_predicts_and_evaluates() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_toy(d);
    for model in ["pual-linear", "gllc-linear"] {
        let o = pual(
            &[
                "train", "--model", model, "--data", "toy.csv", "--knn", "1", "--lambda", "0.1",
                "--sigma", "1", "--cu", "0.5", "--out", "m.toml",
            ],
            d,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let o = pual(
            &[
                "predict",
                "--model",
                "m.toml",
                "--data",
                "probe.csv",
                "--out",
                "p.csv",
            ],
            d,
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let preds = fs::read_to_string(d.join("p.csv")).unwrap();
        let mut lines = preds.lines();
        assert_eq!(lines.next(), Some("score,label"));
        let labels: Vec<&str> = lines.map(|l| l.rsplit(',').next().unwrap()).collect();
        assert_eq!(labels, ["1", "-1"]);
        let o = pual(&["eval", "--preds", "p.csv", "--truth", "probe.csv"], d);
        assert!(o.status.success());
        assert!(stdout(&o).starts_with("f1=1 "), "{}", stdout(&o));
    }
}

#[test]
fn unknown_model_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path());
    let o = pual(
        &[
            "train", "--model", "svm", "--data", "toy.csv", "--out", "m.toml",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("--model"), "{}", stderr(&o));
}

#[test]
fn negative_cu_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    write_toy(dir.path());
    let o = pual(
        &[
            "train",
            "--model",
            "pual-linear",
            "--data",
            "toy.csv",
            "--cu",
            "-1",
            "--out",
            "m.toml",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("--cu"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn missing_input_is_a_data_error_naming_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let o = pual(
        &[
            "train",
            "--model",
            "pual-linear",
            "--data",
            "absent.csv",
            "--out",
            "m.toml",
        ],
        dir.path(),
    );
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("absent.csv"));
}

#[test]
fn precomputed_models_refuse_new_points() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_toy(d);
    fs::write(
        d.join("gram.csv"),
        "1,0.5,0,0\n0.5,1,0,0\n0,0,1,0.5\n0,0,0.5,1\n",
    )
    .unwrap();
    let o = pual(
        &[
            "train",
            "--model",
            "pual-kernel",
            "--kernel",
            "precomputed",
            "--gram",
            "gram.csv",
            "--knn",
            "1",
            "--data",
            "toy.csv",
            "--out",
            "m.toml",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let o = pual(
        &[
            "predict",
            "--model",
            "m.toml",
            "--data",
            "probe.csv",
            "--out",
            "p.csv",
        ],
        d,
    );
    assert_ne!(o.status.code(), Some(0));
}

#[test]
fn synth_and_split_are_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for suffix in ["a", "b"] {
        let data = format!("d{suffix}.csv");
        assert!(pual(
            &["synth", "--mean-p2", "100", "--seed", "3", "--out", &data],
            d
        )
        .status
        .success());
        let o = pual(
            &[
                "split",
                "--mode",
                "case-control",
                "--gamma-prime",
                "7/17",
                "--seed",
                "4",
                "--in",
                &data,
                "--train-out",
                &format!("tr{suffix}.csv"),
                "--test-out",
                &format!("te{suffix}.csv"),
            ],
            d,
        );
        assert!(o.status.success(), "{}", stderr(&o));
    }
    for f in ["d", "tr", "te"] {
        assert_eq!(
            fs::read(d.join(format!("{f}a.csv"))).unwrap(),
            fs::read(d.join(format!("{f}b.csv"))).unwrap()
        );
    }
}

#[test]
fn config_supplies_defaults_that_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_toy(d);
    fs::write(
        d.join("run.toml"),
        "[train]\nmodel = \"gllc-linear\"\ncu = 0.25\nknn = 1\n",
    )
    .unwrap();
    let o = pual(
        &[
            "--config", "run.toml", "train", "--data", "toy.csv", "--cu", "0.4", "--out", "m.toml",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let saved = fs::read_to_string(d.join("m.toml")).unwrap();
    assert!(saved.contains("model_kind = \"gllc-linear\""));
    assert!(saved.contains("cu = 0.4"));
}

#[test]
fn tune_writes_a_result_file() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(pual(
        &["synth", "--mean-p2", "50", "--seed", "1", "--out", "d.csv"],
        d
    )
    .status
    .success());
    assert!(pual(
        &[
            "split",
            "--seed",
            "2",
            "--in",
            "d.csv",
            "--train-out",
            "tr.csv",
            "--test-out",
            "te.csv"
        ],
        d
    )
    .status
    .success());
    let o = pual(
        &[
            "tune",
            "--data",
            "tr.csv",
            "--model",
            "gllc-linear",
            "--preset",
            "reduced",
            "--folds",
            "3",
            "--seed",
            "5",
            "--out",
            "t.toml",
        ],
        d,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let text = fs::read_to_string(d.join("t.toml")).unwrap();
    assert!(text.contains("[best]"));
}
