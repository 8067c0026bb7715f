use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_suaex");

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/golden")
}

/// A temp dir holding the golden corpus, test data and config.
fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    for f in ["corpus.txt", "test.tsv", "suaex.toml"] {
        fs::copy(golden_dir().join(f), dir.path().join(f)).unwrap();
    }
    dir
}

fn suaex(config: &Path, args: &[&str]) -> Output {
    Command::new(BIN)
        .arg("--config")
        .arg(config)
        .args(args)
        .output()
        .unwrap()
}

fn ok(out: Output) {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn macro_f1(report: &str) -> f64 {
    let line = report.lines().find(|l| l.starts_with("__macro__")).unwrap();
    line.split('\t').nth(3).unwrap().parse().unwrap()
}

#[test]
fn golden_pipeline_scores_well() {
    let dir = workspace();
    let cfg = dir.path().join("suaex.toml");
    ok(suaex(&cfg, &["pipeline"]));
    let report = fs::read_to_string(dir.path().join("out/report.tsv")).unwrap();
    assert!(macro_f1(&report) >= 0.9, "{report}");
    for f in [
        "model.txt",
        "groups.tsv",
        "output1.tsv",
        "output2.tsv",
        "lexicon.tsv",
        "plot.csv",
    ] {
        assert!(dir.path().join("out").join(f).is_file(), "{f}");
    }
}

#[test]
fn pipeline_equals_subcommands_in_sequence() {
    let a = workspace();
    let b = workspace();
    ok(suaex(
        &a.path().join("suaex.toml"),
        &["pipeline", "--threads", "1"],
    ));
    let cfg = b.path().join("suaex.toml");
    for cmd in ["train", "expand", "annotate", "classify", "aspects", "eval"] {
        ok(suaex(&cfg, &[cmd, "--threads", "1"]));
    }
    for f in [
        "model.txt",
        "groups.tsv",
        "output1.tsv",
        "output2.tsv",
        "lexicon.tsv",
        "report.tsv",
        "plot.csv",
    ] {
        let x = fs::read(a.path().join("out").join(f)).unwrap();
        let y = fs::read(b.path().join("out").join(f)).unwrap();
        assert!(x == y, "{f} differs");
    }
}

#[test]
fn train_is_deterministic_for_a_seed() {
    let dir = workspace();
    let cfg = dir.path().join("suaex.toml");
    let model = dir.path().join("out/model.txt");
    ok(suaex(&cfg, &["train", "--seed", "7"]));
    let first = fs::read(&model).unwrap();
    ok(suaex(&cfg, &["train", "--seed", "7"]));
    assert_eq!(first, fs::read(&model).unwrap());
    ok(suaex(&cfg, &["train", "--seed", "8"]));
    assert_ne!(first, fs::read(&model).unwrap());
}

#[test]
fn unknown_gold_label_fails_eval() {
    let dir = workspace();
    let cfg = dir.path().join("suaex.toml");
    ok(suaex(&cfg, &["train"]));
    ok(suaex(&cfg, &["annotate"]));
    ok(suaex(&cfg, &["classify"]));
    let test = dir.path().join("test.tsv");
    let text = fs::read_to_string(&test)
        .unwrap()
        .replacen("\tfood\n", "\tdrinks\n", 1);
    fs::write(&test, text).unwrap();
    let out = suaex(&cfg, &["eval"]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(
        stderr.contains("drinks") && stderr.contains("not a configured category"),
        "{stderr}"
    );
    assert_eq!(stderr.lines().count(), 1);
}

#[test]
fn config_errors_come_before_any_output() {
    let dir = workspace();
    let cfg = dir.path().join("suaex.toml");
    let text = fs::read_to_string(&cfg).unwrap();

    fs::write(&cfg, text.replace("dimensions = 50", "dimensions = 0")).unwrap();
    let out = suaex(&cfg, &["pipeline"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!dir.path().join("out").exists());

    fs::write(
        &cfg,
        text.replace("test_data = \"test.tsv\"", "test_data = \"missing.tsv\""),
    )
    .unwrap();
    let out = suaex(&cfg, &["pipeline"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.tsv"));
    assert!(!dir.path().join("out").exists());

    fs::write(
        &cfg,
        text.replace(
            "[[groups]]\ncategory = \"staff\"",
            "[[groups]]\ncategory = \"food\"",
        ),
    )
    .unwrap();
    assert_eq!(suaex(&cfg, &["pipeline"]).status.code(), Some(2));
    assert!(!dir.path().join("out").exists());
}

#[test]
fn existing_outputs_survive_a_config_error() {
    let dir = workspace();
    let cfg = dir.path().join("suaex.toml");
    ok(suaex(&cfg, &["pipeline"]));
    let report = dir.path().join("out/report.tsv");
    let before = fs::read(&report).unwrap();
    let text = fs::read_to_string(&cfg).unwrap();
    fs::write(
        &cfg,
        text.replace("aggregation = \"mean\"", "aggregation = \"median\""),
    )
    .unwrap();
    assert_eq!(suaex(&cfg, &["pipeline"]).status.code(), Some(2));
    assert_eq!(before, fs::read(&report).unwrap());
}

#[test]
fn filter_keeps_matching_reviews() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("raw.txt"),
        "Great Pizza here.\nNice hotel room.\nThe pizzas were cold.\n",
    )
    .unwrap();
    fs::write(
        dir.path().join("f.toml"),
        "[paths]\nraw_corpus = \"raw.txt\"\nfiltered_corpus = \"out/f.txt\"\n\
         [filter]\nkeywords = [\"pizza\"]\n[preprocess]\nstemmer = \"snowball\"\n\
         [[groups]]\ncategory = \"food\"\nwords = [\"food\"]\n",
    )
    .unwrap();
    ok(suaex(&dir.path().join("f.toml"), &["filter"]));
    let kept = fs::read_to_string(dir.path().join("out/f.txt")).unwrap();
    assert_eq!(kept, "Great Pizza here.\nThe pizzas were cold.\n");
}

#[test]
fn bench_writes_a_timing_report() {
    let dir = workspace();
    let cfg = dir.path().join("suaex.toml");
    ok(suaex(&cfg, &["bench"]));
    let timing = fs::read_to_string(dir.path().join("out/timing.tsv")).unwrap();
    let stages: Vec<&str> = timing
        .lines()
        .map(|l| l.split('\t').next().unwrap())
        .collect();
    assert_eq!(
        stages,
        [
            "stage",
            "preprocess",
            "train",
            "annotate",
            "classify",
            "evaluate",
            "attention"
        ]
    );
    let attention = timing.lines().last().unwrap();
    assert_eq!(attention.split('\t').nth(2), Some("30"));
}

#[test]
fn missing_subcommand_or_config_fails() {
    let out = Command::new(BIN)
        .arg("train")
        .arg("--config")
        .arg("/nonexistent/x.toml")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("suaex: config error"));
}
