use std::path::{Path, PathBuf};
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_varndrr");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Writes a small synthetic corpus and returns its path.
fn synth(dir: &Path) -> PathBuf {
    let path = dir.join("corpus.tsv");
    let o = run(&["synth", "--out", s(&path), "--vocab-size", "30", "--train", "80", "--dev", "30", "--test", "30"]);
    assert!(o.status.success(), "{}", stderr(&o));
    path
}

const SMALL: [&str; 8] = ["--vocab-size", "31", "--hidden-dim", "6", "--latent-dim", "3", "--task", "EXP"];

fn train(corpus: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--corpus", s(corpus), "--out", s(out)];
    args.extend(SMALL);
    if !extra.contains(&"--epochs") {
        args.extend(["--epochs", "3"]);
    }
    args.extend(extra);
    run(&args)
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--task", "EXP", "--out", "x"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--task", "FOO"]).status.code(), Some(1));
    assert_eq!(run(&[]).status.code(), Some(1));
}

#[test]
fn synth_is_deterministic_and_writes_truth() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(dir.path());
    let bytes = std::fs::read(&a).unwrap();
    let b = dir.path().join("again.tsv");
    let o = run(&["synth", "--out", s(&b), "--vocab-size", "30", "--train", "80", "--dev", "30", "--test", "30"]);
    assert!(o.status.success());
    assert_eq!(bytes, std::fs::read(&b).unwrap());
    let truth: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("corpus.tsv.truth.json")).unwrap()).unwrap();
    assert_eq!(truth["train"]["positive"], 40);
    assert_eq!(truth["test"]["negative"], 22);
    assert_eq!(String::from_utf8(bytes).unwrap().lines().count(), 140);
}

#[test]
fn synth_to_bad_path_fails() {
    let o = run(&["synth", "--out", "/nonexistent-dir/x.tsv"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn train_eval_predict_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let before = std::fs::read(&corpus).unwrap();
    let out = dir.path().join("run");
    let o = train(&corpus, &out, &[]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(std::fs::read(&corpus).unwrap(), before, "corpus modified");
    for f in ["checkpoint.json", "history.csv", "manifest.json", "metrics.csv"] {
        assert!(out.join(f).exists(), "{f} missing");
    }
    let history = std::fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(history.lines().count(), 4);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["max_epochs"], 3);
    assert!(manifest["timings"]["training_seconds"].is_number());

    let ckpt = out.join("checkpoint.json");
    let e1 = run(&["eval", "--checkpoint", s(&ckpt), "--corpus", s(&corpus), "--split", "test"]);
    assert!(e1.status.success(), "{}", stderr(&e1));
    let e2 = run(&["eval", "--checkpoint", s(&ckpt), "--corpus", s(&corpus), "--split", "test"]);
    assert_eq!(stdout(&e1), stdout(&e2));
    assert!(stdout(&e1).contains("VarNDRR (ref)"));
    assert!(stdout(&e1).contains("71.48"));
    let metrics = std::fs::read_to_string(out.join("metrics_test.csv")).unwrap();
    let row: Vec<&str> = metrics.lines().nth(1).unwrap().split(',').collect();
    let predicted_positive: usize = row[5].parse::<usize>().unwrap() + row[6].parse::<usize>().unwrap();

    // Full corpus lines of the test split: predictions must agree with eval.
    let test_lines: String = std::fs::read_to_string(&corpus)
        .unwrap()
        .lines()
        .filter(|l| l.starts_with("test\t"))
        .map(|l| format!("{l}\n"))
        .collect();
    let input = dir.path().join("predict.tsv");
    std::fs::write(&input, test_lines).unwrap();
    let p = run(&["predict", "--checkpoint", s(&ckpt), "--corpus", s(&input)]);
    assert!(p.status.success(), "{}", stderr(&p));
    let text = stdout(&p);
    assert_eq!(text.lines().count(), 30);
    let mut positives = 0;
    for line in text.lines() {
        let (label, prob) = line.split_once('\t').unwrap();
        let prob: f64 = prob.parse().unwrap();
        assert!(prob > 0.0 && prob < 1.0);
        assert_eq!(label == "EXP", prob >= 0.5, "{line}");
        positives += usize::from(label == "EXP");
    }
    assert_eq!(positives, predicted_positive);

    // Two-field records work too, and empty input gives empty output.
    std::fs::write(&input, "w00001 w00002\tw00003\n").unwrap();
    let p = run(&["predict", "--checkpoint", s(&ckpt), "--corpus", s(&input)]);
    assert_eq!(stdout(&p).lines().count(), 1);
    std::fs::write(&input, "").unwrap();
    let p = run(&["predict", "--checkpoint", s(&ckpt), "--corpus", s(&input)]);
    assert!(p.status.success());
    assert_eq!(stdout(&p), "");
}

#[test]
fn manifest_alone_reproduces_history() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let first = dir.path().join("first");
    assert!(train(&corpus, &first, &["--seed", "5"]).status.success());
    let second = dir.path().join("second");
    let o = run(&[
        "train",
        "--from-manifest",
        s(&first.join("manifest.json")),
        "--out",
        s(&second),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(
        std::fs::read(first.join("history.csv")).unwrap(),
        std::fs::read(second.join("history.csv")).unwrap()
    );
    assert_eq!(
        std::fs::read(first.join("checkpoint.json")).unwrap(),
        std::fs::read(second.join("checkpoint.json")).unwrap()
    );
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        format!(
            "# small run\ncorpus = {}\ntask = EXP\nvocab_size = 31\nhidden-dim = 6\nlatent-dim = 3\nepochs = 4\nbatch = 8\n",
            s(&corpus)
        ),
    )
    .unwrap();
    let out = dir.path().join("run");
    let o = run(&["train", "--config", s(&config), "--out", s(&out), "--epochs", "2"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["config"]["max_epochs"], 2);
    assert_eq!(manifest["config"]["batch_size"], 8);
    assert_eq!(manifest["config"]["dims"]["d_z"], 3);

    std::fs::write(&config, "colour = blue\n").unwrap();
    let o = run(&["train", "--config", s(&config), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn data_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let missing = dir.path().join("missing.tsv");
    assert_eq!(train(&missing, &out, &[]).status.code(), Some(2));

    let bad = dir.path().join("bad.tsv");
    std::fs::write(&bad, "train\tEXP\ta b\tc\ntrain\tFOO\ta\tb\n").unwrap();
    let o = train(&bad, &out, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains(":2"), "{}", stderr(&o));
}

#[test]
fn wrong_dimension_checkpoint_is_a_shape_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let out = dir.path().join("run");
    assert!(train(&corpus, &out, &["--epochs", "1"]).status.success());
    let path = out.join("checkpoint.json");
    let mut ckpt: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    ckpt["dims"]["d_z"] = 4.into();
    std::fs::write(&path, ckpt.to_string()).unwrap();
    let o = run(&["eval", "--checkpoint", s(&path), "--corpus", s(&corpus)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shape"), "{}", stderr(&o));
}

#[test]
fn divergence_exits_three() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path());
    let o = train(&corpus, &dir.path().join("run"), &["--learning-rate", "1e300"]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
