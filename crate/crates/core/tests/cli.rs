use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use bownmt::app::LOG_HEADER;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bownmt"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn bownmt")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen_toy(dir: &Path, pairs: usize) -> [PathBuf; 4] {
    let out = run(&[
        "gen-toy",
        "--out-dir",
        s(dir),
        "--name",
        "toy",
        "--alphabet",
        "6",
        "--min-len",
        "2",
        "--max-len",
        "4",
        "--pairs",
        &pairs.to_string(),
        "--test-pairs",
        "5",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    ["toy.src", "toy.tgt", "toy.test.src", "toy.test.tgt"].map(|n| dir.join(n))
}

/// One-epoch tiny training run; returns the checkpoint directory.
fn tiny_train(dir: &Path, files: &[PathBuf; 4], extra: &[&str]) -> PathBuf {
    let ckpt = dir.join("ckpt");
    let mut args = vec![
        "train",
        "--train-src",
        s(&files[0]),
        "--train-tgt",
        s(&files[1]),
        "--checkpoint-dir",
        s(&ckpt),
        "--emb-size",
        "8",
        "--hidden-size",
        "8",
        "--enc-layers",
        "1",
        "--dec-layers",
        "1",
        "--batch-size",
        "8",
        "--epochs",
        "1",
    ];
    args.extend_from_slice(extra);
    let out = run(&args);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    ckpt
}

#[test]
fn one_epoch_on_one_batch_writes_checkpoint_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let files = gen_toy(dir.path(), 8);
    let ckpt = tiny_train(dir.path(), &files, &[]);
    assert!(ckpt.join("model.ckpt").exists());
    assert!(ckpt.join("epoch-000.ckpt").exists());
    let log = fs::read_to_string(ckpt.join("train.log")).unwrap();
    let lines: Vec<&str> = log.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(lines[0], LOG_HEADER);
    let cols: Vec<&str> = lines[1].split('\t').collect();
    assert_eq!((cols[0], cols[1]), ("0", "0.1000"));
    assert_eq!((cols[5], cols[6]), ("-", "-"));
}

#[test]
fn baseline_and_default_share_epoch_zero_word_loss_start() {
    // One batch per epoch: the epoch mean is the pre-update loss of the
    // first batch, which only depends on the shared initialization.
    let dir = tempfile::tempdir().unwrap();
    let files = gen_toy(dir.path(), 8);
    let a = tiny_train(&dir.path().join("a"), &files, &["--dropout", "0"]);
    let b = tiny_train(&dir.path().join("b"), &files, &["--dropout", "0", "--baseline"]);
    let l1 = |d: &Path| {
        let log = fs::read_to_string(d.join("train.log")).unwrap();
        log.lines().nth(1).unwrap().split('\t').nth(2).unwrap().to_string()
    };
    assert_eq!(l1(&a), l1(&b));
}

#[test]
fn translate_is_deterministic_and_handles_empty_input() {
    let dir = tempfile::tempdir().unwrap();
    let files = gen_toy(dir.path(), 16);
    let ckpt = tiny_train(dir.path(), &files, &[]);
    let model = ckpt.join("model.ckpt");
    let outputs: Vec<Vec<u8>> = ["1", "3"]
        .iter()
        .enumerate()
        .map(|(i, threads)| {
            let out_path = dir.path().join(format!("out{i}.txt"));
            let out = run(&[
                "translate",
                "--checkpoint",
                s(&model),
                "--input",
                s(&files[2]),
                "--output",
                s(&out_path),
                "--threads",
                threads,
            ]);
            assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
            fs::read(&out_path).unwrap()
        })
        .collect();
    assert_eq!(outputs[0], outputs[1]);
    assert_eq!(String::from_utf8_lossy(&outputs[0]).lines().count(), 5);

    let empty = dir.path().join("empty.txt");
    fs::write(&empty, "").unwrap();
    let out_path = dir.path().join("empty.out");
    let out = run(&["translate", "--checkpoint", s(&model), "--input", s(&empty), "--output", s(&out_path)]);
    assert!(out.status.success());
    assert_eq!(fs::read(&out_path).unwrap(), b"");
}

#[test]
fn nbest_lists_scored_hypotheses() {
    let dir = tempfile::tempdir().unwrap();
    let files = gen_toy(dir.path(), 8);
    let ckpt = tiny_train(dir.path(), &files, &[]);
    let nbest = dir.path().join("nbest.txt");
    let out = run(&[
        "translate",
        "--checkpoint",
        s(&ckpt.join("model.ckpt")),
        "--input",
        s(&files[2]),
        "--output",
        s(&dir.path().join("o.txt")),
        "--nbest",
        s(&nbest),
        "--beam-width",
        "3",
    ]);
    assert!(out.status.success());
    let text = fs::read_to_string(&nbest).unwrap();
    assert!(!text.is_empty());
    for line in text.lines() {
        let parts: Vec<&str> = line.split(" ||| ").collect();
        assert_eq!(parts.len(), 3, "{line}");
        assert!(parts[0].parse::<usize>().unwrap() < 5);
        assert!(parts[1].parse::<f64>().unwrap() <= 0.0);
    }
}

#[test]
fn vocabulary_mismatch_names_both_sizes() {
    let dir = tempfile::tempdir().unwrap();
    let files = gen_toy(dir.path(), 8);
    let ckpt = tiny_train(dir.path(), &files, &[]);
    let other = dir.path().join("other.vocab");
    fs::write(dir.path().join("words.txt"), "p q r s t u v\n").unwrap();
    assert!(run(&["build-vocab", "--input", s(&dir.path().join("words.txt")), "--output", s(&other)])
        .status
        .success());
    let out = run(&[
        "translate",
        "--checkpoint",
        s(&ckpt.join("model.ckpt")),
        "--tgt-vocab",
        s(&other),
        "--input",
        s(&files[2]),
        "--output",
        s(&dir.path().join("o.txt")),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("has 11 entries"), "{err}");
    assert!(err.contains("expects"), "{err}");
}

#[test]
fn evaluate_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    fs::write(&a, "the cat sat on the mat\na b c d\n").unwrap();
    fs::write(&b, "w x y z q\nr s t u\n").unwrap();

    let same = run(&["evaluate", "--hyp", s(&a), "--ref", s(&a)]);
    assert!(same.status.success());
    let text = String::from_utf8(same.stdout).unwrap();
    assert_eq!(text.lines().next(), Some("bleu\t100.00"));

    let disjoint = String::from_utf8(run(&["evaluate", "--hyp", s(&a), "--ref", s(&b)]).stdout).unwrap();
    assert!(disjoint.contains("bleu\t0.00\n"));
    assert!(disjoint.contains("bag_f1\t0.0000\n"));

    let short = dir.path().join("short.txt");
    fs::write(&short, "a b c d\n").unwrap();
    let out = run(&["evaluate", "--hyp", s(&short), "--ref", s(&a)]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains('1') && err.contains('2'), "{err}");
}

#[test]
fn evaluate_hand_computed_fixture() {
    let dir = tempfile::tempdir().unwrap();
    let h = dir.path().join("h.txt");
    let r = dir.path().join("r.txt");
    fs::write(&h, "a b c d x e\np q r s\n").unwrap();
    fs::write(&r, "a b c d e\np q r s\n").unwrap();
    let text = String::from_utf8(run(&["evaluate", "--hyp", s(&h), "--ref", s(&r)]).stdout).unwrap();
    // p = 9/10, 6/8, 4/6, 2/4; brevity penalty 1
    let bleu = 100.0 * (0.25f64 * (0.9f64 * 0.75 * (4.0 / 6.0) * 0.5).ln()).exp();
    assert!(text.contains(&format!("bleu\t{bleu:.2}\n")), "{text}");
    assert!(text.contains("precision_2\t0.7500\n"));
    // unique-token sets: {a,b,c,d,x,e} vs {a,b,c,d,e}, and an exact pair
    let precision = 9.0 / 10.0;
    assert!(text.contains(&format!("bag_precision\t{precision:.4}\n")));
    assert!(text.contains("bag_recall\t1.0000\n"));
}

#[test]
fn grad_check_command_passes() {
    let out = run(&["grad-check"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(out.status.success(), "{text}");
    assert!(text.contains("passed"));
    assert!(text.lines().filter(|l| l.ends_with("\tok")).count() > 10);
}

#[test]
fn usage_and_config_errors_exit_one() {
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--train-src", "/nope/a", "--train-tgt", "/nope/b"]).status.code(), Some(1));
    assert_eq!(run(&["train", "--lambda", "0.5", "--k", "0.9"]).status.code(), Some(1));
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    fs::write(&conf, "epochs = 2\nwhat = 3\n").unwrap();
    let out = run(&["train", "--config", s(&conf)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("line 2"));
}

#[test]
fn missing_checkpoint_is_a_runtime_failure() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.txt");
    fs::write(&input, "1 2\n").unwrap();
    let out = run(&[
        "translate",
        "--checkpoint",
        s(&dir.path().join("none.ckpt")),
        "--input",
        s(&input),
        "--output",
        s(&dir.path().join("out.txt")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
