use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::{DMatrix, DVector};
use spkb_core::backend::PldaModel;
use spkb_core::kaldi_io::{write_ark, write_utt2spk};
use spkb_core::synthetic::sample_two_covariance;
use spkb_core::EmbeddingSet;

fn spkb(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spkb"))
        .args(args)
        .output()
        .expect("spawn spkb")
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn small_set() -> EmbeddingSet {
    let mut set = EmbeddingSet::new();
    set.insert("a", vec![1.0, 0.0, 0.0]).unwrap();
    set.insert("b", vec![0.0, 2.0, 0.0]).unwrap();
    set.insert("c", vec![3.0, 3.0, 0.0]).unwrap();
    set
}

#[test]
fn help_and_version_exit_zero() {
    for args in [
        &["--help"][..],
        &["--version"],
        &["plda", "--help"],
        &["diarize", "--help"],
        &["diarize", "plan", "--help"],
        &["metrics", "der", "--help"],
    ] {
        assert_eq!(spkb(args).status.code(), Some(0), "{args:?}");
    }
    assert!(stdout(&spkb(&["--version"])).starts_with("spkb "));
}

#[test]
fn usage_errors_exit_one() {
    for args in [
        &[][..],
        &["frobnicate"],
        &["score", "cosine", "--enroll", "x"],
        &["diarize"],
        &[
            "metrics",
            "eer-dcf",
            "--scores",
            "s",
            "--trials",
            "t",
            "--p-target",
            "abc",
        ],
    ] {
        assert_eq!(spkb(args).status.code(), Some(1), "{args:?}");
    }
    // Invalid values that parse but fail validation are usage errors too.
    let dir = tempfile::tempdir().unwrap();
    let lab = dir.path().join("r.lab");
    fs::write(&lab, "0 3 speech\n").unwrap();
    let out = spkb(&["diarize", "plan", "--vad", p(&lab), "--shift", "0"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn missing_file_is_a_data_error() {
    let out = spkb(&[
        "mean",
        "--embeddings",
        "/nonexistent/x.ark",
        "--output",
        "/tmp/m",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("spkb: error:"));
}

#[test]
fn cosine_scores_and_missing_keys() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_ark(&small_set(), d.join("e.ark"), Some(&d.join("e.scp"))).unwrap();
    fs::write(d.join("trials"), "a b nontarget\na c target\n").unwrap();
    let out = spkb(&[
        "score",
        "cosine",
        "--enroll",
        p(&d.join("e.scp")),
        "--test",
        p(&d.join("e.ark")),
        "--trials",
        p(&d.join("trials")),
    ]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(stdout(&out), "a b 0.000000\na c 0.707107\n");

    fs::write(d.join("bad_trials"), "a zz\n").unwrap();
    let out = spkb(&[
        "score",
        "cosine",
        "--enroll",
        p(&d.join("e.ark")),
        "--test",
        p(&d.join("e.ark")),
        "--trials",
        p(&d.join("bad_trials")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("zz"));
}

#[test]
fn mean_then_cosine_with_mean() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write_ark(&small_set(), d.join("e.ark"), None).unwrap();
    let mean = d.join("mean.ark");
    let out = spkb(&[
        "mean",
        "--embeddings",
        p(&d.join("e.ark")),
        "--output",
        p(&mean),
    ]);
    assert_eq!(out.status.code(), Some(0));
    fs::write(d.join("trials"), "a a\n").unwrap();
    let out = spkb(&[
        "score",
        "cosine",
        "--enroll",
        p(&d.join("e.ark")),
        "--test",
        p(&d.join("e.ark")),
        "--trials",
        p(&d.join("trials")),
        "--mean",
        p(&mean),
    ]);
    assert_eq!(stdout(&out), "a a 1.000000\n");
}

#[test]
fn eer_dcf_output_format() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("trials"),
        "e t1 target\ne t2 target\ne n1 nontarget\ne n2 nontarget\n",
    )
    .unwrap();
    fs::write(d.join("scores"), "e t1 0.9\ne t2 0.4\ne n1 0.5\ne n2 0.1\n").unwrap();
    let out = spkb(&[
        "metrics",
        "eer-dcf",
        "--scores",
        p(&d.join("scores")),
        "--trials",
        p(&d.join("trials")),
        "--p-target",
        "0.05",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let line = stdout(&out);
    assert!(line.starts_with("EER=50.000 minDCF="), "{line}");
    assert!(line.contains(" thresholds="));

    fs::write(d.join("only_targets"), "e t1 target\n").unwrap();
    let out = spkb(&[
        "metrics",
        "eer-dcf",
        "--scores",
        p(&d.join("scores")),
        "--trials",
        p(&d.join("only_targets")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn der_reports_breakdown() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(
        d.join("ref.rttm"),
        "SPEAKER r 1 0.000 10.000 <NA> <NA> A <NA> <NA>\n",
    )
    .unwrap();
    fs::write(
        d.join("hyp.rttm"),
        "SPEAKER r 1 0.000 5.000 <NA> <NA> x <NA> <NA>\nSPEAKER r 1 5.000 5.000 <NA> <NA> y <NA> <NA>\n",
    )
    .unwrap();
    let out = spkb(&[
        "metrics",
        "der",
        "--ref",
        p(&d.join("ref.rttm")),
        "--hyp",
        p(&d.join("hyp.rttm")),
        "--collar",
        "0",
    ]);
    assert_eq!(stdout(&out), "MISS=0.000 FA=0.000 SC=50.000 DER=50.000\n");

    let out = spkb(&[
        "metrics",
        "der",
        "--ref",
        p(&d.join("ref.rttm")),
        "--hyp",
        p(&d.join("hyp.rttm")),
        "--collar=-1",
    ]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn diarize_plan_lists_subsegments() {
    let dir = tempfile::tempdir().unwrap();
    let lab = dir.path().join("meeting.lab");
    fs::write(&lab, "0.0 3.0 speech\n5.0 5.2 speech\n").unwrap();
    let out = spkb(&["diarize", "plan", "--vad", p(&lab)]);
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout(&out),
        "meeting-00000000-00001500 meeting 0.000 1.500\n\
         meeting-00000750-00002250 meeting 0.750 2.250\n\
         meeting-00001500-00003000 meeting 1.500 3.000\n\
         meeting-00005000-00005200 meeting 5.000 5.200\n"
    );
    let out = spkb(&["diarize", "plan", "--vad", p(&lab), "--recording-id", "m2"]);
    assert!(stdout(&out).starts_with("m2-00000000-00001500 m2 "));
}

#[test]
fn plda_train_adapt_score_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let truth = PldaModel::new(
        DVector::from_vec(vec![0.5, -1.0, 0.0]),
        DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 2.0, 1.0])),
        DMatrix::identity(3, 3) * 0.5,
    )
    .unwrap();
    let (set, spk) = sample_two_covariance(&truth, 40, 5, 11).unwrap();
    write_ark(&set, d.join("train.ark"), None).unwrap();
    write_utt2spk(&spk, d.join("utt2spk")).unwrap();
    let model = d.join("plda.bin");
    let train = |iters: &str| {
        spkb(&[
            "plda",
            "train",
            "--embeddings",
            p(&d.join("train.ark")),
            "--utt2spk",
            p(&d.join("utt2spk")),
            "--iters",
            iters,
            "--output",
            p(&model),
        ])
    };
    let out = train("5");
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = stdout(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "iter,loglik");
    let ll: Vec<f64> = lines[1..]
        .iter()
        .map(|l| l.split(',').nth(1).unwrap().parse().unwrap())
        .collect();
    assert!(ll.windows(2).all(|w| w[1] >= w[0] - 1e-6));
    assert_eq!(stdout(&train("5")), csv);
    assert_eq!(&fs::read(&model).unwrap()[..7], b"WSPLDA1");

    let adapted = d.join("adapted.bin");
    let out = spkb(&[
        "plda",
        "adapt",
        "--model",
        p(&model),
        "--embeddings",
        p(&d.join("train.ark")),
        "--output",
        p(&adapted),
    ]);
    assert_eq!(out.status.code(), Some(0));

    let keys: Vec<&str> = set.keys().take(20).collect();
    let trials: String = keys
        .iter()
        .flat_map(|a| keys.iter().map(move |b| format!("{a} {b}\n")))
        .collect();
    fs::write(d.join("trials"), trials).unwrap();
    let (train_ark, trial_path) = (d.join("train.ark"), d.join("trials"));
    let score = |lead: &[&str]| {
        let mut args = lead.to_vec();
        args.extend([
            "plda",
            "score",
            "--model",
            p(&adapted),
            "--enroll",
            p(&train_ark),
            "--test",
            p(&train_ark),
            "--trials",
            p(&trial_path),
        ]);
        spkb(&args)
    };
    let par = score(&[]);
    assert_eq!(par.status.code(), Some(0));
    assert_eq!(stdout(&par).lines().count(), 400);
    assert_eq!(score(&["--sequential"]).stdout, par.stdout);

    // A dimension mismatch between model and embeddings is a data error.
    let mut wide = EmbeddingSet::new();
    wide.insert("a", vec![1.0; 5]).unwrap();
    write_ark(&wide, d.join("wide.ark"), None).unwrap();
    fs::write(d.join("aa"), "a a\n").unwrap();
    let out = spkb(&[
        "plda",
        "score",
        "--model",
        p(&model),
        "--enroll",
        p(&d.join("wide.ark")),
        "--test",
        p(&d.join("wide.ark")),
        "--trials",
        p(&d.join("aa")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_toy_prints_loss_trace() {
    let run = || spkb(&["train-toy", "--steps", "20", "--variant", "am"]);
    let out = run();
    assert_eq!(
        out.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = stdout(&out);
    assert_eq!(csv.lines().next(), Some("step,loss"));
    // Initial loss plus one line per step.
    assert_eq!(csv.lines().count(), 22);
    let loss = |l: &str| -> f64 { l.split(',').nth(1).unwrap().parse().unwrap() };
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(loss(rows[rows.len() - 1]) < loss(rows[0]));
    assert_eq!(run().stdout, out.stdout);
    let out = spkb(&["train-toy", "--variant", "nope"]);
    assert_eq!(out.status.code(), Some(1));
}
