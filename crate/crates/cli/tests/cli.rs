use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use blocksvd_cli::manifest::{RunManifest, SUMMARY_HEADER};
use blocksvd_core::ingest;
use blocksvd_core::verify::SyntheticProblem;
use blocksvd_core::IdMap;

fn run(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let argv = std::iter::once("blocksvd").chain(args.iter().copied());
    let code = blocksvd_cli::run(argv, &mut out, &mut err);
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

/// A 40x30 rank-2 problem with ratings on a 1..5-like scale, written as csv
/// with string ids.
fn synthetic_csv(dir: &Path) -> PathBuf {
    let p = SyntheticProblem::generate(40, 30, 2, 0.5, 0.1, 9).unwrap();
    let users = IdMap::from_ids((0..40).map(|u| format!("user{u}"))).unwrap();
    let items = IdMap::from_ids((0..30).map(|i| format!("{}", 500 + i))).unwrap();
    let path = dir.join("ratings.csv");
    ingest::write_csv_file(&path, &p.ratings, &users, &items).unwrap();
    path
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn split_is_byte_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic_csv(dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        let (code, _, err) = run(&[
            "split",
            "--format",
            "csv",
            "--input",
            s(&input),
            "--seed",
            "3",
            "--out-dir",
            s(out),
        ]);
        assert_eq!(code, 0, "{err}");
    }
    for f in ["train.csv", "test.csv", "split.json"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    let train = fs::read_to_string(a.join("train.csv")).unwrap();
    let test = fs::read_to_string(a.join("test.csv")).unwrap();
    assert!(train.starts_with("user,item,rating\n"));
    let total = fs::read_to_string(&input).unwrap().lines().count() - 1;
    assert_eq!(train.lines().count() - 1 + test.lines().count() - 1, total);

    let c = dir.path().join("c");
    run(&[
        "split",
        "--format",
        "csv",
        "--input",
        s(&input),
        "--seed",
        "4",
        "--out-dir",
        s(&c),
    ]);
    assert_ne!(
        fs::read(a.join("train.csv")).unwrap(),
        fs::read(c.join("train.csv")).unwrap()
    );
}

#[test]
fn train_then_evaluate_reproduces_the_test_rmse() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic_csv(dir.path());
    let sp = dir.path().join("split");
    run(&["split", "--format", "csv", "--input", s(&input), "--out-dir", s(&sp)]);
    let model_dir = dir.path().join("model");
    let (code, out, err) = run(&[
        "train",
        "--format",
        "csv",
        "--input",
        s(&sp.join("train.csv")),
        "--test",
        s(&sp.join("test.csv")),
        "--k",
        "3",
        "--grid",
        "2x2",
        "--workers",
        "2",
        "--out-dir",
        s(&model_dir),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.lines().next().unwrap().starts_with("epoch=1 train_rmse="));
    assert_eq!(
        fs::read_to_string(model_dir.join("metrics.txt")).unwrap(),
        out.lines()
            .filter(|l| l.starts_with("epoch="))
            .map(|l| format!("{l}\n"))
            .collect::<String>()
    );
    let manifest = RunManifest::read(&model_dir.join("manifest.json")).unwrap();
    let run0 = &manifest.runs[0];
    assert_eq!(run0.job.mode, "parallel");
    assert_eq!(run0.job.stop_on, "test");
    let recorded = run0.eval.as_ref().unwrap().rmse;

    let model = model_dir.join("model.bin");
    let (code, out, err) = run(&[
        "evaluate",
        "--model",
        s(&model),
        "--format",
        "csv",
        "--input",
        s(&sp.join("test.csv")),
    ]);
    assert_eq!(code, 0, "{err}");
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["rmse"].as_f64().unwrap(), recorded);
    assert_eq!(v["fallback"], "global-mean");

    // the training fold fits better than the held-out fold
    let (_, out, _) = run(&[
        "evaluate",
        "--model",
        s(&model),
        "--format",
        "csv",
        "--input",
        s(&sp.join("train.csv")),
    ]);
    let train: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert!(train["rmse"].as_f64().unwrap() < recorded);

    let (code, out, err) = run(&["rerun", "--manifest", s(&model_dir.join("manifest.json"))]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains(" match"), "{out}");
}

#[test]
fn unseen_ids_are_scored_as_cold_start() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic_csv(dir.path());
    let model_dir = dir.path().join("m");
    let (code, _, err) = run(&[
        "train",
        "--format",
        "csv",
        "--input",
        s(&input),
        "--max-steps",
        "5",
        "--out-dir",
        s(&model_dir),
    ]);
    assert_eq!(code, 0, "{err}");
    let fresh = dir.path().join("fresh.csv");
    fs::write(&fresh, "user,item,rating\nuser0,500,3\nnewcomer,500,4\nuser1,999,2\n").unwrap();
    let model = model_dir.join("model.bin");
    let (code, out, _) = run(&[
        "evaluate",
        "--model",
        s(&model),
        "--format",
        "csv",
        "--input",
        s(&fresh),
    ]);
    assert_eq!(code, 0);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["n_coldstart"], 2);
    assert_eq!(v["n_scored"], 3);
    let (_, out, _) = run(&[
        "evaluate",
        "--model",
        s(&model),
        "--format",
        "csv",
        "--input",
        s(&fresh),
        "--fallback",
        "skip",
    ]);
    let v: serde_json::Value = serde_json::from_str(out.trim()).unwrap();
    assert_eq!(v["n_scored"], 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic_csv(dir.path());
    let out_dir = dir.path().join("o");

    assert_eq!(run(&["--help"]).0, 0);
    assert_eq!(run(&["frobnicate"]).0, 1);
    assert_eq!(run(&["train", "--format", "csv"]).0, 1);
    assert_eq!(run(&["train", "--format", "xml", "--input", s(&input)]).0, 1);
    assert_eq!(
        run(&["train", "--format", "csv", "--input", s(&input), "--grid", "8"]).0,
        1
    );
    assert_eq!(
        run(&["train", "--format", "csv", "--input", s(&input), "--k", "0"]).0,
        1
    );

    let missing = dir.path().join("nope.csv");
    assert_eq!(
        run(&[
            "train",
            "--format",
            "csv",
            "--input",
            s(&missing),
            "--out-dir",
            s(&out_dir)
        ])
        .0,
        2
    );
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "user,item,rating\na,b,3\na,b,4\n").unwrap();
    let (code, _, err) = run(&["train", "--format", "csv", "--input", s(&bad), "--out-dir", s(&out_dir)]);
    assert_eq!(code, 2);
    assert!(err.contains("line 3") || err.contains("duplicate"), "{err}");

    let (code, _, err) = run(&[
        "train",
        "--format",
        "csv",
        "--input",
        s(&input),
        "--alpha",
        "50",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(code, 3, "{err}");
    assert!(out_dir.join("FAILED").exists());
}

#[test]
fn binary_reports_exit_codes_to_the_shell() {
    let bin = env!("CARGO_BIN_EXE_blocksvd");
    let status = Command::new(bin)
        .arg("split")
        .arg("--format")
        .arg("csv")
        .output()
        .unwrap();
    assert_eq!(status.status.code(), Some(1));
    let status = Command::new(bin).arg("--version").output().unwrap();
    assert_eq!(status.status.code(), Some(0));
}

#[test]
fn config_file_supplies_defaults_and_flags_override_it() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic_csv(dir.path());
    let cfg = dir.path().join("run.conf");
    fs::write(
        &cfg,
        format!("format = csv\ninput = {}\nmax-steps = 3\nk = 2\n", input.display()),
    )
    .unwrap();
    let out_dir = dir.path().join("o");
    let (code, out, err) = run(&["--config", s(&cfg), "train", "--delta", "0", "--out-dir", s(&out_dir)]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch=")).count(), 3);
    let m = RunManifest::read(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(m.runs[0].job.hyperparams.k, 2);
    let (code, out, _) = run(&[
        "--config",
        s(&cfg),
        "train",
        "--max-steps",
        "1",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(code, 0);
    assert_eq!(out.lines().filter(|l| l.starts_with("epoch=")).count(), 1);
}

#[test]
fn benchmark_writes_summary_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let input = synthetic_csv(dir.path());
    let out_dir = dir.path().join("bench");
    let (code, out, err) = run(&[
        "benchmark",
        "--dataset",
        "csv",
        "--input",
        s(&input),
        "--repeats",
        "2",
        "--k",
        "3",
        "--grid",
        "2x2",
        "--workers",
        "2",
        "--max-steps",
        "50",
        "--out-dir",
        s(&out_dir),
    ]);
    assert_eq!(code, 0, "{err}");
    assert!(out.contains("sec/iter"));
    let csv = fs::read_to_string(out_dir.join("summary.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(SUMMARY_HEADER));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 3);
    assert!(rows[0].starts_with("csv,pmf,1x1,serial,1,2,"));
    assert!(rows[2].starts_with("csv,bcsvd,2x2,parallel,2,2,"));

    let m = RunManifest::read(&out_dir.join("manifest.json")).unwrap();
    assert_eq!(m.runs.len(), 6);
    // repeats use consecutive seeds for both the split and the initialization
    let seeds: Vec<u64> = m.runs.iter().map(|r| r.job.hyperparams.seed).collect();
    assert_eq!(seeds, [42, 43, 42, 43, 42, 43]);
    let (code, out, err) = run(&["rerun", "--manifest", s(&out_dir.join("manifest.json"))]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(out.lines().filter(|l| l.ends_with(" match")).count(), 6);
}
