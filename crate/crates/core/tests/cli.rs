use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edgeamc::datagen::load_dataset;

fn edgeamc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgeamc")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = edgeamc(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

/// Every file under `dir`, keyed by relative path.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let path = e.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.insert(path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    files
}

fn csv_header(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn full_pipeline_is_byte_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let root = tmp.path();
    let data = root.join("d.amcd");
    let j = |s: &str| root.join(s);
    let quick = ["--epochs", "1", "--batch-size", "64"];
    let arch = ["--arch", "resnet-mini", "--width-scale", "0.125"];

    let steps: Vec<Vec<String>> = vec![
        vec!["gen-data", "--frames", "2", "--seed", "7", "--out", p(&data)].into_iter().map(String::from).collect(),
        [&["train", "--data", p(&data), "--out", p(&j("bench"))][..], &arch, &quick].concat().into_iter().map(String::from).collect(),
        [&["train", "--data", p(&data), "--out", p(&j("teacher")), "--arch", "inception-mini", "--width-scale", "0.125"][..], &quick]
            .concat()
            .into_iter()
            .map(String::from)
            .collect(),
        vec!["eval", "--model", p(&j("bench")), "--data", p(&data), "--out", p(&j("eval"))]
            .into_iter()
            .map(String::from)
            .collect(),
        vec!["prune", "--model", p(&j("bench")), "--data", p(&data), "--epsilon", "0.08", "--samples", "100", "--out", p(&j("nt"))]
            .into_iter()
            .map(String::from)
            .collect(),
        vec!["quantize", "--model", p(&j("bench")), "--data", p(&data), "--subspaces", "2", "--centroids", "16", "--out", p(&j("pq"))]
            .into_iter()
            .map(String::from)
            .collect(),
        [&["retrain", "--model", p(&j("pq")), "--data", p(&data), "--fraction", "0.5", "--out", p(&j("pqr"))][..], &quick]
            .concat()
            .into_iter()
            .map(String::from)
            .collect(),
        [
            &["distill", "--teacher", p(&j("teacher")), "--data", p(&data), "--student-arch", "resnet-mini", "--width-scale", "0.125"][..],
            &["--baseline", p(&j("bench")), "--out", p(&j("kd"))],
            &quick,
        ]
        .concat()
        .into_iter()
        .map(String::from)
        .collect(),
        [
            &["dp", "--teacher", p(&j("teacher")), "--data", p(&data), "--student-arch", "resnet-mini", "--width-scale", "0.125"][..],
            &["--samples", "100", "--baseline", p(&j("bench")), "--out", p(&j("dp"))],
            &quick,
        ]
        .concat()
        .into_iter()
        .map(String::from)
        .collect(),
        [
            &["dq", "--teacher", p(&j("teacher")), "--data", p(&data), "--student-arch", "resnet-mini", "--width-scale", "0.125"][..],
            &["--centroids", "16", "--baseline", p(&j("bench")), "--out", p(&j("dq"))],
            &quick,
        ]
        .concat()
        .into_iter()
        .map(String::from)
        .collect(),
    ];
    let report_args: Vec<String> = ["report", "--runs"]
        .iter()
        .map(|s| s.to_string())
        .chain(["bench", "nt", "pq", "pqr", "kd", "dp", "dq"].iter().map(|r| p(&j(r)).to_string()))
        .chain(["--out".into(), p(&j("summary.csv")).into(), "--plot".into(), p(&j("summary.svg")).into()])
        .collect();

    let run_all = || {
        for s in steps.iter().chain([&report_args]) {
            let args: Vec<&str> = s.iter().map(String::as_str).collect();
            ok(&args);
        }
        snapshot(root)
    };
    let first = run_all();
    let second = run_all();
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (k, v) in &first {
        assert!(v == &second[k], "{} differs between reruns", k.display());
    }

    // File shapes.
    assert_eq!(load_dataset(&data).unwrap().len(), 440);
    assert!(first.keys().any(|k| k.ends_with("run.json")));
    assert_eq!(csv_header(&j("eval/eval.csv")), "snr_db,accuracy");
    assert!(csv_header(&j("nt/prune.csv")).contains("p_e"));
    assert_eq!(csv_header(&j("pq/quantize.csv")), "P,K_s,C_Q,mse,accuracy");
    let summary = std::fs::read_to_string(j("summary.csv")).unwrap();
    let methods: Vec<&str> = summary.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(methods, ["Benchmark", "NT", "PQ", "PQ", "KD", "DP", "DQ"]);
    let svg = std::fs::read_to_string(j("summary.svg")).unwrap();
    assert_eq!(svg.matches("class=\"legend\"").count(), 7);
}

#[test]
fn gen_data_ten_frames_gives_2200() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("d.amcd");
    ok(&["gen-data", "--frames", "10", "--seed", "7", "--out", p(&out)]);
    assert_eq!(load_dataset(&out).unwrap().len(), 2200);
}

#[test]
fn failures_use_the_documented_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d.amcd");
    let code = |args: &[&str]| {
        let o = edgeamc(args);
        let err = String::from_utf8_lossy(&o.stderr).to_string();
        assert_eq!(err.trim_end().lines().count(), if o.status.success() { 0 } else { 1 }, "{err}");
        o.status.code().unwrap()
    };
    assert_eq!(code(&[]), 2);
    assert_eq!(code(&["prune", "--epsilon", "0.1"]), 2);
    assert_eq!(code(&["gen-data", "--frames", "x", "--out", p(&data)]), 2);
    assert_eq!(code(&["frobnicate"]), 2);
    assert_eq!(code(&["--help"]), 0);
    let missing = tmp.path().join("nope");
    assert_eq!(code(&["eval", "--model", p(&missing), "--data", p(&data), "--out", p(&tmp.path().join("e"))]), 3);
    assert_eq!(code(&["report", "--runs", p(&missing), "--out", p(&tmp.path().join("s.csv"))]), 3);
    let err = edgeamc(&["gen-data", "--frames", "0", "--out", p(&data)]);
    assert_eq!(err.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&err.stderr).starts_with("error["));
}
