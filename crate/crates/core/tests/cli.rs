mod common;

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use common::{fixture, fixtures_dir};
use spectrum_forge::corpus::{read_jsonl, CodeRecord, FeatureRecord, LabelRecord};

const CONFIG: &str = r#"
seed = 11

[probes]
count = 2
length = 2

[labels]
passes = ["noop", "drop-add", "dce", "instcombine", "early-cse", "drop-ret", "mem2reg"]

[pq]
m = 4
k_star = 4

[split]
train = 0.6
val = 0.2
"#;

fn forge(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spectrum-forge"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SPECTRUM_FORGE_OPT")
        .output()
        .unwrap()
}

fn ok(out: Output) -> Output {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("run.toml"), CONFIG).unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    for e in std::fs::read_dir(fixtures_dir()).unwrap() {
        let p = e.unwrap().path();
        std::fs::copy(&p, corpus.join(p.file_name().unwrap())).unwrap();
    }
    dir
}

fn files_in(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    v.sort();
    v
}

#[test]
fn features_on_files_and_directories() {
    let ws = workspace();
    let dir = ws.path();
    let a = fixtures_dir().join("f01_two_blocks.ll");
    let b = fixtures_dir().join("f03_loop.ll");
    ok(forge(&["features", a.to_str().unwrap(), b.to_str().unwrap(), "--out", "f.jsonl"], dir));
    let recs: Vec<FeatureRecord> = read_jsonl(&dir.join("f.jsonl")).unwrap();
    assert_eq!(recs.len(), 2);
    assert_eq!(recs[0], FeatureRecord::from_text("f01_two_blocks", &fixture("f01_two_blocks.ll")).unwrap());
    assert_eq!(recs[1].total_instructions, 8);

    std::fs::create_dir(dir.join("empty")).unwrap();
    ok(forge(&["features", "empty", "--out", "e.jsonl"], dir));
    assert_eq!(std::fs::read_to_string(dir.join("e.jsonl")).unwrap(), "");

    let out = forge(&["features", "missing", "--out", "m.jsonl"], dir);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
}

fn dataset_run(dir: &Path, out: &str, jobs: &str) {
    ok(forge(
        &["--config", "run.toml", "--mock-optimizer", "--jobs", jobs, "dataset", "--manifest", "manifest.json", "--out", out],
        dir,
    ));
}

#[test]
fn dataset_twice_is_byte_identical_across_thread_counts() {
    let ws = workspace();
    let dir = ws.path();
    ok(forge(&["--config", "run.toml", "manifest", "corpus", "--out", "manifest.json"], dir));
    dataset_run(dir, "a", "1");
    dataset_run(dir, "b", "4");
    let (a, b) = (files_in(&dir.join("a")), files_in(&dir.join("b")));
    let names: Vec<_> = a.iter().map(|p| p.file_name().unwrap().to_owned()).collect();
    assert_eq!(names.len(), 10, "{names:?}");
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.file_name(), y.file_name());
        assert!(std::fs::read(x).unwrap() == std::fs::read(y).unwrap(), "{} differs", x.display());
    }
    let labels: Vec<LabelRecord> = read_jsonl(&dir.join("a/labels.jsonl")).unwrap();
    assert_eq!(labels.len(), 11);
}

#[test]
fn staged_commands_reproduce_the_dataset() {
    let ws = workspace();
    let dir = ws.path();
    let cfg = ["--config", "run.toml", "--mock-optimizer"];
    let run = |extra: &[&str]| ok(forge(&[&cfg[..], extra].concat(), dir));
    run(&["manifest", "corpus", "--out", "manifest.json"]);
    run(&["build-probes", "--manifest", "manifest.json", "--out", "probes.json"]);
    run(&["spectrum", "--manifest", "manifest.json", "--probes", "probes.json", "--out", "sp"]);
    run(&["train-codebook", "--spectra", "sp", "--manifest", "manifest.json", "--out", "cb.pqcb"]);
    run(&["encode", "--codebook", "cb.pqcb", "--spectra", "sp", "--out", "codes.jsonl"]);
    run(&["labels", "--manifest", "manifest.json", "--out", "labels.jsonl"]);
    run(&["dataset", "--manifest", "manifest.json", "--out", "ds"]);

    let same = |a: &str, b: &str| {
        assert!(std::fs::read(dir.join(a)).unwrap() == std::fs::read(dir.join(b)).unwrap(), "{a} vs {b}");
    };
    same("probes.json", "ds/probes.json");
    same("sp/spectra.bin", "ds/spectra.bin");
    same("cb.pqcb", "ds/codebook.pqcb");
    let staged: Vec<CodeRecord> = read_jsonl(&dir.join("codes.jsonl")).unwrap();
    let full: Vec<CodeRecord> = read_jsonl(&dir.join("ds/codes.jsonl")).unwrap();
    assert_eq!(staged, full);
    let staged: Vec<LabelRecord> = read_jsonl(&dir.join("labels.jsonl")).unwrap();
    let full: Vec<LabelRecord> = read_jsonl(&dir.join("ds/labels.jsonl")).unwrap();
    assert_eq!(staged, full);
}

#[test]
fn export_and_eval() {
    let ws = workspace();
    let dir = ws.path();
    ok(forge(&["--config", "run.toml", "manifest", "corpus", "--out", "manifest.json"], dir));
    dataset_run(dir, "ds", "2");
    for kind in ["autophase", "instcount", "codes"] {
        let out = format!("{kind}.embd");
        ok(forge(&["export-embeddings", "--dataset", "ds", "--kind", kind, "--out", &out], dir));
        let report = format!("{kind}.json");
        let o = ok(forge(
            &["--config", "run.toml", "eval", "--labels", "ds/labels.jsonl", "--embeddings", &out, "--knn-k", "3", "--report", &report],
            dir,
        ));
        let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.join(&report)).unwrap()).unwrap();
        assert_eq!(v["knn"]["k"], 3);
        assert!(!String::from_utf8_lossy(&o.stdout).is_empty());
    }
}

#[test]
fn eval_scores_predictions() {
    let dir = tempfile::tempdir().unwrap();
    let labels = [("a", 5, 10.0), ("b", 9, 20.0), ("c", 2, 30.0)]
        .iter()
        .map(|(id, best, oz)| {
            format!(
                "{{\"format_version\":1,\"program_id\":\"{id}\",\"split\":\"test\",\"instr_orig\":10,\"best_pass_id\":{best},\"best_pass_reduction\":1.0,\"oz_benefit_pct\":{oz}}}\n"
            )
        })
        .collect::<String>();
    std::fs::write(dir.path().join("labels.jsonl"), labels).unwrap();
    let preds = "{\"program_id\":\"a\",\"ranked_pass_ids\":[5,0,1,2,3],\"predicted_oz\":12.0}\n\
{\"program_id\":\"b\",\"ranked_pass_ids\":[0,1,9,2,3],\"predicted_oz\":16.0}\n\
{\"program_id\":\"c\",\"ranked_pass_ids\":[0,1,3,4,5,6,2],\"predicted_oz\":30.0}\n";
    std::fs::write(dir.path().join("preds.jsonl"), preds).unwrap();
    ok(forge(&["eval", "--labels", "labels.jsonl", "--predictions", "preds.jsonl", "--report", "r.json"], dir.path()));
    let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("r.json")).unwrap()).unwrap();
    assert!((v["top1"].as_f64().unwrap() - 100.0 / 3.0).abs() < 1e-9);
    assert!((v["top5"].as_f64().unwrap() - 200.0 / 3.0).abs() < 1e-9);
    assert!((v["oz_mae"].as_f64().unwrap() - 2.0).abs() < 1e-9);
}

#[test]
fn too_many_probes_fails() {
    let ws = workspace();
    let dir = ws.path();
    ok(forge(&["--config", "run.toml", "manifest", "corpus", "--out", "manifest.json"], dir));
    let out = forge(
        &["--config", "run.toml", "--mock-optimizer", "build-probes", "--manifest", "manifest.json", "--out", "p.json", "--probes", "50"],
        dir,
    );
    assert!(!out.status.success());
    assert!(!dir.join("p.json").exists());
}

#[test]
fn explicit_optimizer_beats_mock_flag() {
    let ws = workspace();
    let dir = ws.path();
    ok(forge(&["--config", "run.toml", "manifest", "corpus", "--out", "manifest.json"], dir));
    let out = forge(
        &[
            "--config", "run.toml", "--mock-optimizer", "--optimizer", "/nonexistent/opt", "--strict", "labels",
            "--manifest", "manifest.json", "--out", "l.jsonl",
        ],
        dir,
    );
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent/opt"));
}

#[test]
fn bad_config_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.toml"), "[pq]\nm = 5\n").unwrap();
    let out = forge(&["--config", "bad.toml", "features", ".", "--out", "x.jsonl"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("pq.m"));
}
