use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use protomatch::cli::Aggregate;
use protomatch::corpus::{enumerate_pairs, load_corpus, Task};
use protomatch::matcher::{write_predictions, PredictionRecord};

const TINY: [&str; 16] = [
    "--set", "dim=8", "--set", "encoder_layers=1", "--set", "buckets=64", "--set", "examples_k=1", "--set", "epochs=2",
    "--set", "batch_size=2", "--set", "warmup_steps=0", "--set", "dropout=0",
];

fn bin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_protomatch"))
        .args(args)
        .env_remove("RUST_LOG")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = bin(args);
    assert!(out.status.success(), "{args:?}\n{}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Every file under `dir`, relative path to bytes.
fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, Vec<u8>>) {
        for e in std::fs::read_dir(dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn synth(dir: &Path, docs: usize) -> PathBuf {
    let path = dir.join(format!("synth{docs}.jsonl"));
    ok(&["synth", "--documents", &docs.to_string(), "--out", s(&path)]);
    path
}

#[test]
fn every_subcommand_is_idempotent() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), 4);
    let out = tmp.path().join("out");
    let train_dir = out.join("train");
    let run_all = || {
        ok(&["preprocess", "--corpus", s(&corpus), "--out", s(&out.join("pre"))]);
        let mut train = vec!["train", "--train", s(&corpus), "--out", s(&train_dir), "--seed", "1"];
        train.extend(TINY);
        ok(&train);
        let ckpt = out.join("train").join("seed-1");
        ok(&["predict", "--checkpoint", s(&ckpt), "--corpus", s(&corpus), "--out", s(&out.join("pred"))]);
        ok(&["evaluate", "--checkpoint", s(&out.join("train")), "--corpus", s(&corpus), "--out", s(&out.join("eval"))]);
        snapshot(&out)
    };
    let first = run_all();
    let second = run_all();
    assert_eq!(first.keys().collect::<Vec<_>>(), second.keys().collect::<Vec<_>>());
    for (k, v) in &first {
        assert!(v == &second[k], "{} changed between runs", k.display());
    }
    for f in ["pre/pairs.jsonl", "pre/a_raw.tsv", "pre/a_norm.tsv", "pre/matrix.txt", "train/manifest.json", "pred/clusters.jsonl"] {
        assert!(first.contains_key(Path::new(f)), "{f} missing");
    }
}

#[test]
fn manifest_is_written_before_training() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), 4);
    let out = tmp.path().join("t");
    // two sampled documents cannot supply examples for every label; that
    // data error surfaces after the manifest exists
    let mut args = vec!["train", "--train", s(&corpus), "--out", s(&out), "--fraction", "0.5", "--seed", "3"];
    args.extend(TINY);
    args.extend(["--set", "examples_k=50"]);
    let res = bin(&args);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([3]));
    assert_eq!(manifest["config"]["examples_k"], 50);
    assert_eq!(manifest["inputs"]["fraction"], "0.5");
    assert!(manifest["revision"].is_string());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), 4);
    let out = s(tmp.path()).to_string() + "/x";
    let code = |args: &[&str]| bin(args).status.code();
    assert_eq!(code(&["train", "--train", s(&corpus), "--out", &out, "--set", "dim=0"]), Some(2));
    assert_eq!(code(&["train", "--train", s(&corpus), "--out", &out, "--set", "no_such_key=1"]), Some(2));
    assert_eq!(code(&["ablate", "--grid", "nope", "--train", s(&corpus), "--out", &out]), Some(2));
    assert_eq!(code(&["preprocess", "--corpus", "/nonexistent.jsonl", "--out", &out]), Some(3));
    assert_eq!(code(&["evaluate", "--checkpoint", "/nonexistent", "--corpus", s(&corpus), "--out", &out]), Some(3));
    let bad = tmp.path().join("bad.jsonl");
    std::fs::write(&bad, "{\"id\": \"a\", \"tokens\": [[\"x\"]]}\nnot json\n").unwrap();
    let res = bin(&["preprocess", "--corpus", s(&bad), "--out", &out]);
    assert_eq!(res.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&res.stderr).contains("bad.jsonl:2"), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn oracle_predictions_score_one_and_single_run_std_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    let path = synth(tmp.path(), 5);
    let corpus = load_corpus(&path).unwrap();
    let mut recs = Vec::new();
    for d in &corpus.documents {
        for p in enumerate_pairs(d) {
            for t in Task::ALL {
                recs.push(PredictionRecord {
                    doc_id: d.doc_id.clone(),
                    src: d.mentions[p.src].mention_id.clone(),
                    dst: d.mentions[p.dst].mention_id.clone(),
                    task: t,
                    label: p.labels.get(t),
                    probability: 1.0,
                });
            }
        }
    }
    let preds = tmp.path().join("oracle.jsonl");
    write_predictions(&recs, &preds).unwrap();
    let out = tmp.path().join("eval");
    ok(&["evaluate", "--predictions", s(&preds), "--corpus", s(&path), "--out", s(&out)]);
    let agg: Aggregate = serde_json::from_slice(&std::fs::read(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg.runs, 1);
    assert_eq!(agg.metrics["overall.f1"].mean, 1.0);
    assert!(agg.metrics.values().all(|m| m.std == 0.0));
}

#[test]
fn three_seeds_aggregate_and_ablation_grid() {
    let tmp = tempfile::tempdir().unwrap();
    let corpus = synth(tmp.path(), 4);
    let train_out = tmp.path().join("train");
    let mut args = vec!["train", "--train", s(&corpus), "--out", s(&train_out), "--seed", "0", "--seed", "1", "--seed", "2"];
    args.extend(TINY);
    args.extend(["--set", "epochs=1"]);
    ok(&args);
    let out = tmp.path().join("eval");
    ok(&["evaluate", "--checkpoint", s(&train_out), "--corpus", s(&corpus), "--out", s(&out)]);
    let agg: Aggregate = serde_json::from_slice(&std::fs::read(out.join("aggregate.json")).unwrap()).unwrap();
    assert_eq!(agg.runs, 3);
    for i in 0..3 {
        assert!(out.join(format!("run-{i}.json")).exists());
    }
    let f1 = &agg.metrics["overall.f1"];
    assert!(f1.mean.is_finite() && f1.std >= 0.0);

    let abl = tmp.path().join("ablate");
    let mut args = vec!["ablate", "--grid", "table4", "--train", s(&corpus), "--out", s(&abl)];
    args.extend(TINY);
    args.extend(["--set", "epochs=1"]);
    ok(&args);
    let summary = std::fs::read_to_string(abl.join("summary.tsv")).unwrap();
    let variants: Vec<&str> = summary.lines().skip(1).map(|l| l.split('\t').next().unwrap()).collect();
    assert_eq!(variants, ["full", "-graph", "-prototypes", "-prototypes&graph"]);
    let cfg = std::fs::read_to_string(abl.join("-graph/seed-0/config.toml")).unwrap();
    assert!(cfg.contains("graph = \"off\""), "{cfg}");
}
