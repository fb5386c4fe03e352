use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use qnli_cli::{IngestArgs, TrainArgs};
use qnli_core::models::{ModelKind, Task};
use serde_json::Value;

fn repo() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn ingest(sick: &Path, n: usize, out: &Path) -> qnli_cli::IngestReport {
    qnli_cli::ingest(&IngestArgs {
        sick: sick.to_path_buf(),
        lexicon: repo().join("data/lexicon.txt"),
        n,
        max_words: 11,
        seed: 0,
        max_qubits: 16,
        layers: 1,
        out: out.to_path_buf(),
    })
    .unwrap()
}

fn train(data: &Path, out: &Path, model: ModelKind, task: Task) -> qnli_cli::TrainOutcome {
    qnli_cli::train(&TrainArgs {
        data: Some(data.to_path_buf()),
        lexicon: Some(repo().join("data/lexicon.txt")),
        embeddings: Some(repo().join("data/embeddings.txt")),
        out: Some(out.to_path_buf()),
        model: Some(model),
        task: Some(task),
        ..Default::default()
    })
    .unwrap()
}

fn qnli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_qnli"))
        .args(args)
        .current_dir(repo())
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

#[test]
fn ingest_is_byte_stable() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let sick = repo().join("data/sick_fixture.tsv");
    let report = ingest(&sick, 100, a.path());
    ingest(&sick, 100, b.path());
    assert_eq!((report.train, report.dev, report.test), (140, 30, 30));
    assert_eq!(report.excluded, 6);
    for f in ["train.jsonl", "dev.jsonl", "test.jsonl", "excluded.txt", "ingest.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
    let excluded = fs::read_to_string(a.path().join("excluded.txt")).unwrap();
    assert!(excluded.contains("harmonica"));
    assert!(excluded.contains("exceeds 11"));
    assert!(excluded.contains("qubits"), "{excluded}");
}

#[test]
fn summaries_match_schema_and_golden() {
    let ds = tempfile::tempdir().unwrap();
    ingest(&repo().join("data/toy.tsv"), 6, ds.path());
    let schema: Value = serde_json::from_str(&fs::read_to_string(repo().join("schemas/summary.schema.json")).unwrap()).unwrap();
    let validator = jsonschema::validator_for(&schema).unwrap();
    let runs = tempfile::tempdir().unwrap();
    for (model, task) in [
        (ModelKind::Kl, Task::Inference),
        (ModelKind::Xor, Task::Relatedness),
        (ModelKind::Cluster, Task::Inference),
        (ModelKind::Cluster, Task::Relatedness),
    ] {
        let out = runs.path().join(format!("{}_{}", model.name(), task.name()));
        train(ds.path(), &out, model, task);
        let summary: Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
        let errors: Vec<String> = validator.iter_errors(&summary).map(|e| e.to_string()).collect();
        assert!(errors.is_empty(), "{errors:?}");
        for f in ["runlog.csv", "runlog.json", "model.json", "config.json"] {
            assert!(out.join(f).exists(), "{f}");
        }
    }

    // golden values for the KL model on the toy set, default config
    let summary: Value =
        serde_json::from_str(&fs::read_to_string(runs.path().join("kl_inference/summary.json")).unwrap()).unwrap();
    let golden: Value =
        serde_json::from_str(&fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/toy_kl_summary.json")).unwrap())
            .unwrap();
    let (got, want) = (summary.as_object().unwrap(), golden.as_object().unwrap());
    assert_eq!(got.keys().collect::<Vec<_>>(), want.keys().collect::<Vec<_>>());
    for (k, w) in want {
        match (w.as_f64(), got[k].as_f64()) {
            (Some(w), Some(g)) if !w.is_nan() => assert!((w - g).abs() <= 1e-9 * w.abs().max(1.0), "{k}: {g} vs {w}"),
            _ => assert_eq!(&got[k], w, "{k}"),
        }
    }
}

#[test]
fn training_runs_are_reproducible_through_the_binary() {
    let ds = tempfile::tempdir().unwrap();
    ingest(&repo().join("data/toy.tsv"), 6, ds.path());
    let runs = tempfile::tempdir().unwrap();
    let mut csvs = Vec::new();
    for (i, extra) in [[""; 0].as_slice(), ["--sequential"].as_slice()].iter().enumerate() {
        let out = runs.path().join(i.to_string());
        let mut args = vec![
            "train",
            "--data",
            ds.path().to_str().unwrap(),
            "--lexicon",
            "data/lexicon.txt",
            "--model",
            "xor",
            "--task",
            "inference",
            "--epochs",
            "5",
            "--out",
            out.to_str().unwrap(),
        ];
        args.extend(extra.iter());
        let o = qnli(&args);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
        csvs.push(fs::read_to_string(out.join("runlog.csv")).unwrap());
    }
    assert_eq!(csvs[0], csvs[1]);
    assert_eq!(csvs[0].lines().count(), 1 + 6);
    assert!(csvs[0].starts_with("epoch,train_loss,val_loss,I,dI,igpp,iggp,grad_norm\n"));
}

#[test]
fn config_file_and_flag_overrides() {
    let ds = tempfile::tempdir().unwrap();
    ingest(&repo().join("data/toy.tsv"), 6, ds.path());
    let out = tempfile::tempdir().unwrap();
    let cfg = serde_json::json!({
        "dataset": ds.path(),
        "lexicon": repo().join("data/lexicon.txt"),
        "output": out.path().join("from_file"),
        "train": { "model": "kl", "task": "relatedness", "epochs": 3 }
    });
    let cfg_path = out.path().join("cfg.json");
    fs::write(&cfg_path, cfg.to_string()).unwrap();
    let o = qnli(&["train", "--config", cfg_path.to_str().unwrap(), "--epochs", "2"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let summary: Value = serde_json::from_str(&fs::read_to_string(out.path().join("from_file/summary.json")).unwrap()).unwrap();
    assert_eq!(summary["epochs"], 2);
    assert_eq!(summary["task"], "relatedness");
    assert!(summary["test_mse"].is_number());
    assert!(summary["test_macro_f1"].is_null());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();

    let bad = d.join("bad.tsv");
    fs::write(&bad, "pair_ID\tsentence_A\n1\tonly one column\n").unwrap();
    let o = qnli(&["ingest", "--sick", bad.to_str().unwrap(), "--out", d.join("x").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2), "{}", String::from_utf8_lossy(&o.stderr));

    let o = qnli(&["ingest", "--sick", "data/toy.tsv", "--n", "500", "--out", d.join("y").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));

    let o = qnli(&["train", "--model", "kl", "--task", "inference"]);
    assert_eq!(o.status.code(), Some(2));

    let o = qnli(&["report", d.join("missing.json").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn probe_and_eval_on_a_trained_model() {
    let ds = tempfile::tempdir().unwrap();
    ingest(&repo().join("data/toy.tsv"), 6, ds.path());
    let run = tempfile::tempdir().unwrap();
    train(ds.path(), run.path(), ModelKind::Kl, Task::Inference);
    let model = run.path().join("model.json");

    let o = qnli(&[
        "probe",
        "--pairs",
        "data/probe_compositional.tsv",
        "--lexicon",
        "data/lexicon.txt",
        "--model-file",
        model.to_str().unwrap(),
    ]);
    assert!(o.status.success());
    let csv = String::from_utf8(o.stdout).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "A,B,Gold,Pred");
    assert_eq!(lines.len(), 6);
    // "fence" never occurs in the toy training data
    assert!(lines[1..].iter().all(|l| l.ends_with(",ERR")));
    assert!(String::from_utf8_lossy(&o.stderr).contains("fence"));

    let seen = run.path().join("seen.tsv");
    fs::write(&seen, "the dog is running\tthe dog is playing\t1\ndog\tplant\t1\ngibberish words\tthe dog\t1\n").unwrap();
    let o = qnli(&["probe", "--pairs", seen.to_str().unwrap(), "--lexicon", "data/lexicon.txt", "--model-file", model.to_str().unwrap()]);
    let csv = String::from_utf8(o.stdout).unwrap();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert!(["0", "1", "2"].iter().any(|c| rows[0].ends_with(&format!(",{c}"))), "{csv}");
    assert!(rows[1].ends_with(",ERR"), "plant is unseen: {csv}");
    assert!(rows[2].ends_with(",ERR"));

    let empty = run.path().join("empty.tsv");
    fs::write(&empty, "").unwrap();
    let o = qnli(&["probe", "--pairs", empty.to_str().unwrap(), "--lexicon", "data/lexicon.txt", "--model-file", model.to_str().unwrap()]);
    assert!(o.status.success());
    assert_eq!(String::from_utf8(o.stdout).unwrap(), "A,B,Gold,Pred\n");

    let o = qnli(&[
        "eval",
        "--data",
        ds.path().to_str().unwrap(),
        "--lexicon",
        "data/lexicon.txt",
        "--model-file",
        model.to_str().unwrap(),
        "--split",
        "train",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(m["n"], 8);
    assert!(m["macro_f1"].as_f64().unwrap() <= 1.0);
}

#[test]
fn report_sorts_and_marks_missing_cells() {
    let dir = tempfile::tempdir().unwrap();
    let xor = dir.path().join("xor.json");
    let kl = dir.path().join("kl.json");
    fs::write(&xor, r#"{"model":"xor","task":"relatedness","seed":0,"P":189,"test_mse":0.01,"logl":91.5,"aic":1.9e3,"bic":4.6e3}"#).unwrap();
    fs::write(&kl, r#"{"model":"kl","task":"inference","seed":0,"P":149,"test_macro_f1":0.4,"test_ce":1.0}"#).unwrap();
    let (csv, text) = qnli_cli::report(&[xor, kl]).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], qnli_cli::REPORT_COLUMNS.join(","));
    assert!(lines[1].starts_with("kl,inference,149,–,"));
    assert!(lines[2].starts_with("xor,relatedness,189,1.0000e-2,–,–,–,"));
    assert!(text.lines().nth(1).unwrap().starts_with("kl "));
}
