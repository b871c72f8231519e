use std::path::Path;
use std::process::{Command, Output};

use agp::synthetic::{write_corpus, SynthConfig};

fn agp(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_agp"))
        .args(args)
        .output()
        .unwrap()
}

fn corpus(dir: &Path) -> String {
    let cfg = SynthConfig {
        alphabets: 2,
        classes_per_alphabet: 5,
        instances_per_class: 2,
        ..SynthConfig::default()
    };
    write_corpus(dir, &cfg).unwrap();
    dir.to_str().unwrap().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn index_reports_counts() {
    let dir = tempfile::tempdir().unwrap();
    let root = corpus(&dir.path().join("data"));
    let out = agp(&["index", "--data-root", &root]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("alphabets 2"));
    assert!(text.contains("classes 10"));
    assert!(text.contains("instances 20"));
}

#[test]
fn empty_tree_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = agp(&["index", "--data-root", s(dir.path())]);
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn bad_config_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    std::fs::write(&cfg, r#"{"radius": 1.6, "unknown": true}"#).unwrap();
    let out = agp(&["index", "--config", s(&cfg), "--data-root", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    std::fs::write(&cfg, r#"{"beta": 0.9}"#).unwrap();
    let out = agp(&["index", "--config", s(&cfg), "--data-root", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn single_trial_bench_writes_report_and_log() {
    let dir = tempfile::tempdir().unwrap();
    let root = corpus(&dir.path().join("data"));
    let out_dir = dir.path().join("bench");
    let out = agp(&[
        "bench", "--data-root", &root, "--n-way", "5", "--trials", "1", "--method", "mse",
        "--out", s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["log"].as_array().unwrap().len(), 1);
    assert_eq!(report["settings"]["radius"], 1.6);
    let csv = std::fs::read_to_string(out_dir.join("trials.csv")).unwrap();
    assert_eq!(csv.lines().count(), 2);
}

#[test]
fn proto_with_one_component() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    corpus(&root);
    let img = root.join("Alphabet_01/character01/01_01.png");
    let png = dir.path().join("p.png");
    let out = agp(&["proto", s(&img), "--k", "1", "--out", s(&png)]);
    assert!(out.status.success());
    let decoded = image::open(&png).unwrap();
    assert_eq!(decoded.height(), 105);
    assert!(decoded.width() > 3 * 105);
}

#[test]
fn zero_count_generation_writes_provenance_and_checkpoint_only() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    corpus(&root);
    let img = root.join("Alphabet_01/character02/02_01.png");
    let out_dir = dir.path().join("gen");
    let out = agp(&[
        "generate", "--task", "exemplars", "--sources", s(&img), "--count", "0", "--epochs", "1",
        "--per-class", "5", "--out", s(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out_dir.join("provenance.json").is_file());
    assert!(out_dir.join("vae_checkpoint.json").is_file());
    let variants = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("variant_"))
        .count();
    assert_eq!(variants, 0);
}

#[test]
fn exemplar_task_rejects_several_sources() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path().join("data");
    corpus(&root);
    let a = root.join("Alphabet_01/character01/01_01.png");
    let b = root.join("Alphabet_01/character02/02_01.png");
    let sources = format!("{},{}", s(&a), s(&b));
    let out = agp(&[
        "generate", "--task", "exemplars", "--sources", &sources, "--count", "1", "--out",
        s(&dir.path().join("gen")),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
