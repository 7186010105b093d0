use std::path::Path;
use std::process::{Command as Proc, Output};

use caise_core::dialogue::{instances_from_dialogues, load_jsonl};
use caise_core::eval::accuracy_lists;
use caise_core::{edit, parse_command, RasterImage};
use serde_json::Value;

fn caise(args: &[&str]) -> Output {
    Proc::new(env!("CARGO_BIN_EXE_caise")).args(args).env_remove("CAISE_CONFIG").output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(o: &Output) -> Value {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn exec_applies_the_brightness_formula() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("in.png");
    let out = dir.path().join("out.png");
    let px: Vec<u8> = (0..6 * 5 * 3).map(|i| (i * 37 % 256) as u8).collect();
    let img = RasterImage::new(6, 5, px).unwrap();
    img.save(&input).unwrap();
    let o = caise(&["exec", "--image", s(&input), "--cmd", "[adjust_attr brightness 40]", "--out", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(RasterImage::load(&out).unwrap(), edit::adjust_brightness(&img, 40));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("o.png");
    assert_eq!(code(&caise(&["frobnicate"])), 2);
    assert_eq!(code(&caise(&["exec", "--cmd", "[rotate 9000]", "--out", s(&out)])), 2);
    assert_eq!(code(&caise(&["exec", "--image", "/no/such.png", "--cmd", "[rotate 90]", "--out", s(&out)])), 2);
    assert_eq!(code(&caise(&["eval", "--data", "/no/such.jsonl", "--preds", "/no/p.txt"])), 2);
    // Well-formed request that fails while running.
    assert_eq!(code(&caise(&["exec", "--cmd", "[rotate 90]", "--out", s(&out)])), 1);
    assert_eq!(code(&caise(&["--help"])), 0);
}

#[test]
fn eval_on_prediction_files_matches_the_library() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let o = caise(&["--json", "synth-data", "--out", s(&data), "--dialogues", "12", "--corpus-size", "60"]);
    let counts = json(&o);
    let test = data.join("test.jsonl");
    let insts = instances_from_dialogues(&load_jsonl(&test).unwrap()).unwrap();
    assert_eq!(counts["test"]["instances"], insts.len());

    // Alternate exact answers, wrong answers, gaps and garbage.
    let lines: Vec<String> = insts
        .iter()
        .enumerate()
        .map(|(i, inst)| match i % 4 {
            0 | 1 => inst.target.to_string(),
            2 => "[rotate 7]".to_string(),
            _ => if i % 8 == 3 { "-" } else { "[rotate ninety]" }.to_string(),
        })
        .collect();
    let preds_path = dir.path().join("preds.txt");
    std::fs::write(&preds_path, lines.join("\n")).unwrap();
    let got = json(&caise(&["--json", "eval", "--data", s(&test), "--preds", s(&preds_path)]));

    let preds: Vec<_> = lines.iter().map(|l| parse_command(l).ok()).collect();
    let gts: Vec<_> = insts.iter().map(|i| i.target.clone()).collect();
    let ids: Vec<_> = insts.iter().map(|i| i.dialogue_id.clone()).collect();
    let want = accuracy_lists(&preds, &gts, &ids).unwrap();
    assert_eq!(got, serde_json::to_value(&want).unwrap());

    let stats = json(&caise(&["--json", "stats", s(&test)]));
    assert!(stats.is_object());
}

#[test]
fn gradcheck_reports_pass() {
    let v = json(&caise(&["--json", "gradcheck", "--seeds", "2021", "--instances", "1"]));
    assert_eq!(v["pass"], true);
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-4);
}

#[test]
fn config_file_overrides_are_validated() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("caise.toml");
    std::fs::write(&cfg, "[model]\nhiden = 12\n").unwrap();
    let o = Proc::new(env!("CARGO_BIN_EXE_caise"))
        .args(["train", "--preset", "micro", "--out", s(&dir.path().join("run"))])
        .env("CAISE_CONFIG", &cfg)
        .output()
        .unwrap();
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("hiden"));
}

#[test]
fn corpus_tools_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    json(&caise(&["--json", "synth-corpus", "--out", s(&corpus), "--n", "15"]));
    let manifest = corpus.join("manifest.jsonl");
    let v = json(&caise(&["--json", "ingest-corpus", "--manifest", s(&manifest)]));
    assert_eq!(v["entries"], 15);
    assert!(corpus.join("index.json").is_file());
    let out = dir.path().join("hit.png");
    let v = json(&caise(&["--json", "exec", "--cmd", "[search red car bus dog]", "--corpus", s(&manifest), "--out", s(&out)]));
    assert!(v["image_id"].as_str().unwrap().starts_with("corpus:"));
}
