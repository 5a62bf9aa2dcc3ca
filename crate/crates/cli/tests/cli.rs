mod common;

use std::collections::BTreeMap;
use std::path::Path;

use common::{ok, scalex, setup, tree};
use scalex_core::store::{keys, VectorStore};
use scalex_core::validation::image_sha256;

const PROFESSIONS_ONLY: &str = r#"model = "mock-64d"
seeds = [0, 1]

[[extract.sets]]
kind = "professions"
corpus = "ten_professions.txt"
variants = ["female_male"]

[defaults]
corpus = "ten_professions"
"#;

fn cosine(a: &[f32], b: &[f32]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (x as f64, y as f64);
        ab += x * y;
        aa += x * x;
        bb += y * y;
    }
    1.0 - ab / (aa.sqrt() * bb.sqrt())
}

/// Expected `deltas.csv`, recomputed from the stored vectors.
fn oracle_deltas_csv(store: &Path, seeds: &[u64]) -> String {
    let store = VectorStore::open(store).unwrap();
    let mut by: BTreeMap<(String, String, u64, String), Vec<f32>> = BTreeMap::new();
    for e in store.entries() {
        let t = |k: &str| e.tags.get(k).cloned().unwrap_or_default();
        let seed: u64 = t(keys::SEED).parse().unwrap();
        by.insert(
            (t(keys::PROFESSION), t(keys::SCENARIO), seed, t(keys::GENDER)),
            store.get(&e.id).unwrap().hvector.values,
        );
    }
    let mut scen: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for ((p, s, seed, g), n) in &by {
        if g != "neutral" {
            continue;
        }
        let f = &by[&(p.clone(), s.clone(), *seed, "female".into())];
        let m = &by[&(p.clone(), s.clone(), *seed, "male".into())];
        scen.entry((p.clone(), s.clone()))
            .or_default()
            .push(cosine(f, n) - cosine(m, n));
    }
    assert!(scen.values().all(|v| v.len() == seeds.len()));
    let mut prof: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for ((p, _), v) in scen {
        prof.entry(p).or_default().push(v.iter().sum::<f64>() / v.len() as f64);
    }
    let mut rows: Vec<(String, f64)> = prof
        .into_iter()
        .map(|(p, v)| (p, v.iter().sum::<f64>() / v.len() as f64))
        .collect();
    rows.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
    let mut out = String::from("variant,profession,delta\n");
    for (p, d) in rows {
        let mut s = format!("{d:.4}");
        if s == "-0.0000" {
            s = "0.0000".into();
        }
        out.push_str(&format!("female_male,{p},{s}\n"));
    }
    out
}

#[test]
fn extract_stores_sixty_records_and_rerun_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    std::fs::write(dir.path().join("run.toml"), PROFESSIONS_ONLY).unwrap();
    let stdout = ok(dir.path(), &["extract"]);
    assert!(stdout.contains("60 new record(s)"), "{stdout}");
    assert_eq!(VectorStore::open(dir.path().join("store")).unwrap().len(), 60);

    let before = tree(&dir.path().join("store"));
    let stdout = ok(dir.path(), &["extract"]);
    assert!(stdout.contains("0 new record(s), 60 total"), "{stdout}");
    assert_eq!(tree(&dir.path().join("store")), before);
}

#[test]
fn blank_corpus_lines_are_skipped_with_warning() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    std::fs::write(dir.path().join("run.toml"), PROFESSIONS_ONLY).unwrap();
    let text = std::fs::read_to_string(dir.path().join("ten_professions.txt")).unwrap();
    let mut lines: Vec<&str> = text.lines().collect();
    lines.insert(3, "");
    std::fs::write(dir.path().join("ten_professions.txt"), lines.join("\n")).unwrap();

    let out = scalex(dir.path(), &["extract"]);
    assert!(out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("skipped 1 blank line"), "{stderr}");
    assert!(String::from_utf8_lossy(&out.stdout).contains("skipped 1 blank corpus line(s)"));
    let summary: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/extract/extract_summary.json")).unwrap()).unwrap();
    assert_eq!(summary["skipped_blank"]["ten_professions"], 1);
    assert_eq!(summary["records_added"], 60);
}

#[test]
fn deltas_csv_matches_oracle_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    std::fs::write(dir.path().join("run.toml"), PROFESSIONS_ONLY).unwrap();
    ok(dir.path(), &["extract"]);
    ok(dir.path(), &["defaults"]);
    ok(dir.path(), &["report"]);

    let expected = oracle_deltas_csv(&dir.path().join("store"), &[0, 1]);
    let golden_path = common::fixtures().join("../golden/deltas.csv");
    if std::env::var_os("SCALEX_BLESS").is_some() {
        std::fs::write(&golden_path, &expected).unwrap();
    }
    let golden = std::fs::read_to_string(&golden_path).unwrap();
    assert_eq!(expected, golden, "oracle disagrees with the golden file");
    for f in ["out/defaults/deltas.csv", "out/report/deltas.csv"] {
        assert_eq!(std::fs::read_to_string(dir.path().join(f)).unwrap(), golden, "{f}");
    }
}

#[test]
fn report_without_analyses_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = scalex(dir.path(), &["report"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "MissingAnalysis");
    assert!(!dir.path().join("out/report").exists());
}

#[test]
fn requested_missing_analysis_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    std::fs::write(dir.path().join("run.toml"), PROFESSIONS_ONLY).unwrap();
    ok(dir.path(), &["extract"]);
    ok(dir.path(), &["defaults"]);
    let out = scalex(dir.path(), &["report", "--analysis", "defaults", "--analysis", "rank"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("MissingAnalysis"));
    assert!(!dir.path().join("out/report").exists());
}

#[test]
fn errors_are_json_on_stderr() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    let out = scalex(dir.path(), &["--model", "no-such-model", "extract"]);
    assert_eq!(out.status.code(), Some(1));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "UnknownModel");
    assert!(err["message"].as_str().unwrap().contains("no-such-model"));

    let out = scalex(dir.path(), &["--bogus-flag", "extract"]);
    assert_eq!(out.status.code(), Some(2));
    let err: serde_json::Value = serde_json::from_slice(out.stderr.trim_ascii()).unwrap();
    assert_eq!(err["error"], "Usage");
}

#[test]
fn every_output_directory_holds_the_resolved_config() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    ok(dir.path(), &["extract"]);
    ok(dir.path(), &["defaults"]);
    ok(
        dir.path(),
        &["--seed-count", "2", "rank", "--normalization", "mean_centered"],
    );
    ok(dir.path(), &["condition", "--scale", "0.5"]);
    ok(dir.path(), &["report"]);
    for cmd in ["extract", "defaults", "rank", "condition", "report"] {
        let text = std::fs::read_to_string(dir.path().join("out").join(cmd).join("run_config.toml")).unwrap();
        assert!(text.contains("model = \"mock-64d\""), "{cmd}");
    }
    let rank = std::fs::read_to_string(dir.path().join("out/rank/run_config.toml")).unwrap();
    assert!(rank.contains("normalizations = [\"mean_centered\"]"), "{rank}");
    let cond: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/condition/condition.json")).unwrap()).unwrap();
    assert_eq!(cond["scale"], 0.5);
    assert_eq!(cond["steps_executed"], 4);
    assert!(dir.path().join("out/condition/conditioned.png").exists());
    assert!(dir.path().join("out/condition/baseline.png").exists());
}

#[test]
fn condition_at_zero_scale_reproduces_the_baseline() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    ok(dir.path(), &["extract"]);
    ok(dir.path(), &["condition", "--scale", "0"]);
    let a = std::fs::read(dir.path().join("out/condition/conditioned.png")).unwrap();
    let b = std::fs::read(dir.path().join("out/condition/baseline.png")).unwrap();
    assert_eq!(a, b);
    ok(dir.path(), &["condition", "--scale", "3"]);
    let c = std::fs::read(dir.path().join("out/condition/conditioned.png")).unwrap();
    assert_ne!(a, c);
}

#[test]
fn transfer_rejects_vectors_from_multi_step_sampling() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    std::fs::write(
        dir.path().join("run.toml"),
        std::fs::read_to_string(dir.path().join("run.toml"))
            .unwrap()
            .replace("seeds = [0, 1]", "seeds = [0, 1]\nmode = \"ldm\""),
    )
    .unwrap();
    ok(dir.path(), &["extract"]);
    let out = scalex(dir.path(), &["condition", "--transfer"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("ModeMismatch"));
}

#[test]
fn validate_with_generated_images_and_replayed_scores() {
    let dir = tempfile::tempdir().unwrap();
    setup(dir.path());
    std::fs::write(dir.path().join("run.toml"), PROFESSIONS_ONLY).unwrap();
    ok(dir.path(), &["extract"]);
    ok(dir.path(), &["defaults"]);
    std::fs::write(dir.path().join("empty.json"), r#"{"model":"x","responses":{}}"#).unwrap();
    // Replay fails without recordings, after the images are written.
    let out = scalex(
        dir.path(),
        &["validate", "--generate", "--classifier", "replay:empty.json"],
    );
    assert_eq!(out.status.code(), Some(1));
    let images = dir.path().join("out/validate/images");
    let pilot: Vec<_> = std::fs::read_dir(images.join("pilot")).unwrap().collect();
    assert_eq!(pilot.len(), 2);

    // Score every image as a woman with probability tied to the profession's index.
    let professions = scalex_core::corpus::PROFESSIONS;
    let mut responses = serde_json::Map::new();
    let mut expected_percent = BTreeMap::new();
    for (i, p) in professions.iter().enumerate() {
        let sub = images.join(p.replace(' ', "_"));
        let mut files: Vec<_> = std::fs::read_dir(&sub).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        let mut women = 0;
        for (k, f) in files.iter().enumerate() {
            let woman = k < i % 3;
            women += usize::from(woman);
            let sims = if woman { [0.2, 0.3] } else { [0.3, 0.2] };
            responses.insert(
                image_sha256(&std::fs::read(f).unwrap()),
                serde_json::json!({"class_prompts": ["a photo of a man", "a photo of a woman"], "similarities": sims}),
            );
        }
        expected_percent.insert(p.to_string(), 100.0 * women as f64 / files.len() as f64);
    }
    std::fs::write(
        dir.path().join("scores.json"),
        serde_json::to_string(&serde_json::json!({"model": "fixture", "responses": responses})).unwrap(),
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "validate",
            "--images",
            "out/validate/images",
            "--classifier",
            "replay:scores.json",
        ],
    );
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(dir.path().join("out/validate/validation.json")).unwrap()).unwrap();
    let rows = report["per_prompt"].as_array().unwrap();
    assert_eq!(rows.len(), 10);
    for r in rows {
        let id = r["prompt_id"].as_str().unwrap();
        assert_eq!(r["percent_class"].as_f64().unwrap(), expected_percent[id], "{id}");
    }
    assert_eq!(report["n_images"], 20);
    assert!(dir.path().join("out/validate/labels.json").exists());
}
