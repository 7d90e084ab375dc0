mod common;

use std::fs;
use std::path::Path;

use geodata::corpus_builder::{read_blocks_jsonl, BatchPlan};
use geodata::pipeline::{run_pipeline, Manifest, PipelineError, Stage};

use common::fixtures;

fn fixture_manifest(out: &Path) -> Manifest {
    let mut m = Manifest::load(&fixtures().join("manifest.json")).unwrap();
    m.output_dir = out.to_path_buf();
    m
}

#[test]
fn golden_docs_ingest_and_emit() {
    let out = tempfile::tempdir().unwrap();
    let m: Manifest = serde_json::from_value(serde_json::json!({
        "sources": {"geocorpus": fixtures().join("golden")},
        "stages": ["emit"],
        "output_dir": out.path(),
    }))
    .unwrap();
    let report = run_pipeline(&m).unwrap();
    assert_eq!(report.stages, [Stage::Ingest, Stage::Emit]);
    assert_eq!(report.counts["documents"], 3);
    let mut md: Vec<_> = fs::read_dir(out.path().join("md"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".md"))
        .collect();
    md.sort();
    assert_eq!(md, ["karst_aquifer.md", "loess_plateau.md", "rift_basin.md"]);
    for name in &md {
        let stem = name.trim_end_matches(".md");
        let want = fs::read_to_string(fixtures().join(format!("golden/{stem}.expected.md"))).unwrap();
        assert_eq!(fs::read_to_string(out.path().join("md").join(name)).unwrap(), want);
    }
    // Ingest ran as a prerequisite only, so its files are not kept.
    assert!(!out.path().join("ingest").exists());
    assert!(!out.path().join("blocks").exists());
}

#[test]
fn invalid_manifest_writes_nothing() {
    let root = tempfile::tempdir().unwrap();
    let mut m = fixture_manifest(&root.path().join("out"));
    m.ratios.insert("arxiv".into(), -1.0);
    match run_pipeline(&m) {
        Err(PipelineError::Invalid(errs)) => assert!(errs.iter().any(|e| e.contains("arxiv"))),
        other => panic!("expected validation error, got {other:?}"),
    }
    assert!(!root.path().join("out").exists());
}

#[test]
fn full_fixture_run() {
    let out = tempfile::tempdir().unwrap();
    let m = fixture_manifest(out.path());
    let report = run_pipeline(&m).unwrap();
    assert_eq!(report.stages, Stage::ALL);
    assert_eq!(report.counts["documents"], 50);

    let blocks = read_blocks_jsonl(fs::File::open(out.path().join("blocks/blocks.jsonl")).map(std::io::BufReader::new).unwrap())
        .unwrap();
    assert!(blocks.iter().all(|b| b.ids.len() == 256));
    for s in &report.sources {
        assert_eq!(s.block_num * 256 + s.dropped_tokens, s.token_num, "{}", s.source);
        assert!(s.dropped_tokens < 256);
        let n = blocks.iter().filter(|b| b.source == s.source).count() as u64;
        assert_eq!(n, s.block_num);
    }
    let names: Vec<&str> = report.sources.iter().map(|s| s.source.as_str()).collect();
    assert_eq!(names, ["geocorpus", "arxiv", "code"]);

    let plan: BatchPlan = serde_json::from_str(&fs::read_to_string(out.path().join("plan/plan.json")).unwrap()).unwrap();
    let per: Vec<u64> = plan.sources.iter().map(|s| s.per_batch).collect();
    assert_eq!(per, [16, 2, 2]);
    let batches = fs::read_to_string(out.path().join("plan/batches.jsonl")).unwrap();
    assert_eq!(batches.lines().count(), 4);

    let masks = fs::read_to_string(out.path().join("masks/samples.jsonl")).unwrap();
    assert_eq!(masks.lines().count() as u64, report.counts["masked_samples"]);
    let text = fs::read_to_string(out.path().join("report.txt")).unwrap();
    assert!(text.contains("Total"));
}
