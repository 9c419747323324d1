use std::collections::HashMap;
use std::fs;
use std::path::Path;

use privmine::corpus::{ingest_reviews, normalize_text, GoldLabel, InputFormat};
use privmine::pipeline::{
    annotate_run, export_run, run_extraction, run_selection, ExportFormat, PipelineConfig, PipelineError, Provenance,
    RunManifest, MANIFEST_FILE,
};
use privmine::synth::{labeled_fixture, write_extraction_fixture};
use serde_json::json;

#[test]
fn extraction_counts_follow_the_fixture_ledger() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_extraction_fixture(dir.path(), 7).unwrap();
    let cfg = PipelineConfig::load(&fx.config_path).unwrap();
    let out = run_extraction(&cfg).unwrap();
    let c = out.manifest.counts;
    let l = fx.ledger;
    assert_eq!(
        (c.ingested, c.rating_filtered, c.excluded_empty, c.nli_scored),
        (l.ingested, l.rating_filtered, l.excluded_empty, l.nli_scored)
    );
    assert_eq!((c.maybe_privacy, c.llm_yes, c.llm_no, c.llm_failed), (l.maybe_privacy, l.llm_yes, l.llm_no, l.llm_failed));
    assert_eq!(c.human_pending, l.llm_yes);
    assert!(c.violations().is_empty());
    let queued: Vec<&str> = out.queue.iter().map(|q| q.review.id.as_str()).collect();
    assert_eq!(queued, fx.yes_ids);
    assert!(out.queue.iter().all(|q| !q.triggered.is_empty()));
}

#[test]
fn reruns_are_byte_identical_and_use_caches() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = write_extraction_fixture(a.path(), 3).unwrap();
    let fb = write_extraction_fixture(b.path(), 3).unwrap();
    let ca = PipelineConfig::load(&fa.config_path).unwrap();
    let cb = PipelineConfig::load(&fb.config_path).unwrap();
    run_extraction(&ca).unwrap();
    let first = fs::read(ca.output_dir().join(MANIFEST_FILE)).unwrap();
    let cache_len = fs::metadata(ca.cache_dir().join("nli_scores.jsonl")).unwrap().len();
    run_extraction(&ca).unwrap();
    assert_eq!(first, fs::read(ca.output_dir().join(MANIFEST_FILE)).unwrap());
    assert_eq!(cache_len, fs::metadata(ca.cache_dir().join("nli_scores.jsonl")).unwrap().len());
    run_extraction(&cb).unwrap();
    assert_eq!(first, fs::read(cb.output_dir().join(MANIFEST_FILE)).unwrap());
    for f in ["extracted.jsonl", "votes.jsonl", "pseudo_labels.jsonl", "scores.bin"] {
        assert_eq!(fs::read(ca.output_dir().join(f)).unwrap(), fs::read(cb.output_dir().join(f)).unwrap(), "{f}");
    }
}

#[test]
fn annotation_and_export_close_the_books() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_extraction_fixture(dir.path(), 5).unwrap();
    let cfg = PipelineConfig::load(&fx.config_path).unwrap();
    let extraction = run_extraction(&cfg).unwrap();
    let mut src = cfg.scripted_source().unwrap().unwrap();
    let outcome = annotate_run(&cfg, &mut src).unwrap();
    assert!(outcome.complete());
    assert_eq!(outcome.tiebreaks, fx.ledger.tiebreaks);

    let m = RunManifest::read(&cfg.output_dir().join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.counts.human_confirmed, fx.ledger.human_confirmed);
    assert_eq!(m.counts.human_rejected, fx.ledger.human_rejected);
    assert_eq!(m.counts.human_pending, 0);
    assert!(m.counts.violations().is_empty());

    let path = dir.path().join("dataset.csv");
    let n = export_run(&cfg, ExportFormat::Csv, &path).unwrap();
    assert_eq!(n, fx.ledger.human_confirmed);
    let back = ingest_reviews(&path, InputFormat::Csv).unwrap().corpus;
    assert_eq!(back.len(), n);
    let ingested: HashMap<String, String> = ingest_reviews(&fx.corpus_path, InputFormat::Jsonl)
        .unwrap()
        .corpus
        .reviews
        .into_iter()
        .map(|r| (r.id, r.text_raw))
        .collect();
    for r in back.iter() {
        assert_eq!(ingested.get(&r.id), Some(&r.text_raw), "exported review must trace to the input");
        assert_eq!(r.gold_label, Some(GoldLabel::Privacy));
    }

    // Provenance of one exported review matches the pipeline trace.
    let mut rd = csv::Reader::from_path(&path).unwrap();
    let rec = rd.records().next().unwrap().unwrap();
    let prov: Provenance = serde_json::from_str(&rec[7]).unwrap();
    let traced = extraction.queue.iter().find(|q| q.review.id == rec[0]).unwrap();
    assert_eq!(prov.nli.triggered, traced.triggered);
    assert_eq!((prov.llm.yes, prov.llm.no, prov.llm.abstain), traced.vote.tally());
    assert_eq!(prov.annotators.labels.len(), 2);
}

#[test]
fn export_refuses_an_unfinished_session() {
    let dir = tempfile::tempdir().unwrap();
    let fx = write_extraction_fixture(dir.path(), 5).unwrap();
    let cfg = PipelineConfig::load(&fx.config_path).unwrap();
    run_extraction(&cfg).unwrap();
    let mut src = privmine::pipeline::ScriptedSource::default();
    let outcome = annotate_run(&cfg, &mut src).unwrap();
    assert_eq!(outcome.pending.len(), fx.ledger.llm_yes);
    let err = export_run(&cfg, ExportFormat::Jsonl, &dir.path().join("x.jsonl")).unwrap_err();
    assert!(matches!(err, PipelineError::Incomplete { .. }));
    assert_eq!(err.exit_code(), 4);
}

fn write_config(dir: &Path, v: serde_json::Value) -> PipelineConfig {
    let p = dir.join("config.json");
    fs::write(&p, serde_json::to_string_pretty(&v).unwrap()).unwrap();
    PipelineConfig::load(&p).unwrap()
}

#[test]
fn empty_corpus_gives_all_zero_manifest() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "id,app,store,rating,text\n").unwrap();
    let cfg = write_config(
        dir.path(),
        json!({
            "corpus": {"path": "empty.csv"},
            "nli": {"backends": [{"name": "m", "model": "m", "endpoint": "mock"}]},
            "hypotheses": {"sets": ["generic"]},
            "llm": {"name": "l", "model": "l", "endpoint": "mock"}
        }),
    );
    let out = run_extraction(&cfg).unwrap();
    assert_eq!(out.manifest.counts, Default::default());
    let n = export_run(&cfg, ExportFormat::Csv, &dir.path().join("o.csv")).unwrap();
    assert_eq!(n, 0);
}

#[test]
fn selection_picks_the_model_the_tables_favour() {
    let dir = tempfile::tempdir().unwrap();
    let gold = labeled_fixture(40, 60, 9);
    gold.write_jsonl(&dir.path().join("gold.jsonl")).unwrap();
    let phrases = [
        "they sell my data to advertisers",
        "my therapist chats were shared without consent",
        "the app tracks my location constantly",
        "they leaked my personal information",
        "no way to delete my account data",
        "my health records were shared with facebook",
    ];
    let all_ids: Vec<u32> = (1..=31).collect();
    let sharp = json!({"triggers": phrases.iter().map(|p| json!({"phrase": p, "hypothesis_ids": [25], "score": 0.95})).collect::<Vec<_>>(), "jitter": 0.0});
    let keyword = json!({"triggers": [{"phrase": "privacy", "hypothesis_ids": all_ids, "score": 0.9}], "jitter": 0.0});
    let cfg = write_config(
        dir.path(),
        json!({
            "labeled_corpus": {"path": "gold.jsonl"},
            "nli": {"backends": [
                {"name": "keyword", "model": "k", "endpoint": "mock", "mock_table": keyword},
                {"name": "sharp", "model": "s", "endpoint": "mock", "mock_table": sharp}
            ]},
        }),
    );
    let sel = run_selection(&cfg).unwrap();

    // Oracle: the sharp model fires exactly on reviews containing a phrase.
    let mut tp = 0;
    let mut fp = 0;
    for r in gold.iter() {
        let norm = normalize_text(&r.text_raw);
        if phrases.iter().any(|p| norm.contains(p)) {
            if r.gold_label == Some(GoldLabel::Privacy) { tp += 1 } else { fp += 1 }
        }
    }
    let sharp_row = sel.models.row("sharp").unwrap();
    assert!((sharp_row.report.precision - tp as f64 / (tp + fp) as f64).abs() < 1e-12);
    assert!((sharp_row.report.recall - tp as f64 / 40.0).abs() < 1e-12);
    // Every review mentions privacy, so the keyword model flags everything.
    let kw = sel.models.row("keyword").unwrap();
    assert!((kw.report.precision - 0.4).abs() < 1e-12);
    assert_eq!(kw.report.recall, 1.0);
    assert_eq!(sel.best_backend, "sharp");

    // Hypothesis 25 is in the generic set only; the domain set sees nothing.
    assert_eq!(sel.best_set, "generic");
    assert_eq!(sel.hypothesis_sets.row("mh_domain").unwrap().report.f1, 0.0);
    assert_eq!(sel.pseudo_labels.entries.len(), 100);
    assert!(cfg.output_dir().join("selection.json").exists());
}

#[test]
fn selection_with_one_model_and_one_set() {
    let dir = tempfile::tempdir().unwrap();
    labeled_fixture(5, 5, 1).write_jsonl(&dir.path().join("gold.jsonl")).unwrap();
    let cfg = write_config(
        dir.path(),
        json!({
            "labeled_corpus": {"path": "gold.jsonl"},
            "nli": {"backends": [{"name": "only", "model": "m", "endpoint": "mock"}]},
            "hypotheses": {"sets": ["mh_domain"]}
        }),
    );
    let sel = run_selection(&cfg).unwrap();
    assert_eq!(sel.models.rows.len(), 1);
    assert_eq!(sel.hypothesis_sets.rows.len(), 1);
    assert_eq!(sel.pseudo_labels.entries.len(), 10);
}

#[test]
fn shipped_reference_config_is_valid() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/paper.json");
    let cfg = PipelineConfig::load(&path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.nli.backends.len(), 4);
    assert_eq!(cfg.extraction_set().unwrap().1.len(), 21);
    assert_eq!(cfg.sampling.num_samples, 5);
    assert_eq!(cfg.annotation.as_ref().unwrap().annotators.len(), 4);
}
