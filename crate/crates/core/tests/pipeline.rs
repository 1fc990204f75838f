use std::fs;
use std::path::PathBuf;

use lexgraph::pipeline::{ingest_corpus, run_query, PipelineError, RunConfig};
use lexgraph::prompt::{Mode, PromptError, Toggle};
use lexgraph::provider::ScriptedProvider;

fn corpus() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../corpus")
}

fn config() -> RunConfig {
    RunConfig::from_path(&corpus().join("lexgraph.toml")).unwrap()
}

fn sample_query() -> String {
    fs::read_to_string(corpus().join("sample.query.txt")).unwrap().trim().to_string()
}

fn mock(cfg: &RunConfig) -> ScriptedProvider {
    ScriptedProvider::from_path(cfg.paths.mock.as_ref().unwrap()).unwrap()
}

#[test]
fn baseline_sends_the_bare_question_once() {
    let mut cfg = config();
    cfg.mode = Mode::Baseline;
    let rt = ingest_corpus(&cfg.paths, &cfg.pipeline).unwrap();
    let provider = mock(&cfg);
    let q = sample_query();
    let report = run_query(&q, &rt, &cfg, &provider).unwrap();
    assert_eq!(provider.calls(), 1);
    assert_eq!(provider.prompts(), vec![q.clone()]);
    assert_eq!(report.prompt_text, q);
    assert!(report.retrieval.is_empty());
    assert!(report.template.is_none());
}

#[test]
fn complete_mode_recovers_after_one_adjustment() {
    let cfg = config();
    let rt = ingest_corpus(&cfg.paths, &cfg.pipeline).unwrap();
    let provider = mock(&cfg);
    let report = run_query(&sample_query(), &rt, &cfg, &provider).unwrap();
    assert_eq!(report.analysis.code.as_deref(), Some("CC-1217"));
    assert_eq!(report.template.as_ref().unwrap().template_id, "contract_breach");
    assert_eq!(report.timing.provider_calls, 2);
    assert_eq!(report.selected_iteration, 1);
    assert!(report.quality.pass);
    assert!(!report.iterations[0].report.pass);
    let search = report.search.as_ref().unwrap();
    assert_eq!((search.fetched, search.retained), (5, 2));
}

#[test]
fn switching_off_code_matching_renormalizes_fusion() {
    let mut cfg = config();
    cfg.disable.insert(Toggle::Lcm);
    let rt = ingest_corpus(&cfg.paths, &cfg.pipeline).unwrap();
    let report = run_query(&sample_query(), &rt, &cfg, &mock(&cfg)).unwrap();
    let w = report.fusion_weights;
    assert_eq!(w.cm, 0.0);
    assert!((w.vs + w.pi + w.tm - 1.0).abs() < 1e-12);
    assert!((w.vs / w.pi - 0.2 / 0.25).abs() < 1e-12);
    for r in &report.retrieval {
        let s = &r.scores;
        assert!((s.fused - (w.vs * s.vs + w.pi * s.pi + w.tm * s.tm)).abs() < 1e-12);
    }
}

#[test]
fn without_optimization_there_is_a_single_call() {
    let mut cfg = config();
    cfg.disable.insert(Toggle::Do);
    let rt = ingest_corpus(&cfg.paths, &cfg.pipeline).unwrap();
    let provider = mock(&cfg);
    let report = run_query(&sample_query(), &rt, &cfg, &provider).unwrap();
    assert_eq!(provider.calls(), 1);
    assert_eq!(report.iterations.len(), 1);
}

#[test]
fn empty_query_is_rejected() {
    let cfg = config();
    let rt = ingest_corpus(&cfg.paths, &cfg.pipeline).unwrap();
    let err = run_query("  \n", &rt, &cfg, &mock(&cfg)).unwrap_err();
    assert!(matches!(err, PipelineError::EmptyQuery));
}

#[test]
fn missing_terms_file_is_named() {
    let mut cfg = config();
    cfg.paths.terms = corpus().join("nope.terms.tsv");
    let Err(err) = ingest_corpus(&cfg.paths, &cfg.pipeline) else { panic!("ingest succeeded") };
    assert!(err.to_string().contains("nope.terms.tsv"), "{err}");
}

#[test]
fn malformed_templates_report_their_location() {
    let dir = std::env::temp_dir().join(format!("lexgraph-bad-templates-{}", std::process::id()));
    fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.templates.json");
    fs::write(&bad, "{\n  \"score_floor\": 0.1,\n  \"dimensions\": [\n").unwrap();
    let mut cfg = config();
    cfg.paths.templates = bad.clone();
    let Err(err) = ingest_corpus(&cfg.paths, &cfg.pipeline) else { panic!("ingest succeeded") };
    match err {
        PipelineError::Templates(PromptError::Parse { path, line, .. }) => {
            assert!(path.contains("bad.templates.json"));
            assert_eq!(line, 4);
        }
        other => panic!("unexpected {other:?}"),
    }
    fs::remove_dir_all(dir).ok();
}
