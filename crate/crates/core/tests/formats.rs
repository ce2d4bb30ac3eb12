use std::process::Command;

use sras::dataio::{
    load_corpus_jsonl, load_qa_jsonl, write_corpus_jsonl, write_embedding_store, write_qa_jsonl, CorpusDoc,
    EmbeddingStore, QAExample,
};
use sras::evalbench::EvalReport;
use sras::reward::{CachedRewardEngine, RewardCache, RewardCacheRecord, RewardConfig, RewardEngine, RewardMode};

fn example(id: &str, answer: &str, gold: &str, candidates: &[&str]) -> QAExample {
    QAExample {
        id: id.into(),
        question: format!("question {id}?"),
        answer: answer.into(),
        gold_doc_id: gold.into(),
        candidate_doc_ids: candidates.iter().map(|s| s.to_string()).collect(),
        difficulty: None,
    }
}

fn record(example_id: &str, docs: &[&str], prediction: &str, semantic: f64) -> RewardCacheRecord {
    RewardCacheRecord {
        example_id: example_id.into(),
        doc_ids: docs.iter().map(|s| s.to_string()).collect(),
        prediction: prediction.into(),
        semantic_score: semantic,
    }
}

#[test]
fn jsonl_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let qa = vec![
        example("a", "Paris", "d1", &["d0", "d1"]),
        QAExample {
            difficulty: Some(0.25),
            ..example("b", "the \"quoted\" answer", "d0", &["d0", "d1"])
        },
    ];
    write_qa_jsonl(&qa, &dir.path().join("qa.jsonl")).unwrap();
    assert_eq!(load_qa_jsonl(&dir.path().join("qa.jsonl")).unwrap(), qa);

    let corpus = vec![
        CorpusDoc { id: "d0".into(), text: "line one\nline two".into() },
        CorpusDoc { id: "d1".into(), text: "ünïcode".into() },
    ];
    write_corpus_jsonl(&corpus, &dir.path().join("c.jsonl")).unwrap();
    assert_eq!(load_corpus_jsonl(&dir.path().join("c.jsonl")).unwrap(), corpus);

    let mut cache = RewardCache::default();
    cache.insert(record("a", &["d1", "d0"], "Paris", 0.9)).unwrap();
    cache.insert(record("b", &["d0"], "no idea", 0.1)).unwrap();
    let path = dir.path().join("cache.jsonl");
    cache.save(&path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let back = RewardCache::load(&path).unwrap();
    assert_eq!(back.len(), 2);
    assert_eq!(back.get("a", &["d0", "d1"]).unwrap().prediction, "Paris");
    back.save(&path).unwrap();
    assert_eq!(std::fs::read_to_string(&path).unwrap(), text);
}

#[test]
fn malformed_lines_are_reported_by_number() {
    let dir = tempfile::tempdir().unwrap();
    let qa = dir.path().join("qa.jsonl");
    std::fs::write(&qa, "{\"id\":\"a\",\"question\":\"\",\"answer\":\"x\",\"gold_doc_id\":\"d0\",\"candidate_doc_ids\":[\"d0\"]}\n{oops\n").unwrap();
    let err = load_qa_jsonl(&qa).unwrap_err().to_string();
    assert!(err.contains("line 2"), "{err}");

    let err = RewardCache::parse_jsonl("\n{\"example_id\":\"a\",\"doc_ids\":[],\"prediction\":\"\",\"semantic_score\":1.5}\n")
        .unwrap_err()
        .to_string();
    assert!(err.contains("line 2"), "{err}");
}

#[test]
fn cached_engine_combines_lexical_and_semantic_terms() {
    let mut cache = RewardCache::default();
    cache.insert(record("a", &["d1"], "Paris France", 0.5)).unwrap();
    let alpha = RewardConfig::default().alpha;
    let engine = CachedRewardEngine::new(RewardConfig::default(), cache).unwrap();
    let ex = example("a", "Paris", "d1", &["d0", "d1"]);
    let dense = engine.evaluate(&ex, &["d1"], RewardMode::Dense).unwrap();
    assert!((dense.relaxed_f1 - 2.0 / 3.0).abs() < 1e-12);
    assert!((dense.reward - (alpha * 2.0 / 3.0 + (1.0 - alpha) * 0.5)).abs() < 1e-12);
    assert!(dense.gold_hit);
    assert_eq!(engine.evaluate(&ex, &["d1"], RewardMode::Sparse).unwrap().reward, 0.0);
    let err = engine.evaluate(&ex, &["d0"], RewardMode::Dense).unwrap_err().to_string();
    assert!(err.contains('a'), "{err}");
}

#[test]
fn cli_evaluates_with_a_reward_cache() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let mut store = EmbeddingStore::new(2);
    store.push("qa", &[1.0, 0.0]).unwrap();
    store.push("qb", &[0.0, 1.0]).unwrap();
    store.push("d0", &[0.9, 0.1]).unwrap();
    store.push("d1", &[0.1, 0.9]).unwrap();
    write_embedding_store(&store, &d.join("e.srse")).unwrap();
    write_qa_jsonl(
        &[example("qa", "Paris", "d0", &["d0", "d1"]), example("qb", "Rome", "d1", &["d0", "d1"])],
        &d.join("qa.jsonl"),
    )
    .unwrap();
    let mut cache = RewardCache::default();
    cache.insert(record("qa", &["d0"], "Paris", 1.0)).unwrap();
    cache.insert(record("qb", &["d1"], "Milan", 0.25)).unwrap();
    cache.save(&d.join("cache.jsonl")).unwrap();

    let out = Command::new(env!("CARGO_BIN_EXE_sras"))
        .current_dir(d)
        .args([
            "eval", "--embeddings", "e.srse", "--qa", "qa.jsonl", "--selector", "cosine", "--k", "1",
            "--semantic-source", "precomputed-cache", "--reward-cache", "cache.jsonl", "--alpha", "0.5",
            "--report", "r.json", "--latency-iters", "5",
        ])
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = EvalReport::from_json(&std::fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert_eq!(report.aggregates.gold_recall, 1.0);
    assert!((report.aggregates.mean_relaxed_f1 - 0.5).abs() < 1e-12);
    assert!((report.aggregates.mean_semantic - 0.625).abs() < 1e-12);
}
