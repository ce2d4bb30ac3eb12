//! Answer-quality rewards.
//!
//! The hybrid reward mixes a lexical and a semantic score:
//!
//! ```text
//! R = α · RelaxedF1(pred, ref) + (1 - α) · Semantic(pred, ref),   α = 0.6
//! ```
//!
//! Relaxed F1 is token-level F1 after lowercasing, replacing every
//! non-alphanumeric character with a space, and dropping stopwords. The
//! semantic term sits behind [`SemanticScorer`]; full contextual scoring is
//! supplied through a precomputed [`RewardCache`].

use std::collections::{HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::dataio::{EmbeddingStore, QAExample};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::numcore::{cosine, dot, SeededRng};

/// Default stopword list (35 English function words).
pub const DEFAULT_STOPWORDS: [&str; 35] = [
    "a", "an", "the", "and", "or", "but", "if", "of", "at", "by", "for", "with", "about", "to", "from", "in", "on",
    "is", "are", "was", "were", "be", "been", "it", "its", "this", "that", "these", "those", "as", "into", "than",
    "then", "so", "not",
];

pub const DEFAULT_ALPHA: f64 = 0.6;

/// Where the semantic half of the reward comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SemanticSource {
    PrecomputedCache,
    EmbeddingCosine,
    SyntheticOracle,
    ConstantZero,
}

impl SemanticSource {
    pub fn name(self) -> &'static str {
        match self {
            Self::PrecomputedCache => "precomputed-cache",
            Self::EmbeddingCosine => "embedding-cosine",
            Self::SyntheticOracle => "synthetic-oracle",
            Self::ConstantZero => "constant-zero",
        }
    }
}

impl std::fmt::Display for SemanticSource {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for SemanticSource {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "precomputed-cache" => Ok(Self::PrecomputedCache),
            "embedding-cosine" => Ok(Self::EmbeddingCosine),
            "synthetic-oracle" => Ok(Self::SyntheticOracle),
            "constant-zero" => Ok(Self::ConstantZero),
            other => Err(Error::Config(format!(
                "unknown semantic source {other:?} (expected precomputed-cache, embedding-cosine, synthetic-oracle or constant-zero)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RewardConfig {
    pub alpha: f64,
    pub stopwords: HashSet<String>,
    pub semantic_source: SemanticSource,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: DEFAULT_ALPHA,
            stopwords: DEFAULT_STOPWORDS.iter().map(|s| s.to_string()).collect(),
            semantic_source: SemanticSource::SyntheticOracle,
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::Config(format!("alpha must lie in [0, 1], got {}", self.alpha)));
        }
        Ok(())
    }
}

/// Semantic similarity between a predicted and a reference answer, in `[0, 1]`.
///
/// Implementations are shared across rollout workers and must be safe to call
/// concurrently.
pub trait SemanticScorer: Send + Sync {
    fn score(&self, prediction: &str, reference: &str) -> Result<f64>;
}

/// Always 0; leaves only the lexical term.
#[derive(Debug, Clone, Copy, Default)]
pub struct ConstantZero;

impl SemanticScorer for ConstantZero {
    fn score(&self, _: &str, _: &str) -> Result<f64> {
        Ok(0.0)
    }
}

pub fn normalize_answer(text: &str, stopwords: &HashSet<String>) -> Vec<String> {
    let cleaned: String = text
        .to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect();
    cleaned
        .split_whitespace()
        .filter(|t| !stopwords.contains(*t))
        .map(str::to_owned)
        .collect()
}

fn token_f1(pred: &[String], reference: &[String]) -> f64 {
    match (pred.is_empty(), reference.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for t in reference {
        *counts.entry(t).or_default() += 1;
    }
    let mut overlap = 0usize;
    for t in pred {
        if let Some(c) = counts.get_mut(t.as_str()) {
            if *c > 0 {
                *c -= 1;
                overlap += 1;
            }
        }
    }
    if overlap == 0 {
        return 0.0;
    }
    let p = overlap as f64 / pred.len() as f64;
    let r = overlap as f64 / reference.len() as f64;
    2.0 * p * r / (p + r)
}

/// Multiset token F1 over normalized answers.
pub fn relaxed_f1(prediction: &str, reference: &str, config: &RewardConfig) -> f64 {
    token_f1(
        &normalize_answer(prediction, &config.stopwords),
        &normalize_answer(reference, &config.stopwords),
    )
}

/// 1 when the normalized token sequences are equal, else 0.
pub fn exact_match(prediction: &str, reference: &str, config: &RewardConfig) -> f64 {
    let p = normalize_answer(prediction, &config.stopwords);
    let r = normalize_answer(reference, &config.stopwords);
    if p == r {
        1.0
    } else {
        0.0
    }
}

/// `α·f1 + (1-α)·semantic`
pub fn mix(alpha: f64, f1: f64, semantic: f64) -> f64 {
    alpha * f1 + (1.0 - alpha) * semantic
}

fn check_semantic(value: f64, example_id: &str) -> Result<f64> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(value)
    } else {
        Err(Error::Reward {
            example_id: example_id.to_owned(),
            detail: format!("semantic score {value} outside [0, 1]"),
        })
    }
}

pub fn hybrid_reward(
    prediction: &str,
    reference: &str,
    semantic: &dyn SemanticScorer,
    config: &RewardConfig,
    example_id: &str,
) -> Result<f64> {
    let s = semantic
        .score(prediction, reference)
        .map_err(|e| match e {
            e @ Error::Reward { .. } => e,
            other => Error::Reward {
                example_id: example_id.to_owned(),
                detail: other.to_string(),
            },
        })
        .and_then(|s| check_semantic(s, example_id))?;
    Ok(mix(config.alpha, relaxed_f1(prediction, reference, config), s))
}

/// Standardizes a batch with the population standard deviation:
/// `(r - mean) / (std + 1e-8)`.
pub fn normalize_batch(rewards: &[f64]) -> Result<Vec<f64>> {
    if rewards.is_empty() {
        return Err(Error::Argument("cannot normalize an empty batch".into()));
    }
    let n = rewards.len() as f64;
    let mean = rewards.iter().sum::<f64>() / n;
    let var = rewards.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / n;
    let denom = var.sqrt() + 1e-8;
    Ok(rewards.iter().map(|r| (r - mean) / denom).collect())
}

/// Unit vector for a token absent from the embedding table: a ChaCha8
/// stream seeded with the token's 64-bit FNV-1a hash supplies `dim`
/// standard normals, which are then L2-normalized.
pub fn hashed_token_vector(token: &str, dim: usize) -> Vec<f64> {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for b in token.as_bytes() {
        hash ^= u64::from(*b);
        hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut rng = SeededRng::new(hash);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.gaussian()).collect();
        let norm = dot(&v, &v).sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Greedy max-cosine token matching over a static token-embedding table.
///
/// Each token's best cosine is rescaled from `[-1, 1]` to `[0, 1]`;
/// precision and recall average those over prediction and reference tokens
/// and the result is their harmonic mean.
pub struct EmbeddingCosine {
    table: EmbeddingStore,
    stopwords: HashSet<String>,
}

impl EmbeddingCosine {
    pub fn new(table: EmbeddingStore, stopwords: HashSet<String>) -> Self {
        Self { table, stopwords }
    }

    fn vectors(&self, text: &str) -> Vec<Vec<f64>> {
        normalize_answer(text, &self.stopwords)
            .iter()
            .map(|t| match self.table.get(t) {
                Some(v) => v.to_vec(),
                None => hashed_token_vector(t, self.table.dim()),
            })
            .collect()
    }
}

pub fn embedding_cosine_semantic(pred: &[Vec<f64>], reference: &[Vec<f64>]) -> f64 {
    match (pred.is_empty(), reference.is_empty()) {
        (true, true) => return 1.0,
        (true, false) | (false, true) => return 0.0,
        _ => {}
    }
    let sims: Vec<Vec<f64>> = pred
        .iter()
        .map(|p| reference.iter().map(|r| (cosine(p, r) + 1.0) / 2.0).collect())
        .collect();
    let precision = sims
        .iter()
        .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / pred.len() as f64;
    let recall = (0..reference.len())
        .map(|j| sims.iter().map(|row| row[j]).fold(f64::NEG_INFINITY, f64::max))
        .sum::<f64>()
        / reference.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        (2.0 * precision * recall / (precision + recall)).clamp(0.0, 1.0)
    }
}

impl SemanticScorer for EmbeddingCosine {
    fn score(&self, prediction: &str, reference: &str) -> Result<f64> {
        Ok(embedding_cosine_semantic(
            &self.vectors(prediction),
            &self.vectors(reference),
        ))
    }
}

/// One precomputed generation outcome for a selected document set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardCacheRecord {
    pub example_id: String,
    pub doc_ids: Vec<String>,
    pub prediction: String,
    pub semantic_score: f64,
}

/// Reward cache keyed by `(example id, set of selected document ids)`;
/// selection order does not matter.
#[derive(Debug, Clone, Default)]
pub struct RewardCache {
    entries: HashMap<(String, Vec<String>), RewardCacheRecord>,
}

fn doc_set_key(doc_ids: &[&str]) -> Vec<String> {
    let mut k: Vec<String> = doc_ids.iter().map(|s| s.to_string()).collect();
    k.sort();
    k
}

impl RewardCache {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn insert(&mut self, record: RewardCacheRecord) -> Result<()> {
        check_semantic(record.semantic_score, &record.example_id)?;
        let refs: Vec<&str> = record.doc_ids.iter().map(String::as_str).collect();
        let key = (record.example_id.clone(), doc_set_key(&refs));
        self.entries.insert(key, record);
        Ok(())
    }

    pub fn get(&self, example_id: &str, doc_ids: &[&str]) -> Option<&RewardCacheRecord> {
        self.entries.get(&(example_id.to_owned(), doc_set_key(doc_ids)))
    }

    pub fn parse_jsonl(text: &str) -> Result<Self> {
        let mut cache = Self::default();
        for (i, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let rec: RewardCacheRecord = serde_json::from_str(line)
                .map_err(|e| Error::Data(format!("reward cache line {}: {e}", i + 1)))?;
            cache
                .insert(rec)
                .map_err(|e| Error::Data(format!("reward cache line {}: {e}", i + 1)))?;
        }
        Ok(cache)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse_jsonl(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    /// Records sorted by key so output is deterministic.
    pub fn records(&self) -> Vec<&RewardCacheRecord> {
        let mut keys: Vec<_> = self.entries.keys().collect();
        keys.sort();
        keys.into_iter().map(|k| &self.entries[k]).collect()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = Vec::new();
        for r in self.records() {
            serde_json::to_writer(&mut out, r).expect("records serialize");
            out.push(b'\n');
        }
        write_atomic(path, &out)
    }
}

/// Dense (shaped) or sparse reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RewardMode {
    /// Hybrid lexical + semantic reward.
    #[default]
    Dense,
    /// Exact-match indicator.
    Sparse,
}

/// What one selection earned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RewardOutcome {
    /// The training signal under the engine's mode.
    pub reward: f64,
    pub relaxed_f1: f64,
    pub semantic: f64,
    /// Whether the gold document was among the selected ones.
    pub gold_hit: bool,
}

/// Scores a document selection for one example.
pub trait RewardEngine: Send + Sync {
    fn evaluate(&self, example: &QAExample, selected: &[&str], mode: RewardMode) -> Result<RewardOutcome>;
}

enum SemanticBackend {
    Cached,
    Scorer(Box<dyn SemanticScorer>),
}

/// Hybrid reward over cached predictions: the prediction for each
/// `(example, selected set)` comes from a [`RewardCache`]; the semantic
/// score is either the cached value or recomputed by a scorer.
pub struct CachedRewardEngine {
    config: RewardConfig,
    cache: RewardCache,
    semantic: SemanticBackend,
}

impl CachedRewardEngine {
    /// Uses the cached semantic scores.
    pub fn new(config: RewardConfig, cache: RewardCache) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            cache,
            semantic: SemanticBackend::Cached,
        })
    }

    /// Recomputes the semantic term with `scorer`.
    pub fn with_scorer(config: RewardConfig, cache: RewardCache, scorer: Box<dyn SemanticScorer>) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            cache,
            semantic: SemanticBackend::Scorer(scorer),
        })
    }
}

impl RewardEngine for CachedRewardEngine {
    fn evaluate(&self, example: &QAExample, selected: &[&str], mode: RewardMode) -> Result<RewardOutcome> {
        let record = self.cache.get(&example.id, selected).ok_or_else(|| Error::Reward {
            example_id: example.id.clone(),
            detail: format!("no cached prediction for documents {selected:?}"),
        })?;
        let semantic = match &self.semantic {
            SemanticBackend::Cached => record.semantic_score,
            SemanticBackend::Scorer(s) => s
                .score(&record.prediction, &example.answer)
                .and_then(|v| check_semantic(v, &example.id))
                .map_err(|e| Error::Reward {
                    example_id: example.id.clone(),
                    detail: e.to_string(),
                })?,
        };
        let f1 = relaxed_f1(&record.prediction, &example.answer, &self.config);
        let reward = match mode {
            RewardMode::Dense => mix(self.config.alpha, f1, semantic),
            RewardMode::Sparse => exact_match(&record.prediction, &example.answer, &self.config),
        };
        Ok(RewardOutcome {
            reward,
            relaxed_f1: f1,
            semantic,
            gold_hit: selected.contains(&example.gold_doc_id.as_str()),
        })
    }
}
