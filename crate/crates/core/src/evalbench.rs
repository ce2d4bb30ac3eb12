//! Baseline selectors, batch evaluation reports and micro-benchmarks.
//!
//! Latency here is selector-only time per query: embedding lookup, scoring
//! and top-k. It excludes answer generation.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataio::{EmbeddingStore, QAExample};
use crate::error::{Error, Result};
use crate::numcore::{cosine, SeededRng};
use crate::policy::{argmax_topk, TopKAction};
use crate::reward::{RewardEngine, RewardMode};
use crate::scorer::{model_file_size, SelectorParams};
use crate::trainer::AblationRun;

/// Top-k candidates by cosine similarity to the query, ties to the lower
/// index. A zero-norm vector has cosine 0 with everything.
pub fn cosine_topk(query: &[f64], candidates: &[&[f64]], k: usize) -> Result<TopKAction> {
    let mut scores = Vec::with_capacity(candidates.len());
    for (i, c) in candidates.iter().enumerate() {
        if c.len() != query.len() {
            return Err(Error::Shape(format!(
                "candidate {i} has dimension {}, query has {}",
                c.len(),
                query.len()
            )));
        }
        scores.push(cosine(query, c));
    }
    argmax_topk(&scores, k)
}

/// Uniform k-subset of `0..n`, in draw order.
pub fn random_topk(n: usize, k: usize, rng: &mut SeededRng) -> Result<TopKAction> {
    if k > n {
        return Err(Error::Argument(format!("k = {k} exceeds n = {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below(n - i);
        idx.swap(i, j);
    }
    idx.truncate(k);
    Ok(TopKAction { indices: idx })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SelectorKind {
    Sras,
    Supervised,
    Cosine,
    Random,
}

impl SelectorKind {
    pub const ALL: [SelectorKind; 4] = [Self::Sras, Self::Supervised, Self::Cosine, Self::Random];

    pub fn name(self) -> &'static str {
        match self {
            Self::Sras => "sras",
            Self::Supervised => "supervised",
            Self::Cosine => "cosine",
            Self::Random => "random",
        }
    }
}

impl fmt::Display for SelectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SelectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Argument(format!("unknown selector {s:?} (expected sras, supervised, cosine or random)")))
    }
}

/// A selector ready to run.
#[derive(Debug, Clone)]
pub enum Selector {
    /// PPO-trained scorer, argmax top-k.
    Sras(SelectorParams),
    /// Cross-entropy-trained scorer, argmax top-k.
    Supervised(SelectorParams),
    Cosine,
    Random { seed: u64 },
}

impl Selector {
    pub fn kind(&self) -> SelectorKind {
        match self {
            Self::Sras(_) => SelectorKind::Sras,
            Self::Supervised(_) => SelectorKind::Supervised,
            Self::Cosine => SelectorKind::Cosine,
            Self::Random { .. } => SelectorKind::Random,
        }
    }

    /// Serialized model size; 0 for parameter-free selectors.
    pub fn size_bytes(&self) -> u64 {
        match self {
            Self::Sras(p) | Self::Supervised(p) => bench_model_size(p),
            Self::Cosine | Self::Random { .. } => 0,
        }
    }

    fn select(&self, query: &[f64], docs: &[&[f64]], k: usize, rng: &mut SeededRng) -> Result<TopKAction> {
        match self {
            Self::Sras(p) | Self::Supervised(p) => argmax_topk(&p.score_candidates(query, docs)?, k),
            Self::Cosine => cosine_topk(query, docs, k),
            Self::Random { .. } => random_topk(docs.len(), k, rng),
        }
    }

    fn rng(&self) -> SeededRng {
        match self {
            Self::Random { seed } => SeededRng::new(*seed),
            _ => SeededRng::new(0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalConfig {
    pub k: usize,
    /// Untimed iterations before measuring latency.
    pub latency_warmup: usize,
    /// Timed iterations; 0 disables the latency benchmark.
    pub latency_iters: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            k: 3,
            latency_warmup: 100,
            latency_iters: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub mean_us: f64,
    pub p50_us: f64,
    pub p95_us: f64,
    pub iterations: usize,
}

impl LatencyStats {
    /// Summary of per-iteration timings in microseconds (nearest-rank
    /// percentiles).
    pub fn from_samples(samples: &mut [f64]) -> Self {
        if samples.is_empty() {
            return Self::default();
        }
        samples.sort_by(f64::total_cmp);
        let rank = |q: f64| {
            let r = (q * samples.len() as f64).ceil() as usize;
            samples[r.clamp(1, samples.len()) - 1]
        };
        Self {
            mean_us: samples.iter().sum::<f64>() / samples.len() as f64,
            p50_us: rank(0.50),
            p95_us: rank(0.95),
            iterations: samples.len(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub id: String,
    pub selected: Vec<String>,
    pub relaxed_f1: f64,
    pub semantic: f64,
    pub gold_hit: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub mean_relaxed_f1: f64,
    pub mean_semantic: f64,
    /// Fraction of examples whose gold document was selected.
    pub gold_recall: f64,
    pub latency: LatencyStats,
    pub model_size_bytes: u64,
}

/// Evaluation of one selector over a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub selector: SelectorKind,
    pub k: usize,
    pub aggregates: Aggregates,
    pub records: Vec<ExampleRecord>,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let n = values.len();
    values.sum::<f64>() / n as f64
}

impl EvalReport {
    /// Checks that the aggregates are the means of the per-example records.
    pub fn recompute_check(&self) -> Result<()> {
        if self.records.is_empty() {
            return Err(Error::Data("report has no records".into()));
        }
        let f1 = mean(self.records.iter().map(|r| r.relaxed_f1));
        let sem = mean(self.records.iter().map(|r| r.semantic));
        let rec = mean(self.records.iter().map(|r| if r.gold_hit { 1.0 } else { 0.0 }));
        let a = &self.aggregates;
        for (name, stored, fresh) in [
            ("mean_relaxed_f1", a.mean_relaxed_f1, f1),
            ("mean_semantic", a.mean_semantic, sem),
            ("gold_recall", a.gold_recall, rec),
        ] {
            if (stored - fresh).abs() > 1e-9 {
                return Err(Error::Data(format!("{name}: stored {stored}, recomputed {fresh}")));
            }
        }
        Ok(())
    }

    /// Copy with the latency block zeroed, for reproducibility comparisons.
    pub fn untimed(&self) -> Self {
        let mut copy = self.clone();
        copy.aggregates.latency = LatencyStats::default();
        copy
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::format("report", e.to_string()))
    }

    /// Per-example rows; selected ids are joined with `;`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,selected,relaxed_f1,semantic,gold_hit\n");
        for r in &self.records {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                csv_field(&r.id),
                csv_field(&r.selected.join(";")),
                r.relaxed_f1,
                r.semantic,
                r.gold_hit as u8
            ));
        }
        out
    }

    pub fn to_table(&self) -> String {
        render_comparison(std::slice::from_ref(self))
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}

/// Aligned text table with one row per report.
pub fn render_comparison(reports: &[EvalReport]) -> String {
    let header = [
        "selector",
        "k",
        "relaxed_f1",
        "semantic",
        "gold_recall",
        "lat_mean_us",
        "lat_p50_us",
        "lat_p95_us",
        "size_mb",
    ];
    let rows: Vec<Vec<String>> = reports
        .iter()
        .map(|r| {
            let a = &r.aggregates;
            vec![
                r.selector.to_string(),
                r.k.to_string(),
                format!("{:.4}", a.mean_relaxed_f1),
                format!("{:.4}", a.mean_semantic),
                format!("{:.4}", a.gold_recall),
                format!("{:.2}", a.latency.mean_us),
                format!("{:.2}", a.latency.p50_us),
                format!("{:.2}", a.latency.p95_us),
                format!("{:.3}", a.model_size_bytes as f64 / (1024.0 * 1024.0)),
            ]
        })
        .collect();
    let mut table = vec![header.iter().map(|s| s.to_string()).collect::<Vec<_>>()];
    table.extend(rows);
    render_rows(&table)
}

/// Left-aligns the first column and right-aligns the rest.
pub fn render_rows(rows: &[Vec<String>]) -> String {
    let cols = rows.iter().map(Vec::len).max().unwrap_or(0);
    let widths: Vec<usize> = (0..cols)
        .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row
            .iter()
            .enumerate()
            .map(|(c, s)| {
                if c == 0 {
                    format!("{s:<w$}", w = widths[c])
                } else {
                    format!("{s:>w$}", w = widths[c])
                }
            })
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Population standard deviation; 0 for fewer than two values.
pub fn std_dev(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = values.iter().sum::<f64>() / values.len() as f64;
    (values.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / values.len() as f64).sqrt()
}

/// Summary of one ablation variant's reward curve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub final_reward: f64,
    /// Mean over all epochs (area under the curve per epoch).
    pub mean_reward: f64,
    /// Standard deviation of the first five epoch rewards.
    pub early_std: f64,
    pub epochs: usize,
}

impl AblationRow {
    pub fn from_run(run: &AblationRun) -> Self {
        let r = run.log.rewards();
        Self {
            variant: run.variant.name().to_owned(),
            final_reward: r.last().copied().unwrap_or(f64::NAN),
            mean_reward: if r.is_empty() { f64::NAN } else { r.iter().sum::<f64>() / r.len() as f64 },
            early_std: std_dev(&r[..r.len().min(5)]),
            epochs: r.len(),
        }
    }
}

pub fn ablation_table(rows: &[AblationRow]) -> String {
    let mut table = vec![["variant", "final_reward", "mean_reward", "early_std", "epochs"]
        .iter()
        .map(|s| s.to_string())
        .collect::<Vec<_>>()];
    for r in rows {
        table.push(vec![
            r.variant.clone(),
            format!("{:.4}", r.final_reward),
            format!("{:.4}", r.mean_reward),
            format!("{:.4}", r.early_std),
            r.epochs.to_string(),
        ]);
    }
    render_rows(&table)
}

/// Reward per epoch, one column per variant.
pub fn ablation_curves_csv(runs: &[AblationRun]) -> String {
    let mut out = String::from("epoch");
    for r in runs {
        out.push(',');
        out.push_str(r.variant.name());
    }
    out.push('\n');
    let epochs = runs.iter().map(|r| r.log.epochs.len()).max().unwrap_or(0);
    for e in 0..epochs {
        out.push_str(&(e + 1).to_string());
        for r in runs {
            out.push(',');
            if let Some(s) = r.log.epochs.get(e) {
                out.push_str(&s.mean_reward.to_string());
            }
        }
        out.push('\n');
    }
    out
}

struct Resolved<'a> {
    query: &'a [f64],
    docs: Vec<&'a [f64]>,
}

fn resolve<'a>(example: &'a QAExample, store: &'a EmbeddingStore) -> Result<Resolved<'a>> {
    let query = store
        .get(&example.id)
        .ok_or_else(|| Error::Data(format!("no query embedding for example {}", example.id)))?;
    let docs = example
        .candidate_doc_ids
        .iter()
        .map(|id| {
            store
                .get(id)
                .ok_or_else(|| Error::Data(format!("example {}: no embedding for document {id}", example.id)))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Resolved { query, docs })
}

/// Runs `selector` over every example with argmax (or seeded random)
/// selection and scores each pick with the dense reward outcome.
pub fn evaluate(
    selector: &Selector,
    examples: &[QAExample],
    store: &EmbeddingStore,
    engine: &dyn RewardEngine,
    config: &EvalConfig,
) -> Result<EvalReport> {
    if examples.is_empty() {
        return Err(Error::Data("cannot evaluate an empty dataset".into()));
    }
    let mut rng = selector.rng();
    let mut records = Vec::with_capacity(examples.len());
    for e in examples {
        let r = resolve(e, store)?;
        let action = selector.select(r.query, &r.docs, config.k, &mut rng)?;
        let selected: Vec<&str> = action.indices.iter().map(|&i| e.candidate_doc_ids[i].as_str()).collect();
        let outcome = engine.evaluate(e, &selected, RewardMode::Dense)?;
        records.push(ExampleRecord {
            id: e.id.clone(),
            selected: selected.iter().map(|s| s.to_string()).collect(),
            relaxed_f1: outcome.relaxed_f1,
            semantic: outcome.semantic,
            gold_hit: outcome.gold_hit,
        });
    }
    let latency = measure_latency(selector, examples, store, config)?;
    let aggregates = Aggregates {
        mean_relaxed_f1: mean(records.iter().map(|r| r.relaxed_f1)),
        mean_semantic: mean(records.iter().map(|r| r.semantic)),
        gold_recall: mean(records.iter().map(|r| if r.gold_hit { 1.0 } else { 0.0 })),
        latency,
        model_size_bytes: selector.size_bytes(),
    };
    Ok(EvalReport {
        selector: selector.kind(),
        k: config.k,
        aggregates,
        records,
    })
}

/// Per-query selection latency, cycling through `examples` on the calling
/// thread.
pub fn measure_latency(
    selector: &Selector,
    examples: &[QAExample],
    store: &EmbeddingStore,
    config: &EvalConfig,
) -> Result<LatencyStats> {
    if config.latency_iters == 0 {
        return Ok(LatencyStats::default());
    }
    if examples.is_empty() {
        return Err(Error::Data("cannot benchmark an empty dataset".into()));
    }
    let mut rng = selector.rng();
    let mut once = |e: &QAExample| -> Result<TopKAction> {
        let r = resolve(e, store)?;
        selector.select(r.query, &r.docs, config.k, &mut rng)
    };
    for i in 0..config.latency_warmup {
        std::hint::black_box(once(&examples[i % examples.len()])?);
    }
    let mut samples = Vec::with_capacity(config.latency_iters);
    for i in 0..config.latency_iters {
        let e = &examples[i % examples.len()];
        let t = Instant::now();
        std::hint::black_box(once(std::hint::black_box(e))?);
        samples.push(t.elapsed().as_secs_f64() * 1e6);
    }
    Ok(LatencyStats::from_samples(&mut samples))
}

/// Latency of scoring `n` random candidates and taking the top `k`, batch
/// size 1, on the calling thread.
pub fn bench_selector_latency(
    params: &SelectorParams,
    n: usize,
    k: usize,
    warmup: usize,
    iters: usize,
    seed: u64,
) -> Result<LatencyStats> {
    let mut rng = SeededRng::new(seed);
    let d = params.d();
    let query: Vec<f64> = (0..d).map(|_| rng.gaussian()).collect();
    let docs: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.gaussian()).collect()).collect();
    let views: Vec<&[f64]> = docs.iter().map(Vec::as_slice).collect();
    let once = || -> Result<TopKAction> { argmax_topk(&params.score_candidates(&query, &views)?, k) };
    for _ in 0..warmup {
        std::hint::black_box(once()?);
    }
    let mut samples = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t = Instant::now();
        std::hint::black_box(once()?);
        samples.push(t.elapsed().as_secs_f64() * 1e6);
    }
    Ok(LatencyStats::from_samples(&mut samples))
}

/// Exact byte size of the model file for `params`.
pub fn bench_model_size(params: &SelectorParams) -> u64 {
    model_file_size(params.d(), params.h()) as u64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::RewardOutcome;
    use crate::synthenv::{generate_task, SynthConfig, SyntheticOracle};

    #[test]
    fn cosine_self_ranks_first() {
        let q = [0.3, -0.2, 0.9];
        let c: Vec<&[f64]> = vec![&[1.0, 0.0, 0.0], &q, &[0.0, 1.0, 0.0]];
        assert_eq!(cosine_topk(&q, &c, 1).unwrap().indices, vec![1]);
    }

    #[test]
    fn cosine_orthogonal_ties_by_index() {
        let q = [1.0, 0.0, 0.0];
        let c: Vec<&[f64]> = vec![&[0.0, 1.0, 0.0], &[0.0, 0.0, 1.0], &[0.0, -1.0, 0.0], &[0.0, 0.0, 0.0]];
        assert_eq!(cosine_topk(&q, &c, 3).unwrap().indices, vec![0, 1, 2]);
    }

    #[test]
    fn cosine_hand_example() {
        let q = [1.0, 0.0];
        let s = |c: f64| [c, (1.0 - c * c).sqrt()];
        let (a, b, c) = (s(-0.5), s(0.9), s(0.1));
        let cands: Vec<&[f64]> = vec![&a, &b, &c];
        assert_eq!(cosine_topk(&q, &cands, 2).unwrap().indices, vec![1, 2]);
    }

    #[test]
    fn cosine_shape_mismatch() {
        let c: Vec<&[f64]> = vec![&[1.0, 0.0]];
        assert!(matches!(cosine_topk(&[1.0], &c, 1), Err(Error::Shape(_))));
    }

    #[test]
    fn random_topk_cases() {
        let mut rng = SeededRng::new(3);
        let mut all = random_topk(5, 5, &mut rng).unwrap().indices;
        all.sort();
        assert_eq!(all, vec![0, 1, 2, 3, 4]);
        assert!(matches!(random_topk(2, 3, &mut rng), Err(Error::Argument(_))));
        let a: Vec<_> = (0..20).map(|_| random_topk(8, 3, &mut SeededRng::new(5)).unwrap()).collect();
        assert!(a.windows(2).all(|w| w[0] == w[1]));
        let act = random_topk(8, 3, &mut rng).unwrap();
        act.validate(8).unwrap();
    }

    #[test]
    fn random_gold_inclusion_is_three_eighths() {
        let mut rng = SeededRng::new(11);
        let draws = 50_000;
        let hits = (0..draws).filter(|_| random_topk(8, 3, &mut rng).unwrap().contains(0)).count();
        assert!((hits as f64 / draws as f64 - 0.375).abs() < 0.01);
    }

    #[test]
    fn model_size_examples() {
        assert_eq!(bench_model_size(&SelectorParams::zeros(384, 256)), 787_480);
        assert_eq!(bench_model_size(&SelectorParams::zeros(1, 1)), 36);
    }

    #[test]
    fn percentiles_nearest_rank() {
        let mut s: Vec<f64> = (1..=100).map(f64::from).collect();
        let l = LatencyStats::from_samples(&mut s);
        assert_eq!((l.p50_us, l.p95_us, l.iterations), (50.0, 95.0, 100));
        assert!((l.mean_us - 50.5).abs() < 1e-12);
        assert_eq!(LatencyStats::from_samples(&mut []), LatencyStats::default());
    }

    struct PerfectSemantic;

    impl RewardEngine for PerfectSemantic {
        fn evaluate(&self, e: &QAExample, selected: &[&str], _: RewardMode) -> Result<RewardOutcome> {
            Ok(RewardOutcome {
                reward: 1.0,
                relaxed_f1: 0.0,
                semantic: 1.0,
                gold_hit: selected.contains(&e.gold_doc_id.as_str()),
            })
        }
    }

    fn small_task(noise: f64, num: usize) -> crate::synthenv::SynthTask {
        generate_task(&SynthConfig {
            num_examples: num,
            d: 16,
            noise,
            corpus_size: 40,
            ..Default::default()
        })
        .unwrap()
    }

    fn quick() -> EvalConfig {
        EvalConfig {
            latency_warmup: 2,
            latency_iters: 5,
            ..Default::default()
        }
    }

    #[test]
    fn perfect_semantic_stub() {
        let task = small_task(0.3, 20);
        let r = evaluate(&Selector::Random { seed: 1 }, &task.examples, &task.store, &PerfectSemantic, &quick()).unwrap();
        assert_eq!(r.aggregates.mean_semantic, 1.0);
        r.recompute_check().unwrap();
    }

    #[test]
    fn empty_dataset_is_error() {
        let task = small_task(0.3, 5);
        let oracle = SyntheticOracle::new(&task.store);
        assert!(matches!(
            evaluate(&Selector::Cosine, &[], &task.store, &oracle, &quick()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn cosine_beats_random_at_low_noise() {
        let task = small_task(0.1, 500);
        let oracle = SyntheticOracle::new(&task.store);
        let cfg = EvalConfig { latency_iters: 0, ..Default::default() };
        let cos = evaluate(&Selector::Cosine, &task.examples, &task.store, &oracle, &cfg).unwrap();
        let rnd = evaluate(&Selector::Random { seed: 2 }, &task.examples, &task.store, &oracle, &cfg).unwrap();
        let se = (0.375f64 * 0.625 / 500.0).sqrt();
        assert!(cos.aggregates.gold_recall > rnd.aggregates.gold_recall + 3.0 * se);
    }

    #[test]
    fn report_round_trips_and_is_deterministic() {
        let task = small_task(0.3, 30);
        let oracle = SyntheticOracle::new(&task.store);
        let params = SelectorParams::init_random(16, 4, &mut SeededRng::new(1)).unwrap();
        let sel = Selector::Sras(params);
        let a = evaluate(&sel, &task.examples, &task.store, &oracle, &quick()).unwrap();
        let b = evaluate(&sel, &task.examples, &task.store, &oracle, &quick()).unwrap();
        assert_eq!(a.untimed().to_json(), b.untimed().to_json());
        assert_eq!(EvalReport::from_json(&a.to_json()).unwrap(), a);
        assert_eq!(a.aggregates.latency.iterations, 5);
        assert_eq!(a.to_csv().lines().count(), 31);
        assert!(a.to_table().starts_with("selector"));
    }

    #[test]
    fn recompute_check_detects_tampering() {
        let task = small_task(0.3, 10);
        let oracle = SyntheticOracle::new(&task.store);
        let mut r = evaluate(&Selector::Cosine, &task.examples, &task.store, &oracle, &quick()).unwrap();
        r.recompute_check().unwrap();
        r.aggregates.gold_recall += 0.01;
        assert!(r.recompute_check().is_err());
    }

    #[test]
    fn missing_embedding_is_data_error() {
        let task = small_task(0.3, 5);
        let oracle = SyntheticOracle::new(&task.store);
        let mut ex = task.examples.clone();
        ex[0].id = "nope".into();
        assert!(matches!(
            evaluate(&Selector::Cosine, &ex, &task.store, &oracle, &quick()),
            Err(Error::Data(_))
        ));
    }

    #[test]
    fn selector_names_parse() {
        for k in SelectorKind::ALL {
            assert_eq!(k.name().parse::<SelectorKind>().unwrap(), k);
        }
        assert!("bm25".parse::<SelectorKind>().is_err());
    }

    #[test]
    fn std_dev_cases() {
        assert_eq!(std_dev(&[]), 0.0);
        assert_eq!(std_dev(&[3.0]), 0.0);
        assert!((std_dev(&[1.0, 2.0, 3.0]) - (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn ablation_rendering() {
        use crate::trainer::{AblationVariant, EpochStats, TrainLog};
        let run = |variant, rewards: &[f64]| AblationRun {
            variant,
            params: SelectorParams::zeros(1, 1),
            log: TrainLog {
                warmup_losses: vec![],
                epochs: rewards
                    .iter()
                    .enumerate()
                    .map(|(i, &r)| EpochStats {
                        epoch: i + 1,
                        mean_reward: r,
                        mean_loss: 0.0,
                        clip_fraction: 0.0,
                        entropy: 0.0,
                        seconds: 0.0,
                    })
                    .collect(),
            },
        };
        let runs = vec![run(AblationVariant::Full, &[0.5, 0.7]), run(AblationVariant::NoRs, &[0.1, 0.3])];
        let rows: Vec<_> = runs.iter().map(AblationRow::from_run).collect();
        assert_eq!(rows[0].final_reward, 0.7);
        assert!((rows[1].mean_reward - 0.2).abs() < 1e-12);
        assert!((rows[0].early_std - 0.1).abs() < 1e-12);
        let table = ablation_table(&rows);
        assert_eq!(table.lines().count(), 3);
        assert!(table.lines().nth(2).unwrap().starts_with("no_rs"));
        assert_eq!(ablation_curves_csv(&runs), "epoch,full,no_rs\n1,0.5,0.1\n2,0.7,0.3\n");
    }

    #[test]
    fn csv_quotes_commas() {
        assert_eq!(csv_field("a,b"), "\"a,b\"");
        assert_eq!(csv_field("plain"), "plain");
    }
}
