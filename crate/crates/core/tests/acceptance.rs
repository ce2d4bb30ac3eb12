//! One test per acceptance criterion. Each prints a `PASS`/`FAIL` line to
//! stderr (uncaptured) before asserting.

use std::collections::HashMap;
use std::io::Write;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use sras::dataio::{EmbeddingStore, QAExample};
use sras::evalbench::{bench_model_size, bench_selector_latency, evaluate, AblationRow, EvalConfig, Selector};
use sras::numcore::SeededRng;
use sras::policy::{logprob_of, sample_topk, TopKAction};
use sras::reward::{normalize_batch, relaxed_f1, RewardConfig};
use sras::scorer::{param_count, SelectorParams};
use sras::synthenv::{generate_task, SynthConfig, SyntheticOracle};
use sras::trainer::{
    init_params, ppo_clip_loss, prepare, supervised_loss, train, AblationRun, AblationVariant, TrainConfig,
};

static SERIAL: Mutex<()> = Mutex::new(());

/// Criteria run one at a time so wall-clock bounds are not skewed by
/// sibling tests.
fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

fn report(criterion: &str, pass: bool, detail: &str) {
    let line = format!("{} {criterion}: {detail}\n", if pass { "PASS" } else { "FAIL" });
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn check(criterion: &str, pass: bool, detail: String) {
    report(criterion, pass, &detail);
    assert!(pass, "{criterion}: {detail}");
}

const TRAIN_COUNT: usize = 500;
const TEST_COUNT: usize = 200;

struct Setup {
    store: EmbeddingStore,
    train: Vec<QAExample>,
    test: Vec<QAExample>,
    initial: SelectorParams,
    config: TrainConfig,
}

fn setup() -> &'static Setup {
    static SETUP: OnceLock<Setup> = OnceLock::new();
    SETUP.get_or_init(|| {
        let task = generate_task(&SynthConfig {
            num_examples: TRAIN_COUNT + TEST_COUNT,
            ..SynthConfig::default()
        })
        .expect("synthetic task");
        let (train, test) = task.examples.split_at(TRAIN_COUNT);
        let config = TrainConfig::default();
        Setup {
            initial: init_params(384, 256, config.seed).expect("init"),
            store: task.store,
            train: train.to_vec(),
            test: test.to_vec(),
            config,
        }
    })
}

struct Ablation {
    runs: HashMap<AblationVariant, AblationRun>,
    full_seconds: f64,
}

fn ablation() -> &'static Ablation {
    static RUNS: OnceLock<Ablation> = OnceLock::new();
    RUNS.get_or_init(|| {
        let s = setup();
        let engine = SyntheticOracle::new(&s.store);
        let mut runs = HashMap::new();
        let mut full_seconds = 0.0;
        for variant in AblationVariant::ALL {
            let started = Instant::now();
            let (params, log) =
                train(s.initial.clone(), &s.train, &s.store, &engine, &variant.apply(&s.config)).expect("training run");
            if variant == AblationVariant::Full {
                full_seconds = started.elapsed().as_secs_f64();
            }
            runs.insert(variant, AblationRun { variant, params, log });
        }
        Ablation { runs, full_seconds }
    })
}

fn eval_quiet(selector: &Selector, examples: &[QAExample], store: &EmbeddingStore) -> f64 {
    let cfg = EvalConfig {
        latency_iters: 0,
        ..EvalConfig::default()
    };
    evaluate(selector, examples, store, &SyntheticOracle::new(store), &cfg)
        .expect("evaluate")
        .aggregates
        .gold_recall
}

fn random_instance(rng: &mut SeededRng) -> (SelectorParams, Vec<f64>, Vec<Vec<f64>>, Vec<f64>) {
    let d = 1 + rng.below(16);
    let h = 1 + rng.below(8);
    let n = 1 + rng.below(4);
    let mut p = SelectorParams::init_random(d, h, rng).expect("init");
    // Larger weights push tanh out of its linear region.
    for x in p.w_q.as_mut_slice().iter_mut().chain(p.w_d.as_mut_slice()) {
        *x *= 1.0 + 3.0 * rng.uniform();
    }
    let q = (0..d).map(|_| rng.gaussian()).collect();
    let docs = (0..n).map(|_| (0..d).map(|_| rng.gaussian()).collect()).collect();
    let upstream = (0..n).map(|_| rng.gaussian()).collect();
    (p, q, docs, upstream)
}

fn objective(p: &SelectorParams, q: &[f64], docs: &[&[f64]], upstream: &[f64]) -> f64 {
    let s = p.score_candidates(q, docs).expect("scores");
    s.iter().zip(upstream).map(|(a, b)| a * b).sum()
}

fn weight(p: &mut SelectorParams, block: usize, i: usize) -> &mut f64 {
    match block {
        0 => &mut p.w_q.as_mut_slice()[i],
        1 => &mut p.w_d.as_mut_slice()[i],
        _ => &mut p.w[i],
    }
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let diff: f64 = analytic.iter().zip(numeric).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
    let na: f64 = analytic.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nn: f64 = numeric.iter().map(|a| a * a).sum::<f64>().sqrt();
    let scale = na.max(nn);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

#[test]
fn gradient_correctness() {
    let _g = serial();
    let started = Instant::now();
    let mut rng = SeededRng::new(7);
    let instances = 200;
    let step = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..instances {
        let (mut p, q, docs, upstream) = random_instance(&mut rng);
        let views: Vec<&[f64]> = docs.iter().map(Vec::as_slice).collect();
        let g = p.score_gradients(&q, &views, &upstream).expect("gradients");
        let analytic: Vec<f64> = g
            .w_q
            .as_slice()
            .iter()
            .chain(g.w_d.as_slice())
            .chain(g.w.as_slice())
            .copied()
            .collect();
        let mut numeric = Vec::with_capacity(analytic.len());
        let sizes = [p.w_q.as_slice().len(), p.w_d.as_slice().len(), p.w.as_slice().len()];
        for (block, &len) in sizes.iter().enumerate() {
            for i in 0..len {
                let orig = *weight(&mut p, block, i);
                *weight(&mut p, block, i) = orig + step;
                let plus = objective(&p, &q, &views, &upstream);
                *weight(&mut p, block, i) = orig - step;
                let minus = objective(&p, &q, &views, &upstream);
                *weight(&mut p, block, i) = orig;
                numeric.push((plus - minus) / (2.0 * step));
            }
        }
        worst = worst.max(relative_error(&analytic, &numeric));
    }
    let secs = started.elapsed().as_secs_f64();
    check(
        "gradient_correctness",
        worst <= 1e-4 && secs < 10.0,
        format!("{instances} instances, max relative error {worst:.3e} (<= 1e-4), {secs:.2}s (< 10s)"),
    );
}

#[test]
fn size_claim() {
    let _g = serial();
    let p = init_params(384, 256, 42).expect("init");
    let count = p.param_count();
    let bytes = bench_model_size(&p);
    let serialized = p.to_bytes().len();
    check(
        "size_claim",
        count == 196_864 && param_count(384, 256) == 196_864 && bytes == 787_480 && serialized == 787_480,
        format!("{count} parameters (196864), {bytes} bytes reported, {serialized} bytes serialized (787480)"),
    );
}

#[test]
fn latency_claim() {
    let _g = serial();
    let p = init_params(384, 256, 42).expect("init");
    let stats = bench_selector_latency(&p, 8, 3, 200, 2000, 1).expect("bench");
    check(
        "latency_claim",
        stats.mean_us < 1000.0,
        format!(
            "n=8 d=384 h=256 mean {:.1}us p50 {:.1}us p95 {:.1}us over {} runs (mean < 1000us)",
            stats.mean_us, stats.p50_us, stats.p95_us, stats.iterations
        ),
    );
}

#[test]
fn learning_efficacy() {
    let _g = serial();
    let s = setup();
    let runs = ablation();
    let started = Instant::now();
    let trained = &runs.runs[&AblationVariant::Full].params;
    let sras = eval_quiet(&Selector::Sras(trained.clone()), &s.test, &s.store);
    let cosine = eval_quiet(&Selector::Cosine, &s.test, &s.store);
    let seeds = 250u64;
    let random = (0..seeds)
        .map(|seed| eval_quiet(&Selector::Random { seed }, &s.test, &s.store))
        .sum::<f64>()
        / seeds as f64;
    let secs = runs.full_seconds + started.elapsed().as_secs_f64();
    check(
        "learning_efficacy",
        sras >= 0.90 && (random - 0.375).abs() <= 0.01 && cosine >= 0.95 && secs < 300.0,
        format!(
            "held-out recall@3 sras {sras:.3} (>= 0.90), random {random:.4} over {} draws (0.375 +- 0.01), cosine {cosine:.3} (>= 0.95), train+eval {secs:.1}s (< 300s)",
            seeds as usize * s.test.len()
        ),
    );
}

fn rows() -> HashMap<AblationVariant, AblationRow> {
    ablation().runs.iter().map(|(v, r)| (*v, AblationRow::from_run(r))).collect()
}

#[test]
fn ablation_ordering() {
    let _g = serial();
    let r = rows();
    let full = r[&AblationVariant::Full].final_reward;
    let no_cl = r[&AblationVariant::NoCl].final_reward;
    let no_sw = r[&AblationVariant::NoSw].final_reward;
    let no_rs = r[&AblationVariant::NoRs].final_reward;
    check(
        "ablation_ordering",
        full >= no_cl && no_cl >= no_sw && full - no_rs >= 0.15,
        format!("final reward full {full:.4} >= no_cl {no_cl:.4} >= no_sw {no_sw:.4}; full - no_rs = {:.4} (>= 0.15)", full - no_rs),
    );
}

#[test]
fn ablation_volatility() {
    let _g = serial();
    let r = rows();
    let full = r[&AblationVariant::Full].early_std;
    let no_sw = r[&AblationVariant::NoSw].early_std;
    check(
        "ablation_volatility",
        no_sw > full,
        format!("std of first 5 epoch rewards no_sw {no_sw:.4} > full {full:.4}"),
    );
}

#[test]
fn ablation_sparse_reward_area() {
    let _g = serial();
    let r = rows();
    let full = r[&AblationVariant::Full].mean_reward;
    let no_rs = r[&AblationVariant::NoRs].mean_reward;
    check(
        "ablation_sparse_reward_area",
        no_rs < full,
        format!("mean reward over epochs no_rs {no_rs:.4} < full {full:.4}"),
    );
}

#[test]
fn ppo_unit_oracles() {
    let _g = serial();
    let clip = [
        ppo_clip_loss(0.0, 0.0, 0.7, 0.2) - (-0.7),
        ppo_clip_loss(0.0, 1.5f64.ln(), 1.0, 0.2) - (-1.2),
        ppo_clip_loss(0.0, 0.5f64.ln(), -1.0, 0.2) - 0.8,
    ];
    let clip_ok = clip.iter().all(|e| e.abs() <= 1e-12);

    let norm = normalize_batch(&[1.0, 2.0, 3.0]).expect("normalize");
    let norm_ok = norm
        .iter()
        .zip([-1.22474, 0.0, 1.22474])
        .all(|(a, b)| (a - b).abs() <= 1e-5);

    let cfg = RewardConfig::default();
    let f1 = [
        relaxed_f1("The Eiffel Tower", "eiffel tower", &cfg) - 1.0,
        relaxed_f1("Paris France", "Paris", &cfg) - 0.66667,
        relaxed_f1("London", "Paris", &cfg),
    ];
    let f1_ok = f1.iter().all(|e| e.abs() <= 1e-5);

    let d = 4;
    let store = {
        let mut s = EmbeddingStore::new(d);
        s.push("q", &[1.0, 0.0, 0.0, 0.0]).expect("push");
        for i in 0..8 {
            s.push(format!("d{i}"), &[0.0, 1.0, 0.0, 0.0]).expect("push");
        }
        s
    };
    let example = QAExample {
        id: "q".into(),
        question: String::new(),
        answer: "d0".into(),
        gold_doc_id: "d0".into(),
        candidate_doc_ids: (0..8).map(|i| format!("d{i}")).collect(),
        difficulty: None,
    };
    let examples = [example];
    let prepared = prepare(&examples, &store).expect("prepare");
    let uniform = supervised_loss(&SelectorParams::zeros(d, 2), &prepared, 1.0).expect("loss");
    let ce_ok = (uniform - 8f64.ln()).abs() <= 1e-9;

    check(
        "ppo_unit_oracles",
        clip_ok && norm_ok && f1_ok && ce_ok,
        format!(
            "clip loss errors {:?} (<= 1e-12); normalize_batch {:?}; relaxed_f1 errors {:?} (<= 1e-5); uniform warmup loss {uniform:.12} vs ln 8",
            clip, norm.as_slice(), f1
        ),
    );
}

fn ordered_selections(n: usize, k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for prefix in ordered_selections(n, k - 1) {
        for i in 0..n {
            if !prefix.contains(&i) {
                let mut next = prefix.clone();
                next.push(i);
                out.push(next);
            }
        }
    }
    out
}

#[test]
fn policy_distribution() {
    let _g = serial();
    let mut rng = SeededRng::new(11);
    let mut worst_sum = 0.0f64;
    for n in 1..=5 {
        for k in 1..=n {
            for _ in 0..5 {
                let scores: Vec<f64> = (0..n).map(|_| 3.0 * rng.gaussian()).collect();
                let total: f64 = ordered_selections(n, k)
                    .into_iter()
                    .map(|indices| logprob_of(&scores, &TopKAction { indices }).expect("logprob").exp())
                    .sum();
                worst_sum = worst_sum.max((total - 1.0).abs());
            }
        }
    }

    let scores = [0.3, -0.5, 1.1, 0.0, 0.6];
    let k = 2;
    let draws = 200_000;
    let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
    let mut sampler = SeededRng::new(5);
    for _ in 0..draws {
        let (a, _) = sample_topk(&scores, k, &mut sampler).expect("sample");
        *counts.entry(a.indices).or_default() += 1;
    }
    let mut worst_z = 0.0f64;
    for indices in ordered_selections(scores.len(), k) {
        let p = logprob_of(&scores, &TopKAction { indices: indices.clone() }).expect("logprob").exp();
        let freq = counts.get(&indices).copied().unwrap_or(0) as f64 / draws as f64;
        let se = (p * (1.0 - p) / draws as f64).sqrt();
        worst_z = worst_z.max((freq - p).abs() / se);
    }
    check(
        "policy_distribution",
        worst_sum <= 1e-9 && worst_z <= 3.0,
        format!("enumeration n<=5 max |sum - 1| {worst_sum:.2e} (<= 1e-9); {draws} samples max deviation {worst_z:.2} SE (<= 3)"),
    );
}

fn small_run(workers: usize, dir: &std::path::Path) -> (String, Vec<u8>, Vec<(String, Vec<u8>)>, String) {
    let task = generate_task(&SynthConfig {
        num_examples: 80,
        d: 24,
        corpus_size: 30,
        seed: 3,
        ..SynthConfig::default()
    })
    .expect("task");
    let (train_set, test_set) = task.examples.split_at(60);
    let engine = SyntheticOracle::new(&task.store);
    let config = TrainConfig {
        epochs: 4,
        seed: 3,
        workers,
        checkpoint_dir: Some(dir.to_path_buf()),
        ..TrainConfig::default()
    };
    let (params, log) = train(init_params(24, 12, 3).expect("init"), train_set, &task.store, &engine, &config).expect("train");
    let mut checkpoints: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .expect("checkpoint dir")
        .map(|e| {
            let e = e.expect("entry");
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).expect("read"))
        })
        .collect();
    checkpoints.sort();
    let cfg = EvalConfig {
        latency_iters: 5,
        latency_warmup: 0,
        ..EvalConfig::default()
    };
    let report = evaluate(&Selector::Sras(params.clone()), test_set, &task.store, &engine, &cfg).expect("eval");
    (log.to_csv_untimed(), params.to_bytes(), checkpoints, report.untimed().to_json())
}

#[test]
fn determinism() {
    let _g = serial();
    let dirs: Vec<_> = (0..3).map(|_| tempfile::tempdir().expect("tempdir")).collect();
    let a = small_run(1, dirs[0].path());
    let b = small_run(1, dirs[1].path());
    let c = small_run(3, dirs[2].path());
    let same = a == b && a == c;
    check(
        "determinism",
        same && a.2.len() == 4,
        format!(
            "two seeded runs and a 3-worker run: logs {}, final params {}, {} checkpoints {}, reports {}",
            if a.0 == b.0 && a.0 == c.0 { "identical" } else { "differ" },
            if a.1 == b.1 && a.1 == c.1 { "identical" } else { "differ" },
            a.2.len(),
            if a.2 == b.2 && a.2 == c.2 { "identical" } else { "differ" },
            if a.3 == b.3 && a.3 == c.3 { "identical" } else { "differ" },
        ),
    );
}

#[test]
fn format_round_trips() {
    let _g = serial();
    let dir = tempfile::tempdir().expect("tempdir");
    let mut rng = SeededRng::new(19);
    let mut model_ok = true;
    for _ in 0..20 {
        let mut p = init_params(1 + rng.below(40), 1 + rng.below(20), rng.below(1000) as u64).expect("init");
        for x in p.w.iter_mut() {
            *x *= 1e3;
        }
        p.quantize_f32();
        let path = dir.path().join("m.srsm");
        sras::scorer::save_params(&p, &path).expect("save");
        let bytes = std::fs::read(&path).expect("read");
        let back = sras::scorer::load_params(&path).expect("load");
        model_ok &= back == p && back.to_bytes() == bytes;
    }

    let mut store = EmbeddingStore::new(7);
    for i in 0..25 {
        let v: Vec<f64> = (0..7).map(|_| rng.gaussian()).collect();
        store.push(format!("doc-{i}-ü"), &v).expect("push");
    }
    let store_path = dir.path().join("e.srse");
    sras::dataio::write_embedding_store(&store, &store_path).expect("write");
    let store_bytes = std::fs::read(&store_path).expect("read");
    let store_back = sras::dataio::read_embedding_store(&store_path).expect("read store");
    let store_ok = store_back == store && store_back.to_bytes() == store_bytes;

    let model_bytes = init_params(4, 3, 1).expect("init").to_bytes();
    let mut rejected = Vec::new();
    let corrupt = |bytes: &[u8], at: usize, value: u8| {
        let mut b = bytes.to_vec();
        b[at] = value;
        b
    };
    rejected.push(SelectorParams::from_bytes(&corrupt(&model_bytes, 0, b'X')).is_err());
    rejected.push(SelectorParams::from_bytes(&corrupt(&model_bytes, 4, 9)).is_err());
    rejected.push(SelectorParams::from_bytes(&corrupt(&model_bytes, 8, 5)).is_err());
    rejected.push(SelectorParams::from_bytes(&model_bytes[..model_bytes.len() - 1]).is_err());
    rejected.push(SelectorParams::from_bytes(&model_bytes[..10]).is_err());
    rejected.push(EmbeddingStore::from_bytes(&corrupt(&store_bytes, 0, b'X')).is_err());
    rejected.push(EmbeddingStore::from_bytes(&corrupt(&store_bytes, 4, 9)).is_err());
    rejected.push(EmbeddingStore::from_bytes(&store_bytes[..store_bytes.len() - 2]).is_err());
    rejected.push(EmbeddingStore::from_bytes(&store_bytes[..6]).is_err());
    let all_rejected = rejected.iter().all(|&r| r);

    check(
        "format_round_trips",
        model_ok && store_ok && all_rejected,
        format!(
            "SRSM round trip {}, SRSE round trip {}, {}/{} corrupted files rejected",
            if model_ok { "exact" } else { "mismatch" },
            if store_ok { "exact" } else { "mismatch" },
            rejected.iter().filter(|&&r| r).count(),
            rejected.len()
        ),
    );
}
