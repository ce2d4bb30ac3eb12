//! PPO training of the selector with supervised warmup, batch reward
//! normalization, a baseline-corrected advantage and curriculum ordering.
//!
//! Every QA pair is a one-step episode: the policy picks `k` of `n`
//! candidates, receives one reward, and the episode ends. With a single
//! step the discount `γ` never applies, and generalized advantage
//! estimation collapses to `r - b`; here `b` is an exponential moving
//! average of past batch means and the advantages are then standardized
//! per batch. There is no value network.

use std::path::PathBuf;
use std::time::Instant;

use crate::dataio::{EmbeddingStore, QAExample};
use crate::error::{Error, Result};
use crate::numcore::{cosine, AdamWConfig, AdamWState, ParamSlot, SeededRng};
use crate::policy::{entropy, entropy_grad, logprob_grad, logprob_of, sample_topk, TopKAction};
use crate::reward::{normalize_batch, RewardEngine, RewardMode};
use crate::scorer::{save_params, Backprop, BackpropItem, ScoreGradients, SelectorParams};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub k: usize,
    pub n: usize,
    /// PPO learning rate.
    pub lr: f64,
    /// Learning rate of the supervised warmup phase.
    pub warmup_lr: f64,
    /// Discount factor. Episodes have one step, so it is carried for
    /// completeness only.
    pub gamma: f64,
    pub clip_eps: f64,
    pub warmup_epochs: usize,
    pub ppo_inner_epochs: usize,
    pub baseline_ema_decay: f64,
    pub entropy_coef: f64,
    pub temperature: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    /// Skip supervised warmup.
    pub no_sw: bool,
    /// Train on the sparse exact-match reward instead of the shaped one.
    pub no_rs: bool,
    /// Disable curriculum ordering.
    pub no_cl: bool,
    pub seed: u64,
    pub workers: usize,
    pub checkpoint_dir: Option<PathBuf>,
    /// Save a checkpoint every this many epochs (0 = never).
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamWConfig::default();
        Self {
            epochs: 25,
            batch_size: 8,
            k: 3,
            n: 8,
            lr: 1e-5,
            warmup_lr: 1e-2,
            gamma: 0.99,
            clip_eps: 0.2,
            warmup_epochs: 3,
            ppo_inner_epochs: 4,
            baseline_ema_decay: 0.9,
            entropy_coef: 0.0,
            temperature: 1.0,
            beta1: adam.beta1,
            beta2: adam.beta2,
            adam_eps: adam.eps,
            weight_decay: adam.weight_decay,
            no_sw: false,
            no_rs: false,
            no_cl: false,
            seed: 42,
            workers: 1,
            checkpoint_dir: None,
            checkpoint_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return fail(format!("clip_eps must lie in (0, 1), got {}", self.clip_eps));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if self.k > self.n {
            return fail(format!("k={} exceeds n={}", self.k, self.n));
        }
        for (name, v) in [
            ("batch_size", self.batch_size),
            ("k", self.k),
            ("n", self.n),
            ("ppo_inner_epochs", self.ppo_inner_epochs),
            ("workers", self.workers),
        ] {
            if v == 0 {
                return fail(format!("{name} must be >= 1"));
            }
        }
        if !(self.lr > 0.0) {
            return fail(format!("lr must be > 0, got {}", self.lr));
        }
        if !(self.warmup_lr > 0.0) {
            return fail(format!("warmup_lr must be > 0, got {}", self.warmup_lr));
        }
        if !(0.0..=1.0).contains(&self.baseline_ema_decay) {
            return fail(format!("baseline_ema_decay must lie in [0, 1], got {}", self.baseline_ema_decay));
        }
        if !(self.temperature > 0.0) {
            return fail(format!("temperature must be > 0, got {}", self.temperature));
        }
        Ok(())
    }

    pub fn adamw(&self) -> AdamWConfig {
        AdamWConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.adam_eps,
            weight_decay: self.weight_decay,
        }
    }

    fn reward_mode(&self) -> RewardMode {
        if self.no_rs {
            RewardMode::Sparse
        } else {
            RewardMode::Dense
        }
    }
}

/// One bandit step.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub example_id: String,
    pub candidate_doc_ids: Vec<String>,
    pub action: TopKAction,
    pub old_log_prob: f64,
    pub raw_reward: f64,
    pub advantage: f64,
}

/// Statistics of one PPO epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub mean_reward: f64,
    pub mean_loss: f64,
    pub clip_fraction: f64,
    pub entropy: f64,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    /// Mean cross-entropy of each warmup epoch.
    pub warmup_losses: Vec<f64>,
    pub epochs: Vec<EpochStats>,
}

impl TrainLog {
    pub const CSV_HEADER: &'static str = "epoch,mean_reward,mean_loss,clip_fraction,entropy,seconds";

    pub fn to_csv(&self) -> String {
        let mut out = String::from(Self::CSV_HEADER);
        out.push('\n');
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{:.6}\n",
                e.epoch, e.mean_reward, e.mean_loss, e.clip_fraction, e.entropy, e.seconds
            ));
        }
        out
    }

    /// Same as [`to_csv`](Self::to_csv) with the wall-time column zeroed.
    pub fn to_csv_untimed(&self) -> String {
        let mut copy = self.clone();
        for e in &mut copy.epochs {
            e.seconds = 0.0;
        }
        copy.to_csv()
    }

    pub fn rewards(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.mean_reward).collect()
    }

    /// `warmup_epoch,loss` rows.
    pub fn warmup_csv(&self) -> String {
        let mut out = String::from("warmup_epoch,loss\n");
        for (i, l) in self.warmup_losses.iter().enumerate() {
            out.push_str(&format!("{},{l}\n", i + 1));
        }
        out
    }
}

/// Embedding views of one example.
#[derive(Debug, Clone)]
pub struct Prepared<'a> {
    pub example: &'a QAExample,
    pub query: &'a [f64],
    pub docs: Vec<&'a [f64]>,
    pub gold: usize,
}

/// Resolves every example against the store, failing on the first missing
/// vector or gold document.
pub fn prepare<'a>(examples: &'a [QAExample], store: &'a EmbeddingStore) -> Result<Vec<Prepared<'a>>> {
    examples
        .iter()
        .map(|e| {
            let query = store
                .get(&e.id)
                .ok_or_else(|| Error::Data(format!("no query embedding for example {}", e.id)))?;
            let docs = e
                .candidate_doc_ids
                .iter()
                .map(|id| {
                    store
                        .get(id)
                        .ok_or_else(|| Error::Data(format!("example {}: no embedding for document {id}", e.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(Prepared {
                example: e,
                query,
                docs,
                gold: e.gold_index()?,
            })
        })
        .collect()
}

/// Moving-average reward baseline.
#[derive(Debug, Clone, PartialEq)]
pub struct Baseline {
    pub value: Option<f64>,
    pub decay: f64,
}

impl Baseline {
    pub fn new(decay: f64) -> Self {
        Self { value: None, decay }
    }
}

/// `A_i = r_i - b`, standardized over the batch; then `b` moves toward the
/// batch mean. The first batch initializes `b` to its own mean.
pub fn compute_advantage(raw_rewards: &[f64], baseline: &mut Baseline) -> Result<Vec<f64>> {
    if raw_rewards.is_empty() {
        return Err(Error::Argument("cannot compute advantages of an empty batch".into()));
    }
    let mean = raw_rewards.iter().sum::<f64>() / raw_rewards.len() as f64;
    let b = *baseline.value.get_or_insert(mean);
    let centered: Vec<f64> = raw_rewards.iter().map(|r| r - b).collect();
    let advantages = normalize_batch(&centered)?;
    baseline.value = Some(baseline.decay * b + (1.0 - baseline.decay) * mean);
    Ok(advantages)
}

/// Clipped surrogate loss `-min(ρA, clip(ρ, 1-ε, 1+ε)A)` with
/// `ρ = exp(new - old)`.
pub fn ppo_clip_loss(old_log_prob: f64, new_log_prob: f64, advantage: f64, eps: f64) -> f64 {
    let ratio = (new_log_prob - old_log_prob).exp();
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    -(ratio * advantage).min(clipped * advantage)
}

/// Derivative of [`ppo_clip_loss`] with respect to `new_log_prob`, and
/// whether the flat clipped branch is the active one.
pub fn ppo_clip_grad(old_log_prob: f64, new_log_prob: f64, advantage: f64, eps: f64) -> (f64, bool) {
    let ratio = (new_log_prob - old_log_prob).exp();
    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
    if ratio * advantage <= clipped * advantage {
        (-advantage * ratio, false)
    } else {
        (0.0, true)
    }
}

/// `1 - cos(query, gold)`, or the example's precomputed difficulty.
pub fn difficulty(example: &QAExample, store: &EmbeddingStore) -> Result<f64> {
    if let Some(d) = example.difficulty {
        return Ok(d);
    }
    let q = store
        .get(&example.id)
        .ok_or_else(|| Error::Data(format!("no query embedding for example {}", example.id)))?;
    let g = store.get(&example.gold_doc_id).ok_or_else(|| {
        Error::Data(format!(
            "example {}: no embedding for gold document {}",
            example.id, example.gold_doc_id
        ))
    })?;
    Ok(1.0 - cosine(q, g))
}

/// Fraction of the easiest examples used at `epoch` (0-based): 50% in the
/// first third of training, 75% in the second, all of them in the last.
pub fn curriculum_fraction(epoch: usize, total_epochs: usize) -> f64 {
    match (3 * epoch) / total_epochs.max(1) {
        0 => 0.5,
        1 => 0.75,
        _ => 1.0,
    }
}

/// Example indices for one epoch. The tier size is rounded up; the tier is
/// shuffled. With `no_cl` the whole dataset is shuffled.
pub fn curriculum_order(
    difficulties: &[f64],
    epoch: usize,
    total_epochs: usize,
    no_cl: bool,
    rng: &mut SeededRng,
) -> Vec<usize> {
    let mut order: Vec<usize> = (0..difficulties.len()).collect();
    if !no_cl {
        order.sort_by(|&a, &b| difficulties[a].total_cmp(&difficulties[b]));
        let frac = curriculum_fraction(epoch, total_epochs);
        let keep = ((difficulties.len() as f64) * frac).ceil() as usize;
        order.truncate(keep.min(difficulties.len()));
    }
    rng.shuffle(&mut order);
    order
}

/// Runs `f` over `items` on up to `workers` scoped threads, keeping order.
fn par_map<T: Sync, R: Send>(workers: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if workers <= 1 || items.len() <= 1 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(workers);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| {
                let f = &f;
                s.spawn(move || c.iter().map(f).collect::<Vec<_>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

fn scaled(scores: &[f64], temperature: f64) -> Vec<f64> {
    if temperature == 1.0 {
        scores.to_vec()
    } else {
        scores.iter().map(|s| s / temperature).collect()
    }
}

fn apply_step(params: &mut SelectorParams, grads: &ScoreGradients, opt: &mut AdamWState) -> Result<()> {
    let SelectorParams { w_q, w_d, w } = params;
    opt.step(&mut [
        ParamSlot {
            name: "W_q",
            value: w_q.as_mut_slice(),
            grad: grads.w_q.as_slice(),
        },
        ParamSlot {
            name: "W_d",
            value: w_d.as_mut_slice(),
            grad: grads.w_d.as_slice(),
        },
        ParamSlot {
            name: "w",
            value: w,
            grad: &grads.w,
        },
    ])
}

fn optimizer_with_lr(params: &SelectorParams, config: &TrainConfig, lr: f64) -> Result<AdamWState> {
    let hd = params.h() * params.d();
    AdamWState::new(AdamWConfig { lr, ..config.adamw() }, &[hd, hd, params.h()])
}

/// AdamW state for the PPO phase.
pub fn new_optimizer(params: &SelectorParams, config: &TrainConfig) -> Result<AdamWState> {
    optimizer_with_lr(params, config, config.lr)
}

/// AdamW state for the warmup phase.
pub fn new_warmup_optimizer(params: &SelectorParams, config: &TrainConfig) -> Result<AdamWState> {
    optimizer_with_lr(params, config, config.warmup_lr)
}

/// Mean cross-entropy `-log softmax(s)[gold]` over the examples, without
/// updating anything.
pub fn supervised_loss(params: &SelectorParams, examples: &[Prepared<'_>], temperature: f64) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let mut total = 0.0;
    for p in examples {
        let s = scaled(&params.forward(p.query, &p.docs)?.scores, temperature);
        total -= logprob_of(&s, &TopKAction { indices: vec![p.gold] })?;
    }
    Ok(total / examples.len() as f64)
}

/// One pass of cross-entropy training on gold labels, one AdamW step per
/// batch. Returns the epoch's mean loss, measured before each step.
pub fn warmup_epoch(
    params: &mut SelectorParams,
    optimizer: &mut AdamWState,
    examples: &[Prepared<'_>],
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<f64> {
    if examples.is_empty() {
        return Err(Error::Data("empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    rng.shuffle(&mut order);
    let t = config.temperature;
    let mut total = 0.0;
    let mut grads = ScoreGradients::zeros(params.d(), params.h());
    for (b, batch) in order.chunks(config.batch_size).enumerate() {
        let inv = 1.0 / batch.len() as f64;
        let p: &SelectorParams = params;
        let results = par_map(config.workers, batch, |&i| -> Result<(f64, Backprop)> {
            let ex = &examples[i];
            let fwd = p.forward(ex.query, &ex.docs)?;
            let s = scaled(&fwd.scores, t);
            let gold = TopKAction { indices: vec![ex.gold] };
            let loss = -logprob_of(&s, &gold)?;
            let upstream: Vec<f64> = logprob_grad(&s, &gold)?.iter().map(|g| -g * inv / t).collect();
            Ok((loss, p.backprop(&fwd, &upstream)?))
        });
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let batch_loss: f64 = results.iter().map(|(l, _)| l).sum();
        if !batch_loss.is_finite() {
            return Err(Error::Training(format!("non-finite warmup loss in batch {b}")));
        }
        total += batch_loss;
        let items: Vec<BackpropItem<'_>> = batch
            .iter()
            .zip(&results)
            .map(|(&i, (_, bp))| BackpropItem {
                query: examples[i].query,
                docs: &examples[i].docs,
                backprop: bp,
            })
            .collect();
        grads.scale(0.0);
        params.accumulate(&items, &mut grads, config.workers)?;
        apply_step(params, &grads, optimizer)?;
    }
    Ok(total / examples.len() as f64)
}

/// Samples one action per example with the current parameters and scores
/// it. Advantages are left at zero.
pub fn rollout_batch(
    params: &SelectorParams,
    batch: &[&Prepared<'_>],
    engine: &dyn RewardEngine,
    config: &TrainConfig,
    rng: &mut SeededRng,
) -> Result<(Vec<Transition>, f64)> {
    let t = config.temperature;
    let scores = par_map(config.workers, batch, |p| {
        params.forward(p.query, &p.docs).map(|f| scaled(&f.scores, t))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut sampled = Vec::with_capacity(batch.len());
    let mut entropy_sum = 0.0;
    for s in &scores {
        sampled.push(sample_topk(s, config.k, rng)?);
        entropy_sum += entropy(s);
    }
    let mode = config.reward_mode();
    let rewards = par_map(config.workers, &(0..batch.len()).collect::<Vec<_>>(), |&i| {
        let ex = batch[i].example;
        let selected: Vec<&str> = sampled[i]
            .0
            .indices
            .iter()
            .map(|&c| ex.candidate_doc_ids[c].as_str())
            .collect();
        engine.evaluate(ex, &selected, mode).map(|o| o.reward)
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let transitions = batch
        .iter()
        .zip(sampled)
        .zip(rewards)
        .map(|((p, (action, lp)), r)| Transition {
            example_id: p.example.id.clone(),
            candidate_doc_ids: p.example.candidate_doc_ids.clone(),
            action,
            old_log_prob: lp,
            raw_reward: r,
            advantage: 0.0,
        })
        .collect();
    Ok((transitions, entropy_sum / batch.len() as f64))
}

/// Accumulators for one epoch.
#[derive(Default)]
struct EpochAcc {
    reward: f64,
    rollouts: usize,
    loss: f64,
    clipped: usize,
    updates: usize,
    entropy: f64,
    batches: usize,
}

/// PPO updates on one collected batch. Returns (summed loss, clipped count,
/// sample count) over all inner passes.
fn ppo_update(
    params: &mut SelectorParams,
    optimizer: &mut AdamWState,
    batch: &[&Prepared<'_>],
    transitions: &[Transition],
    config: &TrainConfig,
    grads: &mut ScoreGradients,
    context: (usize, usize),
) -> Result<(f64, usize, usize)> {
    let t = config.temperature;
    let inv = 1.0 / batch.len() as f64;
    let (mut loss_sum, mut clipped, mut count) = (0.0, 0usize, 0usize);
    for _ in 0..config.ppo_inner_epochs {
        let p: &SelectorParams = params;
        let idx: Vec<usize> = (0..batch.len()).collect();
        let results = par_map(config.workers, &idx, |&i| -> Result<(f64, bool, Backprop)> {
            let ex = batch[i];
            let tr = &transitions[i];
            let fwd = p.forward(ex.query, &ex.docs)?;
            let s = scaled(&fwd.scores, t);
            let new_lp = logprob_of(&s, &tr.action)?;
            let mut loss = ppo_clip_loss(tr.old_log_prob, new_lp, tr.advantage, config.clip_eps);
            let (dl, is_clipped) = ppo_clip_grad(tr.old_log_prob, new_lp, tr.advantage, config.clip_eps);
            let mut upstream: Vec<f64> = logprob_grad(&s, &tr.action)?
                .iter()
                .map(|g| dl * g * inv / t)
                .collect();
            if config.entropy_coef != 0.0 {
                loss -= config.entropy_coef * entropy(&s);
                for (u, g) in upstream.iter_mut().zip(entropy_grad(&s)) {
                    *u -= config.entropy_coef * g * inv / t;
                }
            }
            Ok((loss, is_clipped, p.backprop(&fwd, &upstream)?))
        });
        let results = results.into_iter().collect::<Result<Vec<_>>>()?;
        let pass_loss: f64 = results.iter().map(|r| r.0).sum();
        if !pass_loss.is_finite() {
            return Err(Error::Training(format!(
                "non-finite PPO loss at epoch {} batch {}",
                context.0, context.1
            )));
        }
        loss_sum += pass_loss;
        clipped += results.iter().filter(|r| r.1).count();
        count += results.len();
        let items: Vec<BackpropItem<'_>> = batch
            .iter()
            .zip(&results)
            .map(|(ex, r)| BackpropItem {
                query: ex.query,
                docs: &ex.docs,
                backprop: &r.2,
            })
            .collect();
        grads.scale(0.0);
        params.accumulate(&items, grads, config.workers)?;
        apply_step(params, grads, optimizer).map_err(|e| {
            Error::Training(format!("epoch {} batch {}: {e}", context.0, context.1))
        })?;
    }
    Ok((loss_sum, clipped, count))
}

/// Full training run: optional warmup, then PPO epochs over curriculum
/// batches. Deterministic for a given seed regardless of `workers`.
pub fn train(
    mut params: SelectorParams,
    examples: &[QAExample],
    store: &EmbeddingStore,
    engine: &dyn RewardEngine,
    config: &TrainConfig,
) -> Result<(SelectorParams, TrainLog)> {
    config.validate()?;
    let mut log = TrainLog::default();
    if config.epochs == 0 {
        return Ok((params, log));
    }
    let prepared = prepare(examples, store)?;
    if prepared.is_empty() {
        return Err(Error::Data("empty training set".into()));
    }
    if let Some(bad) = prepared.iter().find(|p| p.docs.len() != config.n) {
        return Err(Error::Data(format!(
            "example {} has {} candidates, config expects n={}",
            bad.example.id,
            bad.docs.len(),
            config.n
        )));
    }
    let difficulties = examples
        .iter()
        .map(|e| difficulty(e, store))
        .collect::<Result<Vec<_>>>()?;

    let root = SeededRng::new(config.seed);
    let mut warm_rng = root.split(0);
    let mut order_rng = root.split(1);
    let mut sample_rng = root.split(2);

    if !config.no_sw {
        let mut opt = new_warmup_optimizer(&params, config)?;
        for _ in 0..config.warmup_epochs {
            log.warmup_losses
                .push(warmup_epoch(&mut params, &mut opt, &prepared, config, &mut warm_rng)?);
        }
    }

    let mut opt = new_optimizer(&params, config)?;
    let mut baseline = Baseline::new(config.baseline_ema_decay);
    let mut grads = ScoreGradients::zeros(params.d(), params.h());
    for epoch in 0..config.epochs {
        let started = Instant::now();
        let order = curriculum_order(&difficulties, epoch, config.epochs, config.no_cl, &mut order_rng);
        let mut acc = EpochAcc::default();
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let batch: Vec<&Prepared<'_>> = chunk.iter().map(|&i| &prepared[i]).collect();
            let (mut transitions, ent) = rollout_batch(&params, &batch, engine, config, &mut sample_rng)?;
            let raw: Vec<f64> = transitions.iter().map(|t| t.raw_reward).collect();
            let adv = compute_advantage(&raw, &mut baseline)?;
            for (t, a) in transitions.iter_mut().zip(adv) {
                t.advantage = a;
            }
            acc.reward += raw.iter().sum::<f64>();
            acc.rollouts += raw.len();
            acc.entropy += ent;
            acc.batches += 1;
            let (l, c, n) = ppo_update(
                &mut params,
                &mut opt,
                &batch,
                &transitions,
                config,
                &mut grads,
                (epoch + 1, b + 1),
            )?;
            acc.loss += l;
            acc.clipped += c;
            acc.updates += n;
        }
        let stats = EpochStats {
            epoch: epoch + 1,
            mean_reward: acc.reward / acc.rollouts.max(1) as f64,
            mean_loss: acc.loss / acc.updates.max(1) as f64,
            clip_fraction: acc.clipped as f64 / acc.updates.max(1) as f64,
            entropy: acc.entropy / acc.batches.max(1) as f64,
            seconds: started.elapsed().as_secs_f64(),
        };
        log.epochs.push(stats);
        if let Some(dir) = &config.checkpoint_dir {
            if config.checkpoint_every > 0 && (epoch + 1) % config.checkpoint_every == 0 {
                save_params(&params, &dir.join(format!("epoch-{:03}.srsm", epoch + 1)))?;
            }
        }
    }
    Ok((params, log))
}

/// Fresh parameters from the seed's dedicated initialization stream.
pub fn init_params(d: usize, h: usize, seed: u64) -> Result<SelectorParams> {
    SelectorParams::init_random(d, h, &mut SeededRng::new(seed).split(3))
}

/// Stabilization ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AblationVariant {
    Full,
    NoSw,
    NoRs,
    NoCl,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 4] = [Self::Full, Self::NoSw, Self::NoRs, Self::NoCl];

    pub fn name(self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::NoSw => "no_sw",
            Self::NoRs => "no_rs",
            Self::NoCl => "no_cl",
        }
    }

    /// `base` with exactly this variant's switch turned on.
    pub fn apply(self, base: &TrainConfig) -> TrainConfig {
        TrainConfig {
            no_sw: self == Self::NoSw,
            no_rs: self == Self::NoRs,
            no_cl: self == Self::NoCl,
            ..base.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRun {
    pub variant: AblationVariant,
    pub params: SelectorParams,
    pub log: TrainLog,
}

/// Trains every variant from the same initial parameters and seed.
pub fn run_ablation(
    initial: &SelectorParams,
    examples: &[QAExample],
    store: &EmbeddingStore,
    engine: &dyn RewardEngine,
    base: &TrainConfig,
) -> Result<Vec<AblationRun>> {
    AblationVariant::ALL
        .iter()
        .map(|&variant| {
            let (params, log) = train(initial.clone(), examples, store, engine, &variant.apply(base))?;
            Ok(AblationRun { variant, params, log })
        })
        .collect()
}

/// Cross-entropy training only (the supervised baseline): `warmup_epochs`
/// epochs of [`warmup_epoch`].
pub fn train_supervised(
    mut params: SelectorParams,
    examples: &[QAExample],
    store: &EmbeddingStore,
    config: &TrainConfig,
) -> Result<(SelectorParams, TrainLog)> {
    config.validate()?;
    let prepared = prepare(examples, store)?;
    let mut log = TrainLog::default();
    let mut rng = SeededRng::new(config.seed).split(0);
    let mut opt = new_warmup_optimizer(&params, config)?;
    for _ in 0..config.warmup_epochs {
        log.warmup_losses
            .push(warmup_epoch(&mut params, &mut opt, &prepared, config, &mut rng)?);
    }
    Ok((params, log))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppo_loss_examples() {
        assert!((ppo_clip_loss(0.0, 0.0, 0.7, 0.2) + 0.7).abs() < 1e-12);
        let ln15 = 1.5f64.ln();
        assert!((ppo_clip_loss(0.0, ln15, 1.0, 0.2) + 1.2).abs() < 1e-12);
        let ln05 = 0.5f64.ln();
        assert!((ppo_clip_loss(0.0, ln05, -1.0, 0.2) - 0.8).abs() < 1e-12);
    }

    #[test]
    fn clipped_region_is_flat() {
        let (g, clipped) = ppo_clip_grad(0.0, 1.5f64.ln(), 1.0, 0.2);
        assert_eq!(g, 0.0);
        assert!(clipped);
        let (g, clipped) = ppo_clip_grad(0.0, 0.0, 0.7, 0.2);
        assert!((g + 0.7).abs() < 1e-12);
        assert!(!clipped);
        // Favourable side of the clip for a negative advantage keeps the gradient.
        let (g, clipped) = ppo_clip_grad(0.0, 1.5f64.ln(), -1.0, 0.2);
        assert!((g - 1.5).abs() < 1e-12);
        assert!(!clipped);
    }

    #[test]
    fn clip_grad_matches_finite_difference() {
        for &(new, a) in &[(0.1, 0.8), (-0.05, -0.3), (0.3, -1.0), (-0.4, -1.0)] {
            let (g, _) = ppo_clip_grad(0.0, new, a, 0.2);
            let h = 1e-7;
            let fd = (ppo_clip_loss(0.0, new + h, a, 0.2) - ppo_clip_loss(0.0, new - h, a, 0.2)) / (2.0 * h);
            assert!((g - fd).abs() < 1e-6, "new={new} a={a} g={g} fd={fd}");
        }
    }

    #[test]
    fn advantage_examples() {
        let mut b = Baseline::new(0.9);
        let adv = compute_advantage(&[0.2, 0.4, 0.9], &mut b).unwrap();
        assert_eq!(adv, normalize_batch(&[0.2 - 0.5, 0.4 - 0.5, 0.9 - 0.5]).unwrap());
        assert!((b.value.unwrap() - 0.5).abs() < 1e-12);

        let mut b = Baseline::new(0.9);
        assert_eq!(compute_advantage(&[0.3; 4], &mut b).unwrap(), vec![0.0; 4]);

        let mut b = Baseline {
            value: Some(0.5),
            decay: 0.9,
        };
        let adv = compute_advantage(&[0.0, 1.0], &mut b).unwrap();
        assert!((adv[0] + 1.0).abs() < 1e-7 && (adv[1] - 1.0).abs() < 1e-7);

        assert!(compute_advantage(&[], &mut Baseline::new(0.9)).is_err());
    }

    #[test]
    fn baseline_tracks_batch_means() {
        let mut b = Baseline::new(0.5);
        compute_advantage(&[1.0, 1.0], &mut b).unwrap();
        compute_advantage(&[0.0, 0.0], &mut b).unwrap();
        assert!((b.value.unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn curriculum_tiers() {
        let diff = [0.2, 0.8, 0.5];
        let mut rng = SeededRng::new(1);
        let mut first = curriculum_order(&diff, 0, 25, false, &mut rng);
        first.sort();
        assert_eq!(first, vec![0, 2]);
        let mut second = curriculum_order(&diff, 9, 25, false, &mut rng);
        second.sort();
        assert_eq!(second, vec![0, 1, 2]);
        let mut last = curriculum_order(&diff, 24, 25, false, &mut rng);
        last.sort();
        assert_eq!(last, vec![0, 1, 2]);
    }

    #[test]
    fn curriculum_thirds_for_default_schedule() {
        let fracs: Vec<f64> = (0..25).map(|e| curriculum_fraction(e, 25)).collect();
        assert_eq!(fracs.iter().filter(|f| **f == 0.5).count(), 9);
        assert_eq!(fracs.iter().filter(|f| **f == 0.75).count(), 8);
        assert_eq!(fracs.iter().filter(|f| **f == 1.0).count(), 8);
    }

    #[test]
    fn no_curriculum_is_seeded_permutation() {
        let diff = [0.3; 10];
        let a = curriculum_order(&diff, 0, 25, true, &mut SeededRng::new(4));
        let b = curriculum_order(&diff, 0, 25, true, &mut SeededRng::new(4));
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort();
        assert_eq!(sorted, (0..10).collect::<Vec<_>>());
    }

    #[test]
    fn equal_difficulties_keep_tier_size() {
        let diff = [0.5; 7];
        let o = curriculum_order(&diff, 0, 9, false, &mut SeededRng::new(2));
        assert_eq!(o.len(), 4);
        let o = curriculum_order(&diff, 4, 9, false, &mut SeededRng::new(2));
        assert_eq!(o.len(), 6);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig { clip_eps: 1.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { gamma: 0.0, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { k: 9, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { batch_size: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn ablation_variants_flip_one_switch() {
        let base = TrainConfig::default();
        let flags: Vec<_> = AblationVariant::ALL
            .iter()
            .map(|v| {
                let c = v.apply(&base);
                (c.no_sw, c.no_rs, c.no_cl)
            })
            .collect();
        assert_eq!(
            flags,
            vec![(false, false, false), (true, false, false), (false, true, false), (false, false, true)]
        );
    }

    #[test]
    fn csv_layout() {
        let log = TrainLog {
            warmup_losses: vec![],
            epochs: vec![EpochStats {
                epoch: 1,
                mean_reward: 0.5,
                mean_loss: -0.1,
                clip_fraction: 0.25,
                entropy: 2.0,
                seconds: 1.5,
            }],
        };
        assert_eq!(
            log.to_csv(),
            "epoch,mean_reward,mean_loss,clip_fraction,entropy,seconds\n1,0.5,-0.1,0.25,2,1.500000\n"
        );
        assert!(log.to_csv_untimed().ends_with(",0.000000\n"));
        let warm = TrainLog {
            warmup_losses: vec![2.0, 1.5],
            epochs: vec![],
        };
        assert_eq!(warm.warmup_csv(), "warmup_epoch,loss\n1,2\n2,1.5\n");
    }
}
