//! Command-line front end: `sras <synth|warmup|train|eval|ablate|bench>`.
//!
//! Every subcommand accepts `--config FILE`, a flat TOML table whose keys
//! are long flag names (`batch_size` or `batch-size`). File values apply
//! first and command-line flags override them. A key that names no flag of
//! any subcommand is an error; keys that belong only to other subcommands
//! are skipped, so one file can drive a whole pipeline.

use std::collections::{HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;

use crate::dataio::{
    load_qa_jsonl, read_embedding_store, write_corpus_jsonl, write_embedding_store, write_qa_jsonl, EmbeddingStore,
    QAExample,
};
use crate::error::{Error, Result};
use crate::evalbench::{
    ablation_curves_csv, ablation_table, bench_model_size, bench_selector_latency, evaluate, AblationRow, EvalConfig,
    LatencyStats, Selector, SelectorKind,
};
use crate::fsutil::{read_file, write_atomic};
use crate::reward::{
    CachedRewardEngine, ConstantZero, EmbeddingCosine, RewardCache, RewardConfig, RewardEngine, SemanticSource,
};
use crate::scorer::{load_params, save_params, SelectorParams, DEFAULT_EMBED_DIM, DEFAULT_HIDDEN_DIM};
use crate::synthenv::{generate_task, SynthConfig, SyntheticOracle};
use crate::trainer::{init_params, run_ablation, train, train_supervised, TrainConfig};

/// Dimension of hashed token vectors when no token table is given.
pub const DEFAULT_TOKEN_DIM: usize = 64;

#[derive(Debug, Parser)]
#[command(name = "sras", version, about = "Sparse reward-aware document selector")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic planted-gold task.
    Synth(SynthCmd),
    /// Cross-entropy training on gold labels only (the supervised baseline).
    Warmup(WarmupCmd),
    /// Supervised warmup followed by PPO.
    Train(TrainCmd),
    /// Evaluate one selector and report metrics and latency.
    Eval(EvalCmd),
    /// Train full, no_sw, no_rs and no_cl from one seed and compare rewards.
    Ablate(AblateCmd),
    /// Selector latency and model size.
    Bench(BenchCmd),
}

#[derive(Debug, Args)]
struct Common {
    /// TOML file of flag values; command-line flags take precedence.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Seed for every random stream.
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Embedding store (SRSE) with query and document vectors.
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    /// QA examples (JSONL).
    #[arg(long, value_name = "FILE")]
    qa: PathBuf,
}

#[derive(Debug, Args)]
struct ModelInit {
    /// Start from this model file instead of a fresh initialization.
    #[arg(long, value_name = "FILE")]
    model_in: Option<PathBuf>,
    /// Hidden size of a freshly initialized model.
    #[arg(long, default_value_t = DEFAULT_HIDDEN_DIM)]
    hidden: usize,
}

#[derive(Debug, Args)]
struct HyperArgs {
    /// PPO epochs.
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().batch_size)]
    batch_size: usize,
    /// Documents selected per query.
    #[arg(long, default_value_t = TrainConfig::default().k)]
    k: usize,
    /// Candidates per query.
    #[arg(long, default_value_t = TrainConfig::default().n)]
    n: usize,
    /// PPO learning rate.
    #[arg(long, default_value_t = TrainConfig::default().lr)]
    lr: f64,
    /// Warmup learning rate.
    #[arg(long, default_value_t = TrainConfig::default().warmup_lr)]
    warmup_lr: f64,
    /// Discount factor (one-step episodes).
    #[arg(long, default_value_t = TrainConfig::default().gamma)]
    gamma: f64,
    /// PPO clip range.
    #[arg(long, default_value_t = TrainConfig::default().clip_eps)]
    clip_eps: f64,
    #[arg(long, default_value_t = TrainConfig::default().warmup_epochs)]
    warmup_epochs: usize,
    /// Update passes over each rollout batch.
    #[arg(long, default_value_t = TrainConfig::default().ppo_inner_epochs)]
    ppo_inner_epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().baseline_ema_decay)]
    baseline_ema_decay: f64,
    #[arg(long, default_value_t = TrainConfig::default().entropy_coef)]
    entropy_coef: f64,
    /// Softmax temperature of the policy.
    #[arg(long, default_value_t = TrainConfig::default().temperature)]
    temperature: f64,
    #[arg(long, default_value_t = TrainConfig::default().beta1)]
    beta1: f64,
    #[arg(long, default_value_t = TrainConfig::default().beta2)]
    beta2: f64,
    #[arg(long, default_value_t = TrainConfig::default().adam_eps)]
    adam_eps: f64,
    /// AdamW decoupled weight decay.
    #[arg(long, default_value_t = TrainConfig::default().weight_decay)]
    weight_decay: f64,
    /// Skip supervised warmup.
    #[arg(long)]
    no_sw: bool,
    /// Train on the sparse exact-match reward.
    #[arg(long)]
    no_rs: bool,
    /// Disable the curriculum.
    #[arg(long)]
    no_cl: bool,
    /// Gradient worker threads; results do not depend on this.
    #[arg(long, default_value_t = TrainConfig::default().workers)]
    workers: usize,
}

impl HyperArgs {
    fn to_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            k: self.k,
            n: self.n,
            lr: self.lr,
            warmup_lr: self.warmup_lr,
            gamma: self.gamma,
            clip_eps: self.clip_eps,
            warmup_epochs: self.warmup_epochs,
            ppo_inner_epochs: self.ppo_inner_epochs,
            baseline_ema_decay: self.baseline_ema_decay,
            entropy_coef: self.entropy_coef,
            temperature: self.temperature,
            beta1: self.beta1,
            beta2: self.beta2,
            adam_eps: self.adam_eps,
            weight_decay: self.weight_decay,
            no_sw: self.no_sw,
            no_rs: self.no_rs,
            no_cl: self.no_cl,
            seed,
            workers: self.workers,
            checkpoint_dir: None,
            checkpoint_every: 0,
        }
    }
}

#[derive(Debug, Args)]
struct RewardArgs {
    /// Semantic half of the hybrid reward.
    #[arg(long, default_value_t = SemanticSource::SyntheticOracle)]
    semantic_source: SemanticSource,
    /// Weight of Relaxed F1 in the hybrid reward.
    #[arg(long, default_value_t = crate::reward::DEFAULT_ALPHA)]
    alpha: f64,
    /// Reward cache (JSONL) with generated answers per selection.
    #[arg(long, value_name = "FILE")]
    reward_cache: Option<PathBuf>,
    /// Token embedding table (SRSE) for embedding-cosine scoring.
    #[arg(long, value_name = "FILE")]
    token_embeddings: Option<PathBuf>,
    /// Stopword list, one word per line (default: built-in 35 words).
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct SynthCmd {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value_t = SynthConfig::default().num_examples)]
    num_examples: usize,
    /// Candidates per query.
    #[arg(long, default_value_t = SynthConfig::default().n)]
    n: usize,
    /// Embedding dimension.
    #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
    dim: usize,
    /// Gold-document noise σ.
    #[arg(long, default_value_t = SynthConfig::default().noise)]
    noise: f64,
    /// Size of the shared distractor set.
    #[arg(long, default_value_t = SynthConfig::default().corpus_size)]
    corpus_size: usize,
    /// Weight of a shared mean direction in random embeddings.
    #[arg(long, default_value_t = SynthConfig::default().anisotropy)]
    anisotropy: f64,
    /// Trailing examples written to --test-qa instead of --qa.
    #[arg(long, default_value_t = 0)]
    test_count: usize,
    /// Output embedding store.
    #[arg(long, value_name = "FILE")]
    embeddings: PathBuf,
    /// Output QA file.
    #[arg(long, value_name = "FILE")]
    qa: PathBuf,
    /// Output QA file for held-out examples.
    #[arg(long, value_name = "FILE")]
    test_qa: Option<PathBuf>,
    /// Output corpus file.
    #[arg(long, value_name = "FILE")]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct WarmupCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    init: ModelInit,
    #[command(flatten)]
    hyper: HyperArgs,
    /// Output model file.
    #[arg(long, value_name = "FILE")]
    model_out: PathBuf,
    /// Per-epoch warmup loss CSV.
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct TrainCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    init: ModelInit,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    reward: RewardArgs,
    /// Output model file.
    #[arg(long, value_name = "FILE")]
    model_out: PathBuf,
    /// Training log CSV.
    #[arg(long, value_name = "FILE")]
    log: Option<PathBuf>,
    /// Warmup loss CSV.
    #[arg(long, value_name = "FILE")]
    warmup_log: Option<PathBuf>,
    /// Directory for per-epoch checkpoints.
    #[arg(long, value_name = "DIR")]
    checkpoint_dir: Option<PathBuf>,
    /// Checkpoint every this many epochs (0 disables).
    #[arg(long, default_value_t = TrainConfig::default().checkpoint_every)]
    checkpoint_every: usize,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct EvalCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    reward: RewardArgs,
    /// sras, supervised, cosine or random.
    #[arg(long)]
    selector: SelectorKind,
    /// Model file for learned selectors.
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Documents selected per query.
    #[arg(long, default_value_t = EvalConfig::default().k)]
    k: usize,
    #[arg(long, default_value_t = EvalConfig::default().latency_warmup)]
    latency_warmup: usize,
    /// Timed latency iterations (0 skips the benchmark).
    #[arg(long, default_value_t = EvalConfig::default().latency_iters)]
    latency_iters: usize,
    /// Report JSON.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
    /// Per-example CSV.
    #[arg(long, value_name = "FILE")]
    csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct AblateCmd {
    #[command(flatten)]
    common: Common,
    #[command(flatten)]
    data: DataArgs,
    #[command(flatten)]
    init: ModelInit,
    #[command(flatten)]
    hyper: HyperArgs,
    #[command(flatten)]
    reward: RewardArgs,
    /// Comparison table (text).
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Reward per epoch and variant (CSV).
    #[arg(long, value_name = "FILE")]
    curves: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_override_self = true)]
struct BenchCmd {
    #[command(flatten)]
    common: Common,
    /// Model to benchmark (default: fresh initialization).
    #[arg(long, value_name = "FILE")]
    model: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
    dim: usize,
    #[arg(long, default_value_t = DEFAULT_HIDDEN_DIM)]
    hidden: usize,
    /// Candidates per query.
    #[arg(long, default_value_t = 8)]
    n: usize,
    #[arg(long, default_value_t = 3)]
    k: usize,
    #[arg(long, default_value_t = 100)]
    warmup: usize,
    #[arg(long, default_value_t = 1000)]
    iters: usize,
    /// Fail when the mean latency exceeds this many microseconds.
    #[arg(long)]
    max_mean_us: Option<f64>,
    /// Report JSON.
    #[arg(long, value_name = "FILE")]
    report: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BenchReport {
    d: usize,
    h: usize,
    param_count: usize,
    model_size_bytes: u64,
    n: usize,
    k: usize,
    latency: LatencyStats,
}

/// Runs the CLI with `argv` (program name first) against the process
/// streams and returns the exit code.
pub fn run_command(argv: &[String]) -> i32 {
    run_with(argv, &mut std::io::stdout(), &mut std::io::stderr())
}

/// Like [`run_command`] with explicit output streams.
pub fn run_with(argv: &[String], out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let argv = match expand_config(argv) {
        Ok(a) => a,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return 2;
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                return 0;
            }
            let text = e.render().to_string();
            let _ = writeln!(err, "{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return 2;
        }
    };
    let result = match cli.command {
        Command::Synth(c) => synth(c, out),
        Command::Warmup(c) => warmup(c, out),
        Command::Train(c) => train_cmd(c, out),
        Command::Eval(c) => eval(c, out),
        Command::Ablate(c) => ablate(c, out),
        Command::Bench(c) => bench(c, out),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            let _ = writeln!(err, "error: {}", e.to_string().replace('\n', " "));
            1
        }
    }
}

fn config_path(args: &[String]) -> Option<&str> {
    let mut it = args.iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            return it.next().map(String::as_str);
        }
        if let Some(p) = a.strip_prefix("--config=") {
            return Some(p);
        }
    }
    None
}

/// Splices `--key value` pairs from the config file in front of the
/// user's own flags.
fn expand_config(argv: &[String]) -> Result<Vec<String>> {
    if argv.len() < 2 {
        return Ok(argv.to_vec());
    }
    let root = Cli::command();
    let Some(sub) = root.find_subcommand(&argv[1]) else {
        return Ok(argv.to_vec());
    };
    let Some(path) = config_path(&argv[2..]) else {
        return Ok(argv.to_vec());
    };
    let path = Path::new(path);
    let text = String::from_utf8(read_file(path)?)
        .map_err(|_| Error::Config(format!("{}: config file is not UTF-8", path.display())))?;
    let table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| Error::Config(format!("{}: {}", path.display(), e.message())))?;

    let known: HashSet<String> = root
        .get_subcommands()
        .flat_map(|s| s.get_arguments().filter_map(|a| a.get_long().map(str::to_owned)))
        .collect();
    let mine: HashMap<String, bool> = sub
        .get_arguments()
        .filter_map(|a| {
            a.get_long()
                .map(|l| (l.to_owned(), matches!(a.get_action(), ArgAction::SetTrue)))
        })
        .collect();

    let mut injected = Vec::new();
    for (key, value) in &table {
        let flag = key.replace('_', "-");
        if flag == "config" || !known.contains(&flag) {
            return Err(Error::Config(format!("{}: unknown key {key:?}", path.display())));
        }
        let Some(&is_switch) = mine.get(&flag) else {
            continue;
        };
        let text = match value {
            toml::Value::Boolean(b) if is_switch => {
                if *b {
                    injected.push(format!("--{flag}"));
                }
                continue;
            }
            _ if is_switch => {
                return Err(Error::Config(format!("{}: key {key:?} must be true or false", path.display())));
            }
            toml::Value::String(s) => s.clone(),
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            _ => {
                return Err(Error::Config(format!(
                    "{}: key {key:?} must be a string, number or boolean",
                    path.display()
                )))
            }
        };
        injected.push(format!("--{flag}"));
        injected.push(text);
    }
    let mut expanded = argv[..2].to_vec();
    expanded.extend(injected);
    expanded.extend_from_slice(&argv[2..]);
    Ok(expanded)
}

fn require_input(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} file not found: {}", path.display())))
    }
}

fn require_output(path: &Path, what: &str) -> Result<()> {
    if path.is_dir() {
        return Err(Error::Config(format!("{what} path is a directory: {}", path.display())));
    }
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => Err(Error::Config(format!(
            "directory for {what} does not exist: {}",
            dir.display()
        ))),
        _ => Ok(()),
    }
}

fn require_optional_output(path: &Option<PathBuf>, what: &str) -> Result<()> {
    path.as_deref().map_or(Ok(()), |p| require_output(p, what))
}

fn check_data(data: &DataArgs) -> Result<()> {
    require_input(&data.embeddings, "embeddings")?;
    require_input(&data.qa, "QA")
}

fn check_reward(args: &RewardArgs) -> Result<()> {
    if let Some(p) = &args.reward_cache {
        require_input(p, "reward cache")?;
    }
    if let Some(p) = &args.token_embeddings {
        require_input(p, "token embeddings")?;
    }
    if let Some(p) = &args.stopwords {
        require_input(p, "stopwords")?;
    }
    if args.semantic_source != SemanticSource::SyntheticOracle && args.reward_cache.is_none() {
        return Err(Error::Config(format!(
            "semantic source {} needs --reward-cache",
            args.semantic_source
        )));
    }
    Ok(())
}

fn load_data(data: &DataArgs) -> Result<(EmbeddingStore, Vec<QAExample>)> {
    Ok((read_embedding_store(&data.embeddings)?, load_qa_jsonl(&data.qa)?))
}

fn initial_params(init: &ModelInit, d: usize, seed: u64) -> Result<SelectorParams> {
    match &init.model_in {
        Some(p) => load_params(p),
        None => init_params(d, init.hidden, seed),
    }
}

fn reward_config(args: &RewardArgs) -> Result<RewardConfig> {
    let mut cfg = RewardConfig {
        alpha: args.alpha,
        semantic_source: args.semantic_source,
        ..RewardConfig::default()
    };
    if let Some(p) = &args.stopwords {
        let text = String::from_utf8(read_file(p)?)
            .map_err(|_| Error::Config(format!("{}: stopword file is not UTF-8", p.display())))?;
        cfg.stopwords = text
            .lines()
            .map(|l| l.trim().to_lowercase())
            .filter(|l| !l.is_empty())
            .collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn build_engine<'a>(args: &RewardArgs, store: &'a EmbeddingStore) -> Result<Box<dyn RewardEngine + 'a>> {
    let cfg = reward_config(args)?;
    if args.semantic_source == SemanticSource::SyntheticOracle {
        return Ok(Box::new(SyntheticOracle::new(store)));
    }
    let cache_path = args
        .reward_cache
        .as_deref()
        .ok_or_else(|| Error::Config("--reward-cache is required".into()))?;
    let cache = RewardCache::load(cache_path)?;
    Ok(match args.semantic_source {
        SemanticSource::PrecomputedCache => Box::new(CachedRewardEngine::new(cfg, cache)?),
        SemanticSource::ConstantZero => Box::new(CachedRewardEngine::with_scorer(cfg, cache, Box::new(ConstantZero))?),
        SemanticSource::EmbeddingCosine => {
            let table = match &args.token_embeddings {
                Some(p) => read_embedding_store(p)?,
                None => EmbeddingStore::new(DEFAULT_TOKEN_DIM),
            };
            let scorer = EmbeddingCosine::new(table, cfg.stopwords.clone());
            Box::new(CachedRewardEngine::with_scorer(cfg, cache, Box::new(scorer))?)
        }
        SemanticSource::SyntheticOracle => unreachable!("handled above"),
    })
}

fn emit(out: &mut dyn Write, text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("<stdout>", e))
}

fn synth(c: SynthCmd, out: &mut dyn Write) -> Result<()> {
    require_output(&c.embeddings, "embeddings")?;
    require_output(&c.qa, "QA")?;
    require_optional_output(&c.test_qa, "test QA")?;
    require_optional_output(&c.corpus, "corpus")?;
    if c.test_count > 0 && c.test_qa.is_none() {
        return Err(Error::Config("--test-count needs --test-qa".into()));
    }
    if c.test_count >= c.num_examples {
        return Err(Error::Config(format!(
            "--test-count {} leaves no training examples out of {}",
            c.test_count, c.num_examples
        )));
    }
    let task = generate_task(&SynthConfig {
        num_examples: c.num_examples,
        n: c.n,
        d: c.dim,
        noise: c.noise,
        corpus_size: c.corpus_size,
        anisotropy: c.anisotropy,
        seed: c.common.seed,
    })?;
    let (train_set, test_set) = task.examples.split_at(c.num_examples - c.test_count);
    write_embedding_store(&task.store, &c.embeddings)?;
    write_qa_jsonl(train_set, &c.qa)?;
    if let Some(p) = &c.test_qa {
        write_qa_jsonl(test_set, p)?;
    }
    if let Some(p) = &c.corpus {
        write_corpus_jsonl(&task.corpus, p)?;
    }
    emit(
        out,
        &format!(
            "synth: {} train + {} test examples, {} vectors of dim {}\n",
            train_set.len(),
            test_set.len(),
            task.store.len(),
            task.store.dim()
        ),
    )
}

fn warmup(c: WarmupCmd, out: &mut dyn Write) -> Result<()> {
    check_data(&c.data)?;
    if let Some(p) = &c.init.model_in {
        require_input(p, "model")?;
    }
    require_output(&c.model_out, "model")?;
    require_optional_output(&c.log, "log")?;
    let cfg = c.hyper.to_config(c.common.seed);
    cfg.validate()?;
    let (store, examples) = load_data(&c.data)?;
    let params = initial_params(&c.init, store.dim(), c.common.seed)?;
    let (params, log) = train_supervised(params, &examples, &store, &cfg)?;
    save_params(&params, &c.model_out)?;
    if let Some(p) = &c.log {
        write_atomic(p, log.warmup_csv().as_bytes())?;
    }
    let last = log.warmup_losses.last().copied().unwrap_or(f64::NAN);
    emit(
        out,
        &format!("warmup: {} epochs, final loss {last:.6}\n", log.warmup_losses.len()),
    )
}

fn train_cmd(c: TrainCmd, out: &mut dyn Write) -> Result<()> {
    check_data(&c.data)?;
    check_reward(&c.reward)?;
    if let Some(p) = &c.init.model_in {
        require_input(p, "model")?;
    }
    require_output(&c.model_out, "model")?;
    require_optional_output(&c.log, "log")?;
    require_optional_output(&c.warmup_log, "warmup log")?;
    let mut cfg = c.hyper.to_config(c.common.seed);
    cfg.checkpoint_every = c.checkpoint_every;
    cfg.validate()?;
    if let Some(dir) = &c.checkpoint_dir {
        if dir.exists() && !dir.is_dir() {
            return Err(Error::Config(format!("checkpoint path is not a directory: {}", dir.display())));
        }
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        cfg.checkpoint_dir = Some(dir.clone());
    }
    let (store, examples) = load_data(&c.data)?;
    let engine = build_engine(&c.reward, &store)?;
    let params = initial_params(&c.init, store.dim(), c.common.seed)?;
    let (params, log) = train(params, &examples, &store, engine.as_ref(), &cfg)?;
    save_params(&params, &c.model_out)?;
    if let Some(p) = &c.log {
        write_atomic(p, log.to_csv().as_bytes())?;
    }
    if let Some(p) = &c.warmup_log {
        write_atomic(p, log.warmup_csv().as_bytes())?;
    }
    let last = log.epochs.last().map_or(f64::NAN, |e| e.mean_reward);
    emit(
        out,
        &format!("train: {} epochs, final mean reward {last:.6}\n", log.epochs.len()),
    )
}

fn eval(c: EvalCmd, out: &mut dyn Write) -> Result<()> {
    check_data(&c.data)?;
    check_reward(&c.reward)?;
    let learned = matches!(c.selector, SelectorKind::Sras | SelectorKind::Supervised);
    match (&c.model, learned) {
        (Some(p), true) => require_input(p, "model")?,
        (None, true) => return Err(Error::Config(format!("selector {} needs --model", c.selector))),
        _ => {}
    }
    require_optional_output(&c.report, "report")?;
    require_optional_output(&c.csv, "CSV")?;
    let (store, examples) = load_data(&c.data)?;
    let engine = build_engine(&c.reward, &store)?;
    let selector = match c.selector {
        SelectorKind::Sras => Selector::Sras(load_params(c.model.as_deref().expect("checked"))?),
        SelectorKind::Supervised => Selector::Supervised(load_params(c.model.as_deref().expect("checked"))?),
        SelectorKind::Cosine => Selector::Cosine,
        SelectorKind::Random => Selector::Random { seed: c.common.seed },
    };
    let cfg = EvalConfig {
        k: c.k,
        latency_warmup: c.latency_warmup,
        latency_iters: c.latency_iters,
    };
    let report = evaluate(&selector, &examples, &store, engine.as_ref(), &cfg)?;
    if let Some(p) = &c.report {
        write_atomic(p, report.to_json().as_bytes())?;
    }
    if let Some(p) = &c.csv {
        write_atomic(p, report.to_csv().as_bytes())?;
    }
    emit(out, &report.to_table())
}

fn ablate(c: AblateCmd, out: &mut dyn Write) -> Result<()> {
    check_data(&c.data)?;
    check_reward(&c.reward)?;
    if let Some(p) = &c.init.model_in {
        require_input(p, "model")?;
    }
    require_optional_output(&c.out, "table")?;
    require_optional_output(&c.curves, "curves")?;
    let cfg = c.hyper.to_config(c.common.seed);
    cfg.validate()?;
    let (store, examples) = load_data(&c.data)?;
    let engine = build_engine(&c.reward, &store)?;
    let params = initial_params(&c.init, store.dim(), c.common.seed)?;
    let runs = run_ablation(&params, &examples, &store, engine.as_ref(), &cfg)?;
    let rows: Vec<AblationRow> = runs.iter().map(AblationRow::from_run).collect();
    let table = ablation_table(&rows);
    if let Some(p) = &c.out {
        write_atomic(p, table.as_bytes())?;
    }
    if let Some(p) = &c.curves {
        write_atomic(p, ablation_curves_csv(&runs).as_bytes())?;
    }
    emit(out, &table)
}

fn bench(c: BenchCmd, out: &mut dyn Write) -> Result<()> {
    if let Some(p) = &c.model {
        require_input(p, "model")?;
    }
    require_optional_output(&c.report, "report")?;
    let params = match &c.model {
        Some(p) => load_params(p)?,
        None => init_params(c.dim, c.hidden, c.common.seed)?,
    };
    let latency = bench_selector_latency(&params, c.n, c.k, c.warmup, c.iters, c.common.seed)?;
    let report = BenchReport {
        d: params.d(),
        h: params.h(),
        param_count: params.param_count(),
        model_size_bytes: bench_model_size(&params),
        n: c.n,
        k: c.k,
        latency,
    };
    if let Some(p) = &c.report {
        let json = serde_json::to_string_pretty(&report).expect("bench report serializes");
        write_atomic(p, json.as_bytes())?;
    }
    emit(
        out,
        &format!(
            "bench: d={} h={} params={} size={} bytes ({:.3} MB)\nlatency n={} k={}: mean {:.2} us, p50 {:.2} us, p95 {:.2} us over {} iterations\n",
            report.d,
            report.h,
            report.param_count,
            report.model_size_bytes,
            report.model_size_bytes as f64 / (1024.0 * 1024.0),
            report.n,
            report.k,
            latency.mean_us,
            latency.p50_us,
            latency.p95_us,
            latency.iterations
        ),
    )?;
    if let Some(limit) = c.max_mean_us {
        if latency.mean_us > limit {
            return Err(Error::Data(format!(
                "mean latency {:.2} us exceeds the {limit} us limit",
                latency.mean_us
            )));
        }
    }
    Ok(())
}
