//! Sparse reward-aware document selector.
//!
//! A compact additive-interaction scorer picks `k` of `n` candidate
//! documents for a query. It is trained with PPO on answer-quality rewards,
//! with supervised warmup, batch reward normalization, a baseline-corrected
//! advantage and curriculum ordering.
//!
//! Modules:
//! - [`numcore`]: dense vectors/matrices, softmax, seeded RNG, AdamW
//! - [`scorer`]: the scoring network, its gradients and model file
//! - [`policy`]: Plackett-Luce top-k sampling and greedy selection
//! - [`reward`]: Relaxed F1, semantic scorers, hybrid reward, reward cache
//! - [`trainer`]: warmup, advantages, clipped PPO, curriculum, training loop
//! - [`dataio`]: embedding store, QA/corpus JSON-lines, candidate pools
//! - [`synthenv`]: planted-gold synthetic task and its oracle reward
//! - [`evalbench`]: baselines, evaluation reports, latency and size benchmarks
//! - [`cli`]: the `sras` command line

pub mod cli;
pub mod dataio;
pub mod error;
pub mod evalbench;
pub mod fsutil;
pub mod numcore;
pub mod policy;
pub mod reward;
pub mod scorer;
pub mod synthenv;
pub mod trainer;

pub use error::{Error, Result};
