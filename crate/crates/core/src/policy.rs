//! Top-k selection policy over candidate scores.
//!
//! An action is an ordered selection of `k` distinct candidates drawn
//! sequentially without replacement (Plackett-Luce): each step samples from
//! the softmax over the candidates not yet chosen. The action log-probability
//! is the sum of the `k` step log-probabilities.

use crate::error::{Error, Result};
use crate::numcore::{log_sum_exp, softmax, SeededRng};

/// Ordered selection of `k` distinct candidate indices.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TopKAction {
    pub indices: Vec<usize>,
}

impl TopKAction {
    pub fn k(&self) -> usize {
        self.indices.len()
    }

    pub fn contains(&self, index: usize) -> bool {
        self.indices.contains(&index)
    }

    /// Checks every index is below `n` and none repeats.
    pub fn validate(&self, n: usize) -> Result<()> {
        if self.indices.len() > n {
            return Err(Error::Argument(format!("action has {} indices for {n} candidates", self.k())));
        }
        let mut seen = vec![false; n];
        for &i in &self.indices {
            if i >= n {
                return Err(Error::Argument(format!("index {i} out of range for {n} candidates")));
            }
            if std::mem::replace(&mut seen[i], true) {
                return Err(Error::Argument(format!("index {i} repeated in action")));
            }
        }
        Ok(())
    }
}

fn check_k(k: usize, n: usize) -> Result<()> {
    if k > n {
        return Err(Error::Argument(format!("k={k} exceeds candidate count n={n}")));
    }
    Ok(())
}

/// Log-probability of choosing `chosen` among the still-available candidates.
fn step_log_prob(scores: &[f64], available: &[bool], chosen: usize) -> f64 {
    let lse = log_sum_exp(
        scores
            .iter()
            .zip(available)
            .filter(|(_, &a)| a)
            .map(|(s, _)| *s),
    );
    scores[chosen] - lse
}

/// Samples an ordered top-k action and returns it with its log-probability.
pub fn sample_topk(scores: &[f64], k: usize, rng: &mut SeededRng) -> Result<(TopKAction, f64)> {
    let n = scores.len();
    check_k(k, n)?;
    let mut available = vec![true; n];
    let mut indices = Vec::with_capacity(k);
    let mut log_prob = 0.0;
    for _ in 0..k {
        let max = scores
            .iter()
            .zip(&available)
            .filter(|(_, &a)| a)
            .map(|(s, _)| *s)
            .fold(f64::NEG_INFINITY, f64::max);
        let weights: Vec<f64> = scores
            .iter()
            .zip(&available)
            .map(|(s, &a)| if a { (s - max).exp() } else { 0.0 })
            .collect();
        let total: f64 = weights.iter().sum();
        let mut u = rng.uniform() * total;
        let mut pick = None;
        for (i, w) in weights.iter().enumerate() {
            if available[i] {
                pick = Some(i);
                if u < *w {
                    break;
                }
                u -= w;
            }
        }
        // Rounding can leave `u` just past the last bucket; the last
        // available index is then the pick.
        let pick = pick.expect("k <= n leaves at least one candidate");
        log_prob += step_log_prob(scores, &available, pick);
        available[pick] = false;
        indices.push(pick);
    }
    Ok((TopKAction { indices }, log_prob))
}

/// Plackett-Luce log-probability of exactly this ordered selection.
pub fn logprob_of(scores: &[f64], action: &TopKAction) -> Result<f64> {
    let n = scores.len();
    action.validate(n)?;
    let mut available = vec![true; n];
    let mut log_prob = 0.0;
    for &i in &action.indices {
        log_prob += step_log_prob(scores, &available, i);
        available[i] = false;
    }
    Ok(log_prob)
}

/// Gradient of [`logprob_of`] with respect to the scores.
pub fn logprob_grad(scores: &[f64], action: &TopKAction) -> Result<Vec<f64>> {
    let n = scores.len();
    action.validate(n)?;
    let mut available = vec![true; n];
    let mut grad = vec![0.0; n];
    for &chosen in &action.indices {
        let lse = log_sum_exp(
            scores
                .iter()
                .zip(&available)
                .filter(|(_, &a)| a)
                .map(|(s, _)| *s),
        );
        for j in 0..n {
            if available[j] {
                grad[j] -= (scores[j] - lse).exp();
            }
        }
        grad[chosen] += 1.0;
        available[chosen] = false;
    }
    Ok(grad)
}

/// Indices of the `k` largest scores, descending; ties go to the lower index.
pub fn argmax_topk(scores: &[f64], k: usize) -> Result<TopKAction> {
    check_k(k, scores.len())?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // Stable sort keeps index order among equal scores.
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    order.truncate(k);
    Ok(TopKAction { indices: order })
}

/// Entropy (nats) of the first-step categorical `softmax(scores)`.
pub fn entropy(scores: &[f64]) -> f64 {
    if scores.is_empty() {
        return 0.0;
    }
    let lse = log_sum_exp(scores.iter().copied());
    scores
        .iter()
        .map(|s| {
            let lp = s - lse;
            let p = lp.exp();
            if p > 0.0 {
                -p * lp
            } else {
                0.0
            }
        })
        .sum()
}

/// Gradient of [`entropy`]: `dH/ds_j = -p_j (log p_j + H)`.
pub fn entropy_grad(scores: &[f64]) -> Vec<f64> {
    let Ok(p) = softmax(scores) else {
        return Vec::new();
    };
    let h = entropy(scores);
    let lse = log_sum_exp(scores.iter().copied());
    scores
        .iter()
        .zip(p.iter())
        .map(|(s, p)| -p * ((s - lse) + h))
        .collect()
}
