//! Verification outcomes, the unbiased Pass@k estimate, reward noise and
//! negative-answer diversity.

use std::collections::HashSet;
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::advantage::OutcomeBatch;
use crate::combinat::binom_ratio;
use crate::error::{Error, Result};

/// A sampled answer together with the verifier's verdict.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct VerifiedResponse<A> {
    pub answer_id: A,
    pub reward: bool,
}

impl<A> VerifiedResponse<A> {
    pub fn new(answer_id: A, reward: bool) -> Self {
        Self { answer_id, reward }
    }
}

/// Unbiased Pass@k from `n_rollout` samples of which `n_pos` passed:
/// `1 - C(n - c, k) / C(n, k)`.
pub fn pass_at_k_estimate(n_rollout: usize, n_pos: usize, k: usize) -> Result<f64> {
    if n_pos > n_rollout {
        return Err(Error::domain(format!(
            "n_pos = {n_pos} exceeds n_rollout = {n_rollout}"
        )));
    }
    if k > n_rollout {
        return Err(Error::domain(format!(
            "k = {k} exceeds n_rollout = {n_rollout}"
        )));
    }
    Ok(1.0 - binom_ratio(n_rollout - n_pos, n_rollout, k)?.value())
}

/// Flips each negative reward to positive with probability `proportion`.
pub fn flip_negative_rewards(
    batch: &OutcomeBatch,
    proportion: f64,
    seed: u64,
) -> Result<OutcomeBatch> {
    if !(0.0..=1.0).contains(&proportion) {
        return Err(Error::domain(format!(
            "flip proportion {proportion} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rewards = batch
        .rewards()
        .iter()
        .map(|&r| r || rng.random_bool(proportion))
        .collect();
    OutcomeBatch::new(rewards)
}

/// Distinct answers among the negatives divided by the number of negatives.
/// Zero when there are no negatives.
pub fn negative_diversity<A: Eq + Hash>(responses: &[VerifiedResponse<A>]) -> f64 {
    let mut distinct = HashSet::new();
    let mut n_neg = 0usize;
    for r in responses.iter().filter(|r| !r.reward) {
        n_neg += 1;
        distinct.insert(&r.answer_id);
    }
    if n_neg == 0 {
        0.0
    } else {
        distinct.len() as f64 / n_neg as f64
    }
}
