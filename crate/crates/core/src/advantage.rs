//! Group-relative advantage estimators.
//!
//! All estimators consume the binary outcomes of one problem's rollouts and
//! return one advantage per rollout:
//!
//! * `pass1`: GRPO-style standardisation of the raw rewards.
//! * `passk_full`: disjoint consecutive groups of `k`, group reward is the max.
//! * `passk_bootstrap`: many random `k`-subsets, group advantages summed per rollout.
//! * `passk_analytical`: the expectation of the bootstrap scheme over every
//!   `k`-subset, in closed form.
//! * `exceeding`: the analytical estimator rescaled by `4 / (10 ln(n_pos + 0.5))`.
//! * `combination`: accuracy-weighted blend of analytical Pass@k and Pass@1.
//!
//! Standard deviations use the population (Bernoulli) form `sqrt(p (1 - p))`.
//! A batch whose (group) rewards have zero variance gets all-zero advantages.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::combinat::binom_ratio;
use crate::error::{Error, Result};

/// Verified binary outcomes of one problem's rollouts.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct OutcomeBatch {
    rewards: Vec<bool>,
}

impl OutcomeBatch {
    pub fn new(rewards: Vec<bool>) -> Result<Self> {
        if rewards.is_empty() {
            return Err(Error::domain(
                "outcome batch must contain at least one rollout",
            ));
        }
        Ok(Self { rewards })
    }

    /// Builds a batch from 0/1 integer rewards.
    pub fn from_binary(rewards: &[u8]) -> Result<Self> {
        let rewards = rewards
            .iter()
            .map(|&r| match r {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::domain(format!("reward {other} is not binary"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(rewards)
    }

    /// `n_pos` positives followed by `n_rollout - n_pos` negatives.
    pub fn from_counts(n_rollout: usize, n_pos: usize) -> Result<Self> {
        if n_pos > n_rollout {
            return Err(Error::domain(format!(
                "n_pos = {n_pos} exceeds n_rollout = {n_rollout}"
            )));
        }
        Self::new((0..n_rollout).map(|i| i < n_pos).collect())
    }

    pub fn rewards(&self) -> &[bool] {
        &self.rewards
    }

    pub fn n_rollout(&self) -> usize {
        self.rewards.len()
    }

    pub fn n_pos(&self) -> usize {
        self.rewards.iter().filter(|&&r| r).count()
    }

    pub fn n_neg(&self) -> usize {
        self.n_rollout() - self.n_pos()
    }

    pub fn accuracy(&self) -> f64 {
        self.n_pos() as f64 / self.n_rollout() as f64
    }
}

/// Group-level statistics that produced an [`AdvantageVector`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupDiagnostics {
    pub group_mean: f64,
    pub group_std: f64,
    pub n_pos: usize,
    pub n_neg: usize,
}

/// Per-rollout advantages, index-aligned with the originating batch.
#[derive(Debug, Clone, PartialEq)]
pub struct AdvantageVector {
    pub values: Vec<f64>,
    pub diagnostics: GroupDiagnostics,
}

impl AdvantageVector {
    fn zeros(batch: &OutcomeBatch, group_mean: f64, group_std: f64) -> Self {
        Self {
            values: vec![0.0; batch.n_rollout()],
            diagnostics: GroupDiagnostics {
                group_mean,
                group_std,
                n_pos: batch.n_pos(),
                n_neg: batch.n_neg(),
            },
        }
    }

    fn from_classes(batch: &OutcomeBatch, pos: f64, neg: f64, mean: f64, std: f64) -> Self {
        Self {
            values: batch
                .rewards()
                .iter()
                .map(|&r| if r { pos } else { neg })
                .collect(),
            diagnostics: GroupDiagnostics {
                group_mean: mean,
                group_std: std,
                n_pos: batch.n_pos(),
                n_neg: batch.n_neg(),
            },
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.values.iter().map(|v| v.abs()).sum()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Index sets of the groups drawn from one batch.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupAssignment {
    groups: Vec<Vec<usize>>,
}

impl GroupAssignment {
    /// Validates that each group holds distinct indices.
    pub fn new(groups: Vec<Vec<usize>>) -> Result<Self> {
        for (j, g) in groups.iter().enumerate() {
            let mut sorted = g.clone();
            sorted.sort_unstable();
            if sorted.windows(2).any(|w| w[0] == w[1]) {
                return Err(Error::domain(format!("group {j} repeats an index")));
            }
        }
        Ok(Self { groups })
    }

    /// Consecutive disjoint groups of `k` covering `floor(n / k) * k` indices.
    pub fn consecutive(n_rollout: usize, k: usize) -> Result<Self> {
        if k == 0 || k > n_rollout {
            return Err(Error::domain(format!(
                "full sampling needs 1 <= k <= n_rollout, got k = {k}, n_rollout = {n_rollout}"
            )));
        }
        let groups = (0..n_rollout / k)
            .map(|j| (j * k..(j + 1) * k).collect())
            .collect();
        Ok(Self { groups })
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    pub fn n_group(&self) -> usize {
        self.groups.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Pass1,
    PasskFull,
    PasskBootstrap,
    PasskAnalytical,
    Exceeding,
    Combination,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 6] = [
        EstimatorKind::Pass1,
        EstimatorKind::PasskFull,
        EstimatorKind::PasskBootstrap,
        EstimatorKind::PasskAnalytical,
        EstimatorKind::Exceeding,
        EstimatorKind::Combination,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EstimatorKind::Pass1 => "pass1",
            EstimatorKind::PasskFull => "passk_full",
            EstimatorKind::PasskBootstrap => "passk_bootstrap",
            EstimatorKind::PasskAnalytical => "passk_analytical",
            EstimatorKind::Exceeding => "exceeding",
            EstimatorKind::Combination => "combination",
        }
    }

    /// Whether the estimator draws random groups.
    pub fn is_sampling(self) -> bool {
        matches!(self, EstimatorKind::PasskBootstrap)
    }
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pass1" => Ok(EstimatorKind::Pass1),
            "passk_full" | "full" => Ok(EstimatorKind::PasskFull),
            "passk_bootstrap" | "bootstrap" => Ok(EstimatorKind::PasskBootstrap),
            "passk_analytical" | "passk" | "analytical" => Ok(EstimatorKind::PasskAnalytical),
            "exceeding" => Ok(EstimatorKind::Exceeding),
            "combination" => Ok(EstimatorKind::Combination),
            other => Err(Error::Parse(format!("unknown estimator `{other}`"))),
        }
    }
}

/// Which advantage rule to apply, with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimatorSpec {
    pub kind: EstimatorKind,
    #[serde(default = "default_k")]
    pub k: usize,
    /// Bootstrap group count; `None` means one group per rollout.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_group: Option<usize>,
    /// Batches with accuracy strictly above this get zero advantage.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub zero_easy_threshold: Option<f64>,
    #[serde(default)]
    pub rng_seed: u64,
}

fn default_k() -> usize {
    1
}

impl EstimatorSpec {
    pub fn pass1() -> Self {
        Self::new(EstimatorKind::Pass1, 1)
    }

    pub fn new(kind: EstimatorKind, k: usize) -> Self {
        Self {
            kind,
            k,
            n_group: None,
            zero_easy_threshold: None,
            rng_seed: 0,
        }
    }

    pub fn with_zero_easy_threshold(mut self, threshold: f64) -> Self {
        self.zero_easy_threshold = Some(threshold);
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn with_n_group(mut self, n_group: usize) -> Self {
        self.n_group = Some(n_group);
        self
    }

    /// Checks the estimator settings on their own, without a batch size.
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::config("k", "must be at least 1"));
        }
        if self.kind != EstimatorKind::Pass1 && self.k < 2 {
            return Err(Error::config("k", format!("{} requires k >= 2", self.kind)));
        }
        if self.n_group == Some(0) {
            return Err(Error::config("n_group", "must be at least 1"));
        }
        if let Some(t) = self.zero_easy_threshold {
            if !(0.0..=1.0).contains(&t) {
                return Err(Error::config("zero_easy_threshold", "must lie in [0, 1]"));
            }
        }
        Ok(())
    }

    /// Checks the estimator settings against a concrete rollout count.
    pub fn validate_for(&self, n_rollout: usize) -> Result<()> {
        self.validate()?;
        if self.kind != EstimatorKind::Pass1 && self.k > n_rollout {
            return Err(Error::domain(format!(
                "k = {} exceeds n_rollout = {n_rollout}",
                self.k
            )));
        }
        Ok(())
    }
}

/// Population statistics of a 0/1 sample given its fraction of zeros.
///
/// Works from the zero fraction `z` directly: `1 - mean` is `z` itself, so
/// no precision is lost when `z` is tiny. The Pass@1 rule and the analytical
/// Pass@k rule at `k = 1` share this path and agree bit for bit.
#[derive(Debug, Clone, Copy)]
struct BinaryStandardizer {
    zero_fraction: f64,
    mean: f64,
    std: f64,
}

impl BinaryStandardizer {
    fn from_zero_fraction(zero_fraction: f64) -> Self {
        let mean = 1.0 - zero_fraction;
        let std = (zero_fraction * mean).sqrt();
        Self {
            zero_fraction,
            mean,
            std,
        }
    }

    fn from_counts(n_zero: usize, n_total: usize) -> Self {
        Self::from_zero_fraction(n_zero as f64 / n_total as f64)
    }

    fn is_degenerate(&self) -> bool {
        self.std == 0.0
    }

    fn positive(&self) -> f64 {
        self.zero_fraction / self.std
    }

    fn negative(&self) -> f64 {
        -self.mean / self.std
    }
}

/// Pass@1 (GRPO) advantages: `(R_i - mean) / std` with the population std.
pub fn pass1_advantage(batch: &OutcomeBatch) -> AdvantageVector {
    let stats = BinaryStandardizer::from_counts(batch.n_neg(), batch.n_rollout());
    if stats.is_degenerate() {
        return AdvantageVector::zeros(batch, stats.mean, 0.0);
    }
    AdvantageVector::from_classes(
        batch,
        stats.positive(),
        stats.negative(),
        stats.mean,
        stats.std,
    )
}

/// Per-class Pass@1 advantages `(a_pos, a_neg)` for a batch with `n_pos` positives.
pub fn pass1_class_advantage(n_rollout: usize, n_pos: usize) -> Result<(f64, f64)> {
    check_counts(n_rollout, n_pos)?;
    let stats = BinaryStandardizer::from_counts(n_rollout - n_pos, n_rollout);
    if stats.is_degenerate() {
        return Ok((0.0, 0.0));
    }
    Ok((stats.positive(), stats.negative()))
}

/// Mean and population std of the max-reward over all `k`-subsets.
pub fn group_reward_stats(n_rollout: usize, n_neg: usize, k: usize) -> Result<(f64, f64)> {
    if n_neg > n_rollout {
        return Err(Error::domain(format!(
            "n_neg = {n_neg} exceeds n_rollout = {n_rollout}"
        )));
    }
    if k == 0 || k > n_rollout {
        return Err(Error::domain(format!(
            "group size k = {k} must lie in [1, {n_rollout}]"
        )));
    }
    let stats = group_standardizer(n_rollout, n_neg, k)?;
    Ok((stats.mean, stats.std))
}

fn group_standardizer(n_rollout: usize, n_neg: usize, k: usize) -> Result<BinaryStandardizer> {
    let all_negative = binom_ratio(n_neg, n_rollout, k)?.value();
    Ok(BinaryStandardizer::from_zero_fraction(all_negative))
}

fn check_counts(n_rollout: usize, n_pos: usize) -> Result<()> {
    if n_rollout == 0 {
        return Err(Error::domain("n_rollout must be at least 1"));
    }
    if n_pos > n_rollout {
        return Err(Error::domain(format!(
            "n_pos = {n_pos} exceeds n_rollout = {n_rollout}"
        )));
    }
    Ok(())
}

/// Closed-form Pass@k advantages `(a_pos, a_neg)`.
///
/// A positive rollout only ever sits in positive groups, so it receives the
/// positive-group advantage. A negative rollout sits in an all-negative group
/// with probability `C(n_neg - 1, k - 1) / C(n_rollout - 1, k - 1)` and
/// receives the matching mixture of group advantages.
pub fn analytical_advantage(n_rollout: usize, n_pos: usize, k: usize) -> Result<(f64, f64)> {
    check_counts(n_rollout, n_pos)?;
    if k == 0 || k > n_rollout {
        return Err(Error::domain(format!(
            "k = {k} must lie in [1, n_rollout = {n_rollout}]"
        )));
    }
    let n_neg = n_rollout - n_pos;
    let stats = group_standardizer(n_rollout, n_neg, k)?;
    if stats.is_degenerate() {
        return Ok((0.0, 0.0));
    }
    let group_pos = stats.positive();
    let group_neg = stats.negative();
    let a_neg = if n_neg == 0 {
        0.0
    } else {
        let in_negative_group = binom_ratio(n_neg - 1, n_rollout - 1, k - 1)?.value();
        (1.0 - in_negative_group) * group_pos + in_negative_group * group_neg
    };
    Ok((group_pos, a_neg))
}

/// Analytical Pass@k advantages applied to a batch.
pub fn analytical_batch_advantage(batch: &OutcomeBatch, k: usize) -> Result<AdvantageVector> {
    let (a_pos, a_neg) = analytical_advantage(batch.n_rollout(), batch.n_pos(), k)?;
    let stats = group_standardizer(batch.n_rollout(), batch.n_neg(), k)?;
    Ok(AdvantageVector::from_classes(
        batch, a_pos, a_neg, stats.mean, stats.std,
    ))
}

/// Standardises per-group max-rewards and credits each group's advantage to its members.
fn grouped_advantage(
    batch: &OutcomeBatch,
    assignment: &GroupAssignment,
) -> Result<AdvantageVector> {
    let n = batch.n_rollout();
    let rewards = batch.rewards();
    let mut group_rewards = Vec::with_capacity(assignment.n_group());
    for (j, group) in assignment.groups().iter().enumerate() {
        if let Some(&bad) = group.iter().find(|&&i| i >= n) {
            return Err(Error::domain(format!(
                "group {j} references index {bad} outside batch of {n}"
            )));
        }
        group_rewards.push(group.iter().any(|&i| rewards[i]));
    }
    if group_rewards.is_empty() {
        return Ok(AdvantageVector::zeros(batch, 0.0, 0.0));
    }
    let n_neg_groups = group_rewards.iter().filter(|&&r| !r).count();
    let stats = BinaryStandardizer::from_counts(n_neg_groups, group_rewards.len());
    if stats.is_degenerate() {
        return Ok(AdvantageVector::zeros(batch, stats.mean, 0.0));
    }
    let (pos, neg) = (stats.positive(), stats.negative());
    let mut values = vec![0.0; n];
    for (group, &r) in assignment.groups().iter().zip(&group_rewards) {
        let adv = if r { pos } else { neg };
        for &i in group {
            values[i] += adv;
        }
    }
    Ok(AdvantageVector {
        values,
        diagnostics: GroupDiagnostics {
            group_mean: stats.mean,
            group_std: stats.std,
            n_pos: batch.n_pos(),
            n_neg: batch.n_neg(),
        },
    })
}

/// Pass@k with full sampling: disjoint consecutive groups, trailing rollouts get 0.
pub fn full_sampling_advantage(batch: &OutcomeBatch, k: usize) -> Result<AdvantageVector> {
    let assignment = GroupAssignment::consecutive(batch.n_rollout(), k)?;
    grouped_advantage(batch, &assignment)
}

/// Draws `n_group` independent uniform `k`-subsets of `0..n_rollout`.
pub fn bootstrap_groups(
    n_rollout: usize,
    k: usize,
    n_group: usize,
    seed: u64,
) -> Result<GroupAssignment> {
    if k == 0 || k > n_rollout {
        return Err(Error::domain(format!(
            "bootstrap needs 1 <= k <= n_rollout, got k = {k}, n_rollout = {n_rollout}"
        )));
    }
    if n_group == 0 {
        return Err(Error::domain("n_group must be at least 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups = (0..n_group)
        .map(|_| {
            let mut g = rand::seq::index::sample(&mut rng, n_rollout, k).into_vec();
            g.sort_unstable();
            g
        })
        .collect();
    Ok(GroupAssignment { groups })
}

/// Pass@k with bootstrap sampling: each rollout sums the advantages of its groups.
pub fn bootstrap_advantage(
    batch: &OutcomeBatch,
    assignment: &GroupAssignment,
) -> Result<AdvantageVector> {
    grouped_advantage(batch, assignment)
}

/// Scale factor `4 / (10 ln(n_pos + 0.5))` of the exceeding transform.
pub fn exceeding_scale(n_pos: usize) -> Result<f64> {
    if n_pos == 0 {
        return Err(Error::domain(
            "exceeding transform is undefined for n_pos = 0 (degenerate batch)",
        ));
    }
    Ok(4.0 / (10.0 * (n_pos as f64 + 0.5).ln()))
}

/// Rescales an advantage so the η peak moves toward the hardest batches.
pub fn exceeding_transform(a: f64, n_pos: usize) -> Result<f64> {
    Ok(exceeding_scale(n_pos)? * a)
}

/// Exceeding Pass@k per-class advantages; degenerate batches give `(0, 0)`.
pub fn exceeding_advantage(n_rollout: usize, n_pos: usize, k: usize) -> Result<(f64, f64)> {
    let (a_pos, a_neg) = analytical_advantage(n_rollout, n_pos, k)?;
    if n_pos == 0 {
        return Ok((0.0, 0.0));
    }
    Ok((
        exceeding_transform(a_pos, n_pos)?,
        exceeding_transform(a_neg, n_pos)?,
    ))
}

/// Accuracy-weighted blend: `w * A_passk + (1 - w) * A_pass1` with `w = n_pos / n`.
pub fn combination_advantage(n_rollout: usize, n_pos: usize, k: usize) -> Result<(f64, f64)> {
    let (k_pos, k_neg) = analytical_advantage(n_rollout, n_pos, k)?;
    let (p_pos, p_neg) = pass1_class_advantage(n_rollout, n_pos)?;
    let w = n_pos as f64 / n_rollout as f64;
    Ok((w * k_pos + (1.0 - w) * p_pos, w * k_neg + (1.0 - w) * p_neg))
}

/// Per-class advantages of every estimator that has a closed form.
pub fn closed_form_advantage(
    kind: EstimatorKind,
    n_rollout: usize,
    n_pos: usize,
    k: usize,
) -> Result<(f64, f64)> {
    match kind {
        EstimatorKind::Pass1 => pass1_class_advantage(n_rollout, n_pos),
        EstimatorKind::PasskAnalytical => analytical_advantage(n_rollout, n_pos, k),
        EstimatorKind::Exceeding => exceeding_advantage(n_rollout, n_pos, k),
        EstimatorKind::Combination => combination_advantage(n_rollout, n_pos, k),
        EstimatorKind::PasskFull | EstimatorKind::PasskBootstrap => {
            Err(Error::UnsupportedSpec(format!("{kind} has no closed form")))
        }
    }
}

/// Applies the estimator described by `spec` to `batch`.
pub fn estimate(batch: &OutcomeBatch, spec: &EstimatorSpec) -> Result<AdvantageVector> {
    spec.validate_for(batch.n_rollout())?;
    let n = batch.n_rollout();
    let n_pos = batch.n_pos();
    let mut out = match spec.kind {
        EstimatorKind::Pass1 => pass1_advantage(batch),
        EstimatorKind::PasskFull => full_sampling_advantage(batch, spec.k)?,
        EstimatorKind::PasskBootstrap => {
            let groups = bootstrap_groups(n, spec.k, spec.n_group.unwrap_or(n), spec.rng_seed)?;
            bootstrap_advantage(batch, &groups)?
        }
        EstimatorKind::PasskAnalytical => analytical_batch_advantage(batch, spec.k)?,
        EstimatorKind::Exceeding => {
            let mut v = analytical_batch_advantage(batch, spec.k)?;
            let (a_pos, a_neg) = exceeding_advantage(n, n_pos, spec.k)?;
            for (value, &r) in v.values.iter_mut().zip(batch.rewards()) {
                *value = if r { a_pos } else { a_neg };
            }
            v
        }
        EstimatorKind::Combination => {
            let mut v = analytical_batch_advantage(batch, spec.k)?;
            let (a_pos, a_neg) = combination_advantage(n, n_pos, spec.k)?;
            for (value, &r) in v.values.iter_mut().zip(batch.rewards()) {
                *value = if r { a_pos } else { a_neg };
            }
            v
        }
    };
    if let Some(threshold) = spec.zero_easy_threshold {
        if batch.accuracy() > threshold {
            out.values.iter_mut().for_each(|v| *v = 0.0);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn batch(r: &[u8]) -> OutcomeBatch {
        OutcomeBatch::from_binary(r).unwrap()
    }

    #[test]
    fn pass1_balanced_batch() {
        let v = pass1_advantage(&batch(&[1, 1, 0, 0]));
        assert_eq!(v.values, vec![1.0, 1.0, -1.0, -1.0]);
        assert_eq!(v.diagnostics.group_mean, 0.5);
        assert_eq!(v.diagnostics.group_std, 0.5);
    }

    #[test]
    fn pass1_zero_variance() {
        assert!(pass1_advantage(&batch(&[1, 1, 1])).is_zero());
        assert!(pass1_advantage(&batch(&[0, 0])).is_zero());
    }

    #[test]
    fn pass1_single_positive() {
        let v = pass1_advantage(&batch(&[1, 0, 0, 0]));
        let sd = (0.25f64 * 0.75).sqrt();
        assert!(close(v.values[0], 0.75 / sd, 1e-12));
        assert!(close(v.values[0], 3f64.sqrt(), 1e-12));
        for &x in &v.values[1..] {
            assert!(close(x, -1.0 / 3f64.sqrt(), 1e-12));
        }
    }

    #[test]
    fn empty_and_nonbinary_batches_are_rejected() {
        assert!(OutcomeBatch::new(vec![]).is_err());
        assert!(OutcomeBatch::from_binary(&[0, 2]).is_err());
    }

    #[test]
    fn group_stats_examples() {
        let (m, s) = group_reward_stats(4, 2, 2).unwrap();
        assert!(close(m, 5.0 / 6.0, 1e-15));
        assert!(close(s, 5f64.sqrt() / 6.0, 1e-15));
        assert_eq!(group_reward_stats(9, 0, 3).unwrap(), (1.0, 0.0));
        assert_eq!(group_reward_stats(9, 9, 3).unwrap(), (0.0, 0.0));
        assert!(group_reward_stats(4, 5, 2).is_err());
        assert!(group_reward_stats(4, 2, 5).is_err());
    }

    #[test]
    fn analytical_examples() {
        let (p, n) = analytical_advantage(4, 2, 2).unwrap();
        assert!(close(p, 1.0 / 5f64.sqrt(), 1e-12));
        assert!(close(n, -1.0 / 5f64.sqrt(), 1e-12));

        let (p, n) = analytical_advantage(4, 1, 2).unwrap();
        assert!(close(p, 1.0, 1e-12));
        assert!(close(n, -1.0 / 3.0, 1e-12));

        assert_eq!(analytical_advantage(7, 7, 3).unwrap(), (0.0, 0.0));
        assert_eq!(analytical_advantage(7, 2, 7).unwrap(), (0.0, 0.0));
        assert_eq!(analytical_advantage(7, 0, 3).unwrap(), (0.0, 0.0));
        assert!(analytical_advantage(4, 5, 2).is_err());
        assert!(analytical_advantage(4, 1, 0).is_err());
    }

    #[test]
    fn full_sampling_examples() {
        let v = full_sampling_advantage(&batch(&[1, 0, 0, 0]), 2).unwrap();
        assert_eq!(v.values, vec![1.0, 1.0, -1.0, -1.0]);
        assert!(full_sampling_advantage(&batch(&[0, 0, 0, 0]), 2)
            .unwrap()
            .is_zero());
        let v = full_sampling_advantage(&batch(&[1, 0, 0, 0, 0]), 2).unwrap();
        assert_eq!(v.values, vec![1.0, 1.0, -1.0, -1.0, 0.0]);
        assert!(full_sampling_advantage(&batch(&[1, 0]), 3).is_err());
    }

    #[test]
    fn bootstrap_group_shapes() {
        let g = bootstrap_groups(32, 8, 32, 11).unwrap();
        assert_eq!(g.n_group(), 32);
        for group in g.groups() {
            assert_eq!(group.len(), 8);
            assert!(group.iter().all(|&i| i < 32));
            assert!(group.windows(2).all(|w| w[0] < w[1]));
        }
        let g = bootstrap_groups(5, 5, 1, 3).unwrap();
        assert_eq!(g.groups(), &[vec![0, 1, 2, 3, 4]]);
        assert_eq!(
            bootstrap_groups(10, 3, 4, 9).unwrap(),
            bootstrap_groups(10, 3, 4, 9).unwrap()
        );
        assert!(bootstrap_groups(3, 4, 1, 0).is_err());
    }

    #[test]
    fn bootstrap_membership_frequency() {
        let n_group = 100_000;
        let g = bootstrap_groups(4, 2, n_group, 2024).unwrap();
        let mut counts = [0usize; 4];
        for group in g.groups() {
            for &i in group {
                counts[i] += 1;
            }
        }
        // Binomial(1e5, 1/2): mean 50000, sd ~158
        let sd = (n_group as f64 * 0.25).sqrt();
        for c in counts {
            assert!((c as f64 - 50_000.0).abs() < 3.0 * sd, "{counts:?}");
        }
    }

    #[test]
    fn bootstrap_examples() {
        let b = batch(&[1, 0]);
        let g = GroupAssignment::new(vec![vec![0, 1], vec![0, 1]]).unwrap();
        assert!(bootstrap_advantage(&b, &g).unwrap().is_zero());

        let b = batch(&[1, 0, 0, 0]);
        let g = GroupAssignment::new(vec![vec![0, 1], vec![2, 3]]).unwrap();
        assert_eq!(
            bootstrap_advantage(&b, &g).unwrap().values,
            vec![1.0, 1.0, -1.0, -1.0]
        );

        let g = GroupAssignment::new(vec![vec![0, 1], vec![0, 2], vec![1, 2]]).unwrap();
        let v = bootstrap_advantage(&b, &g).unwrap();
        let s = 2f64.sqrt();
        let want = [s, -s / 2.0, -s / 2.0, 0.0];
        for (got, want) in v.values.iter().zip(want) {
            assert!(close(*got, want, 1e-12), "{:?}", v.values);
        }
        assert!(close(v.diagnostics.group_mean, 2.0 / 3.0, 1e-15));
        assert!(close(
            v.diagnostics.group_std,
            0.471_404_520_791_031_7,
            1e-12
        ));
    }

    #[test]
    fn bootstrap_rejects_out_of_range_index() {
        let b = batch(&[1, 0]);
        let g = GroupAssignment::new(vec![vec![0, 2]]).unwrap();
        assert!(matches!(bootstrap_advantage(&b, &g), Err(Error::Domain(_))));
        assert!(GroupAssignment::new(vec![vec![1, 1]]).is_err());
    }

    #[test]
    fn exceeding_examples() {
        let f1 = exceeding_transform(1.0, 1).unwrap();
        assert!(close(f1, 4.0 / (10.0 * 1.5f64.ln()), 1e-15));
        assert!(close(f1, 0.986_522, 1e-6));
        assert_eq!(exceeding_transform(0.0, 17).unwrap(), 0.0);
        assert!(exceeding_transform(1.0, 0).is_err());
        assert_eq!(exceeding_advantage(32, 0, 8).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn combination_examples() {
        // independent evaluation of both components at N=32, n_pos=16, k=8
        let ratio: f64 = 12_870.0 / 10_518_300.0;
        let mean = 1.0 - ratio;
        let analytical_pos = (1.0 - mean) / (mean * (1.0 - mean)).sqrt();
        let pass1_pos = 1.0;
        let want = 0.5 * analytical_pos + 0.5 * pass1_pos;
        let (a_pos, a_neg) = combination_advantage(32, 16, 8).unwrap();
        assert!(close(a_pos, want, 1e-12));
        assert!(close(a_pos, 0.5175, 1e-3));
        assert!(close(16.0 * a_pos + 16.0 * a_neg, 0.0, 1e-12));
        assert_eq!(combination_advantage(32, 0, 8).unwrap(), (0.0, 0.0));
        assert_eq!(combination_advantage(32, 32, 8).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn estimate_dispatch() {
        let b = batch(&[1, 1, 0, 0]);
        assert_eq!(
            estimate(&b, &EstimatorSpec::pass1()).unwrap().values,
            vec![1.0, 1.0, -1.0, -1.0]
        );

        let spec = EstimatorSpec::new(EstimatorKind::PasskAnalytical, 4);
        assert!(estimate(&b, &spec).unwrap().is_zero());

        let spec = EstimatorSpec::pass1().with_zero_easy_threshold(0.6);
        assert!(estimate(&batch(&[1, 1, 1, 0]), &spec).unwrap().is_zero());
        assert!(!estimate(&batch(&[1, 1, 0, 0]), &spec).unwrap().is_zero());
    }

    #[test]
    fn estimate_validates_spec() {
        let b = batch(&[1, 0, 0]);
        assert!(estimate(&b, &EstimatorSpec::new(EstimatorKind::PasskAnalytical, 1)).is_err());
        assert!(estimate(&b, &EstimatorSpec::new(EstimatorKind::PasskFull, 4)).is_err());
        assert!(estimate(&b, &EstimatorSpec::new(EstimatorKind::Pass1, 0)).is_err());
    }

    #[test]
    fn estimate_bootstrap_is_seeded() {
        let b = OutcomeBatch::from_counts(16, 5).unwrap();
        let spec = EstimatorSpec::new(EstimatorKind::PasskBootstrap, 4).with_seed(77);
        assert_eq!(estimate(&b, &spec).unwrap(), estimate(&b, &spec).unwrap());
    }

    #[test]
    fn estimator_kind_round_trips_through_str() {
        for kind in EstimatorKind::ALL {
            assert_eq!(kind.as_str().parse::<EstimatorKind>().unwrap(), kind);
        }
        assert_eq!(
            "passk".parse::<EstimatorKind>().unwrap(),
            EstimatorKind::PasskAnalytical
        );
    }
}
