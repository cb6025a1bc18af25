//! Training loop: staged estimator schedules, adaptive routing by entropy,
//! optional reward noise, and evaluation timelines.

use std::collections::BTreeMap;

use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::advantage::{estimate, EstimatorKind, EstimatorSpec, OutcomeBatch};
use crate::error::{Error, Result};
use crate::maze::{self, Maze, Move};
use crate::mix_seed;
use crate::policy::{
    clipped_update, rollout_entropy, CategoricalPolicy, Policy, Trajectory, TrajectoryPolicy,
};
use crate::rewards::{
    flip_negative_rewards, negative_diversity, pass_at_k_estimate, VerifiedResponse,
};

const STREAM_TASK: u64 = 1;
const STREAM_BATCH: u64 = 2;
const STREAM_ROLLOUT: u64 = 3;
const STREAM_NOISE: u64 = 4;
const STREAM_GROUPS: u64 = 5;
const STREAM_EVAL: u64 = 6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Environment {
    Bandit,
    Maze,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BanditSettings {
    /// Candidate-answer counts; each problem draws one uniformly.
    #[serde(default = "default_answer_counts")]
    pub answer_counts: Vec<usize>,
    /// Standard deviation of the initial logits.
    #[serde(default = "default_init_logit_scale")]
    pub init_logit_scale: f64,
}

impl Default for BanditSettings {
    fn default() -> Self {
        Self {
            answer_counts: default_answer_counts(),
            init_logit_scale: default_init_logit_scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MazeSettings {
    #[serde(default = "default_maze_sizes")]
    pub sizes: Vec<usize>,
    /// Walk length cap; defaults to twice the longest shortest path.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,
    /// Initial logit of moves into walls or off the grid.
    #[serde(default = "default_wall_logit")]
    pub wall_logit: f64,
}

impl Default for MazeSettings {
    fn default() -> Self {
        Self {
            sizes: default_maze_sizes(),
            horizon: None,
            wall_logit: default_wall_logit(),
        }
    }
}

/// Estimator used by one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawStageEstimator", into = "RawStageEstimator")]
pub enum StageEstimator {
    Fixed(EstimatorSpec),
    /// Per step, the highest-entropy `fraction` of the batch gets Pass@1 and
    /// the rest the analytical Pass@k rule with this `k`.
    Adaptive {
        k: usize,
        fraction: f64,
    },
}

impl StageEstimator {
    pub fn label(&self) -> String {
        match self {
            StageEstimator::Fixed(spec) => spec.kind.to_string(),
            StageEstimator::Adaptive { .. } => "adaptive".to_string(),
        }
    }

    fn max_k(&self) -> usize {
        match self {
            StageEstimator::Fixed(spec) => spec.k,
            StageEstimator::Adaptive { k, .. } => *k,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawStageEstimator {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_group: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    zero_easy_threshold: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fraction: Option<f64>,
}

impl TryFrom<RawStageEstimator> for StageEstimator {
    type Error = Error;

    fn try_from(raw: RawStageEstimator) -> Result<Self> {
        if raw.kind == "adaptive" {
            return Ok(StageEstimator::Adaptive {
                k: raw
                    .k
                    .ok_or_else(|| Error::config("k", "adaptive stages need k"))?,
                fraction: raw.fraction.unwrap_or(0.5),
            });
        }
        if raw.fraction.is_some() {
            return Err(Error::config("fraction", "only valid for adaptive stages"));
        }
        let kind: EstimatorKind = raw.kind.parse()?;
        Ok(StageEstimator::Fixed(EstimatorSpec {
            kind,
            k: raw.k.unwrap_or(1),
            n_group: raw.n_group,
            zero_easy_threshold: raw.zero_easy_threshold,
            rng_seed: 0,
        }))
    }
}

impl From<StageEstimator> for RawStageEstimator {
    fn from(s: StageEstimator) -> Self {
        match s {
            StageEstimator::Fixed(spec) => RawStageEstimator {
                kind: spec.kind.to_string(),
                k: Some(spec.k),
                n_group: spec.n_group,
                zero_easy_threshold: spec.zero_easy_threshold,
                fraction: None,
            },
            StageEstimator::Adaptive { k, fraction } => RawStageEstimator {
                kind: "adaptive".into(),
                k: Some(k),
                n_group: None,
                zero_easy_threshold: None,
                fraction: Some(fraction),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Stage {
    pub estimator: StageEstimator,
    pub steps: usize,
}

impl Stage {
    pub fn new(estimator: EstimatorSpec, steps: usize) -> Self {
        Self {
            estimator: StageEstimator::Fixed(estimator),
            steps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub environment: Environment,
    pub problems: usize,
    #[serde(default)]
    pub bandit: BanditSettings,
    #[serde(default)]
    pub maze: MazeSettings,
    #[serde(default = "default_n_rollout")]
    pub n_rollout: usize,
    /// Problems drawn per step.
    #[serde(default = "default_batch_problems")]
    pub batch_problems: usize,
    /// Problems per gradient step within a batch; `None` means the whole batch.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mini_batch_problems: Option<usize>,
    pub stages: Vec<Stage>,
    #[serde(default = "default_k_eval")]
    pub k_eval: usize,
    #[serde(default = "default_eval_samples")]
    pub eval_samples: usize,
    #[serde(default = "default_eval_every")]
    pub eval_every: usize,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    /// Step size of the shared log inverse temperature; 0 freezes it.
    #[serde(default = "default_sharpness_learning_rate")]
    pub sharpness_learning_rate: f64,
    #[serde(default)]
    pub entropy_coeff: f64,
    #[serde(default)]
    pub noise_proportion: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_answer_counts() -> Vec<usize> {
    vec![8, 64, 512]
}
fn default_init_logit_scale() -> f64 {
    2.0
}
fn default_maze_sizes() -> Vec<usize> {
    vec![7, 9]
}
fn default_wall_logit() -> f64 {
    -3.0
}
fn default_n_rollout() -> usize {
    32
}
fn default_batch_problems() -> usize {
    64
}
fn default_k_eval() -> usize {
    8
}
fn default_eval_samples() -> usize {
    32
}
fn default_eval_every() -> usize {
    50
}
pub const DEFAULT_LEARNING_RATE: f64 = 32.0;
pub const DEFAULT_SHARPNESS_LEARNING_RATE: f64 = 0.1;
fn default_learning_rate() -> f64 {
    DEFAULT_LEARNING_RATE
}
fn default_sharpness_learning_rate() -> f64 {
    DEFAULT_SHARPNESS_LEARNING_RATE
}

impl TrainConfig {
    /// Bandit config with default settings and a single stage.
    pub fn bandit(problems: usize, stages: Vec<Stage>, seed: u64) -> Self {
        Self {
            environment: Environment::Bandit,
            problems,
            bandit: BanditSettings::default(),
            maze: MazeSettings::default(),
            n_rollout: default_n_rollout(),
            batch_problems: default_batch_problems(),
            mini_batch_problems: None,
            stages,
            k_eval: default_k_eval(),
            eval_samples: default_eval_samples(),
            eval_every: default_eval_every(),
            learning_rate: DEFAULT_LEARNING_RATE,
            sharpness_learning_rate: DEFAULT_SHARPNESS_LEARNING_RATE,
            entropy_coeff: 0.0,
            noise_proportion: 0.0,
            seed,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrainConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn total_steps(&self) -> usize {
        self.stages.iter().map(|s| s.steps).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.problems == 0 {
            return Err(Error::config("problems", "must be at least 1"));
        }
        if self.stages.is_empty() {
            return Err(Error::config("stages", "need at least one stage"));
        }
        if self.n_rollout == 0 {
            return Err(Error::config("n_rollout", "must be at least 1"));
        }
        if self.batch_problems == 0 {
            return Err(Error::config("batch_problems", "must be at least 1"));
        }
        if self.mini_batch_problems == Some(0) {
            return Err(Error::config("mini_batch_problems", "must be at least 1"));
        }
        if self.k_eval == 0 {
            return Err(Error::config("k_eval", "must be at least 1"));
        }
        if self.k_eval > self.eval_samples {
            return Err(Error::config("k_eval", "must not exceed eval_samples"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(self.sharpness_learning_rate >= 0.0 && self.sharpness_learning_rate.is_finite()) {
            return Err(Error::config(
                "sharpness_learning_rate",
                "must be non-negative",
            ));
        }
        if !(self.entropy_coeff >= 0.0 && self.entropy_coeff.is_finite()) {
            return Err(Error::config("entropy_coeff", "must be non-negative"));
        }
        if !(0.0..=1.0).contains(&self.noise_proportion) {
            return Err(Error::config("noise_proportion", "must lie in [0, 1]"));
        }
        for stage in &self.stages {
            match &stage.estimator {
                StageEstimator::Fixed(spec) => spec.validate()?,
                StageEstimator::Adaptive { k, fraction } => {
                    EstimatorSpec::new(EstimatorKind::PasskAnalytical, *k).validate()?;
                    if !(*fraction > 0.0 && *fraction < 1.0) {
                        return Err(Error::config("fraction", "must lie in (0, 1)"));
                    }
                }
            }
            if stage.estimator.max_k() > self.n_rollout {
                return Err(Error::config(
                    "n_rollout",
                    "must be at least every stage's k",
                ));
            }
        }
        match self.environment {
            Environment::Bandit => {
                if self.bandit.answer_counts.is_empty() || self.bandit.answer_counts.contains(&0) {
                    return Err(Error::config(
                        "bandit.answer_counts",
                        "need positive counts",
                    ));
                }
                if !(self.bandit.init_logit_scale >= 0.0
                    && self.bandit.init_logit_scale.is_finite())
                {
                    return Err(Error::config(
                        "bandit.init_logit_scale",
                        "must be non-negative",
                    ));
                }
            }
            Environment::Maze => {
                if self.maze.sizes.is_empty() {
                    return Err(Error::config("maze.sizes", "need at least one size"));
                }
                if self.maze.horizon == Some(0) {
                    return Err(Error::config("maze.horizon", "must be at least 1"));
                }
                if !self.maze.wall_logit.is_finite() {
                    return Err(Error::config("maze.wall_logit", "must be finite"));
                }
            }
        }
        Ok(())
    }
}

/// One row of a timeline. Evaluation columns are only filled on evaluation steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub stage: usize,
    pub estimator: String,
    pub train_reward_mean: Option<f64>,
    pub mean_entropy: Option<f64>,
    pub negative_diversity: Option<f64>,
    pub pass1_eval: Option<f64>,
    pub passk_eval: Option<f64>,
    pub policy_entropy: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTimeline {
    pub label: String,
    pub k_eval: usize,
    pub records: Vec<StepRecord>,
}

impl MetricsTimeline {
    pub fn evaluations(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter(|r| r.pass1_eval.is_some())
    }

    pub fn final_evaluation(&self) -> Option<&StepRecord> {
        self.evaluations().last()
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(
        label: impl Into<String>,
        k_eval: usize,
        reader: R,
    ) -> Result<Self> {
        let mut r = csv::Reader::from_reader(reader);
        let records = r
            .deserialize()
            .collect::<std::result::Result<Vec<StepRecord>, _>>()?;
        Ok(Self {
            label: label.into(),
            k_eval,
            records,
        })
    }
}

/// A problem source the trainer can sample, verify and evaluate.
pub trait Task: Sync {
    type P: Policy + Sync;

    fn n_problems(&self) -> usize;

    fn rollouts(
        &self,
        policy: &Self::P,
        problem: usize,
        n_rollout: usize,
        seed: u64,
    ) -> Result<Vec<Trajectory<<Self::P as Policy>::State>>>;

    fn verify(&self, problem: usize, rollout: &Trajectory<<Self::P as Policy>::State>) -> bool;

    fn policy_entropy(&self, policy: &Self::P, problem: usize) -> Result<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditProblem {
    pub correct: usize,
    pub initial_logits: Vec<f64>,
}

/// Problems with `M` candidate answers of which exactly one is correct.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditTask {
    pub problems: Vec<BanditProblem>,
}

impl BanditTask {
    pub fn generate(n_problems: usize, settings: &BanditSettings, seed: u64) -> Result<Self> {
        if settings.answer_counts.is_empty() || settings.answer_counts.contains(&0) {
            return Err(Error::config(
                "bandit.answer_counts",
                "need positive counts",
            ));
        }
        let normal = Normal::new(0.0, settings.init_logit_scale)
            .map_err(|e| Error::config("bandit.init_logit_scale", e.to_string()))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let problems = (0..n_problems)
            .map(|_| {
                let m = settings.answer_counts
                    [rand::Rng::random_range(&mut rng, 0..settings.answer_counts.len())];
                let correct = rand::Rng::random_range(&mut rng, 0..m);
                let initial_logits = (0..m).map(|_| normal.sample(&mut rng)).collect();
                BanditProblem {
                    correct,
                    initial_logits,
                }
            })
            .collect();
        Ok(Self { problems })
    }

    pub fn initial_policy(
        &self,
        learning_rate: f64,
        sharpness_learning_rate: f64,
    ) -> Result<CategoricalPolicy> {
        let mut policy = CategoricalPolicy::new(learning_rate, sharpness_learning_rate)?;
        for (id, p) in self.problems.iter().enumerate() {
            policy.insert_problem(id as u32, p.initial_logits.clone())?;
        }
        Ok(policy)
    }
}

impl Task for BanditTask {
    type P = CategoricalPolicy;

    fn n_problems(&self) -> usize {
        self.problems.len()
    }

    fn rollouts(
        &self,
        policy: &CategoricalPolicy,
        problem: usize,
        n: usize,
        seed: u64,
    ) -> Result<Vec<Trajectory<u32>>> {
        policy.sample_rollouts(problem as u32, n, seed)
    }

    fn verify(&self, problem: usize, rollout: &Trajectory<u32>) -> bool {
        rollout.decisions.len() == 1
            && rollout.decisions[0].action == self.problems[problem].correct
    }

    fn policy_entropy(&self, policy: &CategoricalPolicy, problem: usize) -> Result<f64> {
        policy.entropy(problem as u32)
    }
}

/// Walk from `S` to `E`; a walk passes when it ends on `E`.
#[derive(Debug, Clone, PartialEq)]
pub struct MazeTask {
    pub mazes: Vec<Maze>,
}

impl MazeTask {
    /// Generates `n_problems` distinct mazes cycling through `sizes`.
    pub fn generate(n_problems: usize, sizes: &[usize], seed: u64) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::config("maze.sizes", "need at least one size"));
        }
        let mut mazes = Vec::with_capacity(n_problems);
        let mut attempt = 0u64;
        let mut seen = std::collections::HashSet::new();
        while mazes.len() < n_problems {
            let size = sizes[mazes.len() % sizes.len()];
            let m = maze::generate(size, mix_seed(seed, &[attempt]))?;
            attempt += 1;
            if seen.insert(m.serialize()) {
                mazes.push(m);
            }
            if attempt > 1000 * (n_problems as u64 + 10) {
                return Err(Error::domain("could not generate enough distinct mazes"));
            }
        }
        Ok(Self { mazes })
    }

    /// Twice the longest shortest path, so every maze is solvable within it.
    pub fn default_horizon(&self) -> usize {
        self.mazes
            .iter()
            .filter_map(|m| maze::bfs_solve(m).map(|s| s.len()))
            .max()
            .unwrap_or(1)
            .max(1)
            * 2
    }

    pub fn initial_policy(
        &self,
        settings: &MazeSettings,
        learning_rate: f64,
        sharpness_learning_rate: f64,
    ) -> Result<TrajectoryPolicy> {
        let horizon = settings.horizon.unwrap_or_else(|| self.default_horizon());
        let mut policy = TrajectoryPolicy::new(horizon, learning_rate, sharpness_learning_rate)?;
        for (id, m) in self.mazes.iter().enumerate() {
            policy.add_maze(id as u32, m, settings.wall_logit)?;
        }
        Ok(policy)
    }
}

impl Task for MazeTask {
    type P = TrajectoryPolicy;

    fn n_problems(&self) -> usize {
        self.mazes.len()
    }

    fn rollouts(
        &self,
        policy: &TrajectoryPolicy,
        problem: usize,
        n: usize,
        seed: u64,
    ) -> Result<Vec<Trajectory<crate::policy::CellKey>>> {
        policy.sample_rollouts(problem as u32, &self.mazes[problem], n, seed)
    }

    fn verify(&self, problem: usize, rollout: &Trajectory<crate::policy::CellKey>) -> bool {
        let moves = rollout
            .actions()
            .into_iter()
            .filter_map(Move::from_index)
            .collect();
        maze::verify(&self.mazes[problem], &maze::MoveSequence(moves))
    }

    fn policy_entropy(&self, policy: &TrajectoryPolicy, problem: usize) -> Result<f64> {
        policy.entropy(problem as u32, &self.mazes[problem])
    }
}

/// Splits a batch by rollout entropy: the top `fraction` (ties to smaller
/// ids) get Pass@1, the rest analytical Pass@k with `k`.
pub fn adaptive_stage(
    batch_entropies: &BTreeMap<usize, f64>,
    fraction: f64,
    k: usize,
) -> Result<BTreeMap<usize, EstimatorSpec>> {
    if batch_entropies.is_empty() {
        return Err(Error::domain("adaptive routing needs at least one problem"));
    }
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::domain(format!("fraction {fraction} outside (0, 1)")));
    }
    let mut ranked: Vec<(usize, f64)> = batch_entropies.iter().map(|(&p, &e)| (p, e)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let n_high = (fraction * ranked.len() as f64).round() as usize;
    Ok(ranked
        .into_iter()
        .enumerate()
        .map(|(rank, (p, _))| {
            let spec = if rank < n_high {
                EstimatorSpec::pass1()
            } else {
                EstimatorSpec::new(EstimatorKind::PasskAnalytical, k)
            };
            (p, spec)
        })
        .collect())
}

/// `(pass1, passk)` from per-problem evaluation outcomes.
pub fn summarize_eval(outcomes: &[OutcomeBatch], k: usize) -> Result<(f64, f64)> {
    if outcomes.is_empty() {
        return Err(Error::domain("no evaluation outcomes"));
    }
    let mut pass1 = 0.0;
    let mut passk = 0.0;
    for o in outcomes {
        pass1 += o.accuracy();
        passk += pass_at_k_estimate(o.n_rollout(), o.n_pos(), k)?;
    }
    let n = outcomes.len() as f64;
    Ok((pass1 / n, passk / n))
}

/// Samples `eval_samples` responses per problem and scores Pass@1 and Pass@k.
pub fn evaluate<T: Task>(
    task: &T,
    policy: &T::P,
    problems: &[usize],
    eval_samples: usize,
    k: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if k == 0 || k > eval_samples {
        return Err(Error::domain(format!(
            "k = {k} must lie in [1, eval_samples = {eval_samples}]"
        )));
    }
    let outcomes = problems
        .par_iter()
        .map(|&p| {
            let rollouts = task.rollouts(policy, p, eval_samples, mix_seed(seed, &[p as u64]))?;
            OutcomeBatch::new(rollouts.iter().map(|r| task.verify(p, r)).collect())
        })
        .collect::<Result<Vec<_>>>()?;
    summarize_eval(&outcomes, k)
}

/// Mean policy entropy over `problems`.
pub fn mean_policy_entropy<T: Task>(task: &T, policy: &T::P, problems: &[usize]) -> Result<f64> {
    if problems.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for &p in problems {
        total += task.policy_entropy(policy, p)?;
    }
    Ok(total / problems.len() as f64)
}

/// Result of a run: the timeline and a checkpoint of the final policy.
#[derive(Debug, Clone)]
pub struct TrainRun {
    pub timeline: MetricsTimeline,
    pub checkpoint: String,
}

pub fn train(config: &TrainConfig) -> Result<MetricsTimeline> {
    Ok(train_run(config)?.timeline)
}

/// Builds the task and initial policy from `config` and trains.
pub fn train_run(config: &TrainConfig) -> Result<TrainRun> {
    config.validate()?;
    let task_seed = mix_seed(config.seed, &[STREAM_TASK]);
    match config.environment {
        Environment::Bandit => {
            let task = BanditTask::generate(config.problems, &config.bandit, task_seed)?;
            let mut policy =
                task.initial_policy(config.learning_rate, config.sharpness_learning_rate)?;
            let timeline = train_task(&task, &mut policy, config)?;
            Ok(TrainRun {
                timeline,
                checkpoint: policy.table().to_checkpoint(),
            })
        }
        Environment::Maze => {
            let task = MazeTask::generate(config.problems, &config.maze.sizes, task_seed)?;
            let mut policy = task.initial_policy(
                &config.maze,
                config.learning_rate,
                config.sharpness_learning_rate,
            )?;
            let timeline = train_task(&task, &mut policy, config)?;
            Ok(TrainRun {
                timeline,
                checkpoint: policy.table().to_checkpoint(),
            })
        }
    }
}

struct ProblemStep<S> {
    problem: usize,
    rollouts: Vec<Trajectory<S>>,
    observed: OutcomeBatch,
    accuracy: f64,
    entropy: f64,
    diversity: f64,
}

/// Runs every stage of `config` on `policy`.
pub fn train_task<T: Task>(
    task: &T,
    policy: &mut T::P,
    config: &TrainConfig,
) -> Result<MetricsTimeline> {
    config.validate()?;
    let n_problems = task.n_problems();
    if n_problems == 0 {
        return Err(Error::config("problems", "task has no problems"));
    }
    let all_problems: Vec<usize> = (0..n_problems).collect();
    let label = config
        .stages
        .iter()
        .map(|s| s.estimator.label())
        .collect::<Vec<_>>()
        .join("+");
    let mut timeline = MetricsTimeline {
        label,
        k_eval: config.k_eval,
        records: Vec::new(),
    };
    let total = config.total_steps();

    let eval_record = |policy: &T::P, step: usize, record: &mut StepRecord| -> Result<()> {
        let (pass1, passk) = evaluate(
            task,
            policy,
            &all_problems,
            config.eval_samples,
            config.k_eval,
            mix_seed(config.seed, &[STREAM_EVAL, step as u64]),
        )?;
        record.pass1_eval = Some(pass1);
        record.passk_eval = Some(passk);
        record.policy_entropy = Some(mean_policy_entropy(task, policy, &all_problems)?);
        Ok(())
    };

    let mut initial = StepRecord {
        step: 0,
        stage: 0,
        estimator: "init".into(),
        train_reward_mean: None,
        mean_entropy: None,
        negative_diversity: None,
        pass1_eval: None,
        passk_eval: None,
        policy_entropy: None,
    };
    eval_record(policy, 0, &mut initial)?;
    timeline.records.push(initial);

    let batch_size = config.batch_problems.min(n_problems);
    let mini = config
        .mini_batch_problems
        .unwrap_or(batch_size)
        .min(batch_size);
    let mut step = 0usize;
    for (stage_idx, stage) in config.stages.iter().enumerate() {
        for _ in 0..stage.steps {
            step += 1;
            let mut batch_rng =
                ChaCha8Rng::seed_from_u64(mix_seed(config.seed, &[STREAM_BATCH, step as u64]));
            let mut batch = sample_indices(&mut batch_rng, n_problems, batch_size).into_vec();
            batch.sort_unstable();

            let steps: Vec<ProblemStep<<T::P as Policy>::State>> = batch
                .par_iter()
                .map(|&p| {
                    let ids = [step as u64, p as u64];
                    let rollouts = task.rollouts(
                        policy,
                        p,
                        config.n_rollout,
                        mix_seed(config.seed, &[STREAM_ROLLOUT, ids[0], ids[1]]),
                    )?;
                    let verified: Vec<VerifiedResponse<Vec<usize>>> = rollouts
                        .iter()
                        .map(|r| VerifiedResponse::new(r.actions(), task.verify(p, r)))
                        .collect();
                    let truth = OutcomeBatch::new(verified.iter().map(|v| v.reward).collect())?;
                    let observed = if config.noise_proportion > 0.0 {
                        flip_negative_rewards(
                            &truth,
                            config.noise_proportion,
                            mix_seed(config.seed, &[STREAM_NOISE, ids[0], ids[1]]),
                        )?
                    } else {
                        truth.clone()
                    };
                    Ok(ProblemStep {
                        problem: p,
                        entropy: rollout_entropy(policy.table(), &rollouts)?,
                        rollouts,
                        observed,
                        accuracy: truth.accuracy(),
                        diversity: negative_diversity(&verified),
                    })
                })
                .collect::<Result<Vec<_>>>()?;

            let specs: Vec<EstimatorSpec> = match &stage.estimator {
                StageEstimator::Fixed(spec) => steps.iter().map(|_| spec.clone()).collect(),
                StageEstimator::Adaptive { k, fraction } => {
                    let entropies = steps.iter().map(|s| (s.problem, s.entropy)).collect();
                    let routed = adaptive_stage(&entropies, *fraction, *k)?;
                    steps.iter().map(|s| routed[&s.problem].clone()).collect()
                }
            };

            let mut update_rollouts = Vec::new();
            let mut update_advantages = Vec::new();
            for (s, spec) in steps.iter().zip(specs) {
                let spec = spec.with_seed(mix_seed(
                    config.seed,
                    &[STREAM_GROUPS, step as u64, s.problem as u64],
                ));
                let adv = estimate(&s.observed, &spec)?;
                // degenerate batches carry no signal and are skipped
                if adv.is_zero() {
                    continue;
                }
                update_rollouts.push(&s.rollouts);
                update_advantages.push(adv.values);
            }
            for (chunk_r, chunk_a) in update_rollouts
                .chunks(mini)
                .zip(update_advantages.chunks(mini))
            {
                let rollouts: Vec<Trajectory<_>> =
                    chunk_r.iter().flat_map(|r| r.iter().cloned()).collect();
                let advantages: Vec<f64> = chunk_a.iter().flatten().copied().collect();
                clipped_update(policy, &rollouts, &advantages, config.entropy_coeff)?;
            }

            let n = steps.len() as f64;
            let mut record = StepRecord {
                step,
                stage: stage_idx,
                estimator: stage.estimator.label(),
                train_reward_mean: Some(steps.iter().map(|s| s.accuracy).sum::<f64>() / n),
                mean_entropy: Some(steps.iter().map(|s| s.entropy).sum::<f64>() / n),
                negative_diversity: Some(steps.iter().map(|s| s.diversity).sum::<f64>() / n),
                pass1_eval: None,
                passk_eval: None,
                policy_entropy: None,
            };
            if step.is_multiple_of(config.eval_every) || step == total {
                eval_record(policy, step, &mut record)?;
            }
            timeline.records.push(record);
        }
    }
    Ok(timeline)
}
