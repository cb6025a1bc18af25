//! Tabular softmax policies and the clipped token-level surrogate update.
//!
//! A policy is a table of logit vectors, one per decision state, plus one
//! shared log inverse temperature (`log_sharpness`). Action probabilities at a
//! state are `softmax(exp(log_sharpness) * logits)`. The shared sharpness is
//! the only parameter coupling different problems, which mirrors how a single
//! set of weights sharpens or flattens every answer distribution at once.
//!
//! The update maximises the clip-higher surrogate averaged over every decision
//! point in the batch:
//!
//! ```text
//! J = 1/D * sum_j [ min(r_j A_j, clip(r_j, 1 - 0.2, 1 + 0.28) A_j) + c * H(pi(. | s_j)) ]
//! ```
//!
//! with `r_j = pi(a_j | s_j) / pi_old(a_j | s_j)` and `c` the entropy coefficient.

use std::collections::BTreeMap;
use std::fmt::{self, Display};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::maze::{Maze, Move};

/// Lower clip offset: ratios below `1 - CLIP_LOW` stop contributing for negative advantages.
pub const CLIP_LOW: f64 = 0.2;
/// Upper clip offset: ratios above `1 + CLIP_HIGH` stop contributing for positive advantages.
pub const CLIP_HIGH: f64 = 0.28;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClipRange {
    pub low: f64,
    pub high: f64,
}

impl Default for ClipRange {
    fn default() -> Self {
        Self {
            low: CLIP_LOW,
            high: CLIP_HIGH,
        }
    }
}

impl ClipRange {
    pub fn clip(&self, ratio: f64) -> f64 {
        ratio.clamp(1.0 - self.low, 1.0 + self.high)
    }

    /// Whether the unclipped branch is the one selected by the `min`, i.e.
    /// whether the term still has a gradient.
    fn is_active(&self, ratio: f64, advantage: f64) -> bool {
        if advantage > 0.0 {
            ratio <= 1.0 + self.high
        } else if advantage < 0.0 {
            ratio >= 1.0 - self.low
        } else {
            false
        }
    }
}

/// `min(r A, clip(r) A)` for one decision point.
pub fn clipped_term(ratio: f64, advantage: f64, clip: ClipRange) -> f64 {
    (ratio * advantage).min(clip.clip(ratio) * advantage)
}

/// Identifier of a bandit problem.
pub type ProblemId = u32;

/// A decision state of the maze policy: one cell of one maze.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub maze: u32,
    pub row: u16,
    pub col: u16,
}

impl Display for CellKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.maze, self.row, self.col)
    }
}

impl FromStr for CellKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.split(':').collect();
        let bad = || Error::Parse(format!("bad cell key `{s}`"));
        if parts.len() != 3 {
            return Err(bad());
        }
        Ok(CellKey {
            maze: parts[0].parse().map_err(|_| bad())?,
            row: parts[1].parse().map_err(|_| bad())?,
            col: parts[2].parse().map_err(|_| bad())?,
        })
    }
}

/// Keys usable as table states and in checkpoints.
pub trait StateKey: Ord + Clone + Display + FromStr + Send + Sync {}

impl<T: Ord + Clone + Display + FromStr + Send + Sync> StateKey for T {}

/// One sampled action with the log-probability it had when sampled.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision<S> {
    pub state: S,
    pub action: usize,
    pub old_logprob: f64,
}

/// A full sampled response: one decision for a bandit answer, many for a maze walk.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<S> {
    pub decisions: Vec<Decision<S>>,
}

impl<S> Trajectory<S> {
    pub fn actions(&self) -> Vec<usize> {
        self.decisions.iter().map(|d| d.action).collect()
    }

    pub fn len(&self) -> usize {
        self.decisions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.decisions.is_empty()
    }
}

fn softmax_scaled(logits: &[f64], scale: f64) -> Vec<f64> {
    let max = logits
        .iter()
        .map(|&l| l * scale)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut out: Vec<f64> = logits.iter().map(|&l| (l * scale - max).exp()).collect();
    let total: f64 = out.iter().sum();
    out.iter_mut().for_each(|p| *p /= total);
    out
}

fn entropy_of(probs: &[f64]) -> f64 {
    -probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| p * p.ln())
        .sum::<f64>()
}

/// Draws an index from `probs` using one uniform draw.
fn sample_index(probs: &[f64], rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, &p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the accumulated mass; take the last non-zero entry
    probs
        .iter()
        .rposition(|&p| p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Logit vectors per state plus the shared log inverse temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct SoftmaxTable<S: Ord> {
    logits: BTreeMap<S, Vec<f64>>,
    log_sharpness: f64,
}

impl<S: StateKey> Default for SoftmaxTable<S> {
    fn default() -> Self {
        Self::new()
    }
}

/// Gradient of the surrogate with respect to every table parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct TableGradient<S: Ord> {
    pub logits: BTreeMap<S, Vec<f64>>,
    pub log_sharpness: f64,
}

impl<S: StateKey> SoftmaxTable<S> {
    pub fn new() -> Self {
        Self {
            logits: BTreeMap::new(),
            log_sharpness: 0.0,
        }
    }

    pub fn insert(&mut self, state: S, logits: Vec<f64>) -> Result<()> {
        if logits.is_empty() {
            return Err(Error::domain(format!("state {state} has no actions")));
        }
        if logits.iter().any(|l| !l.is_finite()) {
            return Err(Error::domain(format!(
                "state {state} has a non-finite logit"
            )));
        }
        self.logits.insert(state, logits);
        Ok(())
    }

    pub fn contains(&self, state: &S) -> bool {
        self.logits.contains_key(state)
    }

    pub fn logits(&self, state: &S) -> Result<&[f64]> {
        self.logits
            .get(state)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::domain(format!("unknown state {state}")))
    }

    pub fn states(&self) -> impl Iterator<Item = &S> {
        self.logits.keys()
    }

    pub fn len(&self) -> usize {
        self.logits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.logits.is_empty()
    }

    pub fn log_sharpness(&self) -> f64 {
        self.log_sharpness
    }

    pub fn set_log_sharpness(&mut self, value: f64) {
        self.log_sharpness = value;
    }

    pub fn sharpness(&self) -> f64 {
        self.log_sharpness.exp()
    }

    pub fn probs(&self, state: &S) -> Result<Vec<f64>> {
        Ok(softmax_scaled(self.logits(state)?, self.sharpness()))
    }

    pub fn log_prob(&self, state: &S, action: usize) -> Result<f64> {
        let probs = self.probs(state)?;
        probs
            .get(action)
            .map(|p| p.ln())
            .ok_or_else(|| Error::domain(format!("action {action} out of range at {state}")))
    }

    /// Shannon entropy (nats) of the action distribution at `state`.
    pub fn entropy(&self, state: &S) -> Result<f64> {
        Ok(entropy_of(&self.probs(state)?))
    }

    /// Samples one action and returns it with its log-probability.
    pub fn sample(&self, state: &S, rng: &mut impl Rng) -> Result<Decision<S>> {
        let probs = self.probs(state)?;
        let action = sample_index(&probs, rng);
        Ok(Decision {
            state: state.clone(),
            action,
            old_logprob: probs[action].ln(),
        })
    }

    /// Surrogate objective `J` over `(decision, advantage)` pairs.
    pub fn surrogate(
        &self,
        points: &[(&Decision<S>, f64)],
        entropy_coeff: f64,
        clip: ClipRange,
    ) -> Result<f64> {
        Ok(self
            .surrogate_with_gradient(points, entropy_coeff, clip)?
            .objective)
    }

    /// Analytic gradient of [`SoftmaxTable::surrogate`].
    pub fn surrogate_gradient(
        &self,
        points: &[(&Decision<S>, f64)],
        entropy_coeff: f64,
        clip: ClipRange,
    ) -> Result<TableGradient<S>> {
        Ok(self
            .surrogate_with_gradient(points, entropy_coeff, clip)?
            .gradient)
    }

    /// Objective, gradient and clip statistics in one pass, computing each
    /// state's distribution once.
    pub fn surrogate_with_gradient(
        &self,
        points: &[(&Decision<S>, f64)],
        entropy_coeff: f64,
        clip: ClipRange,
    ) -> Result<SurrogateEval<S>> {
        let mut eval = SurrogateEval {
            objective: 0.0,
            gradient: TableGradient {
                logits: BTreeMap::new(),
                log_sharpness: 0.0,
            },
            clipped: 0,
        };
        if points.is_empty() {
            return Ok(eval);
        }
        let norm = 1.0 / points.len() as f64;
        let beta = self.sharpness();

        let mut by_state: BTreeMap<&S, Vec<(usize, f64, f64)>> = BTreeMap::new();
        for (d, adv) in points {
            by_state
                .entry(&d.state)
                .or_default()
                .push((d.action, d.old_logprob, *adv));
        }

        for (state, items) in by_state {
            let logits = self.logits(state)?;
            let probs = softmax_scaled(logits, beta);
            let m = probs.len();
            // gradient with respect to the scaled logits z = beta * theta
            let mut gz = vec![0.0; m];
            let mut weight_sum = 0.0;
            for &(action, old_logprob, adv) in &items {
                if action >= m {
                    return Err(Error::domain(format!(
                        "action {action} out of range at {state}"
                    )));
                }
                let ratio = (probs[action].ln() - old_logprob).exp();
                eval.objective += clipped_term(ratio, adv, clip);
                if clip.is_active(ratio, adv) {
                    let w = adv * ratio;
                    gz[action] += w;
                    weight_sum += w;
                } else if adv != 0.0 {
                    eval.clipped += 1;
                }
            }
            for (g, &p) in gz.iter_mut().zip(&probs) {
                *g -= weight_sum * p;
            }
            if entropy_coeff != 0.0 {
                let h = entropy_of(&probs);
                let count = items.len() as f64;
                eval.objective += entropy_coeff * count * h;
                for (g, &p) in gz.iter_mut().zip(&probs) {
                    if p > 0.0 {
                        *g -= entropy_coeff * count * p * (p.ln() + h);
                    }
                }
            }
            let mut dtheta = Vec::with_capacity(m);
            let mut dtau = 0.0;
            for (g, &l) in gz.iter().zip(logits) {
                dtheta.push(g * beta * norm);
                dtau += g * beta * l;
            }
            eval.gradient.log_sharpness += dtau * norm;
            eval.gradient.logits.insert(state.clone(), dtheta);
        }
        eval.objective *= norm;
        Ok(eval)
    }

    /// Gradient-ascent step.
    pub fn apply(
        &mut self,
        grad: &TableGradient<S>,
        learning_rate: f64,
        sharpness_learning_rate: f64,
    ) {
        for (state, g) in &grad.logits {
            if let Some(logits) = self.logits.get_mut(state) {
                for (l, d) in logits.iter_mut().zip(g) {
                    *l += learning_rate * d;
                }
            }
        }
        self.log_sharpness += sharpness_learning_rate * grad.log_sharpness;
    }

    /// Text checkpoint: a `log_sharpness` line then `<state> <logits...>` lines.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::from("# passk policy checkpoint v1\n");
        out.push_str(&format!("log_sharpness {}\n", self.log_sharpness));
        for (state, logits) in &self.logits {
            out.push_str(&state.to_string());
            for l in logits {
                out.push(' ');
                out.push_str(&l.to_string());
            }
            out.push('\n');
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut table = Self::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or_default();
            let bad = |what: &str| Error::Parse(format!("checkpoint line {}: {what}", lineno + 1));
            let values = parts
                .map(|v| v.parse::<f64>().map_err(|_| bad("bad number")))
                .collect::<Result<Vec<_>>>()?;
            if key == "log_sharpness" {
                table.log_sharpness = *values.first().ok_or_else(|| bad("missing value"))?;
                continue;
            }
            let state = key.parse::<S>().map_err(|_| bad("bad state key"))?;
            table.insert(state, values)?;
        }
        Ok(table)
    }
}

/// Result of [`SoftmaxTable::surrogate_with_gradient`].
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateEval<S: Ord> {
    pub objective: f64,
    pub gradient: TableGradient<S>,
    /// Decision points with non-zero advantage whose clipped branch is selected.
    pub clipped: usize,
}

/// Anything trainable by [`clipped_update`].
pub trait Policy {
    type State: StateKey;

    fn table(&self) -> &SoftmaxTable<Self::State>;
    fn table_mut(&mut self) -> &mut SoftmaxTable<Self::State>;
    fn learning_rate(&self) -> f64;
    fn sharpness_learning_rate(&self) -> f64;
}

/// Statistics of one update call.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub decision_points: usize,
    pub objective: f64,
    pub clipped_fraction: f64,
}

/// One gradient-ascent step of the clipped surrogate on `rollouts`, each of
/// whose decisions carries the advantage of its rollout.
pub fn clipped_update<P: Policy>(
    policy: &mut P,
    rollouts: &[Trajectory<P::State>],
    advantages: &[f64],
    entropy_coeff: f64,
) -> Result<UpdateStats> {
    if rollouts.len() != advantages.len() {
        return Err(Error::domain(format!(
            "{} rollouts but {} advantages",
            rollouts.len(),
            advantages.len()
        )));
    }
    if entropy_coeff < 0.0 || !entropy_coeff.is_finite() {
        return Err(Error::domain(
            "entropy coefficient must be finite and non-negative",
        ));
    }
    let points: Vec<(&Decision<P::State>, f64)> = rollouts
        .iter()
        .zip(advantages)
        .flat_map(|(t, &a)| t.decisions.iter().map(move |d| (d, a)))
        .collect();
    let eval =
        policy
            .table()
            .surrogate_with_gradient(&points, entropy_coeff, ClipRange::default())?;
    let (lr, slr) = (policy.learning_rate(), policy.sharpness_learning_rate());
    policy.table_mut().apply(&eval.gradient, lr, slr);
    Ok(UpdateStats {
        decision_points: points.len(),
        objective: eval.objective,
        clipped_fraction: if points.is_empty() {
            0.0
        } else {
            eval.clipped as f64 / points.len() as f64
        },
    })
}

/// Answer-choice policy for the bandit: one logit vector per problem.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoricalPolicy {
    table: SoftmaxTable<ProblemId>,
    pub learning_rate: f64,
    pub sharpness_learning_rate: f64,
}

impl CategoricalPolicy {
    pub fn new(learning_rate: f64, sharpness_learning_rate: f64) -> Result<Self> {
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(sharpness_learning_rate >= 0.0 && sharpness_learning_rate.is_finite()) {
            return Err(Error::config(
                "sharpness_learning_rate",
                "must be non-negative",
            ));
        }
        Ok(Self {
            table: SoftmaxTable::new(),
            learning_rate,
            sharpness_learning_rate,
        })
    }

    pub fn with_table(
        table: SoftmaxTable<ProblemId>,
        learning_rate: f64,
        sharpness_learning_rate: f64,
    ) -> Result<Self> {
        let mut p = Self::new(learning_rate, sharpness_learning_rate)?;
        p.table = table;
        Ok(p)
    }

    pub fn insert_problem(&mut self, problem: ProblemId, logits: Vec<f64>) -> Result<()> {
        self.table.insert(problem, logits)
    }

    pub fn probs(&self, problem: ProblemId) -> Result<Vec<f64>> {
        self.table.probs(&problem)
    }

    /// `n_rollout` independent answers, deterministic given `seed`.
    pub fn sample_rollouts(
        &self,
        problem: ProblemId,
        n_rollout: usize,
        seed: u64,
    ) -> Result<Vec<Trajectory<ProblemId>>> {
        let probs = self.table.probs(&problem)?;
        let logp: Vec<f64> = probs.iter().map(|p| p.ln()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Ok((0..n_rollout)
            .map(|_| {
                let action = sample_index(&probs, &mut rng);
                Trajectory {
                    decisions: vec![Decision {
                        state: problem,
                        action,
                        old_logprob: logp[action],
                    }],
                }
            })
            .collect())
    }

    pub fn entropy(&self, problem: ProblemId) -> Result<f64> {
        self.table.entropy(&problem)
    }
}

impl Policy for CategoricalPolicy {
    type State = ProblemId;

    fn table(&self) -> &SoftmaxTable<ProblemId> {
        &self.table
    }

    fn table_mut(&mut self) -> &mut SoftmaxTable<ProblemId> {
        &mut self.table
    }

    fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    fn sharpness_learning_rate(&self) -> f64 {
        self.sharpness_learning_rate
    }
}

/// Walk policy for mazes: a `{U, D, L, R}` logit vector per (maze, cell).
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPolicy {
    table: SoftmaxTable<CellKey>,
    pub horizon: usize,
    pub learning_rate: f64,
    pub sharpness_learning_rate: f64,
}

impl TrajectoryPolicy {
    pub fn new(horizon: usize, learning_rate: f64, sharpness_learning_rate: f64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if !(learning_rate > 0.0 && learning_rate.is_finite()) {
            return Err(Error::config("learning_rate", "must be positive"));
        }
        if !(sharpness_learning_rate >= 0.0 && sharpness_learning_rate.is_finite()) {
            return Err(Error::config(
                "sharpness_learning_rate",
                "must be non-negative",
            ));
        }
        Ok(Self {
            table: SoftmaxTable::new(),
            horizon,
            learning_rate,
            sharpness_learning_rate,
        })
    }

    /// Registers every walkable cell of `maze`. Moves into walls or off the
    /// grid start at `wall_logit`, every other move at 0.
    pub fn add_maze(&mut self, id: u32, maze: &Maze, wall_logit: f64) -> Result<()> {
        for (row, col) in maze.open_cells() {
            let logits = Move::ALL
                .iter()
                .map(|m| match m.step((row, col), maze.size()) {
                    Some(next) if maze.is_walkable(next) => 0.0,
                    _ => wall_logit,
                })
                .collect();
            self.table.insert(cell_key(id, (row, col)), logits)?;
        }
        Ok(())
    }

    /// Walks from the start until the end is reached, a wall or the border is
    /// hit, or `horizon` moves were made.
    pub fn sample_rollouts(
        &self,
        id: u32,
        maze: &Maze,
        n_rollout: usize,
        seed: u64,
    ) -> Result<Vec<Trajectory<CellKey>>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n_rollout);
        for _ in 0..n_rollout {
            let mut pos = maze.start();
            let mut decisions = Vec::new();
            while decisions.len() < self.horizon && pos != maze.end() {
                let d = self.table.sample(&cell_key(id, pos), &mut rng)?;
                let mv = Move::from_index(d.action).expect("four actions per cell");
                decisions.push(d);
                match mv.step(pos, maze.size()) {
                    Some(next) if maze.is_walkable(next) => pos = next,
                    _ => break,
                }
            }
            out.push(Trajectory { decisions });
        }
        Ok(out)
    }

    /// Mean action entropy over the walkable cells of maze `id`.
    pub fn entropy(&self, id: u32, maze: &Maze) -> Result<f64> {
        let cells: Vec<CellKey> = maze.open_cells().map(|p| cell_key(id, p)).collect();
        mean_entropy(&self.table, &cells)
    }
}

impl Policy for TrajectoryPolicy {
    type State = CellKey;

    fn table(&self) -> &SoftmaxTable<CellKey> {
        &self.table
    }

    fn table_mut(&mut self) -> &mut SoftmaxTable<CellKey> {
        &mut self.table
    }

    fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    fn sharpness_learning_rate(&self) -> f64 {
        self.sharpness_learning_rate
    }
}

pub fn cell_key(maze: u32, (row, col): (usize, usize)) -> CellKey {
    CellKey {
        maze,
        row: row as u16,
        col: col as u16,
    }
}

/// Mean entropy over `states`; 0 for an empty slice.
pub fn mean_entropy<S: StateKey>(table: &SoftmaxTable<S>, states: &[S]) -> Result<f64> {
    if states.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for s in states {
        total += table.entropy(s)?;
    }
    Ok(total / states.len() as f64)
}

/// Mean entropy over every decision point of `rollouts`.
pub fn rollout_entropy<S: StateKey>(
    table: &SoftmaxTable<S>,
    rollouts: &[Trajectory<S>],
) -> Result<f64> {
    let mut visits: BTreeMap<&S, usize> = BTreeMap::new();
    for d in rollouts.iter().flat_map(|t| &t.decisions) {
        *visits.entry(&d.state).or_default() += 1;
    }
    let total: usize = visits.values().sum();
    if total == 0 {
        return Ok(0.0);
    }
    let mut sum = 0.0;
    for (state, count) in visits {
        sum += table.entropy(state)? * count as f64;
    }
    Ok(sum / total as f64)
}
