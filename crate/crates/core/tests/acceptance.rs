//! Acceptance suite. Each test prints one `[PASS]` or `[FAIL]` line and then
//! asserts the same condition.
//!
//! Pinned tolerances:
//! 1. analytical vs all-groups oracle, n <= 12: 1e-9, under 5 s
//! 2. zero-sum and signs over 10^4 random batches: 1e-9
//! 3. bootstrap with 10^5 groups vs analytical: 2% relative per class, under 10 s
//! 4. eta argmax: pass1 at N/2 (exact), passk at 8 +- 1 (N=32, k=8), exceeding at 1; under 1 s
//! 5. Pass@k estimate vs 10^5 Monte-Carlo draws: 3 sigma
//! 6. surrogate gradient vs central differences (h = 1e-5): 1e-4 relative, 100 policies
//! 7. mazes: 1000 per size solvable, verify agrees with a walk oracle on 10^3 walks,
//!    byte-exact round trip; under 30 s
//! 8. bandit, 5 seeds: Pass@k beats Pass@1 on final entropy and Pass@8 with
//!    non-overlapping mean +- std; under 10 min
//! 9. two-stage Pass@k then Pass@1 final Pass@1 >= Pass@1 only, seed mean
//! 10. final accuracy non-increasing over flip proportions {0, 0.1, 0.3, 0.5}
//! 11. k = 1 Pass@k estimators equal Pass@1 bit for bit on 10^3 batches

use std::collections::BTreeMap;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use passk::advantage::{
    analytical_advantage, analytical_batch_advantage, bootstrap_advantage, bootstrap_groups,
    closed_form_advantage, estimate, full_sampling_advantage, pass1_advantage, EstimatorKind,
    EstimatorSpec, GroupAssignment, OutcomeBatch,
};
use passk::analysis::eta_curve;
use passk::maze::{self, Maze, Move, MoveSequence};
use passk::policy::{ClipRange, Decision, SoftmaxTable};
use passk::rewards::pass_at_k_estimate;
use passk::trainer::{train, Stage, TrainConfig};

fn report(id: &str, name: &str, pass: bool, detail: String) {
    println!(
        "[{}] criterion {id}: {name} | {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, n, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, n, k, &mut Vec::new(), &mut out);
    out
}

/// Enumerates every k-subset, standardizes max-rewards over them and averages
/// each rollout's group advantages over its memberships.
fn all_groups_oracle(n: usize, n_pos: usize, k: usize) -> Vec<f64> {
    let groups = subsets(n, k);
    // positives occupy indices 0..n_pos
    let rewards: Vec<f64> = groups
        .iter()
        .map(|g| {
            if g.iter().any(|&i| i < n_pos) {
                1.0
            } else {
                0.0
            }
        })
        .collect();
    let m = rewards.iter().sum::<f64>() / rewards.len() as f64;
    let var = rewards.iter().map(|r| (r - m) * (r - m)).sum::<f64>() / rewards.len() as f64;
    let std = var.sqrt();
    let mut sum = vec![0.0; n];
    let mut count = vec![0usize; n];
    for (g, r) in groups.iter().zip(&rewards) {
        let a = if std == 0.0 { 0.0 } else { (r - m) / std };
        for &i in g {
            sum[i] += a;
            count[i] += 1;
        }
    }
    sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect()
}

#[test]
fn criterion_01_analytical_matches_all_groups_oracle() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut cases = 0;
    for n in 2..=12 {
        for k in 1..=n {
            for n_pos in 0..=n {
                let (a_pos, a_neg) = analytical_advantage(n, n_pos, k).unwrap();
                let oracle = all_groups_oracle(n, n_pos, k);
                if n_pos > 0 {
                    worst = worst.max((a_pos - oracle[0]).abs());
                }
                if n_pos < n {
                    worst = worst.max((a_neg - oracle[n - 1]).abs());
                }
                cases += 1;
            }
        }
    }
    let elapsed = start.elapsed();
    report(
        "1",
        "analytical vs brute-force oracle",
        worst <= 1e-9 && elapsed < Duration::from_secs(5),
        format!("{cases} cases, max abs error {worst:.3e}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_02_zero_sum_and_signs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_sum = 0.0f64;
    let mut sign_violations = 0usize;
    let mut non_degenerate = 0usize;
    for _ in 0..10_000 {
        let n = rng.random_range(2..=64usize);
        let rewards: Vec<bool> = {
            let p: f64 = rng.random();
            (0..n).map(|_| rng.random_bool(p)).collect()
        };
        let batch = OutcomeBatch::new(rewards).unwrap();
        let (n_pos, n_neg) = (batch.n_pos(), batch.n_neg());
        let k = rng.random_range(2..=n);
        for (kind, kk) in [
            (EstimatorKind::Pass1, 1),
            (EstimatorKind::PasskAnalytical, k),
            (EstimatorKind::Exceeding, k),
            (EstimatorKind::Combination, k),
        ] {
            let (a_pos, a_neg) = closed_form_advantage(kind, n, n_pos, kk).unwrap();
            if a_pos == 0.0 && a_neg == 0.0 {
                continue;
            }
            non_degenerate += 1;
            if a_pos < 0.0 || a_neg > 0.0 {
                sign_violations += 1;
            }
            if kind != EstimatorKind::Exceeding {
                let class_sum = n_pos as f64 * a_pos + n_neg as f64 * a_neg;
                let vector_sum = estimate(&batch, &EstimatorSpec::new(kind, kk))
                    .unwrap()
                    .sum();
                worst_sum = worst_sum.max(class_sum.abs()).max(vector_sum.abs());
            }
        }
    }
    report(
        "2",
        "zero-sum and sign invariants",
        worst_sum <= 1e-9 && sign_violations == 0,
        format!("{non_degenerate} non-degenerate (batch, estimator) pairs, max |sum| {worst_sum:.3e}, {sign_violations} sign violations"),
    );
}

#[test]
fn criterion_03_bootstrap_consistency() {
    let start = Instant::now();
    let (n, k, n_group) = (32usize, 8usize, 100_000usize);
    let mut lines = Vec::new();
    let mut pass = true;
    for n_pos in [1usize, 4, 16, 28] {
        let batch = OutcomeBatch::from_counts(n, n_pos).unwrap();
        let groups = bootstrap_groups(n, k, n_group, 0).unwrap();
        let adv = bootstrap_advantage(&batch, &groups).unwrap();
        let mut membership = vec![0usize; n];
        for g in groups.groups() {
            for &i in g {
                membership[i] += 1;
            }
        }
        let per: Vec<f64> = adv
            .values
            .iter()
            .zip(&membership)
            .map(|(v, &c)| if c == 0 { 0.0 } else { v / c as f64 })
            .collect();
        let (a_pos, a_neg) = analytical_advantage(n, n_pos, k).unwrap();
        let class_mean = |want: bool| {
            let xs: Vec<f64> = per
                .iter()
                .zip(batch.rewards())
                .filter(|(_, &r)| r == want)
                .map(|(v, _)| *v)
                .collect();
            xs.iter().sum::<f64>() / xs.len() as f64
        };
        let (b_pos, b_neg) = (class_mean(true), class_mean(false));
        let rel = |b: f64, a: f64| {
            if a == 0.0 {
                if b == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                ((b - a) / a).abs()
            }
        };
        let (e_pos, e_neg) = (rel(b_pos, a_pos), rel(b_neg, a_neg));
        pass &= e_pos < 0.02 && e_neg < 0.02;
        lines.push(format!(
            "n_pos={n_pos}: pos {b_pos:.5}/{a_pos:.5} ({:.2}%), neg {b_neg:.5}/{a_neg:.5} ({:.2}%)",
            100.0 * e_pos,
            100.0 * e_neg
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(10);
    report(
        "3",
        "bootstrap per-class mean vs analytical",
        pass,
        format!("{}; {elapsed:.2?}", lines.join("; ")),
    );
}

#[test]
fn criterion_04a_eta_argmax_pass1() {
    let start = Instant::now();
    let mut found = Vec::new();
    for n in [8usize, 16, 32] {
        found.push((
            n,
            eta_curve(n, 1, &EstimatorSpec::pass1()).unwrap().argmax(),
        ));
    }
    let elapsed = start.elapsed();
    report(
        "4a",
        "pass1 eta argmax at N/2",
        found.iter().all(|&(n, a)| a == n / 2) && elapsed < Duration::from_secs(1),
        format!("(N, argmax) = {found:?}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_04b_eta_argmax_passk() {
    let start = Instant::now();
    let curve = eta_curve(
        32,
        8,
        &EstimatorSpec::new(EstimatorKind::PasskAnalytical, 8),
    )
    .unwrap();
    let argmax = curve.argmax();
    let elapsed = start.elapsed();
    let etas: Vec<String> = curve.points[..10]
        .iter()
        .map(|p| format!("{:.3}", p.eta))
        .collect();
    report(
        "4b",
        "passk_analytical eta argmax at 8 +- 1 (N=32, k=8)",
        (7..=9).contains(&argmax) && elapsed < Duration::from_secs(1),
        format!(
            "argmax n_pos = {argmax}; eta[0..10] = [{}]; {elapsed:.2?}",
            etas.join(", ")
        ),
    );
}

#[test]
fn criterion_04c_eta_argmax_exceeding() {
    let start = Instant::now();
    let argmax = eta_curve(32, 8, &EstimatorSpec::new(EstimatorKind::Exceeding, 8))
        .unwrap()
        .argmax();
    let elapsed = start.elapsed();
    report(
        "4c",
        "exceeding eta argmax at 1 (N=32, k=8)",
        argmax == 1 && elapsed < Duration::from_secs(1),
        format!("argmax n_pos = {argmax}, {elapsed:.2?}"),
    );
}

#[test]
fn criterion_05_pass_at_k_vs_monte_carlo() {
    let grid = [
        (10usize, 3usize, 2usize),
        (16, 1, 4),
        (20, 10, 5),
        (32, 4, 8),
        (32, 16, 8),
        (64, 2, 16),
        (8, 0, 3),
        (8, 8, 3),
    ];
    let trials = 100_000usize;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut pass = true;
    let mut lines = Vec::new();
    for (n, n_pos, k) in grid {
        let exact = pass_at_k_estimate(n, n_pos, k).unwrap();
        let hits = (0..trials)
            .filter(|_| {
                rand::seq::index::sample(&mut rng, n, k)
                    .iter()
                    .any(|i| i < n_pos)
            })
            .count();
        let mc = hits as f64 / trials as f64;
        let sigma = (exact * (1.0 - exact) / trials as f64).sqrt();
        let ok = if sigma == 0.0 {
            mc == exact
        } else {
            (mc - exact).abs() <= 3.0 * sigma
        };
        pass &= ok;
        lines.push(format!("({n},{n_pos},{k}): {exact:.5} vs {mc:.5}"));
    }
    report(
        "5",
        "Pass@k estimate vs max-of-k Monte Carlo",
        pass,
        lines.join("; "),
    );
}

fn surrogate_with(table: &SoftmaxTable<u32>, points: &[(&Decision<u32>, f64)], c: f64) -> f64 {
    table.surrogate(points, c, ClipRange::default()).unwrap()
}

#[test]
fn criterion_06_gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let clip = ClipRange::default();
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let mut table = SoftmaxTable::<u32>::new();
        let n_states = rng.random_range(1..=3u32);
        for s in 0..n_states {
            let m = rng.random_range(2..=5usize);
            table
                .insert(s, (0..m).map(|_| rng.random_range(-1.5..1.5)).collect())
                .unwrap();
        }
        table.set_log_sharpness(rng.random_range(-0.5..0.5));
        let entropy_coeff = if rng.random_bool(0.5) {
            0.0
        } else {
            rng.random_range(0.0..0.1)
        };

        let n_points = rng.random_range(1..=8usize);
        let mut decisions = Vec::new();
        let mut advantages = Vec::new();
        while decisions.len() < n_points {
            let state = rng.random_range(0..n_states);
            let m = table.logits(&state).unwrap().len();
            let action = rng.random_range(0..m);
            let logp = table.log_prob(&state, action).unwrap();
            let old_logprob = logp + rng.random_range(-0.5..0.5);
            let ratio = (logp - old_logprob).exp();
            // the surrogate has kinks at the clip bounds; keep away from them
            if (ratio - (1.0 - clip.low)).abs() < 1e-3 || (ratio - (1.0 + clip.high)).abs() < 1e-3 {
                continue;
            }
            decisions.push(Decision {
                state,
                action,
                old_logprob,
            });
            advantages.push(rng.random_range(-2.0..2.0));
        }
        let points: Vec<_> = decisions.iter().zip(advantages.iter().copied()).collect();
        let g = table
            .surrogate_gradient(&points, entropy_coeff, clip)
            .unwrap();

        let mut analytic = Vec::new();
        let mut numeric = Vec::new();
        for s in 0..n_states {
            let base = table.logits(&s).unwrap().to_vec();
            for i in 0..base.len() {
                let mut plus = table.clone();
                let mut minus = table.clone();
                let mut up = base.clone();
                up[i] += h;
                let mut down = base.clone();
                down[i] -= h;
                plus.insert(s, up).unwrap();
                minus.insert(s, down).unwrap();
                numeric.push(
                    (surrogate_with(&plus, &points, entropy_coeff)
                        - surrogate_with(&minus, &points, entropy_coeff))
                        / (2.0 * h),
                );
                analytic.push(g.logits.get(&s).map(|v| v[i]).unwrap_or(0.0));
            }
        }
        let mut plus = table.clone();
        let mut minus = table.clone();
        plus.set_log_sharpness(table.log_sharpness() + h);
        minus.set_log_sharpness(table.log_sharpness() - h);
        numeric.push(
            (surrogate_with(&plus, &points, entropy_coeff)
                - surrogate_with(&minus, &points, entropy_coeff))
                / (2.0 * h),
        );
        analytic.push(g.log_sharpness);

        let diff: f64 = analytic
            .iter()
            .zip(&numeric)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let scale: f64 = analytic
            .iter()
            .map(|a| a * a)
            .sum::<f64>()
            .sqrt()
            .max(numeric.iter().map(|a| a * a).sum::<f64>().sqrt());
        let rel = if scale < 1e-8 { diff } else { diff / scale };
        worst = worst.max(rel);
    }
    report(
        "6",
        "surrogate gradient vs central differences",
        worst < 1e-4,
        format!("100 random policies, worst norm-relative error {worst:.3e}"),
    );
}

/// Walk semantics rebuilt from the BFS adjacency: every move must follow an
/// edge, the walk may not continue after reaching the end, and must end there.
fn walk_oracle(maze: &Maze, moves: &[Move]) -> bool {
    let n = maze.size();
    let neighbours = |(r, c): (usize, usize)| {
        let mut out = Vec::new();
        if r > 0 {
            out.push(((r - 1, c), Move::Up));
        }
        if r + 1 < n {
            out.push(((r + 1, c), Move::Down));
        }
        if c > 0 {
            out.push(((r, c - 1), Move::Left));
        }
        if c + 1 < n {
            out.push(((r, c + 1), Move::Right));
        }
        out.into_iter()
            .filter(|(p, _)| maze.is_walkable(*p))
            .collect::<Vec<_>>()
    };
    let mut pos = maze.start();
    for (i, m) in moves.iter().enumerate() {
        if pos == maze.end() && i > 0 {
            return false;
        }
        match neighbours(pos).into_iter().find(|(_, mv)| mv == m) {
            Some((next, _)) => pos = next,
            None => return false,
        }
    }
    pos == maze.end()
}

#[test]
fn criterion_07_maze_generation_and_verification() {
    let start = Instant::now();
    let mut unsolvable = 0usize;
    let mut roundtrip_failures = 0usize;
    let mut by_size = BTreeMap::new();
    for size in [7usize, 9, 11, 13, 15] {
        for seed in 0..1000u64 {
            let m = maze::generate(size, seed).unwrap();
            if maze::bfs_solve(&m).is_none() {
                unsolvable += 1;
            }
            let text = m.serialize();
            match Maze::parse(&text) {
                Ok(back) if back.serialize() == text && back == m => {}
                _ => roundtrip_failures += 1,
            }
        }
        by_size.insert(size, 1000);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut disagreements = 0usize;
    let mut passing = 0usize;
    for i in 0..1000u64 {
        let size = [7usize, 9, 11, 13, 15][rng.random_range(0..5)];
        let m = maze::generate(size, 10_000 + i).unwrap();
        let solution = maze::bfs_solve(&m).unwrap().moves().to_vec();
        let moves: Vec<Move> = match i % 4 {
            // the shortest path itself
            0 => solution.clone(),
            // shortest path with a back-and-forth detour inserted
            1 => {
                let mut s = solution.clone();
                let at = rng.random_range(0..s.len());
                let back = match s[at] {
                    Move::Up => Move::Down,
                    Move::Down => Move::Up,
                    Move::Left => Move::Right,
                    Move::Right => Move::Left,
                };
                s.insert(at + 1, back);
                s.insert(at + 2, s[at]);
                s
            }
            // shortest path plus extra moves after the end
            2 => {
                let mut s = solution.clone();
                s.push(Move::ALL[rng.random_range(0..4)]);
                s
            }
            // uniform random walk
            _ => (0..rng.random_range(0..4 * size))
                .map(|_| Move::ALL[rng.random_range(0..4)])
                .collect(),
        };
        let got = maze::verify(&m, &MoveSequence(moves.clone()));
        if got != walk_oracle(&m, &moves) {
            disagreements += 1;
        }
        passing += got as usize;
    }
    let elapsed = start.elapsed();
    report(
        "7",
        "maze solvability, verifier agreement, round trip",
        unsolvable == 0 && disagreements == 0 && roundtrip_failures == 0 && elapsed < Duration::from_secs(30),
        format!(
            "{} mazes, {unsolvable} unsolvable, {roundtrip_failures} round-trip failures; 1000 walks ({passing} passing), {disagreements} disagreements; {elapsed:.2?}",
            by_size.values().sum::<usize>()
        ),
    );
}

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];

#[derive(Debug, Clone, Copy)]
struct FinalMetrics {
    entropy: f64,
    pass1: f64,
    passk: f64,
}

fn bandit_config(stages: Vec<Stage>, seed: u64, noise: f64) -> TrainConfig {
    let mut c = TrainConfig::bandit(200, stages, seed);
    c.n_rollout = 32;
    c.k_eval = 8;
    c.bandit.answer_counts = vec![8, 64, 512];
    c.noise_proportion = noise;
    c.eval_every = 100;
    c
}

fn run_seeds(stages: Vec<Stage>, noise: f64) -> Vec<FinalMetrics> {
    SEEDS
        .iter()
        .map(|&seed| {
            let t = train(&bandit_config(stages.clone(), seed, noise)).unwrap();
            let r = t.final_evaluation().unwrap();
            assert_eq!(r.step, 500);
            FinalMetrics {
                entropy: r.policy_entropy.unwrap(),
                pass1: r.pass1_eval.unwrap(),
                passk: r.passk_eval.unwrap(),
            }
        })
        .collect()
}

fn pass1_runs() -> &'static (Vec<FinalMetrics>, Duration) {
    static CELL: OnceLock<(Vec<FinalMetrics>, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let r = run_seeds(vec![Stage::new(EstimatorSpec::pass1(), 500)], 0.0);
        (r, start.elapsed())
    })
}

fn passk_runs() -> &'static (Vec<FinalMetrics>, Duration) {
    static CELL: OnceLock<(Vec<FinalMetrics>, Duration)> = OnceLock::new();
    CELL.get_or_init(|| {
        let start = Instant::now();
        let spec = EstimatorSpec::new(EstimatorKind::PasskAnalytical, 8);
        let r = run_seeds(vec![Stage::new(spec, 500)], 0.0);
        (r, start.elapsed())
    })
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64;
    (m, var.sqrt())
}

#[test]
fn criterion_08_exploration_dynamics() {
    let (p1, t1) = pass1_runs();
    let (pk, tk) = passk_runs();
    let elapsed = *t1 + *tk;
    let h1 = mean_std(&p1.iter().map(|m| m.entropy).collect::<Vec<_>>());
    let hk = mean_std(&pk.iter().map(|m| m.entropy).collect::<Vec<_>>());
    let a1 = mean_std(&p1.iter().map(|m| m.passk).collect::<Vec<_>>());
    let ak = mean_std(&pk.iter().map(|m| m.passk).collect::<Vec<_>>());
    let separated = |hi: (f64, f64), lo: (f64, f64)| hi.0 - hi.1 > lo.0 + lo.1;
    report(
        "8",
        "Pass@k training keeps entropy and Pass@8 above Pass@1 training",
        separated(hk, h1) && separated(ak, a1) && elapsed < Duration::from_secs(600),
        format!(
            "entropy passk {:.4}+-{:.4} vs pass1 {:.4}+-{:.4}; Pass@8 passk {:.4}+-{:.4} vs pass1 {:.4}+-{:.4}; {elapsed:.1?}",
            hk.0, hk.1, h1.0, h1.1, ak.0, ak.1, a1.0, a1.1
        ),
    );
}

#[test]
fn criterion_09_two_stage_transfer() {
    let spec = EstimatorSpec::new(EstimatorKind::PasskAnalytical, 8);
    let two = run_seeds(
        vec![
            Stage::new(spec, 300),
            Stage::new(EstimatorSpec::pass1(), 200),
        ],
        0.0,
    );
    let (p1, _) = pass1_runs();
    let two_mean = mean_std(&two.iter().map(|m| m.pass1).collect::<Vec<_>>()).0;
    let p1_mean = mean_std(&p1.iter().map(|m| m.pass1).collect::<Vec<_>>()).0;
    report(
        "9",
        "Pass@k then Pass@1 reaches at least Pass@1-only final Pass@1",
        two_mean >= p1_mean,
        format!("two-stage {two_mean:.4} vs pass1 {p1_mean:.4}"),
    );
}

#[test]
fn criterion_10_noise_monotonicity() {
    let mut means = Vec::new();
    for noise in [0.0, 0.1, 0.3, 0.5] {
        let runs = if noise == 0.0 {
            pass1_runs().0.clone()
        } else {
            run_seeds(vec![Stage::new(EstimatorSpec::pass1(), 500)], noise)
        };
        means.push((
            noise,
            mean_std(&runs.iter().map(|m| m.pass1).collect::<Vec<_>>()).0,
        ));
    }
    let monotone = means.windows(2).all(|w| w[1].1 <= w[0].1);
    report(
        "10",
        "final accuracy non-increasing in flip proportion",
        monotone,
        means
            .iter()
            .map(|(p, a)| format!("{p}: {a:.4}"))
            .collect::<Vec<_>>()
            .join(", ")
            .to_string(),
    );
}

#[test]
fn criterion_11_k1_reduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut mismatches = 0usize;
    for _ in 0..1000 {
        let n = rng.random_range(1..=64usize);
        let p: f64 = rng.random();
        let batch = OutcomeBatch::new((0..n).map(|_| rng.random_bool(p)).collect()).unwrap();
        let want = pass1_advantage(&batch).values;
        let singles = GroupAssignment::consecutive(n, 1).unwrap();
        let candidates = [
            analytical_batch_advantage(&batch, 1).unwrap().values,
            full_sampling_advantage(&batch, 1).unwrap().values,
            bootstrap_advantage(&batch, &singles).unwrap().values,
        ];
        for got in candidates {
            if got
                .iter()
                .map(|v| v.to_bits())
                .ne(want.iter().map(|v| v.to_bits()))
            {
                mismatches += 1;
            }
        }
    }
    report(
        "11",
        "k = 1 Pass@k estimators reproduce Pass@1 bit for bit",
        mismatches == 0,
        format!("1000 batches x 3 estimators, {mismatches} mismatches"),
    );
}
