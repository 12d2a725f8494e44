//! Sequential stochastic assignment: `H` workers with values `B`, one job
//! `C ~ U(0, 1)` per stage, reward `C B` (or Bernoulli with mean `C B`).
//!
//! Actions are 0-based ranks into the ascending worker list. Stage `h`
//! (0-based) has `H - h` workers and feature dimension `H - h`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, input, Result};
use crate::lsvi::{Environment, Policy, Transition};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardModel {
    #[default]
    Deterministic,
    Bernoulli,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AssignState {
    /// Ascending worker values.
    pub workers: Vec<f64>,
    pub job: f64,
}

impl AssignState {
    pub fn new(mut workers: Vec<f64>, job: f64) -> Self {
        workers.sort_by(f64::total_cmp);
        Self { workers, job }
    }
}

/// Removes the worker of 0-based rank `rank` and installs the next job.
pub fn transition(state: &AssignState, rank: usize, next_job: f64) -> Result<AssignState> {
    if rank >= state.workers.len() {
        return input(format!(
            "rank {} out of range for {} workers",
            rank + 1,
            state.workers.len()
        ));
    }
    let mut workers = state.workers.clone();
    workers.remove(rank);
    Ok(AssignState {
        workers,
        job: next_job,
    })
}

pub fn reward<R: Rng + ?Sized>(job: f64, worker: f64, model: RewardModel, rng: &mut R) -> f64 {
    match model {
        RewardModel::Deterministic => job * worker,
        RewardModel::Bernoulli => {
            if rng.random::<f64>() < worker {
                job
            } else {
                0.0
            }
        }
    }
}

/// Remaining workers after removing rank `rank`, then `C B^(rank)`.
pub fn features(state: &AssignState, rank: usize) -> Result<Vec<f64>> {
    if rank >= state.workers.len() {
        return input(format!("rank {} out of range", rank + 1));
    }
    let mut phi = Vec::with_capacity(state.workers.len());
    phi.extend(state.workers.iter().enumerate().filter(|(i, _)| *i != rank).map(|(_, &b)| b));
    phi.push(state.job * state.workers[rank]);
    Ok(phi)
}

/// `T[h][j]`: expected value of the job eventually done by the worker of rank
/// `j` among the `H - h` remaining, for `U(0, 1)` jobs.
pub fn analytic_thresholds(horizon: usize) -> Vec<Vec<f64>> {
    threshold_recursion(horizon, 0.5, |lo, hi| {
        // E[C; lo < C <= hi] + lo P[C <= lo] + hi P[C > hi]; the open borders clip to the support
        let (lo, hi) = (lo.max(0.0), hi.min(1.0));
        (hi * hi - lo * lo) / 2.0 + lo * lo + hi * (1.0 - hi)
    })
}

/// Same table for a job law with finitely many atoms `(probability, value)`.
pub fn discrete_thresholds(horizon: usize, atoms: &[(f64, f64)]) -> Vec<Vec<f64>> {
    let mean: f64 = atoms.iter().map(|(p, c)| p * c).sum();
    threshold_recursion(horizon, mean, |lo, hi| {
        let mut w = 0.0;
        for &(p, c) in atoms {
            w += p * if c <= lo {
                lo
            } else if c <= hi {
                c
            } else {
                hi
            };
        }
        w
    })
}

/// Backward recursion with `lo = -inf` for the lowest rank and `hi = +inf` for
/// the highest; `value(lo, hi)` returns the rank's expected job value.
fn threshold_recursion(horizon: usize, mean: f64, value: impl Fn(f64, f64) -> f64) -> Vec<Vec<f64>> {
    if horizon == 0 {
        return Vec::new();
    }
    let mut table = vec![Vec::new(); horizon];
    table[horizon - 1] = vec![mean];
    for h in (0..horizon - 1).rev() {
        let next = &table[h + 1];
        let m = next.len();
        let row: Vec<f64> = (0..=m)
            .map(|j| {
                let lo = if j == 0 { f64::NEG_INFINITY } else { next[j - 1] };
                let hi = if j == m { f64::INFINITY } else { next[j] };
                value(lo, hi)
            })
            .collect();
        table[h] = row;
    }
    table
}

/// 0-based rank matching the job's position among the next-stage thresholds.
pub fn analytic_action(job: f64, next_thresholds: Option<&[f64]>) -> usize {
    match next_thresholds {
        Some(t) => t.iter().filter(|&&w| w < job).count(),
        None => 0,
    }
}

/// `sqrt((1/S) sum_s (1/len_s) sum_j (w_sj - v_sj)^2)` over `S` stage rows.
pub fn weight_distance(w: &[Vec<f64>], v: &[Vec<f64>]) -> Result<f64> {
    check_dim(v.len(), w.len())?;
    if w.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (a, b) in w.iter().zip(v) {
        check_dim(b.len(), a.len())?;
        if a.is_empty() {
            continue;
        }
        let s: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
        total += s / a.len() as f64;
    }
    Ok((total / w.len() as f64).sqrt())
}

/// Distance between learned worker coefficients and the analytic thresholds:
/// stage `h` coefficients `w_h[0..H-h-1]` against `T[h+1]`, for `h < H - 1`.
pub fn threshold_distance(weights: &[Vec<f64>], thresholds: &[Vec<f64>]) -> Result<f64> {
    let h_total = thresholds.len();
    check_dim(h_total, weights.len())?;
    if h_total < 2 {
        return Ok(0.0);
    }
    let mut learned = Vec::with_capacity(h_total - 1);
    for (h, w) in weights.iter().take(h_total - 1).enumerate() {
        check_dim(h_total - h, w.len())?;
        learned.push(w[..h_total - h - 1].to_vec());
    }
    weight_distance(&learned, &thresholds[1..])
}

/// Expected total reward of the analytic policy: `sum_j T[0][j] E[B^(j)]` with
/// `E[B^(j)] = j / (H + 1)` for sorted uniform workers.
pub fn analytic_mean(horizon: usize) -> f64 {
    let t = analytic_thresholds(horizon);
    if t.is_empty() {
        return 0.0;
    }
    t[0].iter()
        .enumerate()
        .map(|(j, w)| w * (j + 1) as f64 / (horizon + 1) as f64)
        .sum()
}

#[derive(Debug, Clone)]
pub struct AssignmentEnv {
    horizon: usize,
    model: RewardModel,
}

impl AssignmentEnv {
    pub fn new(horizon: usize, model: RewardModel) -> Result<Self> {
        if horizon == 0 {
            return input("assignment horizon must be at least 1");
        }
        Ok(Self { horizon, model })
    }

    pub fn model(&self) -> RewardModel {
        self.model
    }
}

impl Environment for AssignmentEnv {
    type State = AssignState;
    type Action = usize;

    fn name(&self) -> &str {
        "assignment"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn feature_dim(&self, stage: usize) -> usize {
        self.horizon - stage
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> AssignState {
        let workers = (0..self.horizon).map(|_| rng.random::<f64>()).collect();
        AssignState::new(workers, rng.random::<f64>())
    }

    fn actions(&self, state: &AssignState, _stage: usize) -> Vec<usize> {
        (0..state.workers.len()).collect()
    }

    fn features(&self, state: &AssignState, _stage: usize, action: &usize) -> Vec<f64> {
        features(state, *action).expect("rank from the action list")
    }

    fn sample_batch<R: Rng + ?Sized>(
        &self,
        state: &AssignState,
        stage: usize,
        action: &usize,
        n: usize,
        rng: &mut R,
    ) -> Vec<Transition<AssignState>> {
        let worker = state.workers[*action];
        (0..n)
            .map(|_| {
                let r = reward(state.job, worker, self.model, rng);
                let next = (stage + 1 < self.horizon).then(|| {
                    transition(state, *action, rng.random::<f64>()).expect("valid rank")
                });
                Transition { reward: r, next }
            })
            .collect()
    }

    fn deterministic_rewards(&self) -> bool {
        self.model == RewardModel::Deterministic
    }

    fn value_cap(&self, stage: usize) -> Option<f64> {
        Some((self.horizon - stage) as f64)
    }
}

/// Rank-matching policy from the analytic thresholds.
#[derive(Debug, Clone)]
pub struct AnalyticPolicy {
    thresholds: Vec<Vec<f64>>,
}

impl AnalyticPolicy {
    pub fn new(horizon: usize) -> Self {
        Self {
            thresholds: analytic_thresholds(horizon),
        }
    }

    pub fn from_table(thresholds: Vec<Vec<f64>>) -> Self {
        Self { thresholds }
    }

    pub fn rank(&self, stage: usize, job: f64) -> usize {
        analytic_action(job, self.thresholds.get(stage + 1).map(|t| t.as_slice()))
    }
}

impl Policy<AssignmentEnv> for AnalyticPolicy {
    fn choose(
        &self,
        _env: &AssignmentEnv,
        state: &AssignState,
        stage: usize,
        _actions: &[usize],
        _rng: &mut ChaCha8Rng,
    ) -> usize {
        self.rank(stage, state.job)
    }
}
