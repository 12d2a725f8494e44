//! Feature-based risk-averse least-squares value iteration.
//!
//! Each episode runs a backward regression pass over every stored record,
//! then a forward rollout that draws an `N`-batch at each visited pair and
//! moves to a uniformly chosen member of the batch.

use std::path::Path;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, input, Error, Result};
use crate::lazy::{full_values, greedy, lazy_values, Evaluation, RenewalPass};
use crate::linalg::{dot, GramState, StageRegression};
use crate::risk::{aggregate_augmented_unchecked, aggregate_unchecked, Orientation, RiskConfig};

/// One draw of the generative model.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition<S> {
    pub reward: f64,
    /// `None` exactly at the last stage.
    pub next: Option<S>,
}

/// Episodic environment with stages `0..horizon()`.
pub trait Environment: Sync {
    type State: Clone + Send + Sync;
    type Action: Clone + Send + Sync;

    fn name(&self) -> &str;
    fn horizon(&self) -> usize;
    fn feature_dim(&self, stage: usize) -> usize;
    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> Self::State;
    fn actions(&self, state: &Self::State, stage: usize) -> Vec<Self::Action>;
    fn features(&self, state: &Self::State, stage: usize, action: &Self::Action) -> Vec<f64>;
    /// `n` conditionally independent `(reward, successor)` draws.
    fn sample_batch<R: Rng + ?Sized>(
        &self,
        state: &Self::State,
        stage: usize,
        action: &Self::Action,
        n: usize,
        rng: &mut R,
    ) -> Vec<Transition<Self::State>>;
    /// Rewards are a function of `(state, action)`; batch rewards then coincide.
    fn deterministic_rewards(&self) -> bool;
    /// Upper bound of the value from `stage` on, used by the maximization clamp.
    fn value_cap(&self, _stage: usize) -> Option<f64> {
        None
    }
    /// Augmented AVaR controls carried by an action.
    fn controls(&self, _action: &Self::Action) -> Vec<f64> {
        Vec::new()
    }
}

/// `max{w.phi - beta b, 0}` for minimization, `min{w.phi + beta b, cap}` for maximization.
pub fn q_value(
    weights: &[f64],
    gram: &GramState<f64>,
    phi: &[f64],
    beta: f64,
    orientation: Orientation,
    cap: Option<f64>,
) -> f64 {
    clamp_q(dot(weights, phi), beta * gram.bonus(phi), orientation, cap)
}

#[inline]
fn clamp_q(linear: f64, bonus: f64, orientation: Orientation, cap: Option<f64>) -> f64 {
    match orientation {
        Orientation::Minimize => (linear - bonus).max(0.0),
        Orientation::Maximize => {
            let v = linear + bonus;
            match cap {
                Some(c) => v.min(c),
                None => v,
            }
        }
    }
}

/// Frozen Q-function of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageQ {
    dim: usize,
    weights: Vec<f64>,
    inverse: Vec<f64>,
    beta: f64,
    orientation: Orientation,
    cap: Option<f64>,
}

impl StageQ {
    pub fn new(
        weights: Vec<f64>,
        inverse: Vec<f64>,
        beta: f64,
        orientation: Orientation,
        cap: Option<f64>,
    ) -> Result<Self> {
        let dim = weights.len();
        check_dim(dim * dim, inverse.len())?;
        Ok(Self {
            dim,
            weights,
            inverse,
            beta,
            orientation,
            cap,
        })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `w . phi` without bonus or clamp.
    pub fn linear(&self, phi: &[f64]) -> f64 {
        dot(&self.weights, phi)
    }

    pub fn bonus(&self, phi: &[f64]) -> f64 {
        let d = self.dim;
        let mut q = 0.0;
        for i in 0..d {
            if phi[i] == 0.0 {
                continue;
            }
            q += phi[i] * dot(&self.inverse[i * d..(i + 1) * d], phi);
        }
        q.max(0.0).sqrt()
    }

    pub fn value(&self, phi: &[f64]) -> f64 {
        let bonus = if self.beta == 0.0 {
            0.0
        } else {
            self.beta * self.bonus(phi)
        };
        clamp_q(self.linear(phi), bonus, self.orientation, self.cap)
    }
}

/// The Q-functions `Q_h^k` of all stages for one episode.
#[derive(Debug, Clone, PartialEq)]
pub struct QView {
    stages: Vec<StageQ>,
    orientation: Orientation,
}

impl QView {
    pub fn new(stages: Vec<StageQ>, orientation: Orientation) -> Self {
        Self {
            stages,
            orientation,
        }
    }

    pub fn stage(&self, h: usize) -> &StageQ {
        &self.stages[h]
    }

    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn orientation(&self) -> Orientation {
        self.orientation
    }

    pub fn q(&self, h: usize, phi: &[f64]) -> f64 {
        self.stages[h].value(phi)
    }

    /// Same weights with a different bonus multiplier.
    pub fn with_beta(&self, beta: f64) -> Self {
        let mut out = self.clone();
        out.stages.iter_mut().for_each(|s| s.beta = beta);
        out
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.stages.iter().map(|s| s.weights.clone()).collect()
    }

    /// Greedy index and value over a list of feature vectors.
    pub fn greedy(&self, h: usize, features: &[Vec<f64>]) -> (usize, f64) {
        greedy(features.iter().map(|f| self.q(h, f)), self.orientation)
    }
}

/// The bonus multiplier `beta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "schedule")]
pub enum BetaSchedule {
    Constant { beta: f64 },
    /// `c_beta d H sqrt(ln(2 d K H / p))`.
    Theoretical { c_beta: f64, p: f64 },
}

impl BetaSchedule {
    pub fn resolve(&self, dim: usize, horizon: usize, episodes: usize) -> Result<f64> {
        match *self {
            BetaSchedule::Constant { beta } => {
                if !(beta >= 0.0) || !beta.is_finite() {
                    return input(format!("beta must be nonnegative, got {beta}"));
                }
                Ok(beta)
            }
            BetaSchedule::Theoretical { c_beta, p } => {
                if !(c_beta >= 0.0) || !(p > 0.0 && p < 1.0) {
                    return input("theoretical beta needs c_beta >= 0 and p in (0, 1)");
                }
                let (d, h, k) = (dim as f64, horizon as f64, episodes as f64);
                let gamma = (2.0 * d * k * h / p).ln();
                Ok(c_beta * d * h * gamma.sqrt())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnConfig {
    pub episodes: usize,
    pub lambda: f64,
    pub beta: BetaSchedule,
    pub risk: RiskConfig<f64>,
    pub evaluation: Evaluation,
    pub seed: u64,
    #[serde(default = "default_checkpoint")]
    pub checkpoint_every: usize,
}

fn default_checkpoint() -> usize {
    100
}

impl LearnConfig {
    pub fn new(episodes: usize, risk: RiskConfig<f64>, seed: u64) -> Self {
        Self {
            episodes,
            lambda: 0.1,
            beta: BetaSchedule::Constant { beta: 0.1 },
            risk,
            evaluation: Evaluation::default(),
            seed,
            checkpoint_every: default_checkpoint(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.risk.validate()?;
        if self.episodes == 0 {
            return input("need at least one episode");
        }
        if !(self.lambda > 0.0) || !self.lambda.is_finite() {
            return input(format!("lambda must be positive, got {}", self.lambda));
        }
        if let Evaluation::Lazy { p_renew, .. } = self.evaluation {
            if !(0.0..=1.0).contains(&p_renew) {
                return input(format!("p_renew must lie in [0, 1], got {p_renew}"));
            }
        }
        if self.checkpoint_every == 0 {
            return input("checkpoint interval must be positive");
        }
        Ok(())
    }
}

/// One cached batch member: feature vectors of all its actions and the stored lazy action.
#[derive(Debug, Clone, PartialEq)]
pub struct Successor {
    pub features: Vec<f64>,
    pub actions: usize,
    pub stored: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub action: usize,
    pub phi: Vec<f64>,
    pub rewards: Vec<f64>,
    pub controls: Vec<f64>,
    /// Empty at the last stage.
    pub successors: Vec<Successor>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub stages: Vec<StageRecord>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize)]
pub struct Diagnostics {
    /// Per stage `sum_k phi_k^T Lambda_k^{-1} phi_k` over executed features.
    pub elliptic_potential: Vec<f64>,
    pub max_feature_norm: f64,
    pub renewals: u64,
    pub lazy_skips: u64,
    pub clamped_bonus: u64,
}

/// Per-episode view handed to training callbacks.
pub struct EpisodeInfo<'a> {
    /// One-based episode index `k`.
    pub episode: usize,
    /// `Q^k`, the function that drove episode `k`.
    pub plan: &'a QView,
    pub episode_return: f64,
}

/// Weights after `episode` completed episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub episode: usize,
    pub weights: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct TrainingResult {
    pub weights: StageWeights,
    pub checkpoints: Vec<Checkpoint>,
    pub returns: Vec<f64>,
    pub diagnostics: Diagnostics,
    pub beta: f64,
    pub seconds: f64,
}

pub const ENV_STREAM: u64 = 0;
pub const COIN_STREAM: u64 = 1;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

pub struct Learner<'a, E: Environment> {
    env: &'a E,
    cfg: LearnConfig,
    beta: f64,
    regressions: Vec<StageRegression<f64>>,
    records: Vec<EpisodeRecord>,
    env_rng: ChaCha8Rng,
    coin_rng: ChaCha8Rng,
    diagnostics: Diagnostics,
    scratch: Vec<f64>,
    batch: Vec<f64>,
}

impl<'a, E: Environment> Learner<'a, E> {
    pub fn new(env: &'a E, cfg: LearnConfig) -> Result<Self> {
        cfg.validate()?;
        let h = env.horizon();
        if h == 0 {
            return Err(Error::Environment("horizon must be at least 1".into()));
        }
        let dim = (0..h).map(|s| env.feature_dim(s)).max().unwrap_or(1);
        let beta = cfg.beta.resolve(dim, h, cfg.episodes)?;
        let regressions = (0..h)
            .map(|s| Ok(StageRegression::new(GramState::new(env.feature_dim(s), cfg.lambda)?)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            env,
            beta,
            regressions,
            records: Vec::with_capacity(cfg.episodes),
            env_rng: stream_rng(cfg.seed, ENV_STREAM),
            coin_rng: stream_rng(cfg.seed, COIN_STREAM),
            diagnostics: Diagnostics {
                elliptic_potential: vec![0.0; h],
                ..Diagnostics::default()
            },
            scratch: Vec::new(),
            batch: Vec::new(),
            cfg,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn config(&self) -> &LearnConfig {
        &self.cfg
    }

    pub fn records(&self) -> &[EpisodeRecord] {
        &self.records
    }

    pub fn regressions(&self) -> &[StageRegression<f64>] {
        &self.regressions
    }

    pub fn diagnostics(&self) -> &Diagnostics {
        &self.diagnostics
    }

    pub fn episodes_done(&self) -> usize {
        self.records.len()
    }

    /// Backward pass over all stored records, producing `Q^k` for `k = episodes_done() + 1`.
    pub fn plan(&mut self) -> Result<QView> {
        let h_total = self.env.horizon();
        let risk = &self.cfg.risk;
        let orientation = risk.orientation;
        let n = risk.batch_size;
        let augmented = risk.kind.is_augmented();
        let deterministic = self.env.deterministic_rewards();
        let mut stages: Vec<Option<StageQ>> = vec![None; h_total];
        for h in (0..h_total).rev() {
            let next = if h + 1 < h_total {
                stages[h + 1].as_ref()
            } else {
                None
            };
            let reg = &mut self.regressions[h];
            reg.clear_targets();
            let mut pass = match self.cfg.evaluation {
                Evaluation::Lazy { delta, .. } => RenewalPass::new(n, delta),
                Evaluation::Full => RenewalPass::new(n, Default::default()),
            };
            let mut counts: Vec<usize> = Vec::with_capacity(n);
            for rec in self.records.iter_mut() {
                let sr = &mut rec.stages[h];
                self.scratch.clear();
                if let Some(q) = next {
                    if sr.successors.len() != sr.rewards.len() {
                        return Err(Error::Invariant("successor batch length mismatch".into()));
                    }
                    let d = q.dim();
                    counts.clear();
                    counts.extend(sr.successors.iter().map(|s| s.actions));
                    let succ = &sr.successors;
                    let qf = |j: usize, a: usize| q.value(&succ[j].features[a * d..(a + 1) * d]);
                    match self.cfg.evaluation {
                        Evaluation::Full => full_values(&counts, qf, orientation, &mut self.scratch),
                        Evaluation::Lazy { p_renew, .. } => {
                            let renew = self.coin_rng.random_bool(p_renew);
                            if renew {
                                self.diagnostics.renewals += 1;
                            } else {
                                self.diagnostics.lazy_skips += 1;
                            }
                            let mut stored: Vec<usize> =
                                sr.successors.iter().map(|s| s.stored).collect();
                            lazy_values(
                                &counts,
                                qf,
                                &mut stored,
                                &mut pass,
                                renew,
                                orientation,
                                &mut self.scratch,
                            );
                            for (s, a) in sr.successors.iter_mut().zip(stored) {
                                s.stored = a;
                            }
                        }
                    }
                } else {
                    self.scratch.resize(sr.rewards.len(), 0.0);
                }
                let target = if augmented {
                    aggregate_augmented_unchecked(sr.rewards[0] + self.scratch[0], &sr.controls, risk)
                } else if deterministic {
                    sr.rewards[0] + aggregate_unchecked(&self.scratch, risk)
                } else {
                    self.batch.clear();
                    self.batch
                        .extend(sr.rewards.iter().zip(&self.scratch).map(|(r, v)| r + v));
                    aggregate_unchecked(&self.batch, risk)
                };
                reg.add_target(&sr.phi, target)?;
            }
            let w = reg.ridge_solve();
            stages[h] = Some(StageQ::new(
                w,
                reg.gram.inverse().to_vec(),
                self.beta,
                orientation,
                self.env.value_cap(h),
            )?);
        }
        Ok(QView::new(
            stages.into_iter().map(|s| s.expect("every stage planned")).collect(),
            orientation,
        ))
    }

    /// Forward rollout of one episode under `plan`; the record and Gram updates are applied.
    pub fn rollout(&mut self, plan: &QView) -> Result<f64> {
        let env = self.env;
        let h_total = env.horizon();
        let n = self.cfg.risk.batch_size;
        let mut state = env.initial_state(&mut self.env_rng);
        let mut stages = Vec::with_capacity(h_total);
        let mut total = 0.0;
        for h in 0..h_total {
            let actions = env.actions(&state, h);
            if actions.is_empty() {
                return Err(Error::Environment(format!("empty action list at stage {h}")));
            }
            let feats: Vec<Vec<f64>> = actions.iter().map(|a| env.features(&state, h, a)).collect();
            for f in &feats {
                check_dim(env.feature_dim(h), f.len())?;
            }
            let (idx, _) = plan.greedy(h, &feats);
            let batch = env.sample_batch(&state, h, &actions[idx], n, &mut self.env_rng);
            if batch.len() != n {
                return Err(Error::Environment(format!(
                    "sample_batch returned {} draws, expected {n}",
                    batch.len()
                )));
            }
            let last = h + 1 == h_total;
            let mut successors = Vec::new();
            if !last {
                successors.reserve(n);
                for t in &batch {
                    let y = t.next.as_ref().ok_or_else(|| {
                        Error::Environment(format!("missing successor at stage {h}"))
                    })?;
                    let acts = env.actions(y, h + 1);
                    if acts.is_empty() {
                        return Err(Error::Environment(format!(
                            "empty action list at stage {}",
                            h + 1
                        )));
                    }
                    let fy: Vec<Vec<f64>> = acts.iter().map(|a| env.features(y, h + 1, a)).collect();
                    let (stored, _) = plan.greedy(h + 1, &fy);
                    successors.push(Successor {
                        features: fy.concat(),
                        actions: acts.len(),
                        stored,
                    });
                }
            } else if batch.iter().any(|t| t.next.is_some()) {
                return Err(Error::Environment("successor returned at the last stage".into()));
            }
            let pick = self.env_rng.random_range(0..n);
            total += batch[pick].reward;
            let phi = feats[idx].clone();
            let reg = &mut self.regressions[h];
            self.diagnostics.elliptic_potential[h] += reg.gram.quadratic_form(&phi).max(0.0);
            self.diagnostics.max_feature_norm =
                self.diagnostics.max_feature_norm.max(dot(&phi, &phi).sqrt());
            reg.gram.update(&phi)?;
            let controls = env.controls(&actions[idx]);
            stages.push(StageRecord {
                action: idx,
                phi,
                rewards: batch.iter().map(|t| t.reward).collect(),
                controls,
                successors,
            });
            if let Some(next) = batch.into_iter().nth(pick).and_then(|t| t.next) {
                state = next;
            }
        }
        self.records.push(EpisodeRecord { stages });
        Ok(total)
    }

    /// Persistable weights of a plan.
    pub fn stage_weights(&self, plan: &QView) -> StageWeights {
        StageWeights {
            env: self.env.name().to_string(),
            config: serde_json::to_value(&self.cfg).unwrap_or(serde_json::Value::Null),
            episodes: self.records.len(),
            orientation: plan.orientation(),
            lambda: self.cfg.lambda,
            stages: (0..plan.horizon())
                .map(|h| StageEntry {
                    weights: plan.stage(h).weights.clone(),
                    gram: self.regressions[h].gram.matrix().to_vec(),
                    gram_inverse: self.regressions[h].gram.inverse().to_vec(),
                    count: self.regressions[h].gram.count(),
                })
                .collect(),
        }
    }
}

pub fn train<E: Environment>(env: &E, cfg: &LearnConfig) -> Result<TrainingResult> {
    train_with(env, cfg, |_| {})
}

/// Runs `cfg.episodes` episodes, calling `callback` after each rollout.
pub fn train_with<E, F>(env: &E, cfg: &LearnConfig, mut callback: F) -> Result<TrainingResult>
where
    E: Environment,
    F: FnMut(&EpisodeInfo),
{
    let start = Instant::now();
    let mut learner = Learner::new(env, cfg.clone())?;
    let mut returns = Vec::with_capacity(cfg.episodes);
    let mut checkpoints = Vec::new();
    for k in 1..=cfg.episodes {
        let plan = learner.plan()?;
        if k > 1 && (k - 1) % cfg.checkpoint_every == 0 {
            checkpoints.push(Checkpoint {
                episode: k - 1,
                weights: plan.weights(),
            });
        }
        let ret = learner.rollout(&plan)?;
        returns.push(ret);
        callback(&EpisodeInfo {
            episode: k,
            plan: &plan,
            episode_return: ret,
        });
    }
    let plan = learner.plan()?;
    if checkpoints.last().is_none_or(|c| c.episode != cfg.episodes) {
        checkpoints.push(Checkpoint {
            episode: cfg.episodes,
            weights: plan.weights(),
        });
    }
    let mut diagnostics = learner.diagnostics().clone();
    diagnostics.clamped_bonus = learner.regressions().iter().map(|r| r.gram.clamp_count()).sum();
    Ok(TrainingResult {
        weights: learner.stage_weights(&plan),
        checkpoints,
        returns,
        diagnostics,
        beta: learner.beta(),
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// A stationary-in-weights decision rule for validation rollouts.
pub trait Policy<E: Environment>: Sync {
    fn choose(
        &self,
        env: &E,
        state: &E::State,
        stage: usize,
        actions: &[E::Action],
        rng: &mut ChaCha8Rng,
    ) -> usize;
}

impl<E: Environment> Policy<E> for QView {
    fn choose(
        &self,
        env: &E,
        state: &E::State,
        stage: usize,
        actions: &[E::Action],
        _rng: &mut ChaCha8Rng,
    ) -> usize {
        let feats: Vec<Vec<f64>> = actions.iter().map(|a| env.features(state, stage, a)).collect();
        self.greedy(stage, &feats).0
    }
}

/// Uniformly random action at every stage.
#[derive(Debug, Clone, Copy, Default)]
pub struct UniformPolicy;

impl<E: Environment> Policy<E> for UniformPolicy {
    fn choose(
        &self,
        _env: &E,
        _state: &E::State,
        _stage: usize,
        actions: &[E::Action],
        rng: &mut ChaCha8Rng,
    ) -> usize {
        rng.random_range(0..actions.len())
    }
}

/// Total reward of one rollout with single draws.
pub fn rollout_return<E: Environment, P: Policy<E> + ?Sized>(
    env: &E,
    policy: &P,
    rng: &mut ChaCha8Rng,
) -> f64 {
    let mut state = env.initial_state(rng);
    let mut total = 0.0;
    for h in 0..env.horizon() {
        let actions = env.actions(&state, h);
        let a = policy.choose(env, &state, h, &actions, rng);
        let mut batch = env.sample_batch(&state, h, &actions[a], 1, rng);
        let t = batch.pop().expect("one draw");
        total += t.reward;
        match t.next {
            Some(next) => state = next,
            None => break,
        }
    }
    total
}

/// `episodes` independent rollouts; episode `i` uses stream `i` of `seed`.
pub fn evaluate_policy<E, P>(env: &E, policy: &P, episodes: usize, seed: u64) -> Vec<f64>
where
    E: Environment,
    P: Policy<E> + ?Sized,
{
    (0..episodes)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(seed, i as u64);
            rollout_return(env, policy, &mut rng)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageEntry {
    pub weights: Vec<f64>,
    /// Row-major `Lambda_h`.
    pub gram: Vec<f64>,
    pub gram_inverse: Vec<f64>,
    pub count: u64,
}

/// Persisted per-stage weights and Gram matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageWeights {
    pub env: String,
    pub config: serde_json::Value,
    pub episodes: usize,
    pub orientation: Orientation,
    pub lambda: f64,
    pub stages: Vec<StageEntry>,
}

impl StageWeights {
    /// Rebuilds the Q-functions against `env` with bonus multiplier `beta`.
    pub fn to_view<E: Environment>(&self, env: &E, beta: f64) -> Result<QView> {
        check_dim(env.horizon(), self.stages.len())?;
        let stages = self
            .stages
            .iter()
            .enumerate()
            .map(|(h, s)| {
                check_dim(env.feature_dim(h), s.weights.len())?;
                StageQ::new(
                    s.weights.clone(),
                    s.gram_inverse.clone(),
                    beta,
                    self.orientation,
                    env.value_cap(h),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(QView::new(stages, self.orientation))
    }

    pub fn weights(&self) -> Vec<Vec<f64>> {
        self.stages.iter().map(|s| s.weights.clone()).collect()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(path)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lazy::DeltaMode;
    use approx::assert_abs_diff_eq;

    /// One-dimensional chain: feature 1, reward `rewards[h]`, single action.
    struct Chain {
        rewards: Vec<f64>,
    }

    impl Environment for Chain {
        type State = ();
        type Action = ();
        fn name(&self) -> &str {
            "chain"
        }
        fn horizon(&self) -> usize {
            self.rewards.len()
        }
        fn feature_dim(&self, _stage: usize) -> usize {
            1
        }
        fn initial_state<R: Rng + ?Sized>(&self, _rng: &mut R) {}
        fn actions(&self, _state: &(), _stage: usize) -> Vec<()> {
            vec![()]
        }
        fn features(&self, _state: &(), _stage: usize, _action: &()) -> Vec<f64> {
            vec![1.0]
        }
        fn sample_batch<R: Rng + ?Sized>(
            &self,
            _state: &(),
            stage: usize,
            _action: &(),
            n: usize,
            _rng: &mut R,
        ) -> Vec<Transition<()>> {
            let next = (stage + 1 < self.rewards.len()).then_some(());
            vec![Transition { reward: self.rewards[stage], next }; n]
        }
        fn deterministic_rewards(&self) -> bool {
            true
        }
        fn value_cap(&self, stage: usize) -> Option<f64> {
            Some((self.rewards.len() - stage) as f64)
        }
    }

    /// Two actions with fixed rewards and noisy features; used for greedy and ridge checks.
    struct TwoArm;

    impl Environment for TwoArm {
        type State = ();
        type Action = usize;
        fn name(&self) -> &str {
            "two-arm"
        }
        fn horizon(&self) -> usize {
            1
        }
        fn feature_dim(&self, _stage: usize) -> usize {
            2
        }
        fn initial_state<R: Rng + ?Sized>(&self, _rng: &mut R) {}
        fn actions(&self, _state: &(), _stage: usize) -> Vec<usize> {
            vec![0, 1]
        }
        fn features(&self, _state: &(), _stage: usize, a: &usize) -> Vec<f64> {
            if *a == 0 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            }
        }
        fn sample_batch<R: Rng + ?Sized>(
            &self,
            _state: &(),
            _stage: usize,
            a: &usize,
            n: usize,
            rng: &mut R,
        ) -> Vec<Transition<()>> {
            (0..n)
                .map(|_| Transition {
                    reward: if *a == 0 { 0.3 } else { rng.random_range(0.0..1.0) },
                    next: None,
                })
                .collect()
        }
        fn deterministic_rewards(&self) -> bool {
            false
        }
    }

    fn cfg(episodes: usize, o: Orientation) -> LearnConfig {
        LearnConfig {
            episodes,
            lambda: 1.0,
            beta: BetaSchedule::Constant { beta: 0.0 },
            risk: RiskConfig::mean(2, o),
            evaluation: Evaluation::Full,
            seed: 3,
            checkpoint_every: 100,
        }
    }

    #[test]
    fn q_value_examples() {
        let g = GramState::new(1, 1.0).unwrap();
        assert_eq!(q_value(&[0.0], &g, &[1.0], 0.0, Orientation::Minimize, None), 0.0);
        // w.phi = 1, bonus = 0.5 (Lambda = 4)
        let mut g4 = GramState::new(1, 1.0).unwrap();
        g4.update(&[3f64.sqrt()]).unwrap();
        assert_abs_diff_eq!(g4.bonus(&[1.0]), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(
            q_value(&[1.0], &g4, &[1.0], 1.0, Orientation::Minimize, None),
            0.5,
            epsilon = 1e-15
        );
        assert_eq!(q_value(&[0.2], &g4, &[1.0], 1.0, Orientation::Minimize, None), 0.0);
        assert_abs_diff_eq!(
            q_value(&[1.0], &g4, &[1.0], 1.0, Orientation::Maximize, Some(1.2)),
            1.2,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            q_value(&[1.0], &g4, &[1.0], 1.0, Orientation::Maximize, None),
            1.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn stage_q_matches_q_value() {
        let mut g = GramState::new(3, 0.5).unwrap();
        g.update(&[0.3, -0.2, 0.9]).unwrap();
        g.update(&[0.1, 0.4, 0.0]).unwrap();
        let w = vec![0.5, 1.0, -0.25];
        let s = StageQ::new(w.clone(), g.inverse().to_vec(), 0.7, Orientation::Minimize, None).unwrap();
        let phi = [0.2, 0.6, 0.1];
        assert_abs_diff_eq!(
            s.value(&phi),
            q_value(&w, &g, &phi, 0.7, Orientation::Minimize, None),
            epsilon = 1e-14
        );
    }

    #[test]
    fn beta_schedule() {
        let b = BetaSchedule::Theoretical { c_beta: 1.0, p: 0.1 }
            .resolve(2, 3, 10)
            .unwrap();
        assert_abs_diff_eq!(b, 6.0 * (1200f64).ln().sqrt(), epsilon = 1e-12);
        assert!(BetaSchedule::Constant { beta: -1.0 }.resolve(1, 1, 1).is_err());
    }

    #[test]
    fn first_plan_is_zero() {
        let env = Chain { rewards: vec![0.5, 0.25] };
        let mut l = Learner::new(&env, cfg(3, Orientation::Minimize)).unwrap();
        let plan = l.plan().unwrap();
        assert_eq!(plan.weights(), vec![vec![0.0], vec![0.0]]);
        assert_eq!(plan.q(0, &[1.0]), 0.0);
    }

    #[test]
    fn deterministic_chain_returns_path_sum() {
        let env = Chain { rewards: vec![0.5, 0.25, 0.125] };
        let res = train(&env, &cfg(5, Orientation::Minimize)).unwrap();
        for r in &res.returns {
            assert_abs_diff_eq!(*r, 0.875, epsilon = 1e-15);
        }
        // d = 1, lambda = 1: after k records the last-stage weight is k r / (1 + k)
        let w = res.weights.weights();
        assert_abs_diff_eq!(w[2][0], 5.0 * 0.125 / 6.0, epsilon = 1e-14);
        assert_eq!(res.checkpoints.len(), 1);
        assert_eq!(res.checkpoints[0].episode, 5);
    }

    #[test]
    fn single_record_small_lambda_recovers_target() {
        let env = Chain { rewards: vec![0.4] };
        let mut c = cfg(1, Orientation::Minimize);
        c.lambda = 1e-9;
        let res = train(&env, &c).unwrap();
        assert_abs_diff_eq!(res.weights.weights()[0][0], 0.4, epsilon = 1e-8);
    }

    #[test]
    fn greedy_learns_cheaper_arm() {
        let mut c = cfg(200, Orientation::Minimize);
        c.beta = BetaSchedule::Constant { beta: 0.5 };
        let res = train(&TwoArm, &c).unwrap();
        let view = res.weights.to_view(&TwoArm, 0.0).unwrap();
        assert_eq!(view.greedy(0, &[vec![1.0, 0.0], vec![0.0, 1.0]]).0, 0);

        let mut m = c.clone();
        m.risk.orientation = Orientation::Maximize;
        let res = train(&TwoArm, &m).unwrap();
        let view = res.weights.to_view(&TwoArm, 0.0).unwrap();
        assert_eq!(view.greedy(0, &[vec![1.0, 0.0], vec![0.0, 1.0]]).0, 1);
    }

    #[test]
    fn determinism_and_lazy_equivalence() {
        let mut c = cfg(60, Orientation::Minimize);
        c.beta = BetaSchedule::Constant { beta: 0.2 };
        let env = TwoArm;
        let a = train(&env, &c).unwrap();
        let b = train(&env, &c).unwrap();
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.returns, b.returns);
        let mut lazy = c.clone();
        lazy.evaluation = Evaluation::Lazy {
            p_renew: 1.0,
            delta: DeltaMode::Literal,
        };
        let l = train(&env, &lazy).unwrap();
        assert_eq!(l.weights.weights(), a.weights.weights());
        assert_eq!(l.returns, a.returns);
    }

    #[test]
    fn weights_roundtrip() {
        let env = Chain { rewards: vec![0.5, 0.25] };
        let res = train(&env, &cfg(7, Orientation::Maximize)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.json");
        res.weights.save(&path).unwrap();
        let back = StageWeights::load(&path).unwrap();
        let a = res.weights.to_view(&env, 0.3).unwrap();
        let b = back.to_view(&env, 0.3).unwrap();
        for h in 0..2 {
            assert!((a.q(h, &[1.0]) - b.q(h, &[1.0])).abs() <= 1e-12);
        }
        assert!(back.to_view(&Chain { rewards: vec![0.1] }, 0.0).is_err());
    }

    #[test]
    fn evaluation_is_order_independent() {
        let env = TwoArm;
        let a = evaluate_policy(&env, &UniformPolicy, 200, 9);
        let mut rng = stream_rng(9, 17);
        assert_eq!(a[17], rollout_return(&env, &UniformPolicy, &mut rng));
        assert!(evaluate_policy(&env, &UniformPolicy, 0, 9).is_empty());
        let chain = Chain { rewards: vec![0.5, 0.25] };
        let view = QView::new(
            vec![
                StageQ::new(vec![0.0], vec![1.0], 0.0, Orientation::Minimize, None).unwrap(),
                StageQ::new(vec![0.0], vec![1.0], 0.0, Orientation::Minimize, None).unwrap(),
            ],
            Orientation::Minimize,
        );
        assert!(evaluate_policy(&chain, &view, 20, 1).iter().all(|&r| r == 0.75));
    }

    #[test]
    fn invalid_configs_rejected() {
        let env = Chain { rewards: vec![0.5] };
        let mut c = cfg(1, Orientation::Minimize);
        c.lambda = 0.0;
        assert!(Learner::new(&env, c).is_err());
        let mut c = cfg(0, Orientation::Minimize);
        c.episodes = 0;
        assert!(Learner::new(&env, c).is_err());
        let mut c = cfg(1, Orientation::Minimize);
        c.evaluation = Evaluation::Lazy {
            p_renew: 1.5,
            delta: DeltaMode::Literal,
        };
        assert!(Learner::new(&env, c).is_err());
    }
}
