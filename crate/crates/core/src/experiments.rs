//! Run configuration, orchestration of training and validation, summary statistics and
//! the CSV/JSON artifacts written by the command-line tool.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{analytic_mean, analytic_thresholds, threshold_distance, AnalyticPolicy, AssignmentEnv, RewardModel};
use crate::augmented::{Augmented, DEFAULT_GRID_POINTS};
use crate::bandit::{BanditEnv, BanditInit};
use crate::error::{input, Error, Result};
use crate::exact_dp::{self, TabularMdp, ValueTable};
use crate::lazy::{DeltaMode, Evaluation};
use crate::lsvi::{
    evaluate_policy, train, BetaSchedule, Environment, LearnConfig, Policy, StageWeights, TrainingResult,
    UniformPolicy,
};
use crate::risk::{AvarLevel, Orientation, RiskConfig, RiskKind};
use crate::tabular::TabularEnv;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EnvKind {
    #[default]
    Assignment,
    Bandit,
    Tabular,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BetaMode {
    #[default]
    Constant,
    /// `beta` is read as the constant `c_beta` of the theoretical schedule.
    Theoretical,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Full,
    #[default]
    Lazy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RunConfig {
    pub env: EnvKind,
    /// Defaults to 8 (assignment), 4 (bandit) or the horizon of the MDP file.
    pub horizon: Option<usize>,
    pub episodes: usize,
    pub batch_size: usize,
    pub risk_kind: RiskKind,
    pub kappa: f64,
    /// AVaR levels of the augmented kinds; the AVaR weight `kappa` is split evenly.
    pub alpha: Vec<f64>,
    pub lambda: f64,
    pub beta: f64,
    pub beta_schedule: BetaMode,
    pub failure_prob: f64,
    pub evaluation: EvalMode,
    pub p_renew: f64,
    pub delta_mode: DeltaMode,
    pub reward_model: RewardModel,
    pub bandit_init: BanditInit,
    pub arms: usize,
    pub capital: u32,
    /// MDP document for `env = tabular`.
    pub mdp: Option<PathBuf>,
    pub grid_points: usize,
    pub validation_episodes: usize,
    pub seed: u64,
    pub validation_seed: u64,
    pub checkpoint_every: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            env: EnvKind::Assignment,
            horizon: None,
            episodes: 5000,
            batch_size: 1,
            risk_kind: RiskKind::WorstMix,
            kappa: 0.0,
            alpha: vec![0.5],
            lambda: 0.1,
            beta: 0.1,
            beta_schedule: BetaMode::Constant,
            failure_prob: 0.1,
            evaluation: EvalMode::Lazy,
            p_renew: 0.01,
            delta_mode: DeltaMode::Literal,
            reward_model: RewardModel::Deterministic,
            bandit_init: BanditInit::Noninformative,
            arms: 5,
            capital: 3,
            mdp: None,
            grid_points: DEFAULT_GRID_POINTS,
            validation_episodes: 10_000,
            seed: 0,
            validation_seed: 999,
            checkpoint_every: 100,
            out: PathBuf::from("out"),
        }
    }
}

impl RunConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Input(format!("config: {e}")))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json_str(&text)
    }

    pub fn orientation(&self) -> Orientation {
        match self.env {
            EnvKind::Tabular => Orientation::Minimize,
            EnvKind::Assignment | EnvKind::Bandit => Orientation::Maximize,
        }
    }

    pub fn risk(&self) -> Result<RiskConfig<f64>> {
        let o = self.orientation();
        let risk = match self.risk_kind {
            RiskKind::Mean => RiskConfig::mean(self.batch_size, o),
            RiskKind::WorstMix => RiskConfig::worst_mix(self.kappa, self.batch_size, o),
            RiskKind::SemiDev => RiskConfig::semi_dev(self.kappa, self.batch_size, o),
            RiskKind::MeanAvar | RiskKind::Spectral => {
                if self.batch_size != 1 {
                    return input("augmented AVaR kinds use batch size 1");
                }
                if self.alpha.is_empty() {
                    return input("augmented AVaR kinds need at least one alpha level");
                }
                if self.risk_kind == RiskKind::MeanAvar {
                    if self.alpha.len() != 1 {
                        return input("mean-avar takes exactly one alpha level");
                    }
                    RiskConfig::mean_avar(self.kappa, self.alpha[0], o)
                } else {
                    let w = self.kappa / self.alpha.len() as f64;
                    let levels = self.alpha.iter().map(|&level| AvarLevel { weight: w, level }).collect();
                    RiskConfig::spectral(levels, o)
                }
            }
        };
        risk.validate()?;
        Ok(risk)
    }

    pub fn learn_config(&self) -> Result<LearnConfig> {
        let beta = match self.beta_schedule {
            BetaMode::Constant => BetaSchedule::Constant { beta: self.beta },
            BetaMode::Theoretical => BetaSchedule::Theoretical {
                c_beta: self.beta,
                p: self.failure_prob,
            },
        };
        let evaluation = match self.evaluation {
            EvalMode::Full => Evaluation::Full,
            EvalMode::Lazy => Evaluation::Lazy {
                p_renew: self.p_renew,
                delta: self.delta_mode,
            },
        };
        let cfg = LearnConfig {
            episodes: self.episodes,
            lambda: self.lambda,
            beta,
            risk: self.risk()?,
            evaluation,
            seed: self.seed,
            checkpoint_every: self.checkpoint_every,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.validation_episodes == 0 {
            return input("validation-episodes must be positive");
        }
        if self.grid_points == 0 {
            return input("grid-points must be positive");
        }
        if self.env == EnvKind::Tabular && self.mdp.is_none() {
            return input("env tabular needs an mdp file");
        }
        self.learn_config().map(|_| ())
    }

    /// Horizon after applying the environment default.
    pub fn resolved_horizon(&self) -> Option<usize> {
        self.horizon.or(match self.env {
            EnvKind::Assignment => Some(8),
            EnvKind::Bandit => Some(4),
            EnvKind::Tabular => None,
        })
    }
}

/// A concrete environment built from a [`RunConfig`].
pub enum Instance {
    Assignment(AssignmentEnv),
    Bandit(BanditEnv),
    Tabular(TabularEnv),
    AugAssignment(Augmented<AssignmentEnv>),
    AugTabular(Augmented<TabularEnv>),
}

/// Runs `$body` with `$env` bound to the environment inside an [`Instance`].
#[macro_export]
macro_rules! with_env {
    ($inst:expr, $env:ident => $body:expr) => {
        match $inst {
            $crate::experiments::Instance::Assignment($env) => $body,
            $crate::experiments::Instance::Bandit($env) => $body,
            $crate::experiments::Instance::Tabular($env) => $body,
            $crate::experiments::Instance::AugAssignment($env) => $body,
            $crate::experiments::Instance::AugTabular($env) => $body,
        }
    };
}

pub fn load_mdp(path: &Path) -> Result<TabularMdp<f64>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read mdp {}: {e}", path.display())))?;
    TabularMdp::from_json_str(&text).map_err(|e| match e {
        Error::Json(j) => Error::Input(format!("malformed mdp: {j}")),
        other => other,
    })
}

impl Instance {
    pub fn build(cfg: &RunConfig) -> Result<Self> {
        let augmented = cfg.risk_kind.is_augmented();
        let levels = cfg.alpha.len();
        let inst = match cfg.env {
            EnvKind::Assignment => {
                let env = AssignmentEnv::new(cfg.resolved_horizon().unwrap_or(8), cfg.reward_model)?;
                if augmented {
                    Instance::AugAssignment(Augmented::new(env, levels, cfg.grid_points)?)
                } else {
                    Instance::Assignment(env)
                }
            }
            EnvKind::Bandit => {
                if augmented {
                    return input("augmented AVaR kinds need bounded values; the bandit has none");
                }
                let h = cfg.resolved_horizon().unwrap_or(4);
                Instance::Bandit(BanditEnv::new(cfg.arms, cfg.capital, h, cfg.bandit_init)?)
            }
            EnvKind::Tabular => {
                let path = cfg.mdp.as_deref().ok_or_else(|| Error::Input("env tabular needs an mdp file".into()))?;
                let mdp = load_mdp(path)?;
                if let Some(h) = cfg.horizon {
                    if h != mdp.horizon() {
                        return input(format!("horizon {h} does not match the mdp file ({})", mdp.horizon()));
                    }
                }
                let env = TabularEnv::new(mdp);
                if augmented {
                    Instance::AugTabular(Augmented::new(env, levels, cfg.grid_points)?)
                } else {
                    Instance::Tabular(env)
                }
            }
        };
        Ok(inst)
    }

    pub fn horizon(&self) -> usize {
        with_env!(self, env => env.horizon())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStats {
    pub count: usize,
    pub mean: f64,
    /// Unbiased sample standard deviation.
    pub std: f64,
    pub std_error: f64,
    pub min: f64,
    pub max: f64,
    /// Reference mean of the t statistic, when one is known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_statistic: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub training_seconds: Option<f64>,
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased variance; zero for fewer than two samples.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

impl SummaryStats {
    pub fn from_sample(xs: &[f64]) -> Self {
        let std = std_dev(xs);
        Self {
            count: xs.len(),
            mean: mean(xs),
            std,
            std_error: std / (xs.len() as f64).sqrt(),
            min: xs.iter().copied().fold(f64::INFINITY, f64::min),
            max: xs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            reference_mean: None,
            t_statistic: None,
            training_seconds: None,
        }
    }

    pub fn against(mut self, reference: f64, xs: &[f64]) -> Self {
        self.reference_mean = Some(reference);
        self.t_statistic = Some(one_sample_t(xs, reference));
        self
    }
}

fn degenerate_t(diff: f64) -> f64 {
    if diff == 0.0 {
        0.0
    } else {
        f64::INFINITY.copysign(diff)
    }
}

/// One-sample t of `xs` against a known mean.
pub fn one_sample_t(xs: &[f64], mu: f64) -> f64 {
    let diff = mean(xs) - mu;
    let se = (variance(xs) / xs.len() as f64).sqrt();
    if se == 0.0 {
        degenerate_t(diff)
    } else {
        diff / se
    }
}

/// Two-sample Welch statistic of `mean(a) - mean(b)`.
pub fn welch_t(a: &[f64], b: &[f64]) -> f64 {
    let diff = mean(a) - mean(b);
    let se = (variance(a) / a.len() as f64 + variance(b) / b.len() as f64).sqrt();
    if se == 0.0 {
        degenerate_t(diff)
    } else {
        diff / se
    }
}

/// Sorted sample with empirical probabilities `k / M`.
pub fn empirical_cdf(xs: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(k, x)| (x, (k + 1) as f64 / m))
        .collect()
}

/// Percentile bootstrap interval of `std(a) - std(b)`.
///
/// With `paired`, both samples are resampled at the same indices (common random numbers);
/// this needs equal lengths.
pub fn bootstrap_std_diff(
    a: &[f64],
    b: &[f64],
    resamples: usize,
    level: f64,
    paired: bool,
    seed: u64,
) -> Result<(f64, f64)> {
    if paired && a.len() != b.len() {
        return input("paired bootstrap needs samples of equal length");
    }
    if a.len() < 2 || b.len() < 2 || resamples == 0 {
        return input("bootstrap needs two samples of size at least 2");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ra = vec![0.0; a.len()];
    let mut rb = vec![0.0; b.len()];
    let mut diffs = Vec::with_capacity(resamples);
    for _ in 0..resamples {
        if paired {
            for i in 0..a.len() {
                let j = rng.random_range(0..a.len());
                ra[i] = a[j];
                rb[i] = b[j];
            }
        } else {
            for x in ra.iter_mut() {
                *x = a[rng.random_range(0..a.len())];
            }
            for x in rb.iter_mut() {
                *x = b[rng.random_range(0..b.len())];
            }
        }
        diffs.push(std_dev(&ra) - std_dev(&rb));
    }
    diffs.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| diffs[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    Ok((at(tail), at(1.0 - tail)))
}

/// Decimal rendering with 10 significant digits.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..=15).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{x:.9e}")
    }
}

fn write_rows(path: &Path, header: &[&str], rows: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

fn write_json<S: Serialize>(path: &Path, value: &S) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

/// Total rewards from a `validation.csv`.
pub fn read_returns(path: &Path) -> Result<Vec<f64>> {
    let mut r = csv::Reader::from_path(path)
        .map_err(|e| Error::Input(format!("cannot read returns {}: {e}", path.display())))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v = rec
            .get(1)
            .and_then(|s| s.parse::<f64>().ok())
            .ok_or_else(|| Error::Input(format!("bad row in {}", path.display())))?;
        out.push(v);
    }
    Ok(out)
}

pub fn write_validation(dir: &Path, returns: &[f64]) -> Result<()> {
    write_rows(
        &dir.join("validation.csv"),
        &["episode_index", "total_reward"],
        returns.iter().enumerate().map(|(i, r)| vec![i.to_string(), fmt_sig(*r)]),
    )?;
    write_rows(
        &dir.join("cdf.csv"),
        &["reward", "empirical_cdf"],
        empirical_cdf(returns).into_iter().map(|(x, p)| vec![fmt_sig(x), fmt_sig(p)]),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct CurvePoint {
    pub episode: usize,
    pub weight_distance: Option<f64>,
    pub cumulative_reward: f64,
}

/// Checkpoint curve of a run; the weight distance is defined for the assignment problem only.
pub fn learning_curve(cfg: &RunConfig, res: &TrainingResult) -> Result<Vec<CurvePoint>> {
    let thresholds = match (cfg.env, cfg.risk_kind.is_augmented()) {
        (EnvKind::Assignment, false) => Some(analytic_thresholds(cfg.resolved_horizon().unwrap_or(8))),
        _ => None,
    };
    let mut cum = vec![0.0; res.returns.len() + 1];
    for (i, r) in res.returns.iter().enumerate() {
        cum[i + 1] = cum[i] + r;
    }
    res.checkpoints
        .iter()
        .map(|c| {
            let weight_distance = match &thresholds {
                Some(t) => Some(threshold_distance(&c.weights, t)?),
                None => None,
            };
            Ok(CurvePoint {
                episode: c.episode,
                weight_distance,
                cumulative_reward: cum[c.episode],
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainReport {
    pub episodes: usize,
    pub beta: f64,
    pub seconds: f64,
    pub final_weight_distance: Option<f64>,
    pub renewals: u64,
    pub lazy_skips: u64,
    pub elliptic_potential: Vec<f64>,
    pub max_feature_norm: f64,
}

/// Trains, then writes `weights.json`, `curve.csv` and `train.json` into `cfg.out`.
pub fn run_train(cfg: &RunConfig) -> Result<TrainReport> {
    cfg.validate()?;
    let learn = cfg.learn_config()?;
    let inst = Instance::build(cfg)?;
    let mut res = with_env!(&inst, env => train(env, &learn))?;
    fs::create_dir_all(&cfg.out)?;
    res.weights.config = serde_json::json!({ "run": cfg, "learn": res.weights.config });
    res.weights.save(cfg.out.join("weights.json"))?;
    let curve = learning_curve(cfg, &res)?;
    write_rows(
        &cfg.out.join("curve.csv"),
        &["episode", "weight_distance", "cumulative_reward"],
        curve.iter().map(|p| {
            vec![
                p.episode.to_string(),
                p.weight_distance.map(fmt_sig).unwrap_or_default(),
                fmt_sig(p.cumulative_reward),
            ]
        }),
    )?;
    let d = &res.diagnostics;
    let report = TrainReport {
        episodes: cfg.episodes,
        beta: res.beta,
        seconds: res.seconds,
        final_weight_distance: curve.last().and_then(|p| p.weight_distance),
        renewals: d.renewals,
        lazy_skips: d.lazy_skips,
        elliptic_potential: d.elliptic_potential.clone(),
        max_feature_norm: d.max_feature_norm,
    };
    write_json(&cfg.out.join("train.json"), &report)?;
    Ok(report)
}

/// Which policy [`run_evaluate`] rolls out.
#[derive(Debug, Clone, PartialEq)]
pub enum EvalPolicy {
    Weights(PathBuf),
    /// Analytical thresholds (assignment) or the exact DP policy (tabular).
    Oracle,
    Uniform,
}

/// Deterministic table `pi[h][x]`; stages past the table take action 0.
#[derive(Debug, Clone)]
pub struct TablePolicy(pub Vec<Vec<usize>>);

impl Policy<TabularEnv> for TablePolicy {
    fn choose(&self, _env: &TabularEnv, state: &usize, stage: usize, _actions: &[usize], _rng: &mut ChaCha8Rng) -> usize {
        self.0.get(stage).map_or(0, |row| row[*state])
    }
}

fn evaluate_instance(inst: &Instance, cfg: &RunConfig, policy: &EvalPolicy) -> Result<Vec<f64>> {
    let (m, seed) = (cfg.validation_episodes, cfg.validation_seed);
    match policy {
        EvalPolicy::Uniform => Ok(with_env!(inst, env => evaluate_policy(env, &UniformPolicy, m, seed))),
        EvalPolicy::Weights(path) => {
            let w = StageWeights::load(path)?;
            with_env!(inst, env => {
                let view = w.to_view(env, 0.0)?;
                Ok(evaluate_policy(env, &view, m, seed))
            })
        }
        EvalPolicy::Oracle => match inst {
            Instance::Assignment(env) => {
                Ok(evaluate_policy(env, &AnalyticPolicy::new(env.horizon()), m, seed))
            }
            Instance::Tabular(env) => {
                let table = exact_dp::solve(env.mdp(), &cfg.risk()?)?;
                Ok(evaluate_policy(env, &TablePolicy(table.policy), m, seed))
            }
            _ => input("no oracle policy for this environment"),
        },
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluationSummary {
    pub stats: SummaryStats,
    pub config: RunConfig,
}

/// Validation rollouts; writes `validation.csv`, `cdf.csv` and `summary.json`.
pub fn run_evaluate(cfg: &RunConfig, policy: &EvalPolicy) -> Result<EvaluationSummary> {
    cfg.validate()?;
    if let EvalPolicy::Weights(p) = policy {
        if !p.exists() {
            return input(format!("weights file {} not found", p.display()));
        }
    }
    let inst = Instance::build(cfg)?;
    let returns = evaluate_instance(&inst, cfg, policy)?;
    let mut stats = SummaryStats::from_sample(&returns);
    if cfg.env == EnvKind::Assignment {
        // Bernoulli rewards have the same conditional means
        stats = stats.against(analytic_mean(inst.horizon()), &returns);
    }
    if let EvalPolicy::Weights(p) = policy {
        let train_log = p.with_file_name("train.json");
        if let Ok(text) = fs::read_to_string(train_log) {
            let v: serde_json::Value = serde_json::from_str(&text)?;
            stats.training_seconds = v.get("seconds").and_then(|s| s.as_f64());
        }
    }
    fs::create_dir_all(&cfg.out)?;
    write_validation(&cfg.out, &returns)?;
    let summary = EvaluationSummary {
        stats,
        config: cfg.clone(),
    };
    write_json(&cfg.out.join("summary.json"), &summary)?;
    Ok(summary)
}

#[derive(Debug, Clone, Serialize)]
pub struct ThresholdTable {
    pub horizon: usize,
    /// `thresholds[h][j]`: expected job value of rank `j` among the `H - h` remaining workers.
    pub thresholds: Vec<Vec<f64>>,
    pub expected_total: f64,
}

pub fn run_oracle(horizon: usize) -> Result<ThresholdTable> {
    if horizon == 0 || horizon > 64 {
        return input(format!("oracle horizon must lie in 1..=64, got {horizon}"));
    }
    Ok(ThresholdTable {
        horizon,
        thresholds: analytic_thresholds(horizon),
        expected_total: analytic_mean(horizon),
    })
}

pub fn run_dp(mdp_path: &Path, risk: &RiskConfig<f64>) -> Result<ValueTable<f64>> {
    let mdp = load_mdp(mdp_path)?;
    exact_dp::solve(&mdp, risk)
}

#[derive(Debug, Clone, Serialize)]
pub struct Comparison {
    pub a: SummaryStats,
    pub b: SummaryStats,
    pub welch_t: f64,
    pub mean_diff: f64,
    pub std_diff: f64,
    /// 95% percentile bootstrap interval of `std(a) - std(b)`.
    pub std_diff_ci: (f64, f64),
    pub paired: bool,
}

pub const BOOTSTRAP_RESAMPLES: usize = 2000;

pub fn compare(a: &[f64], b: &[f64], seed: u64) -> Result<Comparison> {
    let paired = a.len() == b.len();
    let sa = SummaryStats::from_sample(a);
    let sb = SummaryStats::from_sample(b);
    Ok(Comparison {
        welch_t: welch_t(a, b),
        mean_diff: sa.mean - sb.mean,
        std_diff: sa.std - sb.std,
        std_diff_ci: bootstrap_std_diff(a, b, BOOTSTRAP_RESAMPLES, 0.95, paired, seed)?,
        paired,
        a: sa,
        b: sb,
    })
}

/// Compares two `validation.csv` files and writes `compare.json` into `out`.
pub fn run_compare(a: &Path, b: &Path, out: &Path, seed: u64) -> Result<Comparison> {
    let c = compare(&read_returns(a)?, &read_returns(b)?, seed)?;
    fs::create_dir_all(out)?;
    write_json(&out.join("compare.json"), &c)?;
    Ok(c)
}
