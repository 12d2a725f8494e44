//! Bayesian budget-allocation bandit with normal-inverse-gamma information states.
//!
//! A capital of `C` units is split over `n` arms at each of `H` stages. Every
//! pulled arm yields one Gaussian observation; the payoff is `sum_j a_j R_j`.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{input, Result};
use crate::lsvi::{Environment, Transition};

/// Normal-inverse-gamma hyperparameters of one arm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Nig {
    pub mu: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub beta: f64,
}

impl Nig {
    pub fn update(&self, r: f64) -> Nig {
        let k = self.kappa;
        Nig {
            mu: k / (k + 1.0) * self.mu + r / (k + 1.0),
            kappa: k + 1.0,
            alpha: self.alpha + 0.5,
            beta: self.beta + k * (r - self.mu).powi(2) / (2.0 * (k + 1.0)),
        }
    }

    /// Posterior mean of the variance, `sqrt(beta / (alpha - 1))`.
    pub fn sigma(&self) -> f64 {
        (self.beta / (self.alpha - 1.0)).sqrt()
    }

    /// Standard deviation after a hypothetical observation equal to the mean.
    pub fn sigma_after_pull(&self) -> f64 {
        (self.beta / (self.alpha - 0.5)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BanditInit {
    /// `(1, 1, 2, 1)` for every arm.
    #[default]
    Noninformative,
    /// `(0.5, 1, 2, 0.04)` for every arm.
    Centered,
}

impl BanditInit {
    pub fn prior(self) -> Nig {
        match self {
            BanditInit::Noninformative => Nig {
                mu: 1.0,
                kappa: 1.0,
                alpha: 2.0,
                beta: 1.0,
            },
            BanditInit::Centered => Nig {
                mu: 0.5,
                kappa: 1.0,
                alpha: 2.0,
                beta: 0.04,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BanditTask {
    pub mu: Vec<f64>,
    pub sigma: Vec<f64>,
}

impl BanditTask {
    /// `mu_j ~ U(0.3, 0.7)`, `sigma_j ~ U(0.15, 0.25)`.
    pub fn sample<R: Rng + ?Sized>(arms: usize, rng: &mut R) -> Self {
        let mut mu = Vec::with_capacity(arms);
        let mut sigma = Vec::with_capacity(arms);
        for _ in 0..arms {
            mu.push(rng.random_range(0.3..0.7));
            sigma.push(rng.random_range(0.15..0.25));
        }
        Self { mu, sigma }
    }
}

/// Information state plus the hidden task, which features never read.
#[derive(Debug, Clone, PartialEq)]
pub struct BanditState {
    pub arms: Vec<Nig>,
    pub task: BanditTask,
}

/// All `a in Z_+^n` with `sum a = capital`, largest first component first.
pub fn enumerate_actions(arms: usize, capital: u32) -> Vec<Vec<u32>> {
    fn fill(arm: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if arm + 1 == cur.len() {
            cur[arm] = left;
            out.push(cur.clone());
            return;
        }
        for a in (0..=left).rev() {
            cur[arm] = a;
            fill(arm + 1, left - a, cur, out);
        }
    }
    let mut out = Vec::new();
    if arms == 0 {
        return out;
    }
    fill(0, capital, &mut vec![0; arms], &mut out);
    out
}

/// Total payoff and one observation per pulled arm.
pub fn sample_rewards<R: Rng + ?Sized>(
    task: &BanditTask,
    allocation: &[u32],
    rng: &mut R,
) -> (f64, Vec<Option<f64>>) {
    let mut total = 0.0;
    let obs = allocation
        .iter()
        .enumerate()
        .map(|(j, &a)| {
            (a > 0).then(|| {
                let r = if task.sigma[j] > 0.0 {
                    Normal::new(task.mu[j], task.sigma[j])
                        .expect("positive standard deviation")
                        .sample(rng)
                } else {
                    task.mu[j]
                };
                total += a as f64 * r;
                r
            })
        })
        .collect();
    (total, obs)
}

pub fn posterior_update(arms: &[Nig], observations: &[Option<f64>]) -> Vec<Nig> {
    arms.iter()
        .zip(observations)
        .map(|(p, o)| match o {
            Some(r) => p.update(*r),
            None => *p,
        })
        .collect()
}

pub fn hypothetical_sigma(arms: &[Nig], allocation: &[u32]) -> Vec<f64> {
    arms.iter()
        .zip(allocation)
        .map(|(p, &a)| if a > 0 { p.sigma_after_pull() } else { p.sigma() })
        .collect()
}

/// `(mu_l, sigma_hat_l, sum_j a_j mu_j)` with arms sorted by descending `mu + 3 sigma_hat`.
pub fn features(arms: &[Nig], allocation: &[u32]) -> Vec<f64> {
    let n = arms.len();
    let sigma = hypothetical_sigma(arms, allocation);
    let mut order: Vec<usize> = (0..n).collect();
    let score = |j: usize| arms[j].mu + 3.0 * sigma[j];
    order.sort_by(|&a, &b| {
        score(b)
            .total_cmp(&score(a))
            .then(arms[b].mu.total_cmp(&arms[a].mu))
            .then(sigma[b].total_cmp(&sigma[a]))
    });
    let mut phi = Vec::with_capacity(2 * n + 1);
    phi.extend(order.iter().map(|&j| arms[j].mu));
    phi.extend(order.iter().map(|&j| sigma[j]));
    phi.push(arms.iter().zip(allocation).map(|(p, &a)| a as f64 * p.mu).sum());
    phi
}

#[derive(Debug, Clone)]
pub struct BanditEnv {
    arms: usize,
    capital: u32,
    horizon: usize,
    prior: Nig,
    allocations: Vec<Vec<u32>>,
}

impl BanditEnv {
    pub fn new(arms: usize, capital: u32, horizon: usize, init: BanditInit) -> Result<Self> {
        Self::with_prior(arms, capital, horizon, init.prior())
    }

    pub fn with_prior(arms: usize, capital: u32, horizon: usize, prior: Nig) -> Result<Self> {
        if arms == 0 || horizon == 0 {
            return input("bandit needs at least one arm and one stage");
        }
        if !(prior.kappa > 0.0 && prior.alpha > 1.0 && prior.beta > 0.0) {
            return input("prior needs kappa > 0, alpha > 1 and beta > 0");
        }
        Ok(Self {
            arms,
            capital,
            horizon,
            prior,
            allocations: enumerate_actions(arms, capital),
        })
    }

    pub fn allocations(&self) -> &[Vec<u32>] {
        &self.allocations
    }

    pub fn arms(&self) -> usize {
        self.arms
    }

    pub fn capital(&self) -> u32 {
        self.capital
    }
}

impl Environment for BanditEnv {
    type State = BanditState;
    type Action = usize;

    fn name(&self) -> &str {
        "bandit"
    }

    fn horizon(&self) -> usize {
        self.horizon
    }

    fn feature_dim(&self, _stage: usize) -> usize {
        2 * self.arms + 1
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> BanditState {
        BanditState {
            arms: vec![self.prior; self.arms],
            task: BanditTask::sample(self.arms, rng),
        }
    }

    fn actions(&self, _state: &BanditState, _stage: usize) -> Vec<usize> {
        (0..self.allocations.len()).collect()
    }

    fn features(&self, state: &BanditState, _stage: usize, action: &usize) -> Vec<f64> {
        features(&state.arms, &self.allocations[*action])
    }

    fn sample_batch<R: Rng + ?Sized>(
        &self,
        state: &BanditState,
        stage: usize,
        action: &usize,
        n: usize,
        rng: &mut R,
    ) -> Vec<Transition<BanditState>> {
        let alloc = &self.allocations[*action];
        (0..n)
            .map(|_| {
                let (reward, obs) = sample_rewards(&state.task, alloc, rng);
                let next = (stage + 1 < self.horizon).then(|| BanditState {
                    arms: posterior_update(&state.arms, &obs),
                    task: state.task.clone(),
                });
                Transition { reward, next }
            })
            .collect()
    }

    fn deterministic_rewards(&self) -> bool {
        false
    }
}
