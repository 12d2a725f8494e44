//! A [`TabularMdp`] exposed as a learning environment with one-hot features.
//!
//! Transition stages use one-hot `(x, a)` features of length `|X| |A|`; the
//! terminal stage has a single action and one-hot `x` features.

use rand::Rng;

use crate::exact_dp::{StageRow, TabularMdp};
use crate::lsvi::{Environment, QView, Transition};

#[derive(Debug, Clone)]
pub struct TabularEnv {
    mdp: TabularMdp<f64>,
}

impl TabularEnv {
    pub fn new(mdp: TabularMdp<f64>) -> Self {
        Self { mdp }
    }

    pub fn mdp(&self) -> &TabularMdp<f64> {
        &self.mdp
    }

    pub fn one_hot(&self, stage: usize, state: usize, action: usize) -> Vec<f64> {
        let mut phi = vec![0.0; self.feature_dim(stage)];
        if stage + 1 == self.mdp.horizon() {
            phi[state] = 1.0;
        } else {
            phi[state * self.mdp.actions() + action] = 1.0;
        }
        phi
    }

    /// `Q[h][x][a]` of a learned view in the layout of [`crate::exact_dp::ValueTable::q`].
    pub fn q_table(&self, view: &QView) -> Vec<Vec<Vec<f64>>> {
        (0..self.mdp.horizon())
            .map(|h| {
                (0..self.mdp.states())
                    .map(|x| {
                        (0..self.mdp.actions_at(h))
                            .map(|a| view.q(h, &self.one_hot(h, x, a)))
                            .collect()
                    })
                    .collect()
            })
            .collect()
    }

    /// Greedy policy `pi[h][x]` of a view for the transition stages.
    pub fn greedy_policy(&self, view: &QView) -> Vec<Vec<usize>> {
        (0..self.mdp.horizon() - 1)
            .map(|h| {
                (0..self.mdp.states())
                    .map(|x| {
                        let feats: Vec<Vec<f64>> =
                            (0..self.mdp.actions()).map(|a| self.one_hot(h, x, a)).collect();
                        view.greedy(h, &feats).0
                    })
                    .collect()
            })
            .collect()
    }
}

impl Environment for TabularEnv {
    type State = usize;
    type Action = usize;

    fn name(&self) -> &str {
        "tabular"
    }

    fn horizon(&self) -> usize {
        self.mdp.horizon()
    }

    fn feature_dim(&self, stage: usize) -> usize {
        if stage + 1 == self.mdp.horizon() {
            self.mdp.states()
        } else {
            self.mdp.states() * self.mdp.actions()
        }
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        *self.mdp.initial().sample_with(rng.random::<f64>())
    }

    fn actions(&self, _state: &usize, stage: usize) -> Vec<usize> {
        (0..self.mdp.actions_at(stage)).collect()
    }

    fn features(&self, state: &usize, stage: usize, action: &usize) -> Vec<f64> {
        self.one_hot(stage, *state, *action)
    }

    fn sample_batch<R: Rng + ?Sized>(
        &self,
        state: &usize,
        stage: usize,
        action: &usize,
        n: usize,
        rng: &mut R,
    ) -> Vec<Transition<usize>> {
        if stage + 1 == self.mdp.horizon() {
            let reward = self.mdp.terminal()[*state];
            return vec![Transition { reward, next: None }; n];
        }
        (0..n)
            .map(|_| {
                let u = rng.random::<f64>();
                match self.mdp.row(stage, *state, *action) {
                    StageRow::Deterministic { cost, next } => Transition {
                        reward: *cost,
                        next: Some(*next.sample_with(u)),
                    },
                    StageRow::Random { outcomes } => {
                        let &(reward, y) = outcomes.sample_with(u);
                        Transition {
                            reward,
                            next: Some(y),
                        }
                    }
                }
            })
            .collect()
    }

    fn deterministic_rewards(&self) -> bool {
        !self.mdp.has_random_costs()
    }

    fn value_cap(&self, stage: usize) -> Option<f64> {
        Some((self.mdp.horizon() - stage) as f64)
    }
}
