//! Environment wrapper for the augmented AVaR controls `eta`.
//!
//! Every base action is paired with one point of a per-stage grid for each AVaR
//! level; the features are the Kronecker product of the base features with a
//! one-hot code of the grid point.

use rand::Rng;

use crate::error::{input, Result};
use crate::lsvi::{Environment, Transition};

pub const DEFAULT_GRID_POINTS: usize = 21;

#[derive(Debug, Clone, PartialEq)]
pub struct AugAction<A> {
    pub base: A,
    /// Index of the `eta` combination in the stage grid.
    pub code: usize,
    pub etas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Augmented<E> {
    inner: E,
    levels: usize,
    /// `grids[h]`: the one-dimensional `eta` grid at stage `h`.
    grids: Vec<Vec<f64>>,
}

fn linspace(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    if points == 1 {
        return vec![lo];
    }
    (0..points)
        .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
        .collect()
}

impl<E: Environment> Augmented<E> {
    /// Uniform grid on `[0, value_cap(h)]` at every stage.
    pub fn new(inner: E, levels: usize, points: usize) -> Result<Self> {
        let mut bounds = Vec::with_capacity(inner.horizon());
        for h in 0..inner.horizon() {
            match inner.value_cap(h) {
                Some(cap) => bounds.push((0.0, cap)),
                None => {
                    return input(format!(
                        "stage {h} has no value bound; give the eta range explicitly"
                    ))
                }
            }
        }
        Self::with_bounds(inner, levels, points, &bounds)
    }

    pub fn with_bounds(inner: E, levels: usize, points: usize, bounds: &[(f64, f64)]) -> Result<Self> {
        if levels == 0 || points == 0 {
            return input("augmented controls need at least one level and one grid point");
        }
        if bounds.len() != inner.horizon() {
            return input("one eta range per stage is required");
        }
        let grids = bounds.iter().map(|&(lo, hi)| linspace(lo, hi, points)).collect();
        Ok(Self {
            inner,
            levels,
            grids,
        })
    }

    pub fn inner(&self) -> &E {
        &self.inner
    }

    pub fn grid(&self, stage: usize) -> &[f64] {
        &self.grids[stage]
    }

    fn combos(&self, stage: usize) -> usize {
        self.grids[stage].len().pow(self.levels as u32)
    }

    fn etas(&self, stage: usize, mut code: usize) -> Vec<f64> {
        let g = &self.grids[stage];
        (0..self.levels)
            .map(|_| {
                let v = g[code % g.len()];
                code /= g.len();
                v
            })
            .collect()
    }
}

impl<E: Environment> Environment for Augmented<E> {
    type State = E::State;
    type Action = AugAction<E::Action>;

    fn name(&self) -> &str {
        self.inner.name()
    }

    fn horizon(&self) -> usize {
        self.inner.horizon()
    }

    fn feature_dim(&self, stage: usize) -> usize {
        self.inner.feature_dim(stage) * self.combos(stage)
    }

    fn initial_state<R: Rng + ?Sized>(&self, rng: &mut R) -> E::State {
        self.inner.initial_state(rng)
    }

    fn actions(&self, state: &E::State, stage: usize) -> Vec<Self::Action> {
        let base = self.inner.actions(state, stage);
        let combos = self.combos(stage);
        let mut out = Vec::with_capacity(base.len() * combos);
        for a in base {
            for code in 0..combos {
                out.push(AugAction {
                    base: a.clone(),
                    code,
                    etas: self.etas(stage, code),
                });
            }
        }
        out
    }

    fn features(&self, state: &E::State, stage: usize, action: &Self::Action) -> Vec<f64> {
        let phi = self.inner.features(state, stage, &action.base);
        let combos = self.combos(stage);
        let mut out = vec![0.0; phi.len() * combos];
        for (i, p) in phi.iter().enumerate() {
            out[i * combos + action.code] = *p;
        }
        out
    }

    fn sample_batch<R: Rng + ?Sized>(
        &self,
        state: &E::State,
        stage: usize,
        action: &Self::Action,
        n: usize,
        rng: &mut R,
    ) -> Vec<Transition<E::State>> {
        self.inner.sample_batch(state, stage, &action.base, n, rng)
    }

    fn deterministic_rewards(&self) -> bool {
        self.inner.deterministic_rewards()
    }

    fn value_cap(&self, stage: usize) -> Option<f64> {
        self.inner.value_cap(stage)
    }

    fn controls(&self, action: &Self::Action) -> Vec<f64> {
        action.etas.clone()
    }
}
