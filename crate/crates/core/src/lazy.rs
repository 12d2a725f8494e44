//! Lazy policy evaluation: cached successor actions refreshed with probability
//! `p_renew`, with the improvement-average correction `Δ`.

use serde::{Deserialize, Serialize};

use crate::risk::Orientation;

/// How the improvement sum of a pass is turned into `Δ`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeltaMode {
    /// Sum of improvements over the batch members, divided by the number of renewed records.
    #[default]
    Literal,
    /// Same sum divided by `N` times the number of renewed records.
    PerObservation,
}

/// Successor evaluation used in the backward pass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "mode")]
pub enum Evaluation {
    Full,
    Lazy { p_renew: f64, delta: DeltaMode },
}

impl Default for Evaluation {
    fn default() -> Self {
        Evaluation::Lazy {
            p_renew: 0.01,
            delta: DeltaMode::Literal,
        }
    }
}

/// Running state of one `(episode, stage)` backward pass.
#[derive(Debug, Clone)]
pub struct RenewalPass {
    improvement: f64,
    renewed: usize,
    batch: usize,
    mode: DeltaMode,
}

impl RenewalPass {
    pub fn new(batch: usize, mode: DeltaMode) -> Self {
        Self {
            improvement: 0.0,
            renewed: 0,
            batch,
            mode,
        }
    }

    /// Current correction; zero while no record has been renewed in this pass.
    pub fn delta(&self) -> f64 {
        if self.renewed == 0 {
            return 0.0;
        }
        match self.mode {
            DeltaMode::Literal => self.improvement / self.renewed as f64,
            DeltaMode::PerObservation => self.improvement / (self.renewed * self.batch) as f64,
        }
    }

    pub fn record(&mut self, improvement: f64) {
        self.improvement += improvement;
        self.renewed += 1;
    }

    pub fn renewed(&self) -> usize {
        self.renewed
    }

    pub fn improvement(&self) -> f64 {
        self.improvement
    }
}

/// First index attaining the optimum of `values` for the orientation.
pub fn greedy(values: impl IntoIterator<Item = f64>, orientation: Orientation) -> (usize, f64) {
    let mut iter = values.into_iter().enumerate();
    let (mut best, mut value) = iter.next().expect("greedy over an empty action list");
    for (i, v) in iter {
        if orientation.improves(v, value) {
            best = i;
            value = v;
        }
    }
    (best, value)
}

/// Exact successor values `opt_a Q(y_j, a)` for every batch member.
pub fn full_values<F>(actions: &[usize], q: F, orientation: Orientation, out: &mut Vec<f64>)
where
    F: Fn(usize, usize) -> f64,
{
    out.clear();
    for (j, &n) in actions.iter().enumerate() {
        out.push(greedy((0..n).map(|a| q(j, a)), orientation).1);
    }
}

/// Successor values for one record.
///
/// `actions[j]` is the action count at successor `j`, `q(j, a)` the next-stage Q value and
/// `stored[j]` the cached action. When `renew` holds every member is optimized, the cache
/// replaced and the improvement added to `pass`; otherwise `Q(y_j, stored_j) - Δ` is returned.
pub fn lazy_values<F>(
    actions: &[usize],
    q: F,
    stored: &mut [usize],
    pass: &mut RenewalPass,
    renew: bool,
    orientation: Orientation,
    out: &mut Vec<f64>,
) where
    F: Fn(usize, usize) -> f64,
{
    out.clear();
    if renew {
        let mut improvement = 0.0;
        for (j, &n) in actions.iter().enumerate() {
            assert!(stored[j] < n, "stored action outside the successor's action list");
            let (best, value) = greedy((0..n).map(|a| q(j, a)), orientation);
            improvement += q(j, stored[j]) - value;
            stored[j] = best;
            out.push(value);
        }
        pass.record(improvement);
    } else {
        let delta = pass.delta();
        for (j, &a) in stored.iter().enumerate() {
            assert!(a < actions[j], "stored action outside the successor's action list");
            out.push(q(j, a) - delta);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{aggregate, RiskConfig};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn table(rows: &[&[f64]]) -> (Vec<usize>, Vec<Vec<f64>>) {
        (rows.iter().map(|r| r.len()).collect(), rows.iter().map(|r| r.to_vec()).collect())
    }

    #[test]
    fn greedy_examples() {
        assert_eq!(greedy([3.0, 1.0, 2.0], Orientation::Minimize), (1, 1.0));
        assert_eq!(greedy([3.0, 1.0, 3.0], Orientation::Maximize), (0, 3.0));
        assert_eq!(greedy([2.0, 2.0], Orientation::Minimize), (0, 2.0));
        assert_eq!(greedy([5.0], Orientation::Minimize), (0, 5.0));
    }

    #[test]
    fn delta_literal_example() {
        // one renewed batch with improvements 0.2 and 0.4
        let (n, q) = table(&[&[0.5, 0.3], &[0.9, 0.5]]);
        let mut stored = vec![0, 0];
        let mut pass = RenewalPass::new(2, DeltaMode::Literal);
        let mut out = Vec::new();
        lazy_values(&n, |j, a| q[j][a], &mut stored, &mut pass, true, Orientation::Minimize, &mut out);
        assert_eq!(stored, vec![1, 1]);
        assert_abs_diff_eq!(out[0], 0.3);
        assert_abs_diff_eq!(pass.delta(), 0.6, epsilon = 1e-15);
        let mut half = RenewalPass::new(2, DeltaMode::PerObservation);
        half.record(0.6);
        assert_abs_diff_eq!(half.delta(), 0.3, epsilon = 1e-15);

        let mut other = vec![0, 1];
        lazy_values(&n, |j, a| q[j][a], &mut other, &mut pass, false, Orientation::Minimize, &mut out);
        assert_abs_diff_eq!(out[0], 0.5 - 0.6, epsilon = 1e-15);
        assert_abs_diff_eq!(out[1], 0.5 - 0.6, epsilon = 1e-15);
        assert_eq!(other, vec![0, 1]);
    }

    #[test]
    fn empty_renewal_set_gives_zero_delta() {
        let (n, q) = table(&[&[0.5, 0.3]]);
        let mut stored = vec![0];
        let mut pass = RenewalPass::new(1, DeltaMode::Literal);
        let mut out = Vec::new();
        lazy_values(&n, |j, a| q[j][a], &mut stored, &mut pass, false, Orientation::Minimize, &mut out);
        assert_eq!(out, vec![0.5]);
        assert_eq!(pass.delta(), 0.0);
    }

    #[test]
    fn optimal_cache_means_exact_values() {
        let (n, q) = table(&[&[0.5, 0.3, 0.7], &[0.1, 0.2, 0.0]]);
        let mut stored = vec![1, 2];
        let mut pass = RenewalPass::new(2, DeltaMode::Literal);
        let mut lazy = Vec::new();
        let mut exact = Vec::new();
        lazy_values(&n, |j, a| q[j][a], &mut stored, &mut pass, true, Orientation::Minimize, &mut lazy);
        full_values(&n, |j, a| q[j][a], Orientation::Minimize, &mut exact);
        assert_eq!(pass.delta(), 0.0);
        assert_eq!(lazy, exact);
        lazy_values(&n, |j, a| q[j][a], &mut stored, &mut pass, false, Orientation::Minimize, &mut lazy);
        assert_eq!(lazy, exact);
    }

    #[test]
    fn maximize_improvements_are_nonpositive() {
        let (n, q) = table(&[&[0.5, 0.8], &[0.9, 0.5]]);
        let mut stored = vec![0, 1];
        let mut pass = RenewalPass::new(2, DeltaMode::Literal);
        let mut out = Vec::new();
        lazy_values(&n, |j, a| q[j][a], &mut stored, &mut pass, true, Orientation::Maximize, &mut out);
        assert_abs_diff_eq!(pass.delta(), -0.7, epsilon = 1e-15);
        assert_eq!(stored, vec![1, 0]);
    }

    #[test]
    fn psi_estimate_example() {
        // cached Q = (1, 3), Δ = 0.5, WorstMix Maximize κ = 0.5
        let cfg = RiskConfig::worst_mix(0.5, 2, Orientation::Maximize);
        let v = [1.0 - 0.5, 3.0 - 0.5];
        assert_abs_diff_eq!(aggregate(&v, &cfg).unwrap(), 1.0, epsilon = 1e-15);
    }

    #[test]
    #[should_panic(expected = "stored action")]
    fn invalid_stored_action_is_an_invariant_violation() {
        let (n, q) = table(&[&[0.5]]);
        let mut stored = vec![3];
        let mut pass = RenewalPass::new(1, DeltaMode::Literal);
        let mut out = Vec::new();
        lazy_values(&n, |j, a| q[j][a], &mut stored, &mut pass, false, Orientation::Minimize, &mut out);
    }

    proptest! {
        #[test]
        fn translation_commutes_with_delta(
            vals in proptest::collection::vec(-3.0f64..3.0, 3),
            delta in -1.0f64..1.0,
            kappa in 0.0f64..1.0,
            kind in 0usize..3,
            max in proptest::bool::ANY,
        ) {
            let o = if max { Orientation::Maximize } else { Orientation::Minimize };
            let cfg = match kind {
                0 => RiskConfig::mean(3, o),
                1 => RiskConfig::worst_mix(kappa, 3, o),
                _ => RiskConfig::semi_dev(kappa, 3, o),
            };
            let shifted: Vec<f64> = vals.iter().map(|v| v - delta).collect();
            let a = aggregate(&shifted, &cfg).unwrap();
            let b = aggregate(&vals, &cfg).unwrap() - delta;
            prop_assert!((a - b).abs() <= 1e-12);
        }

        #[test]
        fn case_two_bounds_exact_value_with_zero_delta(
            q in proptest::collection::vec(proptest::collection::vec(0.0f64..1.0, 1..5), 1..4),
            seed in 0usize..100,
        ) {
            let n: Vec<usize> = q.iter().map(|r| r.len()).collect();
            let mut stored: Vec<usize> = n.iter().map(|&c| seed % c).collect();
            let mut pass = RenewalPass::new(n.len(), DeltaMode::Literal);
            let mut lazy = Vec::new();
            let mut exact = Vec::new();
            lazy_values(&n, |j, a| q[j][a], &mut stored, &mut pass, false, Orientation::Minimize, &mut lazy);
            full_values(&n, |j, a| q[j][a], Orientation::Minimize, &mut exact);
            for (l, e) in lazy.iter().zip(&exact) {
                prop_assert!(*l >= *e);
            }
        }
    }
}
