//! Coherent risk aggregators on mini-batches and exact transition risk on
//! finite distributions.
//!
//! Everything here is written for costs under [`Orientation::Minimize`]; the
//! `Maximize` variants are the negation mirrors `f_max(v) = -f_min(-v)`, so
//! for rewards the aggregators penalise the lower tail instead of the upper.

use serde::{Deserialize, Serialize};

use crate::error::{input, Error, Result};
use crate::scalar::Scalar;

/// Tolerance on the total mass of a [`FiniteDistribution`].
pub const PROBABILITY_TOLERANCE: f64 = 1e-12;

/// Largest number of batch outcomes `S^N` that [`minibatch_risk_exact`] will enumerate.
pub const MAX_ENUMERATION: usize = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// Values are costs; lower is better and risk inflates the upper tail.
    #[default]
    Minimize,
    /// Values are rewards; higher is better and risk deflates the lower tail.
    Maximize,
}

impl Orientation {
    /// True when `candidate` is strictly preferable to `incumbent`.
    #[inline]
    pub fn improves<T: PartialOrd>(self, candidate: T, incumbent: T) -> bool {
        match self {
            Orientation::Minimize => candidate < incumbent,
            Orientation::Maximize => candidate > incumbent,
        }
    }

    /// `+1` for minimisation, `-1` for maximisation.
    pub fn sign<T: Scalar>(self) -> T {
        match self {
            Orientation::Minimize => T::one(),
            Orientation::Maximize => -T::one(),
        }
    }

    pub fn flip(self) -> Self {
        match self {
            Orientation::Minimize => Orientation::Maximize,
            Orientation::Maximize => Orientation::Minimize,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RiskKind {
    /// Arithmetic mean of the batch.
    Mean,
    /// Mean mixed with the batch worst case.
    WorstMix,
    /// Mean plus first-order semideviation of the empirical batch measure.
    SemiDev,
    /// Mean mixed with one AVaR, via an augmented control `eta` (batch size 1).
    MeanAvar,
    /// Mean mixed with several AVaRs, one augmented control per level (batch size 1).
    Spectral,
}

impl RiskKind {
    /// Kinds that are functions of the batch values alone.
    pub fn is_batch(self) -> bool {
        matches!(self, RiskKind::Mean | RiskKind::WorstMix | RiskKind::SemiDev)
    }

    pub fn is_augmented(self) -> bool {
        !self.is_batch()
    }
}

/// One AVaR component of a spectral mixture: mixing weight and tail level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AvarLevel<T> {
    pub weight: T,
    pub level: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskConfig<T> {
    pub kind: RiskKind,
    /// Mixing weight of the risk term (`WorstMix`, `SemiDev`, `MeanAvar`).
    pub kappa: T,
    /// AVaR components (`MeanAvar` uses exactly one, with weight `kappa`).
    #[serde(default)]
    pub avar_levels: Vec<AvarLevel<T>>,
    pub batch_size: usize,
    #[serde(default)]
    pub orientation: Orientation,
}

impl<T: Scalar> RiskConfig<T> {
    pub fn mean(batch_size: usize, orientation: Orientation) -> Self {
        Self {
            kind: RiskKind::Mean,
            kappa: T::zero(),
            avar_levels: Vec::new(),
            batch_size,
            orientation,
        }
    }

    pub fn worst_mix(kappa: T, batch_size: usize, orientation: Orientation) -> Self {
        Self {
            kind: RiskKind::WorstMix,
            kappa,
            ..Self::mean(batch_size, orientation)
        }
    }

    pub fn semi_dev(kappa: T, batch_size: usize, orientation: Orientation) -> Self {
        Self {
            kind: RiskKind::SemiDev,
            kappa,
            ..Self::mean(batch_size, orientation)
        }
    }

    pub fn mean_avar(kappa: T, alpha: T, orientation: Orientation) -> Self {
        Self {
            kind: RiskKind::MeanAvar,
            kappa,
            avar_levels: vec![AvarLevel {
                weight: kappa,
                level: alpha,
            }],
            batch_size: 1,
            orientation,
        }
    }

    pub fn spectral(levels: Vec<AvarLevel<T>>, orientation: Orientation) -> Self {
        let kappa = levels.iter().map(|l| l.weight).sum();
        Self {
            kind: RiskKind::Spectral,
            kappa,
            avar_levels: levels,
            batch_size: 1,
            orientation,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return input("batch size must be at least 1");
        }
        if !(self.kappa >= T::zero() && self.kappa <= T::one()) {
            return input(format!("kappa must lie in [0, 1], got {}", self.kappa));
        }
        match self.kind {
            RiskKind::Mean | RiskKind::WorstMix | RiskKind::SemiDev => Ok(()),
            RiskKind::MeanAvar | RiskKind::Spectral => {
                if self.batch_size != 1 {
                    return input("augmented AVaR aggregators use batch size 1");
                }
                if self.kind == RiskKind::MeanAvar && self.avar_levels.len() != 1 {
                    return input("mean-AVaR needs exactly one AVaR level");
                }
                if self.avar_levels.is_empty() {
                    return input("spectral aggregator needs at least one AVaR level");
                }
                let mut total = T::zero();
                for l in &self.avar_levels {
                    if !(l.level > T::zero() && l.level <= T::one()) {
                        return input(format!("AVaR level must lie in (0, 1], got {}", l.level));
                    }
                    if !(l.weight >= T::zero()) {
                        return input("AVaR weights must be nonnegative");
                    }
                    total = total + l.weight;
                }
                if total > T::one() + T::lit(1e-12) {
                    return input(format!("AVaR weights sum to {total} > 1"));
                }
                Ok(())
            }
        }
    }

    /// Weight left on the plain expectation for augmented kinds.
    pub fn mean_weight(&self) -> T {
        let w: T = self.avar_levels.iter().map(|l| l.weight).sum();
        (T::one() - w).max(T::zero())
    }

    /// Number of augmented `eta` controls (zero for batch kinds).
    pub fn control_count(&self) -> usize {
        if self.kind.is_augmented() {
            self.avar_levels.len()
        } else {
            0
        }
    }
}

#[inline]
fn pos<T: Scalar>(x: T) -> T {
    x.max(T::zero())
}

/// The risk aggregator `Psi` applied to one mini-batch of values.
pub fn aggregate<T: Scalar>(values: &[T], cfg: &RiskConfig<T>) -> Result<T> {
    if values.is_empty() {
        return input("empty batch");
    }
    if values.len() != cfg.batch_size {
        return input(format!(
            "batch has {} values but the configured batch size is {}",
            values.len(),
            cfg.batch_size
        ));
    }
    if !cfg.kind.is_batch() {
        return input("augmented aggregators need eta controls; use aggregate_augmented");
    }
    Ok(aggregate_unchecked(values, cfg))
}

/// [`aggregate`] without the shape checks; used on hot paths that validated once.
pub(crate) fn aggregate_unchecked<T: Scalar>(values: &[T], cfg: &RiskConfig<T>) -> T {
    let n = T::from_count(values.len());
    let mean = values.iter().copied().sum::<T>() / n;
    let kappa = cfg.kappa;
    match (cfg.kind, cfg.orientation) {
        (RiskKind::WorstMix, o) => {
            let worst = match o {
                Orientation::Minimize => values.iter().copied().fold(T::neg_infinity(), T::max),
                Orientation::Maximize => values.iter().copied().fold(T::infinity(), T::min),
            };
            (T::one() - kappa) * mean + kappa * worst
        }
        (RiskKind::SemiDev, Orientation::Minimize) => {
            let dev = values.iter().map(|&v| pos(v - mean)).sum::<T>() / n;
            mean + kappa * dev
        }
        (RiskKind::SemiDev, Orientation::Maximize) => {
            let dev = values.iter().map(|&v| pos(mean - v)).sum::<T>() / n;
            mean - kappa * dev
        }
        _ => mean,
    }
}

/// Augmented-control aggregator for single observations: the integrand of the
/// mean-AVaR / spectral Q-factor for a fixed vector of `eta` controls.
pub fn aggregate_augmented<T: Scalar>(value: T, etas: &[T], cfg: &RiskConfig<T>) -> Result<T> {
    if !cfg.kind.is_augmented() {
        return input("aggregate_augmented requires a MeanAvar or Spectral configuration");
    }
    if etas.len() != cfg.avar_levels.len() {
        return input(format!(
            "expected {} eta controls, got {}",
            cfg.avar_levels.len(),
            etas.len()
        ));
    }
    Ok(aggregate_augmented_unchecked(value, etas, cfg))
}

pub(crate) fn aggregate_augmented_unchecked<T: Scalar>(
    value: T,
    etas: &[T],
    cfg: &RiskConfig<T>,
) -> T {
    let mut total = cfg.mean_weight() * value;
    for (l, &eta) in cfg.avar_levels.iter().zip(etas) {
        let tail = match cfg.orientation {
            Orientation::Minimize => pos(value - eta),
            Orientation::Maximize => -pos(eta - value),
        };
        total = total + l.weight * eta + l.weight / l.level * tail;
    }
    total
}

/// A probability distribution with finitely many atoms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteDistribution<T, O = T> {
    atoms: Vec<(T, O)>,
}

impl<T: Scalar, O> FiniteDistribution<T, O> {
    /// Validates the masses. Totals within [`PROBABILITY_TOLERANCE`] of one are
    /// renormalised; anything further off is rejected.
    pub fn new(atoms: Vec<(T, O)>) -> Result<Self> {
        if atoms.is_empty() {
            return input("distribution has no atoms");
        }
        let mut total = T::zero();
        for (p, _) in &atoms {
            if !(*p >= T::zero()) || !p.is_finite() {
                return input(format!("invalid probability {p}"));
            }
            total = total + *p;
        }
        if (total - T::one()).abs() > T::lit(PROBABILITY_TOLERANCE) {
            return input(format!("probabilities sum to {total}, not 1"));
        }
        let atoms = atoms.into_iter().map(|(p, o)| (p / total, o)).collect();
        Ok(Self { atoms })
    }

    pub fn point(outcome: O) -> Self {
        Self {
            atoms: vec![(T::one(), outcome)],
        }
    }

    /// Equal mass on each outcome.
    pub fn uniform(outcomes: Vec<O>) -> Result<Self> {
        if outcomes.is_empty() {
            return input("distribution has no atoms");
        }
        let p = T::one() / T::from_count(outcomes.len());
        Ok(Self {
            atoms: outcomes.into_iter().map(|o| (p, o)).collect(),
        })
    }

    pub fn atoms(&self) -> &[(T, O)] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn expectation(&self, mut f: impl FnMut(&O) -> T) -> T {
        self.atoms.iter().map(|(p, o)| *p * f(o)).sum()
    }

    pub fn map<U>(&self, mut f: impl FnMut(&O) -> U) -> FiniteDistribution<T, U> {
        FiniteDistribution {
            atoms: self.atoms.iter().map(|(p, o)| (*p, f(o))).collect(),
        }
    }

    /// Inverse-CDF draw from a uniform variate `u` in `[0, 1)`.
    pub fn sample_with(&self, u: T) -> &O {
        let mut acc = T::zero();
        for (p, o) in &self.atoms {
            acc = acc + *p;
            if u < acc {
                return o;
            }
        }
        &self.atoms[self.atoms.len() - 1].1
    }
}

/// Average Value at Risk of a finite loss distribution,
/// `min_eta { eta + E[(V - eta)_+] / alpha }`, computed from the sorted atoms.
///
/// The minimiser is the upper `alpha`-quantile: walking the atoms from the
/// largest value down, the first value at which the accumulated mass reaches
/// `alpha`.
pub fn avar_discrete<T: Scalar>(dist: &FiniteDistribution<T, T>, alpha: T) -> Result<T> {
    if !(alpha > T::zero() && alpha <= T::one()) {
        return input(format!("AVaR level must lie in (0, 1], got {alpha}"));
    }
    let mut sorted: Vec<(T, T)> = dist.atoms().to_vec();
    sorted.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    let mut mass = T::zero();
    let mut eta = sorted[sorted.len() - 1].1;
    for &(p, v) in &sorted {
        mass = mass + p;
        if mass >= alpha {
            eta = v;
            break;
        }
    }
    let tail: T = sorted.iter().map(|&(p, v)| p * pos(v - eta)).sum();
    Ok(eta + tail / alpha)
}

/// AVaR with the orientation applied (`Maximize` uses the lower tail).
pub fn avar_oriented<T: Scalar>(
    dist: &FiniteDistribution<T, T>,
    alpha: T,
    orientation: Orientation,
) -> Result<T> {
    match orientation {
        Orientation::Minimize => avar_discrete(dist, alpha),
        Orientation::Maximize => Ok(-avar_discrete(&dist.map(|v| -*v), alpha)?),
    }
}

/// Calls `visit(indices)` for every tuple in `{0..base}^len`, in odometer order.
pub(crate) fn for_each_tuple(base: usize, len: usize, mut visit: impl FnMut(&[usize])) {
    let mut idx = vec![0usize; len];
    loop {
        visit(&idx);
        let mut pos = 0;
        loop {
            if pos == len {
                return;
            }
            idx[pos] += 1;
            if idx[pos] < base {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

pub(crate) fn check_enumeration(support: usize, batch: usize) -> Result<usize> {
    let mut total: usize = 1;
    for _ in 0..batch {
        total = total
            .checked_mul(support)
            .filter(|&t| t <= MAX_ENUMERATION)
            .ok_or_else(|| {
                Error::Capacity(format!(
                    "{support}^{batch} batch outcomes exceed the enumeration limit {MAX_ENUMERATION}"
                ))
            })?;
    }
    Ok(total)
}

/// Mini-batch transition risk `E[Psi(V(Y_1), ..., V(Y_N))]` with `Y_j` i.i.d.
/// from `dist`, by enumerating all `S^N` batches.
///
/// `value` maps an outcome to the quantity being aggregated; for cost-state
/// atoms it is `R + V(Y)`.
pub fn minibatch_risk_exact<T: Scalar, O>(
    dist: &FiniteDistribution<T, O>,
    value: impl Fn(&O) -> T,
    cfg: &RiskConfig<T>,
) -> Result<T> {
    cfg.validate()?;
    if !cfg.kind.is_batch() {
        return input("augmented kinds have no mini-batch form; use transition_risk_exact");
    }
    let n = cfg.batch_size;
    check_enumeration(dist.len(), n)?;
    let probs: Vec<T> = dist.atoms().iter().map(|(p, _)| *p).collect();
    let vals: Vec<T> = dist.atoms().iter().map(|(_, o)| value(o)).collect();
    let mut batch = vec![T::zero(); n];
    let mut total = T::zero();
    for_each_tuple(dist.len(), n, |idx| {
        let mut p = T::one();
        for (slot, &i) in batch.iter_mut().zip(idx) {
            *slot = vals[i];
            p = p * probs[i];
        }
        if p > T::zero() {
            total = total + p * aggregate_unchecked(&batch, cfg);
        }
    });
    Ok(total)
}

/// Exact transition risk for any configured kind: the mini-batch measure for
/// batch kinds, `kappa_0 E[V] + sum_j kappa_j AVaR_{alpha_j}(V)` for augmented ones.
pub fn transition_risk_exact<T: Scalar, O>(
    dist: &FiniteDistribution<T, O>,
    value: impl Fn(&O) -> T,
    cfg: &RiskConfig<T>,
) -> Result<T> {
    if cfg.kind.is_batch() {
        return minibatch_risk_exact(dist, value, cfg);
    }
    cfg.validate()?;
    let values = dist.map(|o| value(o));
    let mut total = cfg.mean_weight() * values.expectation(|v| *v);
    for l in &cfg.avar_levels {
        total = total + l.weight * avar_oriented(&values, l.level, cfg.orientation)?;
    }
    Ok(total)
}
