//! Exact risk-averse backward induction on small tabular MDPs.
//!
//! Stages are 0-based: transitions happen at stages `0..H-1` and stage `H-1`
//! only charges the terminal cost `r_H(x)`. The value table therefore carries a
//! single pseudo-action at the terminal stage.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, input, Error, Result};
use crate::risk::{
    aggregate_unchecked, check_enumeration, transition_risk_exact, FiniteDistribution, RiskConfig,
};
use crate::scalar::Scalar;

/// Policy enumeration limit for [`brute_force_verify`]: `|X| * |A|`.
pub const MAX_BRUTE_FORCE_PAIRS: usize = 12;
pub const MAX_BRUTE_FORCE_HORIZON: usize = 3;

/// One state-action row of a stage.
#[derive(Debug, Clone, PartialEq)]
pub enum StageRow<T> {
    /// Known cost `r_h(x, a)` and successor kernel `P_h(x, a)`.
    Deterministic {
        cost: T,
        next: FiniteDistribution<T, usize>,
    },
    /// Joint law `Pi_h(x, a)` of `(cost, successor)`.
    Random {
        outcomes: FiniteDistribution<T, (T, usize)>,
    },
}

impl<T: Scalar> StageRow<T> {
    /// Expected one-step cost.
    pub fn mean_cost(&self) -> T {
        match self {
            StageRow::Deterministic { cost, .. } => *cost,
            StageRow::Random { outcomes } => outcomes.expectation(|o| o.0),
        }
    }

    /// Distribution of `(cost, successor)`; deterministic rows have a constant cost.
    pub fn joint(&self) -> FiniteDistribution<T, (T, usize)> {
        match self {
            StageRow::Deterministic { cost, next } => next.map(|&y| (*cost, y)),
            StageRow::Random { outcomes } => outcomes.clone(),
        }
    }

    /// `Q = r + sigma(P, V)` or `sigma(Pi, R + V)` for random costs.
    pub fn risk(&self, next_values: &[T], cfg: &RiskConfig<T>) -> Result<T> {
        match self {
            StageRow::Deterministic { cost, next } => {
                Ok(*cost + transition_risk_exact(next, |&y| next_values[y], cfg)?)
            }
            StageRow::Random { outcomes } => {
                transition_risk_exact(outcomes, |&(c, y)| c + next_values[y], cfg)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp<T> {
    states: usize,
    actions: usize,
    horizon: usize,
    rows: Vec<Vec<Vec<StageRow<T>>>>,
    terminal: Vec<T>,
    initial: FiniteDistribution<T, usize>,
}

impl<T: Scalar> TabularMdp<T> {
    /// `rows[h][x][a]` for the `H - 1` transition stages; `terminal[x]` is `r_H(x)`.
    pub fn new(
        states: usize,
        actions: usize,
        rows: Vec<Vec<Vec<StageRow<T>>>>,
        terminal: Vec<T>,
        initial: Option<FiniteDistribution<T, usize>>,
    ) -> Result<Self> {
        if states == 0 || actions == 0 {
            return input("MDP needs at least one state and one action");
        }
        check_dim(states, terminal.len())?;
        let in_range = |c: T| c >= T::zero() && c <= T::one();
        for (h, stage) in rows.iter().enumerate() {
            check_dim(states, stage.len())?;
            for row in stage {
                check_dim(actions, row.len())?;
                for cell in row {
                    let ok = match cell {
                        StageRow::Deterministic { cost, next } => {
                            in_range(*cost) && next.atoms().iter().all(|a| a.1 < states)
                        }
                        StageRow::Random { outcomes } => outcomes
                            .atoms()
                            .iter()
                            .all(|(_, (c, y))| in_range(*c) && *y < states),
                    };
                    if !ok {
                        return input(format!(
                            "stage {h}: costs must lie in [0, 1] and successors in 0..{states}"
                        ));
                    }
                }
            }
        }
        if !terminal.iter().all(|&c| in_range(c)) {
            return input("terminal costs must lie in [0, 1]");
        }
        let initial = match initial {
            Some(d) => {
                if d.atoms().iter().any(|a| a.1 >= states) {
                    return input("initial distribution refers to an unknown state");
                }
                d
            }
            None => FiniteDistribution::uniform((0..states).collect())?,
        };
        Ok(Self {
            states,
            actions,
            horizon: rows.len() + 1,
            rows,
            terminal,
            initial,
        })
    }

    pub fn states(&self) -> usize {
        self.states
    }

    pub fn actions(&self) -> usize {
        self.actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn row(&self, stage: usize, state: usize, action: usize) -> &StageRow<T> {
        &self.rows[stage][state][action]
    }

    pub fn terminal(&self) -> &[T] {
        &self.terminal
    }

    pub fn initial(&self) -> &FiniteDistribution<T, usize> {
        &self.initial
    }

    pub fn has_random_costs(&self) -> bool {
        self.rows
            .iter()
            .flatten()
            .flatten()
            .any(|r| matches!(r, StageRow::Random { .. }))
    }

    /// Same MDP with `shift` added to every terminal cost (range checks skipped).
    pub fn with_terminal_shift(&self, shift: T) -> Self {
        let mut out = self.clone();
        out.terminal.iter_mut().for_each(|c| *c = *c + shift);
        out
    }

    /// Number of actions available at `stage` (one at the terminal stage).
    pub fn actions_at(&self, stage: usize) -> usize {
        if stage + 1 == self.horizon {
            1
        } else {
            self.actions
        }
    }
}

/// Values, Q-factors and greedy policy for stages `0..H`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValueTable<T> {
    /// `values[h][x]`.
    pub values: Vec<Vec<T>>,
    /// `q[h][x][a]`; the terminal stage has one column.
    pub q: Vec<Vec<Vec<T>>>,
    /// `policy[h][x]`, lowest index among ties.
    pub policy: Vec<Vec<usize>>,
}

impl<T: Scalar> ValueTable<T> {
    /// Largest absolute entrywise difference of the Q tables.
    pub fn max_q_gap(&self, other: &Self) -> T {
        let mut gap = T::zero();
        for (a, b) in self.q.iter().flatten().zip(other.q.iter().flatten()) {
            for (x, y) in a.iter().zip(b) {
                gap = gap.max((*x - *y).abs());
            }
        }
        gap
    }

    pub fn max_value_gap(&self, other: &Self) -> T {
        let mut gap = T::zero();
        for (a, b) in self.values.iter().zip(&other.values) {
            for (x, y) in a.iter().zip(b) {
                gap = gap.max((*x - *y).abs());
            }
        }
        gap
    }
}

fn best_index<T: Scalar>(q: &[T], cfg: &RiskConfig<T>) -> usize {
    let mut best = 0;
    for (i, &v) in q.iter().enumerate().skip(1) {
        if cfg.orientation.improves(v, q[best]) {
            best = i;
        }
    }
    best
}

fn terminal_stage<T: Scalar>(mdp: &TabularMdp<T>) -> (Vec<T>, Vec<Vec<T>>) {
    let v = mdp.terminal.clone();
    let q = v.iter().map(|&c| vec![c]).collect();
    (v, q)
}

/// Optimal values `V_h = opt_a { r_h + sigma(P_h, V_{h+1}) }`, `V_H = r_H`.
pub fn solve<T: Scalar>(mdp: &TabularMdp<T>, cfg: &RiskConfig<T>) -> Result<ValueTable<T>> {
    cfg.validate()?;
    let h_total = mdp.horizon;
    let (v_last, q_last) = terminal_stage(mdp);
    let mut values = vec![Vec::new(); h_total];
    let mut q = vec![Vec::new(); h_total];
    let mut policy = vec![Vec::new(); h_total];
    values[h_total - 1] = v_last;
    q[h_total - 1] = q_last;
    policy[h_total - 1] = vec![0; mdp.states];
    for h in (0..h_total - 1).rev() {
        let next = values[h + 1].clone();
        let mut qh = Vec::with_capacity(mdp.states);
        let mut vh = Vec::with_capacity(mdp.states);
        let mut ph = Vec::with_capacity(mdp.states);
        for x in 0..mdp.states {
            let row: Vec<T> = (0..mdp.actions)
                .map(|a| mdp.rows[h][x][a].risk(&next, cfg))
                .collect::<Result<_>>()?;
            let best = best_index(&row, cfg);
            vh.push(row[best]);
            ph.push(best);
            qh.push(row);
        }
        values[h] = vh;
        q[h] = qh;
        policy[h] = ph;
    }
    Ok(ValueTable { values, q, policy })
}

/// Evaluation of a Markov policy `policy[h][x]` for the transition stages.
pub fn policy_value<T: Scalar>(
    mdp: &TabularMdp<T>,
    policy: &[Vec<usize>],
    cfg: &RiskConfig<T>,
) -> Result<ValueTable<T>> {
    cfg.validate()?;
    let h_total = mdp.horizon;
    if policy.len() < h_total - 1 {
        return input("policy must cover every transition stage");
    }
    let (v_last, q_last) = terminal_stage(mdp);
    let mut values = vec![Vec::new(); h_total];
    let mut q = vec![Vec::new(); h_total];
    values[h_total - 1] = v_last;
    q[h_total - 1] = q_last;
    for h in (0..h_total - 1).rev() {
        check_dim(mdp.states, policy[h].len())?;
        let next = values[h + 1].clone();
        let mut qh = Vec::with_capacity(mdp.states);
        let mut vh = Vec::with_capacity(mdp.states);
        for x in 0..mdp.states {
            let a = policy[h][x];
            if a >= mdp.actions {
                return input(format!("policy action {a} at stage {h}, state {x} out of range"));
            }
            let row: Vec<T> = (0..mdp.actions)
                .map(|b| mdp.rows[h][x][b].risk(&next, cfg))
                .collect::<Result<_>>()?;
            vh.push(row[a]);
            qh.push(row);
        }
        values[h] = vh;
        q[h] = qh;
    }
    let mut full_policy: Vec<Vec<usize>> = policy[..h_total - 1].to_vec();
    full_policy.push(vec![0; mdp.states]);
    Ok(ValueTable {
        values,
        q,
        policy: full_policy,
    })
}

/// Risk of one row against `next` by explicit recursion over every batch of
/// row outcomes. Shares only the aggregator with [`solve`].
fn scenario_risk<T: Scalar>(
    row: &StageRow<T>,
    next: &[T],
    cfg: &RiskConfig<T>,
    batch: &mut Vec<T>,
) -> T {
    fn descend<T: Scalar>(
        depth: usize,
        prob: T,
        atoms: &[(T, (T, usize))],
        next: &[T],
        offset: T,
        cfg: &RiskConfig<T>,
        batch: &mut Vec<T>,
    ) -> T {
        if depth == cfg.batch_size {
            return prob * (offset + aggregate_unchecked(batch, cfg));
        }
        let mut total = T::zero();
        for &(p, (c, y)) in atoms {
            batch.push(c + next[y]);
            total = total + descend(depth + 1, prob * p, atoms, next, offset, cfg, batch);
            batch.pop();
        }
        total
    }
    batch.clear();
    match row {
        StageRow::Deterministic { cost, next: kernel } => {
            let atoms: Vec<(T, (T, usize))> =
                kernel.atoms().iter().map(|&(p, y)| (p, (T::zero(), y))).collect();
            descend(0, T::one(), &atoms, next, *cost, cfg, batch)
        }
        StageRow::Random { outcomes } => {
            descend(0, T::one(), outcomes.atoms(), next, T::zero(), cfg, batch)
        }
    }
}

/// Independent oracle for [`solve`]: evaluates every deterministic Markov
/// policy by scenario enumeration and keeps the state-wise optimum.
pub fn brute_force_verify<T: Scalar>(
    mdp: &TabularMdp<T>,
    cfg: &RiskConfig<T>,
) -> Result<ValueTable<T>> {
    cfg.validate()?;
    if !cfg.kind.is_batch() {
        return input("brute-force verification covers the batch aggregators only");
    }
    if mdp.states * mdp.actions > MAX_BRUTE_FORCE_PAIRS || mdp.horizon > MAX_BRUTE_FORCE_HORIZON {
        return Err(Error::Capacity(format!(
            "brute force limited to |X||A| <= {MAX_BRUTE_FORCE_PAIRS} and H <= {MAX_BRUTE_FORCE_HORIZON}"
        )));
    }
    for stage in &mdp.rows {
        for row in stage.iter().flatten() {
            check_enumeration(row.joint().len(), cfg.batch_size)?;
        }
    }
    let h_total = mdp.horizon;
    let decisions = mdp.states * (h_total - 1);
    let n_policies = mdp.actions.pow(decisions as u32);
    let better = |a: T, b: T| cfg.orientation.improves(a, b);

    let mut best_v: Vec<Vec<Option<T>>> = vec![vec![None; mdp.states]; h_total];
    let mut best_q: Vec<Vec<Vec<Option<T>>>> =
        vec![vec![vec![None; mdp.actions]; mdp.states]; h_total - 1];
    let mut batch = Vec::with_capacity(cfg.batch_size);
    let mut choice = vec![0usize; decisions];

    for code in 0..n_policies {
        let mut c = code;
        for slot in choice.iter_mut() {
            *slot = c % mdp.actions;
            c /= mdp.actions;
        }
        let mut v_next = mdp.terminal.clone();
        for h in (0..h_total - 1).rev() {
            let mut v_here = vec![T::zero(); mdp.states];
            for x in 0..mdp.states {
                let chosen = choice[h * mdp.states + x];
                for a in 0..mdp.actions {
                    let qa = scenario_risk(&mdp.rows[h][x][a], &v_next, cfg, &mut batch);
                    let slot = &mut best_q[h][x][a];
                    if slot.is_none_or(|b| better(qa, b)) {
                        *slot = Some(qa);
                    }
                    if a == chosen {
                        v_here[x] = qa;
                    }
                }
            }
            for x in 0..mdp.states {
                let slot = &mut best_v[h][x];
                if slot.is_none_or(|b| better(v_here[x], b)) {
                    *slot = Some(v_here[x]);
                }
            }
            v_next = v_here;
        }
    }

    let (v_last, q_last) = terminal_stage(mdp);
    let mut values: Vec<Vec<T>> = best_v[..h_total - 1]
        .iter()
        .map(|row| row.iter().map(|v| v.expect("every policy visited")).collect())
        .collect();
    values.push(v_last);
    let mut q: Vec<Vec<Vec<T>>> = best_q
        .iter()
        .map(|stage| {
            stage
                .iter()
                .map(|row| row.iter().map(|v| v.expect("every policy visited")).collect())
                .collect()
        })
        .collect();
    q.push(q_last);
    let mut policy: Vec<Vec<usize>> = q[..h_total - 1]
        .iter()
        .map(|stage| stage.iter().map(|row| best_index(row, cfg)).collect())
        .collect();
    policy.push(vec![0; mdp.states]);
    Ok(ValueTable { values, q, policy })
}

/// Random MDP with strictly positive transition rows supported on at least two successors.
pub fn random_mdp<T: Scalar, R: Rng + ?Sized>(
    states: usize,
    actions: usize,
    horizon: usize,
    random_costs: bool,
    rng: &mut R,
) -> Result<TabularMdp<T>> {
    if horizon == 0 {
        return input("horizon must be at least 1");
    }
    let draw_dist = |rng: &mut R| -> Vec<f64> {
        let raw: Vec<f64> = (0..states).map(|_| rng.random_range(0.05..1.0)).collect();
        let z: f64 = raw.iter().sum();
        raw.into_iter().map(|p| p / z).collect()
    };
    let mut rows = Vec::with_capacity(horizon - 1);
    for _ in 0..horizon - 1 {
        let mut stage = Vec::with_capacity(states);
        for _ in 0..states {
            let mut row = Vec::with_capacity(actions);
            for _ in 0..actions {
                let probs = draw_dist(rng);
                let cell = if random_costs {
                    let mut atoms = Vec::new();
                    for (y, p) in probs.iter().enumerate() {
                        let lo = rng.random_range(0.0..0.5);
                        let hi = rng.random_range(0.5..1.0);
                        atoms.push((T::lit(p * 0.5), (T::lit(lo), y)));
                        atoms.push((T::lit(p * 0.5), (T::lit(hi), y)));
                    }
                    StageRow::Random {
                        outcomes: FiniteDistribution::new(atoms)?,
                    }
                } else {
                    StageRow::Deterministic {
                        cost: T::lit(rng.random_range(0.0..1.0)),
                        next: FiniteDistribution::new(
                            probs.iter().enumerate().map(|(y, p)| (T::lit(*p), y)).collect(),
                        )?,
                    }
                };
                row.push(cell);
            }
            stage.push(row);
        }
        rows.push(stage);
    }
    let terminal = (0..states).map(|_| T::lit(rng.random_range(0.0..1.0))).collect();
    TabularMdp::new(states, actions, rows, terminal, None)
}

/// One atom of a random-cost row in the JSON document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct JointAtom {
    pub prob: f64,
    pub cost: f64,
    pub next: usize,
}

/// JSON layout of a tabular MDP.
///
/// Either `kernels[h][x][a][y]` with `costs[h][x][a]`, or `random_costs[h][x][a]`
/// as lists of `{prob, cost, next}` atoms, for the `horizon - 1` transition stages.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpDocument {
    pub horizon: usize,
    pub states: usize,
    pub actions: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernels: Option<Vec<Vec<Vec<Vec<f64>>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub costs: Option<Vec<Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random_costs: Option<Vec<Vec<Vec<Vec<JointAtom>>>>>,
    pub terminal_costs: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub initial: Option<Vec<f64>>,
}

impl TabularMdp<f64> {
    pub fn from_document(doc: &MdpDocument) -> Result<Self> {
        if doc.horizon == 0 {
            return input("horizon must be at least 1");
        }
        let stages = doc.horizon - 1;
        let rows = match (&doc.random_costs, &doc.kernels, &doc.costs) {
            (Some(random), _, _) => {
                check_dim(stages, random.len())?;
                random
                    .iter()
                    .map(|stage| {
                        stage
                            .iter()
                            .map(|row| {
                                row.iter()
                                    .map(|atoms| {
                                        let outcomes = FiniteDistribution::new(
                                            atoms.iter().map(|a| (a.prob, (a.cost, a.next))).collect(),
                                        )?;
                                        Ok(StageRow::Random { outcomes })
                                    })
                                    .collect::<Result<Vec<_>>>()
                            })
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
            }
            (None, Some(kernels), Some(costs)) => {
                check_dim(stages, kernels.len())?;
                check_dim(stages, costs.len())?;
                let mut rows = Vec::with_capacity(stages);
                for (kh, ch) in kernels.iter().zip(costs) {
                    check_dim(doc.states, kh.len())?;
                    check_dim(doc.states, ch.len())?;
                    let mut stage = Vec::with_capacity(doc.states);
                    for (kx, cx) in kh.iter().zip(ch) {
                        check_dim(doc.actions, kx.len())?;
                        check_dim(doc.actions, cx.len())?;
                        let mut row = Vec::with_capacity(doc.actions);
                        for (probs, &cost) in kx.iter().zip(cx) {
                            check_dim(doc.states, probs.len())?;
                            let atoms = probs
                                .iter()
                                .enumerate()
                                .filter(|(_, p)| **p > 0.0)
                                .map(|(y, p)| (*p, y))
                                .collect();
                            row.push(StageRow::Deterministic {
                                cost,
                                next: FiniteDistribution::new(atoms)?,
                            });
                        }
                        stage.push(row);
                    }
                    rows.push(stage);
                }
                rows
            }
            _ if stages == 0 => Vec::new(),
            _ => return input("MDP document needs `kernels` and `costs`, or `random_costs`"),
        };
        let initial = match &doc.initial {
            Some(p) => {
                check_dim(doc.states, p.len())?;
                Some(FiniteDistribution::new(
                    p.iter().enumerate().map(|(x, q)| (*q, x)).collect(),
                )?)
            }
            None => None,
        };
        TabularMdp::new(doc.states, doc.actions, rows, doc.terminal_costs.clone(), initial)
    }

    pub fn to_document(&self) -> MdpDocument {
        let mut doc = MdpDocument {
            horizon: self.horizon,
            states: self.states,
            actions: self.actions,
            kernels: None,
            costs: None,
            random_costs: None,
            terminal_costs: self.terminal.clone(),
            initial: Some({
                let mut p = vec![0.0; self.states];
                for &(q, x) in self.initial.atoms() {
                    p[x] += q;
                }
                p
            }),
        };
        if self.has_random_costs() {
            doc.random_costs = Some(
                self.rows
                    .iter()
                    .map(|stage| {
                        stage
                            .iter()
                            .map(|row| {
                                row.iter()
                                    .map(|cell| {
                                        cell.joint()
                                            .atoms()
                                            .iter()
                                            .map(|&(prob, (cost, next))| JointAtom { prob, cost, next })
                                            .collect()
                                    })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect(),
            );
        } else {
            let mut kernels = Vec::new();
            let mut costs = Vec::new();
            for stage in &self.rows {
                let mut ks = Vec::new();
                let mut cs = Vec::new();
                for row in stage {
                    let mut kr = Vec::new();
                    let mut cr = Vec::new();
                    for cell in row {
                        let mut p = vec![0.0; self.states];
                        for &(q, (_, y)) in cell.joint().atoms() {
                            p[y] += q;
                        }
                        kr.push(p);
                        cr.push(cell.mean_cost());
                    }
                    ks.push(kr);
                    cs.push(cr);
                }
                kernels.push(ks);
                costs.push(cs);
            }
            doc.kernels = Some(kernels);
            doc.costs = Some(costs);
        }
        doc
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Self::from_document(&serde_json::from_str(s)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::{Orientation, RiskKind};
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn det(cost: f64, next: Vec<(f64, usize)>) -> StageRow<f64> {
        StageRow::Deterministic {
            cost,
            next: FiniteDistribution::new(next).unwrap(),
        }
    }

    /// 2 states, 1 action, H = 2, uniform kernel, terminal costs (0, 1).
    fn two_state(cost: [f64; 2]) -> TabularMdp<f64> {
        let rows = vec![vec![
            vec![det(cost[0], vec![(0.5, 0), (0.5, 1)])],
            vec![det(cost[1], vec![(0.5, 0), (0.5, 1)])],
        ]];
        TabularMdp::new(2, 1, rows, vec![0.0, 1.0], None).unwrap()
    }

    fn chain() -> TabularMdp<f64> {
        // 3 states on a deterministic cycle, 2 actions sharing the successor
        let rows = (0..2)
            .map(|h| {
                (0..3)
                    .map(|x| {
                        (0..2)
                            .map(|a| det(0.1 * (x + a + h) as f64 / 4.0, vec![(1.0, (x + 1) % 3)]))
                            .collect()
                    })
                    .collect()
            })
            .collect();
        TabularMdp::new(3, 2, rows, vec![0.2, 0.4, 0.6], None).unwrap()
    }

    fn kinds(n: usize) -> Vec<RiskConfig<f64>> {
        vec![
            RiskConfig::mean(n, Orientation::Minimize),
            RiskConfig::worst_mix(0.7, n, Orientation::Minimize),
            RiskConfig::semi_dev(0.6, n, Orientation::Minimize),
            RiskConfig::worst_mix(0.4, n, Orientation::Maximize),
        ]
    }

    #[test]
    fn deterministic_chain_is_path_sum() {
        let mdp = chain();
        for cfg in kinds(2) {
            let t = solve(&mdp, &cfg).unwrap();
            // action 0 is cheapest everywhere under minimisation
            if cfg.orientation == Orientation::Minimize {
                let v0 = 0.0 + 0.1 * 2.0 / 4.0 + 0.6;
                assert_abs_diff_eq!(t.values[0][0], v0, epsilon = 1e-12);
            }
            let b = brute_force_verify(&mdp, &cfg).unwrap();
            assert!(t.max_q_gap(&b) <= 1e-12);
        }
    }

    #[test]
    fn two_state_worst_case_example() {
        let mdp = two_state([0.3, 0.1]);
        let cfg = RiskConfig::worst_mix(1.0, 2, Orientation::Minimize);
        let t = solve(&mdp, &cfg).unwrap();
        assert_abs_diff_eq!(t.values[0][0], 0.3 + 0.75, epsilon = 1e-15);
        assert_abs_diff_eq!(t.values[0][1], 0.1 + 0.75, epsilon = 1e-15);
        let b = brute_force_verify(&mdp, &cfg).unwrap();
        assert!(t.max_q_gap(&b) <= 1e-12);
        let mean = solve(&mdp, &RiskConfig::mean(2, Orientation::Minimize)).unwrap();
        assert!(t.values[0][0] >= mean.values[0][0]);
        assert_abs_diff_eq!(mean.values[0][0], 0.8, epsilon = 1e-15);
    }

    #[test]
    fn risk_neutral_matches_plain_expectation_dp() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mdp: TabularMdp<f64> = random_mdp(3, 2, 3, false, &mut rng).unwrap();
        let t = solve(&mdp, &RiskConfig::mean(1, Orientation::Minimize)).unwrap();
        // textbook expected-value recursion
        let mut v = mdp.terminal().to_vec();
        for h in (0..2).rev() {
            v = (0..3)
                .map(|x| {
                    (0..2)
                        .map(|a| {
                            let row = mdp.row(h, x, a);
                            row.joint().expectation(|&(c, y)| c + v[y])
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .collect();
        }
        for x in 0..3 {
            assert_abs_diff_eq!(t.values[0][x], v[x], epsilon = 1e-12);
        }
    }

    #[test]
    fn policy_value_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mdp: TabularMdp<f64> = random_mdp(3, 2, 3, false, &mut rng).unwrap();
        let cfg = RiskConfig::worst_mix(0.5, 2, Orientation::Minimize);
        let t = solve(&mdp, &cfg).unwrap();
        let pv = policy_value(&mdp, &t.policy, &cfg).unwrap();
        assert!(t.max_value_gap(&pv) <= 1e-15);

        let single = two_state([0.2, 0.9]);
        let a = solve(&single, &cfg).unwrap();
        let b = policy_value(&single, &[vec![0, 0]], &cfg).unwrap();
        assert_eq!(a.values, b.values);

        assert!(policy_value(&mdp, &[vec![0, 5, 0], vec![0, 0, 0]], &cfg).is_err());
    }

    #[test]
    fn random_policy_matches_scenario_tree() {
        // two states, two actions, H = 3; policy evaluated by enumerating scenario leaves
        let rows = vec![
            vec![
                vec![det(0.1, vec![(0.5, 0), (0.5, 1)]), det(0.4, vec![(0.9, 0), (0.1, 1)])],
                vec![det(0.3, vec![(0.2, 0), (0.8, 1)]), det(0.0, vec![(0.6, 0), (0.4, 1)])],
            ],
            vec![
                vec![det(0.5, vec![(0.3, 0), (0.7, 1)]), det(0.2, vec![(0.5, 0), (0.5, 1)])],
                vec![det(0.6, vec![(1.0, 1)]), det(0.7, vec![(0.25, 0), (0.75, 1)])],
            ],
        ];
        let mdp = TabularMdp::new(2, 2, rows, vec![0.0, 1.0], None).unwrap();
        let cfg = RiskConfig::worst_mix(1.0, 2, Orientation::Minimize);
        let policy = vec![vec![1, 0], vec![0, 1]];
        let pv = policy_value(&mdp, &policy, &cfg).unwrap();

        let kernel = |h: usize, x: usize| -> Vec<(f64, usize)> {
            mdp.row(h, x, policy[h][x]).joint().atoms().iter().map(|&(p, (_, y))| (p, y)).collect()
        };
        let cost = |h: usize, x: usize| mdp.row(h, x, policy[h][x]).mean_cost();
        let v2 = mdp.terminal().to_vec();
        let mut v1 = [0.0; 2];
        for x in 0..2 {
            let mut e = 0.0;
            for &(p, y) in &kernel(1, x) {
                for &(q, z) in &kernel(1, x) {
                    e += p * q * v2[y].max(v2[z]);
                }
            }
            v1[x] = cost(1, x) + e;
        }
        for x in 0..2 {
            let mut e = 0.0;
            for &(p, y) in &kernel(0, x) {
                for &(q, z) in &kernel(0, x) {
                    e += p * q * v1[y].max(v1[z]);
                }
            }
            assert_abs_diff_eq!(pv.values[0][x], cost(0, x) + e, epsilon = 1e-12);
        }
    }

    #[test]
    fn solve_agrees_with_brute_force_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for trial in 0..12 {
            let states = 2 + trial % 3;
            let actions = if states == 4 { 3 } else { 2 + trial % 2 };
            let mdp: TabularMdp<f64> =
                random_mdp(states, actions, 3, trial % 4 == 3, &mut rng).unwrap();
            for n in [1, 2] {
                for cfg in kinds(n) {
                    let a = solve(&mdp, &cfg).unwrap();
                    let b = brute_force_verify(&mdp, &cfg).unwrap();
                    assert!(a.max_q_gap(&b) <= 1e-12, "{:?}", cfg.kind);
                    assert!(a.max_value_gap(&b) <= 1e-12);
                    assert_eq!(a.policy, b.policy);
                }
            }
        }
    }

    #[test]
    fn monotone_in_kappa_and_batch_size() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let mdp: TabularMdp<f64> = random_mdp(3, 2, 3, false, &mut rng).unwrap();
        let mut last = f64::NEG_INFINITY;
        for k in 0..=10 {
            let cfg = RiskConfig::worst_mix(k as f64 / 10.0, 2, Orientation::Minimize);
            let v = solve(&mdp, &cfg).unwrap().values[0][0];
            assert!(v >= last - 1e-12);
            last = v;
        }
        let mut last = f64::NEG_INFINITY;
        for n in 1..=4 {
            let cfg = RiskConfig::worst_mix(1.0, n, Orientation::Minimize);
            let v = solve(&mdp, &cfg).unwrap().values[0][1];
            assert!(v >= last - 1e-12);
            last = v;
        }
    }

    #[test]
    fn terminal_translation_shifts_values() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let mdp: TabularMdp<f64> = random_mdp(3, 2, 3, true, &mut rng).unwrap();
        let shifted = mdp.with_terminal_shift(0.25);
        for cfg in kinds(2) {
            let a = solve(&mdp, &cfg).unwrap();
            let b = solve(&shifted, &cfg).unwrap();
            for (ra, rb) in a.values.iter().zip(&b.values) {
                for (x, y) in ra.iter().zip(rb) {
                    assert_abs_diff_eq!(x + 0.25, *y, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn brute_force_guards() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let big: TabularMdp<f64> = random_mdp(5, 3, 2, false, &mut rng).unwrap();
        let cfg = RiskConfig::mean(1, Orientation::Minimize);
        assert!(matches!(brute_force_verify(&big, &cfg), Err(Error::Capacity(_))));
        let long: TabularMdp<f64> = random_mdp(2, 2, 4, false, &mut rng).unwrap();
        assert!(matches!(brute_force_verify(&long, &cfg), Err(Error::Capacity(_))));
    }

    #[test]
    fn mean_avar_solve_matches_eta_grid() {
        let mdp = two_state([0.3, 0.1]);
        let cfg = RiskConfig::mean_avar(0.5, 0.5, Orientation::Minimize);
        let t = solve(&mdp, &cfg).unwrap();
        // 0.3 + 0.5 * 0.5 + 0.5 * AVaR_0.5{0, 1} = 0.3 + 0.25 + 0.5
        assert_abs_diff_eq!(t.values[0][0], 1.05, epsilon = 1e-15);
        assert_eq!(cfg.kind, RiskKind::MeanAvar);
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for random_costs in [false, true] {
            let mdp: TabularMdp<f64> = random_mdp(3, 2, 3, random_costs, &mut rng).unwrap();
            let text = serde_json::to_string(&mdp.to_document()).unwrap();
            let back = TabularMdp::from_json_str(&text).unwrap();
            let cfg = RiskConfig::semi_dev(0.5, 2, Orientation::Minimize);
            let a = solve(&mdp, &cfg).unwrap();
            let b = solve(&back, &cfg).unwrap();
            assert!(a.max_q_gap(&b) <= 1e-12);
        }
        assert!(TabularMdp::from_json_str("{\"horizon\": 2}").is_err());
        let bad = r#"{"horizon":2,"states":1,"actions":1,"kernels":[[[[0.5]]]],"costs":[[[0.1]]],"terminal_costs":[0.0]}"#;
        assert!(TabularMdp::from_json_str(bad).is_err());
    }
}
