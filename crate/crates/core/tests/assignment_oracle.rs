use risk_lsvi::assignment::{analytic_action, analytic_mean, discrete_thresholds, AnalyticPolicy, AssignmentEnv, RewardModel};
use risk_lsvi::exact_dp::{policy_value, solve, StageRow, TabularMdp};
use risk_lsvi::experiments::{welch_t, SummaryStats};
use risk_lsvi::lsvi::evaluate_policy;
use risk_lsvi::risk::FiniteDistribution;
use risk_lsvi::{Orientation, RiskConfig};

const JOBS: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Assignment with fixed workers and jobs uniform on `JOBS`, as a tabular MDP.
///
/// State `mask * |JOBS| + j`: `mask` marks used workers, `j` is the current job. Action `r`
/// is the rank among the remaining workers, ranks past the last one are clamped. Stage
/// `H` is a zero terminal stage.
fn assignment_mdp(workers: &[f64]) -> TabularMdp<f64> {
    let h = workers.len();
    let nj = JOBS.len();
    let states = (1 << h) * nj;
    let next_jobs = |mask: usize| {
        FiniteDistribution::new((0..nj).map(|j| (1.0 / nj as f64, mask * nj + j)).collect()).unwrap()
    };
    let rows = (0..h)
        .map(|_| {
            (0..states)
                .map(|x| {
                    let (mask, j) = (x / nj, x % nj);
                    let free: Vec<usize> = (0..h).filter(|w| mask & (1 << w) == 0).collect();
                    (0..h)
                        .map(|r| match free.get(r.min(free.len().saturating_sub(1))) {
                            Some(&w) => StageRow::Deterministic {
                                cost: JOBS[j] * workers[w],
                                next: next_jobs(mask | (1 << w)),
                            },
                            // unreachable states keep the mask
                            None => StageRow::Deterministic {
                                cost: 0.0,
                                next: next_jobs(mask),
                            },
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    TabularMdp::new(states, h, rows, vec![0.0; states], Some(next_jobs(0))).unwrap()
}

fn atoms() -> Vec<(f64, f64)> {
    JOBS.iter().map(|&c| (1.0 / JOBS.len() as f64, c)).collect()
}

#[test]
fn thresholds_are_optimal_against_exact_dp() {
    for workers in [vec![0.2, 0.6], vec![0.15, 0.4, 0.95], vec![0.3, 0.35, 0.8]] {
        let h = workers.len();
        let mdp = assignment_mdp(&workers);
        let risk = RiskConfig::mean(1, Orientation::Maximize);
        let exact = solve(&mdp, &risk).unwrap();
        let t = discrete_thresholds(h, &atoms());
        let nj = JOBS.len();
        let policy: Vec<Vec<usize>> = (0..h)
            .map(|stage| {
                (0..mdp.states())
                    .map(|x| analytic_action(JOBS[x % nj], t.get(stage + 1).map(|r| r.as_slice())))
                    .collect()
            })
            .collect();
        let ours = policy_value(&mdp, &policy, &risk).unwrap();
        // every reachable state: masks with exactly `stage` workers used
        for stage in 0..h {
            for x in 0..mdp.states() {
                if (x / nj).count_ones() as usize == stage {
                    let (a, b) = (ours.values[stage][x], exact.values[stage][x]);
                    assert!((a - b).abs() < 1e-12, "stage {stage} state {x}: {a} vs {b}");
                }
            }
        }
        // expected total from the table: sum_j T[0][j] b_(j)
        let start: f64 = (0..nj).map(|j| exact.values[0][j]).sum::<f64>() / nj as f64;
        let table: f64 = t[0].iter().zip(&workers).map(|(w, b)| w * b).sum();
        assert!((start - table).abs() < 1e-12, "{start} vs {table}");
    }
}

#[test]
fn bernoulli_and_deterministic_rewards_share_means() {
    let h = 4;
    let det = AssignmentEnv::new(h, RewardModel::Deterministic).unwrap();
    let bern = AssignmentEnv::new(h, RewardModel::Bernoulli).unwrap();
    let pol = AnalyticPolicy::new(h);
    let a = evaluate_policy(&det, &pol, 40_000, 3);
    let b = evaluate_policy(&bern, &pol, 40_000, 4);
    assert!(welch_t(&a, &b).abs() < 4.0);
    let target = analytic_mean(h);
    for xs in [&a, &b] {
        let s = SummaryStats::from_sample(xs);
        assert!((s.mean - target).abs() < 4.0 * s.std_error, "{} vs {target}", s.mean);
    }
    // the coin only adds spread
    assert!(SummaryStats::from_sample(&b).std > SummaryStats::from_sample(&a).std);
}
