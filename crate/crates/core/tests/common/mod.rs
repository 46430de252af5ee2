//! Reference computations kept independent of the library's own solvers.
#![allow(dead_code)]

use contend::budget::BudgetMode;
use contend::model::{ApplicationAgent, Phase, ResourceKind, Scenario};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Best total valuation over every capacity-respecting assignment, by plain
/// recursion over each application's choice.
pub fn reference_optimum(values: &[Vec<f64>], slots: &[u32]) -> f64 {
    fn go(i: usize, values: &[Vec<f64>], free: &mut [u32]) -> f64 {
        if i == values.len() {
            return 0.0;
        }
        let mut best = go(i + 1, values, free);
        for j in 0..free.len() {
            if free[j] > 0 {
                free[j] -= 1;
                best = best.max(values[i][j] + go(i + 1, values, free));
                free[j] += 1;
            }
        }
        best
    }
    go(0, values, &mut slots.to_vec())
}

/// Probability of winning with bid `b` when the `k = n − m` rivals bid
/// `k/(k+1)` times a uniform valuation.
pub fn reference_win_prob(n: u32, m: u32, b: f64) -> f64 {
    let k = f64::from(n - m);
    ((k + 1.0) / k * b).clamp(0.0, 1.0).powf(k)
}

pub fn reference_utility(n: u32, m: u32, v: f64, b: f64) -> f64 {
    reference_win_prob(n, m, b) * (v - b)
}

pub fn levels(slots: &[u32]) -> Vec<ResourceKind> {
    slots
        .iter()
        .enumerate()
        .map(|(j, &s)| ResourceKind {
            id: format!("r{}", j + 1),
            label: String::new(),
            slots: s,
        })
        .collect()
}

pub fn matrix_m() -> Vec<Vec<f64>> {
    vec![
        vec![1.9, 1.7, 1.5, 1.0, 0.9],
        vec![1.6, 1.3, 1.1, 0.8, 0.7],
        vec![1.4, 1.0, 0.6, 0.5, 0.4],
        vec![0.3, 0.6, 0.9, 1.2, 1.4],
        vec![0.7, 0.8, 1.1, 1.4, 1.7],
    ]
}

/// Small multi-phase scenario with staggered arrivals, optional budgets and
/// optional congestion.
pub fn random_scenario(seed: u64) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=5);
    let k = rng.random_range(2..=4);
    let slots: Vec<u32> = (0..k).map(|_| rng.random_range(1..=3)).collect();
    let mut s = Scenario::from_matrix(levels(&slots), &vec![vec![0.0; k]; n], 1);
    s.applications = (0..n)
        .map(|i| {
            let mut start = rng.random_range(0..3);
            let phases = (0..rng.random_range(1..=3))
                .map(|_| {
                    let len = rng.random_range(1..=4);
                    let p = Phase {
                        start,
                        end: start + len,
                        valuations: (0..k).map(|_| rng.random::<f64>()).collect(),
                    };
                    start += len;
                    p
                })
                .collect();
            let budget = if rng.random_bool(0.5) {
                rng.random_range(0.0..3.0)
            } else {
                f64::INFINITY
            };
            ApplicationAgent::new(format!("a{i}"), budget, phases)
        })
        .collect();
    for (j, c) in s.congestion.iter_mut().enumerate() {
        if rng.random_bool(0.3) {
            *c = Some((0..slots[j]).map(|h| 1.0 - 0.1 * f64::from(h)).collect());
        }
    }
    s.config.budget_mode = if rng.random_bool(0.5) {
        BudgetMode::Literal
    } else {
        BudgetMode::Inclusive
    };
    s
}
