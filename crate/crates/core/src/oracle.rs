//! Exact and baseline allocators: exhaustive search for the welfare optimum,
//! and the shared, private and static schedules the mechanism is compared to.

use thiserror::Error;

use crate::model::{AppIdx, Assignment, ResourceIdx, ResourceVector, Scenario, Time};

/// Largest `K^N` the exhaustive search accepts.
pub const MAX_ENUMERATION: f64 = 1e7;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("instance too large to enumerate: {resources}^{apps} assignments")]
    TooLarge { apps: usize, resources: usize },
    #[error("scenario has no {0} designated")]
    MissingConfiguration(&'static str),
    #[error("valuation rows have inconsistent lengths")]
    Ragged,
}

/// Best assignment found by exhaustive search.
#[derive(Debug, Clone, PartialEq)]
pub struct Optimum {
    pub assignment: Assignment,
    pub total: f64,
    /// Best total over every other capacity-respecting assignment, or
    /// `-inf` when there is none.
    pub runner_up: f64,
}

impl Optimum {
    pub fn is_unique(&self, tol: f64) -> bool {
        self.total - self.runner_up > tol
    }
}

/// Enumerates every assignment of applications to at most one resource each,
/// respecting slot counts, and returns one with maximal total valuation.
/// Among equal totals the lexicographically first choice vector wins, where
/// each application tries resources in index order before staying out.
pub fn brute_force_optimal(values: &[Vec<f64>], slots: &[u32]) -> Result<Optimum, OracleError> {
    let n = values.len();
    let k = slots.len();
    if values.iter().any(|row| row.len() != k) {
        return Err(OracleError::Ragged);
    }
    if (k as f64).powi(n as i32) > MAX_ENUMERATION {
        return Err(OracleError::TooLarge {
            apps: n,
            resources: k,
        });
    }

    struct Search<'a> {
        values: &'a [Vec<f64>],
        free: Vec<u32>,
        choice: Vec<Option<usize>>,
        best: Option<(f64, Vec<Option<usize>>)>,
        runner_up: f64,
    }

    impl Search<'_> {
        fn visit(&mut self, i: usize, acc: f64) {
            if i == self.values.len() {
                match &self.best {
                    Some((b, _)) if acc <= *b => self.runner_up = self.runner_up.max(acc),
                    Some((b, _)) => {
                        self.runner_up = self.runner_up.max(*b);
                        self.best = Some((acc, self.choice.clone()));
                    }
                    None => self.best = Some((acc, self.choice.clone())),
                }
                return;
            }
            for j in 0..self.free.len() {
                if self.free[j] == 0 {
                    continue;
                }
                self.free[j] -= 1;
                self.choice[i] = Some(j);
                self.visit(i + 1, acc + self.values[i][j]);
                self.free[j] += 1;
            }
            self.choice[i] = None;
            self.visit(i + 1, acc);
        }
    }

    let mut search = Search {
        values,
        free: slots.to_vec(),
        choice: vec![None; n],
        best: None,
        runner_up: f64::NEG_INFINITY,
    };
    search.visit(0, 0.0);
    let (total, choice) = search.best.expect("the empty assignment always exists");
    let holdings = choice
        .iter()
        .map(|c| c.map(|j| ResourceVector::single(ResourceIdx(j))))
        .collect();
    Ok(Optimum {
        assignment: Assignment::new(holdings, vec![0.0; n]),
        total,
        runner_up: search.runner_up,
    })
}

/// Per-period, per-application performance; `None` while an application is
/// not running.
pub type PerfTrace = Vec<Vec<Option<f64>>>;

/// Sum of every recorded performance value.
pub fn trace_total(trace: &PerfTrace) -> f64 {
    trace.iter().flatten().flatten().sum()
}

/// Per-application sums over the trace.
pub fn per_app_totals(trace: &PerfTrace, apps: usize) -> Vec<f64> {
    let mut out = vec![0.0; apps];
    for row in trace {
        for (i, v) in row.iter().enumerate() {
            if let Some(v) = v {
                out[i] += v;
            }
        }
    }
    out
}

/// Performance when every running application gets the same resource for
/// the whole run, with all of them counted as co-runners.
fn fixed_configuration(scenario: &Scenario, resource: ResourceIdx, co_run: bool) -> PerfTrace {
    let n = scenario.num_apps();
    (0..scenario.horizon_end())
        .map(|t| {
            let running = scenario
                .applications
                .iter()
                .filter(|a| a.is_active(t))
                .count() as u32;
            let holders = if co_run { running } else { 1 };
            (0..n)
                .map(|i| {
                    let app = &scenario.applications[i];
                    app.is_active(t)
                        .then(|| scenario.realized_value(AppIdx(i), t, resource, holders))
                })
                .collect()
        })
        .collect()
}

/// Every application runs on the designated shared resource.
pub fn shared_baseline(scenario: &Scenario) -> Result<PerfTrace, OracleError> {
    let r = scenario
        .shared_resource
        .ok_or(OracleError::MissingConfiguration("shared_resource"))?;
    Ok(fixed_configuration(scenario, r, true))
}

/// Every application runs alone on its own copy of the designated private
/// resource.
pub fn private_baseline(scenario: &Scenario) -> Result<PerfTrace, OracleError> {
    let r = scenario
        .private_resource
        .ok_or(OracleError::MissingConfiguration("private_resource"))?;
    Ok(fixed_configuration(scenario, r, false))
}

/// Solves the assignment once from first-phase valuations and keeps it for
/// the whole run.
pub fn static_schedule_baseline(
    scenario: &Scenario,
) -> Result<(Assignment, PerfTrace), OracleError> {
    let values: Vec<Vec<f64>> = scenario
        .applications
        .iter()
        .map(|a| {
            a.phases.first().map_or_else(
                || vec![0.0; scenario.num_resources()],
                |p| p.valuations.clone(),
            )
        })
        .collect();
    let opt = brute_force_optimal(&values, &scenario.slots())?;
    let trace = hold_assignment(scenario, &opt.assignment, 0..scenario.horizon_end());
    Ok((opt.assignment, trace))
}

/// Realized performance of a fixed assignment over `periods`.
pub fn hold_assignment(
    scenario: &Scenario,
    assignment: &Assignment,
    periods: std::ops::Range<Time>,
) -> PerfTrace {
    let n = scenario.num_apps();
    periods
        .map(|t| {
            let mut loads = vec![0u32; scenario.num_resources()];
            for i in 0..n {
                if scenario.applications[i].is_active(t) {
                    if let Some(r) = assignment.resource_of(AppIdx(i)) {
                        loads[r.0] += 1;
                    }
                }
            }
            (0..n)
                .map(|i| {
                    if !scenario.applications[i].is_active(t) {
                        return None;
                    }
                    Some(assignment.resource_of(AppIdx(i)).map_or(0.0, |r| {
                        scenario.realized_value(AppIdx(i), t, r, loads[r.0])
                    }))
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn matrix_m() -> Vec<Vec<f64>> {
        vec![
            vec![1.9, 1.7, 1.5, 1.0, 0.9],
            vec![1.6, 1.3, 1.1, 0.8, 0.7],
            vec![1.4, 1.0, 0.6, 0.5, 0.4],
            vec![0.3, 0.6, 0.9, 1.2, 1.4],
            vec![0.7, 0.8, 1.1, 1.4, 1.7],
        ]
    }

    #[test]
    fn matrix_m_optimum() {
        let opt = brute_force_optimal(&matrix_m(), &[1, 2, 4, 8, 16]).unwrap();
        assert!((opt.total - 7.5).abs() < 1e-9);
        assert_eq!(opt.assignment.resource_of(AppIdx(2)), Some(ResourceIdx(0)));
        assert!(opt.is_unique(1e-9));
        // hand check of who takes the single-slot resource; the rest is forced
        let app1_first = 1.9 + 1.3 + 1.0 + 1.4 + 1.7;
        let app2_first = 1.6 + 1.7 + 1.0 + 1.4 + 1.7;
        let app3_first = 1.4 + 1.7 + 1.3 + 1.4 + 1.7;
        assert!((app1_first - 7.3_f64).abs() < 1e-9);
        assert!((app2_first - 7.4_f64).abs() < 1e-9);
        assert!((app3_first - 7.5_f64).abs() < 1e-9);
    }

    #[test]
    fn single_app_takes_its_best() {
        let opt = brute_force_optimal(&[vec![0.2, 0.9, 0.4]], &[1, 1, 1]).unwrap();
        assert_eq!(opt.assignment.resource_of(AppIdx(0)), Some(ResourceIdx(1)));
        assert_eq!(opt.total, 0.9);
    }

    #[test]
    fn equal_values_fill_lexicographically() {
        let opt = brute_force_optimal(&vec![vec![0.5; 3]; 3], &[2, 1, 1]).unwrap();
        assert!((opt.total - 1.5).abs() < 1e-12);
        let held: Vec<_> = (0..3)
            .map(|i| opt.assignment.resource_of(AppIdx(i)))
            .collect();
        assert_eq!(
            held,
            vec![
                Some(ResourceIdx(0)),
                Some(ResourceIdx(0)),
                Some(ResourceIdx(1))
            ]
        );
        assert!(!opt.is_unique(1e-9));
    }

    #[test]
    fn over_capacity_leaves_someone_out() {
        let opt = brute_force_optimal(&[vec![0.5], vec![0.7]], &[1]).unwrap();
        assert_eq!(opt.total, 0.7);
        assert_eq!(opt.assignment.resource_of(AppIdx(0)), None);
    }

    #[test]
    fn size_guard() {
        let big = vec![vec![0.0; 10]; 8];
        assert_eq!(
            brute_force_optimal(&big, &[1; 10]),
            Err(OracleError::TooLarge {
                apps: 8,
                resources: 10
            })
        );
    }
}
