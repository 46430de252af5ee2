//! The repeated game: one auction per period, with arrivals, departures and
//! phase changes between them, beliefs refreshed from what each application
//! observed, and the metrics reported over a whole run.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::{run_auction, AuctionError, AuctionSetup};
use crate::budget::{estimate_future_bids, BudgetGate, BudgetMode};
use crate::model::{
    validate_scenario, AgentStatus, AppIdx, Assignment, AuctionState, Bid, ReauctionPolicy,
    ResourceIdx, ResourceVector, Scenario, Time, Violation,
};
use crate::oracle::{per_app_totals, trace_total, PerfTrace};
use crate::valuation::{BeliefStore, ValuationError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("invalid scenario: {}", .0.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid(Vec<Violation>),
    #[error("auction at t={t} failed: {source}")]
    Auction {
        t: Time,
        #[source]
        source: AuctionError,
    },
    #[error(transparent)]
    Valuation(#[from] ValuationError),
    #[error("shared baseline performance is zero")]
    ZeroBaseline,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "app", rename_all = "snake_case")]
pub enum Event {
    Arrival(AppIdx),
    Departure(AppIdx),
    PhaseChange(AppIdx),
}

/// What happened in one period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodRecord {
    pub t: Time,
    pub bids: Vec<Bid>,
    pub state: AuctionState,
    pub assignment: Assignment,
    /// Realized valuation of the held resource; `None` when not running.
    pub performance: Vec<Option<f64>>,
    /// Realized valuation minus payment.
    pub payoffs: Vec<f64>,
    pub rounds_used: u32,
    pub quit: Vec<AppIdx>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GameTrace {
    pub seed: u64,
    pub app_ids: Vec<String>,
    pub resource_ids: Vec<String>,
    pub periods: Vec<PeriodRecord>,
    pub events: Vec<(Time, Event)>,
}

impl GameTrace {
    pub fn performance(&self) -> PerfTrace {
        self.periods.iter().map(|p| p.performance.clone()).collect()
    }

    pub fn revenue(&self) -> f64 {
        self.periods.iter().map(|p| p.assignment.revenue).sum()
    }

    pub fn mean_rounds(&self) -> f64 {
        let auctions: Vec<_> = self.periods.iter().filter(|p| !p.bids.is_empty()).collect();
        if auctions.is_empty() {
            return 0.0;
        }
        auctions
            .iter()
            .map(|p| f64::from(p.rounds_used))
            .sum::<f64>()
            / auctions.len() as f64
    }
}

/// Simulation state between periods.
#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub scenario: Scenario,
    pub beliefs: BeliefStore,
    /// Final auction state of the previous period, frozen for budget planning.
    pub last_state: Option<AuctionState>,
    pub last_outcome: Option<PeriodRecord>,
    pub events: Vec<(Time, Event)>,
}

impl World {
    pub fn new(scenario: Scenario) -> Result<Self, SimError> {
        let violations = validate_scenario(&scenario);
        if !violations.is_empty() {
            return Err(SimError::Invalid(violations));
        }
        Ok(Self {
            scenario,
            beliefs: BeliefStore::new(),
            last_state: None,
            last_outcome: None,
            events: Vec::new(),
        })
    }

    fn due_events(&self, t: Time) -> Vec<Event> {
        let mut out = Vec::new();
        for (i, app) in self.scenario.applications.iter().enumerate() {
            let a = AppIdx(i);
            if app.arrival() == t && !app.phases.is_empty() {
                out.push(Event::Arrival(a));
            } else if app.finish() == t && t > 0 {
                out.push(Event::Departure(a));
            } else if t > 0
                && app.is_active(t)
                && app.phase_index_at(t) != app.phase_index_at(t - 1)
            {
                out.push(Event::PhaseChange(a));
            }
        }
        out
    }

    /// Runs period `t` and returns the next world with the period's record.
    ///
    /// Arriving applications and those entering a new phase restart their
    /// beliefs from the new phase's profile. Every running application then
    /// bids from its discounted beliefs, subject to budget planning. Winners
    /// observe the realized valuation of what they hold; quitters observe zero
    /// for what they were about to bid on.
    pub fn step(&self, t: Time) -> Result<(World, PeriodRecord), SimError> {
        let mut next = self.clone();
        let sc = &self.scenario;
        let n = sc.num_apps();
        let k = sc.num_resources();
        let cfg = &sc.config;

        let events = self.due_events(t);
        for ev in &events {
            match *ev {
                Event::Arrival(a) | Event::PhaseChange(a) => {
                    let phase = sc.applications[a.0]
                        .phase_at(t)
                        .expect("running at its own event");
                    next.beliefs
                        .seed(a, t, &phase.valuations, cfg.baseline_mode)?;
                }
                Event::Departure(a) => {
                    next.scenario.applications[a.0].status = AgentStatus::Unassigned;
                }
            }
            next.events.push((t, *ev));
        }

        let running: Vec<AppIdx> = (0..n)
            .map(AppIdx)
            .filter(|a| sc.applications[a.0].is_active(t))
            .collect();

        let reuse = cfg.reauction == ReauctionPolicy::OnEvents && events.is_empty();
        let (bids, state, assignment, rounds_used, quit, refused) =
            match (&self.last_outcome, reuse) {
                (Some(prev), true) => (
                    Vec::new(),
                    prev.state.clone(),
                    prev.assignment.clone(),
                    0,
                    prev.quit.clone(),
                    Vec::new(),
                ),
                _ => {
                    let snapshot = next.beliefs.snapshot(n, k, t, &cfg.discount);
                    let epsilon = sc.epsilon();
                    let frozen = self
                        .last_state
                        .clone()
                        .unwrap_or_else(|| AuctionState::new(k, epsilon));
                    let estimates: Vec<BTreeMap<Time, f64>> = sc
                        .applications
                        .iter()
                        .map(|app| {
                            if app.budget.is_finite() {
                                estimate_future_bids(
                                    app,
                                    t,
                                    &frozen,
                                    &sc.resources,
                                    cfg.price_rule,
                                    cfg.baseline_mode,
                                )
                            } else {
                                BTreeMap::new()
                            }
                        })
                        .collect();
                    let mut gate = BudgetGate::new(
                        cfg.budget_mode,
                        sc.applications.iter().map(|a| a.budget).collect(),
                        sc.applications.iter().map(|a| a.spend).collect(),
                        estimates,
                    );
                    let mut setup = AuctionSetup::new(&sc.resources, n, epsilon);
                    setup.bidders = running.clone();
                    setup.t = t;
                    setup.max_rounds = cfg.max_rounds;
                    setup.price_rule = cfg.price_rule;
                    let out = run_auction(&setup, &snapshot, &mut gate)
                        .map_err(|source| SimError::Auction { t, source })?;
                    (
                        out.bids,
                        out.state,
                        out.assignment,
                        out.rounds_used,
                        out.quit,
                        gate.refused,
                    )
                }
            };

        let loads = assignment.loads(k);
        let mut performance = vec![None; n];
        let mut payoffs = vec![0.0; n];
        for &a in &running {
            let agent = &mut next.scenario.applications[a.0];
            match assignment.resource_of(a) {
                Some(r) => {
                    let value = sc.realized_value(a, t, r, loads[r.0]);
                    let paid = assignment.payments[a.0];
                    performance[a.0] = Some(value);
                    payoffs[a.0] = value - paid;
                    agent.spend += paid;
                    agent.status = AgentStatus::Assigned(ResourceVector::single(r));
                    next.beliefs
                        .record(a, ResourceVector::single(r), t + 1, value)?;
                }
                None => {
                    performance[a.0] = Some(0.0);
                    agent.status = if quit.contains(&a) {
                        AgentStatus::Quit
                    } else {
                        AgentStatus::Unassigned
                    };
                    // a failed bidder observes zero for what it last went after
                    let target = refused
                        .iter()
                        .rev()
                        .find(|b| b.bidder == a)
                        .or_else(|| bids.iter().rev().find(|b| b.bidder == a))
                        .map(|b| b.resource);
                    if let Some(r) = target {
                        next.beliefs
                            .record(a, ResourceVector::single(r), t + 1, 0.0)?;
                    }
                }
            }
        }

        let record = PeriodRecord {
            t,
            bids,
            state: state.clone(),
            assignment,
            performance,
            payoffs,
            rounds_used,
            quit,
        };
        next.last_state = Some(state);
        next.last_outcome = Some(record.clone());
        Ok((next, record))
    }
}

/// Stop a run early once it has settled.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarlyStop {
    pub window: usize,
    pub tol: f64,
    /// Extra periods simulated after convergence is first detected.
    pub grace: usize,
}

/// Simulates up to `horizon` periods, ending early when every application has
/// finished or, with `early_stop`, once the trace has converged.
///
/// The mechanism itself draws no random numbers; `seed` is recorded in the
/// trace so that runs over generated scenarios can be reproduced.
pub fn run(
    scenario: &Scenario,
    horizon: Time,
    seed: u64,
    early_stop: Option<EarlyStop>,
) -> Result<GameTrace, SimError> {
    let mut world = World::new(scenario.clone())?;
    let mut trace = GameTrace {
        seed,
        app_ids: scenario.applications.iter().map(|a| a.id.clone()).collect(),
        resource_ids: scenario.resources.iter().map(|r| r.id.clone()).collect(),
        periods: Vec::new(),
        events: Vec::new(),
    };
    let end = horizon.min(scenario.horizon_end());
    let mut settled_at: Option<usize> = None;
    for t in 0..end {
        let (w, record) = world.step(t)?;
        world = w;
        trace.periods.push(record);
        if let Some(stop) = early_stop {
            if settled_at.is_none() && detect_convergence(&trace, stop.window, stop.tol).is_some() {
                settled_at = Some(trace.periods.len());
            }
            if settled_at.is_some_and(|s| trace.periods.len() >= s + stop.grace) {
                break;
            }
        }
    }
    // departures that fall exactly at the end of the run
    for ev in world.due_events(end) {
        if matches!(ev, Event::Departure(_)) {
            world.events.push((end, ev));
        }
    }
    trace.events = world.events;
    Ok(trace)
}

fn holdings(p: &PeriodRecord) -> Vec<Option<ResourceIdx>> {
    (0..p.assignment.holdings.len())
        .map(|i| p.assignment.resource_of(AppIdx(i)))
        .collect()
}

/// Earliest period from which the assignment never changes again and no
/// payoff moves by `tol` or more between consecutive periods, provided at
/// least `window` periods of the trace back that claim.
pub fn detect_convergence(trace: &GameTrace, window: usize, tol: f64) -> Option<usize> {
    let ps = &trace.periods;
    let window = window.max(1);
    if ps.len() < window {
        return None;
    }
    let mut start = ps.len() - 1;
    while start > 0 {
        let (prev, cur) = (&ps[start - 1], &ps[start]);
        let same = holdings(prev) == holdings(cur);
        let calm = prev
            .payoffs
            .iter()
            .zip(&cur.payoffs)
            .all(|(a, b)| (a - b).abs() < tol);
        if !(same && calm) {
            break;
        }
        start -= 1;
    }
    (ps.len() - start >= window).then_some(start)
}

/// Comparison runs for the same scenario.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Baselines {
    pub shared: Option<PerfTrace>,
    pub private: Option<PerfTrace>,
    pub static_schedule: Option<PerfTrace>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub app_ids: Vec<String>,
    /// Per-application performance summed over the run.
    pub per_app: Vec<f64>,
    pub shared_per_app: Vec<f64>,
    /// Total performance over the shared baseline's total.
    pub normalized_throughput: f64,
    /// Per-application gain over the shared baseline, in percent.
    pub improvement_pct: Vec<f64>,
    /// Total gain over shared, in the same units as performance.
    pub gain_over_shared: f64,
    pub private_throughput: Option<f64>,
    pub static_gain_over_shared: Option<f64>,
    /// Gain points won over the static schedule.
    pub improvement_over_static: Option<f64>,
    pub mean_rounds: f64,
    pub revenue: f64,
    pub converged_at: Option<usize>,
}

/// Summarizes a trace against its baselines.
pub fn metrics(
    trace: &GameTrace,
    baselines: &Baselines,
    window: usize,
    tol: f64,
) -> Result<Report, SimError> {
    let n = trace.app_ids.len();
    let shared = baselines.shared.as_ref().ok_or(SimError::ZeroBaseline)?;
    let shared_total = trace_total(shared);
    if shared_total == 0.0 {
        return Err(SimError::ZeroBaseline);
    }
    let perf = trace.performance();
    let per_app = per_app_totals(&perf, n);
    let shared_per_app = per_app_totals(shared, n);
    let total: f64 = per_app.iter().sum();
    let improvement_pct = per_app
        .iter()
        .zip(&shared_per_app)
        .map(|(c, s)| if *s == 0.0 { 0.0 } else { (c - s) / s * 100.0 })
        .collect();
    let gain_over_shared = total - shared_total;
    let static_gain = baselines
        .static_schedule
        .as_ref()
        .map(|s| trace_total(s) - shared_total);
    Ok(Report {
        app_ids: trace.app_ids.clone(),
        per_app,
        shared_per_app,
        normalized_throughput: total / shared_total,
        improvement_pct,
        gain_over_shared,
        private_throughput: baselines
            .private
            .as_ref()
            .map(|p| trace_total(p) / shared_total),
        static_gain_over_shared: static_gain,
        improvement_over_static: static_gain.map(|s| gain_over_shared - s),
        mean_rounds: trace.mean_rounds(),
        revenue: trace.revenue(),
        converged_at: detect_convergence(trace, window, tol),
    })
}

/// One point of a budget sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub normalized_budget: f64,
    pub throughput: f64,
}

/// Throughput as budgets scale. Each application's budget is `fraction`
/// times what it spent in an unconstrained run of the same scenario.
pub fn budget_sweep(
    scenario: &Scenario,
    horizon: Time,
    fractions: &[f64],
    mode: BudgetMode,
) -> Result<Vec<SweepPoint>, SimError> {
    let mut free = scenario.clone();
    for a in &mut free.applications {
        a.budget = f64::INFINITY;
    }
    let reference = run(&free, horizon, 0, None)?;
    let mut spent = vec![0.0; scenario.num_apps()];
    for p in &reference.periods {
        for (i, pay) in p.assignment.payments.iter().enumerate() {
            spent[i] += pay;
        }
    }
    fractions
        .iter()
        .map(|&f| {
            let mut s = free.clone();
            s.config.budget_mode = mode;
            for (a, &sp) in s.applications.iter_mut().zip(&spent) {
                a.budget = f * sp;
            }
            let tr = run(&s, horizon, 0, None)?;
            Ok(SweepPoint {
                normalized_budget: f,
                throughput: trace_total(&tr.performance()),
            })
        })
        .collect()
}
