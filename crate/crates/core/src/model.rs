//! Domain types shared by the mechanism, the simulator and the file formats.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::budget::BudgetMode;
use crate::valuation::{BaselineMode, DiscountPolicy};

/// Simulated time in auction periods. One period is one auction interval.
pub type Time = u64;

/// Position of a resource in its scenario's resource table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResourceIdx(pub usize);

/// Position of an application in its scenario's application list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AppIdx(pub usize);

impl fmt::Display for ResourceIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

impl fmt::Display for AppIdx {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "a{}", self.0)
    }
}

/// A shareable resource. `slots` is the number of applications that may hold
/// it at the same time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceKind {
    pub id: String,
    pub label: String,
    pub slots: u32,
}

/// A bundle of resources held by one application.
///
/// Entries are kept sorted by resource and merged, so two vectors built from
/// the same multiset compare equal regardless of construction order.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct ResourceVector {
    entries: Vec<(ResourceIdx, u32)>,
}

impl ResourceVector {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn single(resource: ResourceIdx) -> Self {
        Self {
            entries: vec![(resource, 1)],
        }
    }

    /// Builds a vector from arbitrary `(resource, quantity)` pairs. Repeated
    /// resources are summed; zero quantities are dropped.
    pub fn from_entries<I>(entries: I) -> Self
    where
        I: IntoIterator<Item = (ResourceIdx, u32)>,
    {
        let mut merged: BTreeMap<ResourceIdx, u32> = BTreeMap::new();
        for (r, q) in entries {
            if q > 0 {
                *merged.entry(r).or_insert(0) += q;
            }
        }
        Self {
            entries: merged.into_iter().collect(),
        }
    }

    pub fn entries(&self) -> &[(ResourceIdx, u32)] {
        &self.entries
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, resource: ResourceIdx) -> bool {
        self.entries.iter().any(|(r, _)| *r == resource)
    }

    /// The held resource when the vector is exactly one unit of one resource.
    pub fn single_resource(&self) -> Option<ResourceIdx> {
        match self.entries.as_slice() {
            [(r, 1)] => Some(*r),
            _ => None,
        }
    }

    /// The holding obtained by taking `resource` in place of what is held now.
    ///
    /// A single-unit holding is swapped for `resource`; an empty holding gains
    /// it. Multi-entry holdings gain one unit unless they already contain it.
    pub fn substitute(&self, resource: ResourceIdx) -> Self {
        if self.contains(resource) {
            return self.clone();
        }
        if self.is_empty() || self.single_resource().is_some() {
            Self::single(resource)
        } else {
            Self::from_entries(self.entries.iter().copied().chain([(resource, 1)]))
        }
    }
}

impl fmt::Display for ResourceVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (k, (r, q)) in self.entries.iter().enumerate() {
            if k > 0 {
                write!(f, ";")?;
            }
            if *q == 1 {
                write!(f, "{r}")?;
            } else {
                write!(f, "{r}x{q}")?;
            }
        }
        write!(f, "]")
    }
}

/// One execution phase `[start, end)` with the application's utility for each
/// resource while the phase lasts. `valuations` is indexed by resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Phase {
    pub start: Time,
    pub end: Time,
    pub valuations: Vec<f64>,
}

impl Phase {
    pub fn contains(&self, t: Time) -> bool {
        self.start <= t && t < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum AgentStatus {
    Unassigned,
    Assigned(ResourceVector),
    Quit,
}

/// A bidding application: its budget, phase schedule and running spend.
///
/// `budget` is `f64::INFINITY` for an unconstrained agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApplicationAgent {
    pub id: String,
    pub budget: f64,
    pub phases: Vec<Phase>,
    pub spend: f64,
    pub status: AgentStatus,
}

impl ApplicationAgent {
    pub fn new(id: impl Into<String>, budget: f64, phases: Vec<Phase>) -> Self {
        Self {
            id: id.into(),
            budget,
            phases,
            spend: 0.0,
            status: AgentStatus::Unassigned,
        }
    }

    /// First period in which the application runs.
    pub fn arrival(&self) -> Time {
        self.phases.first().map_or(0, |p| p.start)
    }

    /// `T_i`: the end of the last phase.
    pub fn finish(&self) -> Time {
        self.phases.last().map_or(0, |p| p.end)
    }

    pub fn phase_index_at(&self, t: Time) -> Option<usize> {
        self.phases.iter().position(|p| p.contains(t))
    }

    pub fn phase_at(&self, t: Time) -> Option<&Phase> {
        self.phases.iter().find(|p| p.contains(t))
    }

    pub fn is_active(&self, t: Time) -> bool {
        self.phase_at(t).is_some()
    }

    pub fn remaining_budget(&self) -> f64 {
        self.budget - self.spend
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub bidder: AppIdx,
    pub resource: ResourceIdx,
    pub amount: f64,
    pub round: u32,
}

/// A winner holding a slot of a resource together with the bid that won it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StandingBid {
    pub app: AppIdx,
    pub amount: f64,
}

/// Auctioneer state for one parallel auction. All vectors are indexed by
/// resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionState {
    pub prices: Vec<f64>,
    pub min_bids: Vec<f64>,
    pub winners: Vec<Vec<StandingBid>>,
    pub epsilon: f64,
    pub round: u32,
}

impl AuctionState {
    pub fn new(resources: usize, epsilon: f64) -> Self {
        Self {
            prices: vec![0.0; resources],
            min_bids: vec![0.0; resources],
            winners: vec![Vec::new(); resources],
            epsilon,
            round: 0,
        }
    }

    /// Resource currently held by `app`, with its standing bid.
    pub fn holding_of(&self, app: AppIdx) -> Option<(ResourceIdx, f64)> {
        self.winners.iter().enumerate().find_map(|(j, ws)| {
            ws.iter()
                .find(|w| w.app == app)
                .map(|w| (ResourceIdx(j), w.amount))
        })
    }

    pub fn is_full(&self, resource: ResourceIdx, slots: u32) -> bool {
        self.winners[resource.0].len() >= slots as usize
    }
}

/// Outcome of one auction: who holds what and who pays what.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub holdings: Vec<Option<ResourceVector>>,
    pub payments: Vec<f64>,
    pub revenue: f64,
}

impl Assignment {
    /// Revenue is always derived from the payments, never supplied.
    pub fn new(holdings: Vec<Option<ResourceVector>>, payments: Vec<f64>) -> Self {
        let revenue = payments.iter().sum();
        Self {
            holdings,
            payments,
            revenue,
        }
    }

    pub fn unassigned(apps: usize) -> Self {
        Self::new(vec![None; apps], vec![0.0; apps])
    }

    pub fn resource_of(&self, app: AppIdx) -> Option<ResourceIdx> {
        self.holdings
            .get(app.0)
            .and_then(|h| h.as_ref())
            .and_then(ResourceVector::single_resource)
    }

    /// Holder count per resource.
    pub fn loads(&self, resources: usize) -> Vec<u32> {
        let mut loads = vec![0; resources];
        for h in self.holdings.iter().flatten() {
            for (r, q) in h.entries() {
                loads[r.0] += q;
            }
        }
        loads
    }

    /// Sum of `values[app][resource]` over every held single resource.
    pub fn total_value(&self, values: &[Vec<f64>]) -> f64 {
        (0..self.holdings.len())
            .filter_map(|i| self.resource_of(AppIdx(i)).map(|r| values[i][r.0]))
            .sum()
    }
}

/// How the auction is re-run across periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ReauctionPolicy {
    /// Every period starts from an empty allocation.
    #[default]
    Full,
    /// Holdings persist; only periods with arrivals, departures or phase
    /// changes are re-auctioned.
    OnEvents,
}

/// Which price a bidder sees when ranking resources.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PriceRule {
    /// The posted price `p_j`, the largest standing bid on the resource.
    Posted,
    /// The price of the cheapest slot: `B^min_j` when the resource is full,
    /// zero while a slot is free.
    #[default]
    Entry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuctionConfig {
    /// `None` selects the default of 1e-3 times the largest valuation.
    pub epsilon: Option<f64>,
    pub budget_mode: BudgetMode,
    pub baseline_mode: BaselineMode,
    pub price_rule: PriceRule,
    pub reauction: ReauctionPolicy,
    pub discount: DiscountPolicy,
    pub max_rounds: u32,
}

impl Default for AuctionConfig {
    fn default() -> Self {
        Self {
            epsilon: None,
            budget_mode: BudgetMode::default(),
            baseline_mode: BaselineMode::default(),
            price_rule: PriceRule::default(),
            reauction: ReauctionPolicy::default(),
            discount: DiscountPolicy::default(),
            max_rounds: 10_000,
        }
    }
}

/// A complete simulation input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub resources: Vec<ResourceKind>,
    pub applications: Vec<ApplicationAgent>,
    pub config: AuctionConfig,
    /// Per-resource multiplier on the phase valuation, indexed by holder
    /// count minus one.
    pub congestion: Vec<Option<Vec<f64>>>,
    pub shared_resource: Option<ResourceIdx>,
    pub private_resource: Option<ResourceIdx>,
}

impl Scenario {
    /// A scenario with one phase per application running over `[0, periods)`,
    /// valuations taken row-wise from `values`.
    pub fn from_matrix(resources: Vec<ResourceKind>, values: &[Vec<f64>], periods: Time) -> Self {
        let k = resources.len();
        let applications = values
            .iter()
            .enumerate()
            .map(|(i, row)| {
                ApplicationAgent::new(
                    format!("app{}", i + 1),
                    f64::INFINITY,
                    vec![Phase {
                        start: 0,
                        end: periods,
                        valuations: row.clone(),
                    }],
                )
            })
            .collect();
        Self {
            resources,
            applications,
            config: AuctionConfig::default(),
            congestion: vec![None; k],
            shared_resource: None,
            private_resource: None,
        }
    }

    pub fn num_apps(&self) -> usize {
        self.applications.len()
    }

    pub fn num_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn resource_index(&self, id: &str) -> Option<ResourceIdx> {
        self.resources
            .iter()
            .position(|r| r.id == id)
            .map(ResourceIdx)
    }

    pub fn app_index(&self, id: &str) -> Option<AppIdx> {
        self.applications
            .iter()
            .position(|a| a.id == id)
            .map(AppIdx)
    }

    pub fn slots(&self) -> Vec<u32> {
        self.resources.iter().map(|r| r.slots).collect()
    }

    pub fn max_valuation(&self) -> f64 {
        self.applications
            .iter()
            .flat_map(|a| a.phases.iter())
            .flat_map(|p| p.valuations.iter().copied())
            .filter(|v| v.is_finite())
            .fold(0.0, f64::max)
    }

    /// Configured epsilon, or 1e-3 of the largest valuation.
    pub fn epsilon(&self) -> f64 {
        match self.config.epsilon {
            Some(e) => e,
            None => {
                let m = self.max_valuation();
                if m > 0.0 {
                    1e-3 * m
                } else {
                    1e-3
                }
            }
        }
    }

    /// Last period in which any application is running, plus one.
    pub fn horizon_end(&self) -> Time {
        self.applications
            .iter()
            .map(ApplicationAgent::finish)
            .max()
            .unwrap_or(0)
    }

    /// Valuation of `resource` for `app` during the phase containing `t`,
    /// scaled by the resource's congestion curve at `holders` co-runners.
    pub fn realized_value(&self, app: AppIdx, t: Time, resource: ResourceIdx, holders: u32) -> f64 {
        let Some(phase) = self.applications[app.0].phase_at(t) else {
            return 0.0;
        };
        let base = phase.valuations[resource.0];
        match &self.congestion[resource.0] {
            Some(curve) if holders >= 1 => {
                let k = (holders as usize - 1).min(curve.len().saturating_sub(1));
                base * curve.get(k).copied().unwrap_or(1.0)
            }
            _ => base,
        }
    }
}

/// A broken scenario invariant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub entity: String,
    pub invariant: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.entity, self.invariant)
    }
}

fn violation(entity: impl Into<String>, invariant: impl Into<String>) -> Violation {
    Violation {
        entity: entity.into(),
        invariant: invariant.into(),
    }
}

/// Checks every structural invariant of a scenario. An empty result means the
/// scenario is valid.
pub fn validate_scenario(scenario: &Scenario) -> Vec<Violation> {
    let mut out = Vec::new();
    let k = scenario.num_resources();

    let mut seen = std::collections::BTreeSet::new();
    for r in &scenario.resources {
        let entity = format!("resource {}", r.id);
        if r.slots < 1 {
            out.push(violation(&entity, "slots ≥ 1"));
        }
        if !seen.insert(r.id.as_str()) {
            out.push(violation(&entity, "resource ids unique"));
        }
    }

    let mut seen = std::collections::BTreeSet::new();
    for app in &scenario.applications {
        let entity = format!("application {}", app.id);
        if !seen.insert(app.id.as_str()) {
            out.push(violation(&entity, "application ids unique"));
        }
        if app.budget.is_nan() || app.budget < 0.0 {
            out.push(violation(&entity, "budget ≥ 0"));
        }
        if !(app.spend >= 0.0 && app.spend <= app.budget) {
            out.push(violation(&entity, "0 ≤ spend ≤ budget"));
        }
        if app.phases.is_empty() {
            out.push(violation(&entity, "at least one phase"));
        }
        for (n, phase) in app.phases.iter().enumerate() {
            let pe = format!("{entity} phase {}", n + 1);
            if phase.end <= phase.start {
                out.push(violation(&pe, "start < end"));
            }
            if n > 0 && app.phases[n - 1].end != phase.start {
                out.push(violation(&pe, "phases contiguous and non-overlapping"));
            }
            if phase.valuations.len() != k {
                out.push(violation(&pe, "one valuation per resource"));
            }
            if phase.valuations.iter().any(|v| !v.is_finite() || *v < 0.0) {
                out.push(violation(&pe, "valuations finite and ≥ 0"));
            }
        }
    }

    if scenario.congestion.len() != k {
        out.push(violation("congestion curves", "one entry per resource"));
    }
    for (j, curve) in scenario.congestion.iter().enumerate() {
        let Some(curve) = curve else { continue };
        let Some(r) = scenario.resources.get(j) else {
            continue;
        };
        let entity = format!("congestion curve {}", r.id);
        // entries past `slots` only matter to baselines that oversubscribe
        if curve.len() < r.slots as usize {
            out.push(violation(&entity, "one value per holder count 1..slots"));
        }
        if curve.iter().any(|v| !v.is_finite() || *v < 0.0) {
            out.push(violation(&entity, "values finite and ≥ 0"));
        }
    }

    for (name, idx) in [
        ("shared_resource", scenario.shared_resource),
        ("private_resource", scenario.private_resource),
    ] {
        if matches!(idx, Some(r) if r.0 >= k) {
            out.push(violation(name, "refers to an existing resource"));
        }
    }

    let cfg = &scenario.config;
    if let Some(e) = cfg.epsilon {
        if !(e.is_finite() && e > 0.0) {
            out.push(violation("auction", "epsilon > 0"));
        }
    }
    if cfg.max_rounds == 0 {
        out.push(violation("auction", "max_rounds ≥ 1"));
    }
    if let Err(msg) = cfg.discount.check() {
        out.push(violation("auction discount", msg));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_resources() -> Vec<ResourceKind> {
        vec![
            ResourceKind {
                id: "a".into(),
                label: "A".into(),
                slots: 1,
            },
            ResourceKind {
                id: "b".into(),
                label: "B".into(),
                slots: 2,
            },
        ]
    }

    #[test]
    fn vector_equality_ignores_order() {
        let a = ResourceVector::from_entries([(ResourceIdx(2), 1), (ResourceIdx(0), 3)]);
        let b = ResourceVector::from_entries([
            (ResourceIdx(0), 1),
            (ResourceIdx(2), 1),
            (ResourceIdx(0), 2),
        ]);
        assert_eq!(a, b);
        assert_eq!(a.entries(), &[(ResourceIdx(0), 3), (ResourceIdx(2), 1)]);
    }

    #[test]
    fn substitute_swaps_single_holding() {
        let held = ResourceVector::single(ResourceIdx(1));
        assert_eq!(
            held.substitute(ResourceIdx(3)),
            ResourceVector::single(ResourceIdx(3))
        );
        assert_eq!(held.substitute(ResourceIdx(1)), held);
        assert_eq!(
            ResourceVector::empty().substitute(ResourceIdx(0)),
            ResourceVector::single(ResourceIdx(0))
        );
    }

    #[test]
    fn valid_matrix_scenario() {
        let s = Scenario::from_matrix(two_resources(), &[vec![1.0, 0.5], vec![0.2, 0.3]], 4);
        assert!(validate_scenario(&s).is_empty());
    }

    #[test]
    fn zero_slots_is_one_violation() {
        let mut res = two_resources();
        res[1].slots = 0;
        let s = Scenario::from_matrix(res, &[vec![1.0, 0.5]], 4);
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].invariant, "slots ≥ 1");
    }

    #[test]
    fn inverted_phase_is_one_violation() {
        let mut s = Scenario::from_matrix(two_resources(), &[vec![1.0, 0.5]], 4);
        s.applications[0].phases[0].start = 4;
        let v = validate_scenario(&s);
        assert_eq!(v.len(), 1, "{v:?}");
        assert_eq!(v[0].invariant, "start < end");
    }

    #[test]
    fn revenue_is_sum_of_payments() {
        let a = Assignment::new(vec![None, None, None], vec![0.1, 0.2, 0.3]);
        assert_eq!(a.revenue, 0.1 + 0.2 + 0.3);
    }
}
