//! Belief updating over observed valuations, the adaptive discount factor and
//! differential valuations used to rank resources.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{AppIdx, ApplicationAgent, ResourceIdx, ResourceVector, Time};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ValuationError {
    #[error("observation at t={t} does not follow the last sample at t={last}")]
    OutOfOrder { t: Time, last: Time },
    #[error("valuation history is empty")]
    EmptyHistory,
    #[error("discount factor {0} outside [0, 1]")]
    DiscountOutOfRange(f64),
    #[error("belief requested at t={w} before the last sample at t={last}")]
    BeliefBeforeLastSample { w: Time, last: Time },
    #[error("unknown resource index {0}")]
    UnknownResource(usize),
    #[error("application finished at t={finish}")]
    Finished { finish: Time },
    #[error("application has not arrived at t={t}")]
    NotArrived { t: Time },
}

/// Time-ordered observed valuations of one resource vector by one application.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValuationHistory {
    samples: Vec<(Time, f64)>,
}

impl ValuationHistory {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn samples(&self) -> &[(Time, f64)] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last(&self) -> Option<(Time, f64)> {
        self.samples.last().copied()
    }

    /// Returns a new history extended by `(t, value)`. Times must be strictly
    /// increasing.
    pub fn record_observation(&self, t: Time, value: f64) -> Result<Self, ValuationError> {
        let mut next = self.clone();
        next.push(t, value)?;
        Ok(next)
    }

    pub(crate) fn push(&mut self, t: Time, value: f64) -> Result<(), ValuationError> {
        if let Some((last, _)) = self.last() {
            if t <= last {
                return Err(ValuationError::OutOfOrder { t, last });
            }
        }
        self.samples.push((t, value));
        Ok(())
    }
}

/// Discounted average of the observed valuations up to time `w`:
///
/// `Σ δ^(w−n)·v(n) / Σ δ^(w−n)` over the sampled periods `n ≤ w`. Periods
/// without a sample contribute to neither sum. `0^0` is taken as 1, so the
/// latest sample at `w` always has weight one.
pub fn belief_update(
    history: &ValuationHistory,
    w: Time,
    delta: f64,
) -> Result<f64, ValuationError> {
    if !(0.0..=1.0).contains(&delta) {
        return Err(ValuationError::DiscountOutOfRange(delta));
    }
    let (last, _) = history.last().ok_or(ValuationError::EmptyHistory)?;
    if w < last {
        return Err(ValuationError::BeliefBeforeLastSample { w, last });
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for &(n, v) in history.samples() {
        let age = w - n;
        let weight = if age == 0 {
            1.0
        } else {
            delta.powf(age as f64)
        };
        num += weight * v;
        den += weight;
    }
    if den == 0.0 {
        // δ = 0 and no sample at w: only the most recent observation counts.
        return Ok(history.samples().last().map_or(0.0, |s| s.1));
    }
    // The ratio can drift one ulp outside the sample range.
    let (lo, hi) = history
        .samples()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), s| {
            (lo.min(s.1), hi.max(s.1))
        });
    Ok((num / den).clamp(lo, hi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscountMode {
    /// Squared mean over population variance of the samples.
    Adaptive,
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiscountPolicy {
    pub mode: DiscountMode,
    pub clamp_min: f64,
    pub clamp_max: f64,
}

impl Default for DiscountPolicy {
    fn default() -> Self {
        Self {
            mode: DiscountMode::Adaptive,
            clamp_min: 0.0,
            clamp_max: 1.0,
        }
    }
}

impl DiscountPolicy {
    pub fn fixed(delta: f64) -> Self {
        Self {
            mode: DiscountMode::Fixed(delta),
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<(), String> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.clamp_min) || !unit.contains(&self.clamp_max) {
            return Err("clamp bounds within [0, 1]".into());
        }
        if self.clamp_min > self.clamp_max {
            return Err("clamp_min ≤ clamp_max".into());
        }
        if let DiscountMode::Fixed(d) = self.mode {
            if !unit.contains(&d) {
                return Err("fixed discount within [0, 1]".into());
            }
        }
        Ok(())
    }
}

/// Discount factor for a history under `policy`.
///
/// The adaptive ratio is unbounded, so it is clamped into
/// `[clamp_min, clamp_max]`; a zero-variance history trusts its past fully and
/// gets `clamp_max`.
pub fn discount_factor(history: &ValuationHistory, policy: &DiscountPolicy) -> f64 {
    match policy.mode {
        DiscountMode::Fixed(d) => d,
        DiscountMode::Adaptive => {
            let n = history.len();
            if n == 0 {
                return policy.clamp_max;
            }
            let mean = history.samples().iter().map(|s| s.1).sum::<f64>() / n as f64;
            let var = history
                .samples()
                .iter()
                .map(|s| (s.1 - mean).powi(2))
                .sum::<f64>()
                / n as f64;
            if var <= 0.0 {
                return policy.clamp_max;
            }
            (mean * mean / var).clamp(policy.clamp_min, policy.clamp_max)
        }
    }
}

/// Utility attributed to holding nothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    #[default]
    Zero,
    /// Mean of the application's per-resource valuations.
    Mean,
}

/// Anything that can report an application's current valuation of a holding.
pub trait BeliefSource {
    fn num_resources(&self) -> usize;

    /// `v_i(t, m)`, including the empty holding.
    fn value(&self, app: AppIdx, t: Time, holding: &ResourceVector) -> f64;
}

/// `v_i(t, m ⊕ r_j) − v_i(t, m)`: what `app` gains by taking `resource` in
/// place of its current holding.
pub fn differential_valuation<B: BeliefSource + ?Sized>(
    beliefs: &B,
    app: AppIdx,
    t: Time,
    current: &ResourceVector,
    resource: ResourceIdx,
) -> Result<f64, ValuationError> {
    if resource.0 >= beliefs.num_resources() {
        return Err(ValuationError::UnknownResource(resource.0));
    }
    let next = current.substitute(resource);
    if &next == current {
        return Ok(0.0);
    }
    Ok(beliefs.value(app, t, &next) - beliefs.value(app, t, current))
}

/// Profiled valuation of `resource` in the phase that contains `t`.
pub fn phase_valuation(
    app: &ApplicationAgent,
    t: Time,
    resource: ResourceIdx,
) -> Result<f64, ValuationError> {
    match app.phase_at(t) {
        Some(p) => p
            .valuations
            .get(resource.0)
            .copied()
            .ok_or(ValuationError::UnknownResource(resource.0)),
        None if t >= app.finish() => Err(ValuationError::Finished {
            finish: app.finish(),
        }),
        None => Err(ValuationError::NotArrived { t }),
    }
}

/// A fixed table of single-resource valuations, one row per application.
/// Multi-entry holdings are valued as the quantity-weighted sum of entries.
#[derive(Debug, Clone, PartialEq)]
pub struct ValuationMatrix {
    values: Vec<Vec<f64>>,
    baselines: Vec<f64>,
}

impl ValuationMatrix {
    pub fn new(values: Vec<Vec<f64>>) -> Self {
        let baselines = vec![0.0; values.len()];
        Self { values, baselines }
    }

    pub fn with_baseline(values: Vec<Vec<f64>>, mode: BaselineMode) -> Self {
        let baselines = values
            .iter()
            .map(|row| match mode {
                BaselineMode::Zero => 0.0,
                BaselineMode::Mean if row.is_empty() => 0.0,
                BaselineMode::Mean => row.iter().sum::<f64>() / row.len() as f64,
            })
            .collect();
        Self { values, baselines }
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    pub fn num_apps(&self) -> usize {
        self.values.len()
    }

    pub fn baseline(&self, app: AppIdx) -> f64 {
        self.baselines[app.0]
    }

    pub fn get(&self, app: AppIdx, resource: ResourceIdx) -> f64 {
        self.values[app.0][resource.0]
    }
}

impl BeliefSource for ValuationMatrix {
    fn num_resources(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    fn value(&self, app: AppIdx, _t: Time, holding: &ResourceVector) -> f64 {
        if holding.is_empty() {
            return self.baselines[app.0];
        }
        holding
            .entries()
            .iter()
            .map(|(r, q)| self.values[app.0][r.0] * f64::from(*q))
            .sum()
    }
}

/// Every application's observation history, keyed by held resource vector.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BeliefStore {
    histories: BTreeMap<(AppIdx, ResourceVector), ValuationHistory>,
}

impl BeliefStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn history(&self, app: AppIdx, holding: &ResourceVector) -> Option<&ValuationHistory> {
        self.histories.get(&(app, holding.clone()))
    }

    pub fn record(
        &mut self,
        app: AppIdx,
        holding: ResourceVector,
        t: Time,
        value: f64,
    ) -> Result<(), ValuationError> {
        self.histories
            .entry((app, holding))
            .or_default()
            .push(t, value)
    }

    /// Drops everything `app` has observed.
    pub fn forget(&mut self, app: AppIdx) {
        self.histories.retain(|(a, _), _| *a != app);
    }

    /// Replaces `app`'s histories with one profiled sample per resource at
    /// `t`, plus the empty-holding baseline.
    pub fn seed(
        &mut self,
        app: AppIdx,
        t: Time,
        valuations: &[f64],
        baseline: BaselineMode,
    ) -> Result<(), ValuationError> {
        self.forget(app);
        for (j, &v) in valuations.iter().enumerate() {
            self.record(app, ResourceVector::single(ResourceIdx(j)), t, v)?;
        }
        let base = match baseline {
            BaselineMode::Zero => 0.0,
            BaselineMode::Mean if valuations.is_empty() => 0.0,
            BaselineMode::Mean => valuations.iter().sum::<f64>() / valuations.len() as f64,
        };
        self.record(app, ResourceVector::empty(), t, base)
    }

    /// Current belief of `app` about `holding` at time `w`, with the discount
    /// factor derived from that history under `policy`.
    pub fn belief(
        &self,
        app: AppIdx,
        holding: &ResourceVector,
        w: Time,
        policy: &DiscountPolicy,
    ) -> Option<f64> {
        let h = self.history(app, holding)?;
        let delta = discount_factor(h, policy);
        belief_update(h, w, delta).ok()
    }

    /// Belief table at time `w` for the given applications. Rows of absent
    /// applications and unobserved holdings are zero.
    pub fn snapshot(
        &self,
        apps: usize,
        resources: usize,
        w: Time,
        policy: &DiscountPolicy,
    ) -> ValuationMatrix {
        let mut values = vec![vec![0.0; resources]; apps];
        let mut baselines = vec![0.0; apps];
        for (i, row) in values.iter_mut().enumerate() {
            let app = AppIdx(i);
            for (j, v) in row.iter_mut().enumerate() {
                *v = self
                    .belief(app, &ResourceVector::single(ResourceIdx(j)), w, policy)
                    .unwrap_or(0.0);
            }
            baselines[i] = self
                .belief(app, &ResourceVector::empty(), w, policy)
                .unwrap_or(0.0);
        }
        ValuationMatrix { values, baselines }
    }
}
