//! Scenario files, trace and report export. The command-line driver lives in
//! the `cli` submodule.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::budget::BudgetMode;
use crate::model::{
    validate_scenario, AppIdx, ApplicationAgent, AuctionConfig, Phase, PriceRule, ReauctionPolicy,
    ResourceKind, Scenario, Time, Violation,
};
use crate::sim::{detect_convergence, GameTrace, Report};
use crate::valuation::{BaselineMode, DiscountMode, DiscountPolicy};

mod cli;

pub use cli::cli;

/// Environment variable naming the directory traces go to when no output
/// path is given.
pub const OUT_DIR_ENV: &str = "CONTEND_OUT_DIR";

/// Window and tolerance behind the `converged` column of table output.
pub const CONVERGENCE_WINDOW: usize = 3;
pub const CONVERGENCE_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{origin}: {message}")]
    Parse { origin: String, message: String },
    #[error("{origin}: {message}")]
    Schema { origin: String, message: String },
    #[error("{origin}: invalid scenario: {}", violations.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "))]
    Invalid {
        origin: String,
        violations: Vec<Violation>,
    },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("serialization failed: {0}")]
    Serialize(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum TraceFormat {
    /// One comma-separated row per period and application.
    #[default]
    Table,
    /// The full trace as JSON, including events and auction states.
    Document,
}

impl TraceFormat {
    pub fn extension(self) -> &'static str {
        match self {
            TraceFormat::Table => "csv",
            TraceFormat::Document => "json",
        }
    }
}

// ---- scenario files ----

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    shared_resource: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    private_resource: Option<String>,
    #[serde(default)]
    auction: AuctionFile,
    resources: Vec<ResourceFile>,
    applications: Vec<ApplicationFile>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    congestion_curves: BTreeMap<String, Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ResourceFile {
    id: String,
    #[serde(default)]
    label: String,
    slots: u32,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ApplicationFile {
    id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    budget: Option<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    arrival: Time,
    phases: Vec<PhaseFile>,
}

fn is_zero(t: &Time) -> bool {
    *t == 0
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PhaseFile {
    periods: Time,
    valuations: BTreeMap<String, f64>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AuctionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    epsilon: Option<f64>,
    #[serde(default)]
    budget_mode: BudgetMode,
    #[serde(default)]
    baseline_mode: BaselineMode,
    #[serde(default)]
    price_rule: PriceRule,
    #[serde(default)]
    reauction: ReauctionPolicy,
    #[serde(default = "default_max_rounds")]
    max_rounds: u32,
    #[serde(default)]
    discount: DiscountFile,
}

fn default_max_rounds() -> u32 {
    AuctionConfig::default().max_rounds
}

impl Default for AuctionFile {
    fn default() -> Self {
        Self {
            epsilon: None,
            budget_mode: BudgetMode::default(),
            baseline_mode: BaselineMode::default(),
            price_rule: PriceRule::default(),
            reauction: ReauctionPolicy::default(),
            max_rounds: default_max_rounds(),
            discount: DiscountFile::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DiscountKind {
    Adaptive,
    Fixed,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DiscountFile {
    mode: DiscountKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    value: Option<f64>,
    #[serde(default)]
    clamp_min: f64,
    #[serde(default = "one")]
    clamp_max: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for DiscountFile {
    fn default() -> Self {
        Self {
            mode: DiscountKind::Adaptive,
            value: None,
            clamp_min: 0.0,
            clamp_max: 1.0,
        }
    }
}

fn schema(origin: &str, message: impl Into<String>) -> IoError {
    IoError::Schema {
        origin: origin.to_string(),
        message: message.into(),
    }
}

fn from_file(file: ScenarioFile, origin: &str) -> Result<Scenario, IoError> {
    let resources: Vec<ResourceKind> = file
        .resources
        .into_iter()
        .map(|r| ResourceKind {
            id: r.id,
            label: r.label,
            slots: r.slots,
        })
        .collect();
    let lookup = |id: &str, what: &str| {
        resources
            .iter()
            .position(|r| r.id == id)
            .map(crate::model::ResourceIdx)
            .ok_or_else(|| schema(origin, format!("{what} names unknown resource `{id}`")))
    };

    let mut applications = Vec::with_capacity(file.applications.len());
    for app in file.applications {
        let mut start = app.arrival;
        let mut phases = Vec::with_capacity(app.phases.len());
        for (p, phase) in app.phases.into_iter().enumerate() {
            let mut valuations = vec![f64::NAN; resources.len()];
            for (id, v) in phase.valuations {
                let r = lookup(&id, &format!("application `{}` phase {}", app.id, p + 1))?;
                valuations[r.0] = v;
            }
            if let Some(j) = valuations.iter().position(|v| v.is_nan()) {
                return Err(schema(
                    origin,
                    format!(
                        "application `{}` phase {} has no valuation for resource `{}`",
                        app.id,
                        p + 1,
                        resources[j].id
                    ),
                ));
            }
            phases.push(Phase {
                start,
                end: start + phase.periods,
                valuations,
            });
            start += phase.periods;
        }
        applications.push(ApplicationAgent::new(
            app.id,
            app.budget.unwrap_or(f64::INFINITY),
            phases,
        ));
    }

    let mut congestion = vec![None; resources.len()];
    for (id, curve) in file.congestion_curves {
        congestion[lookup(&id, "congestion_curves")?.0] = Some(curve);
    }

    let d = file.auction.discount;
    let mode = match (d.mode, d.value) {
        (DiscountKind::Adaptive, None) => DiscountMode::Adaptive,
        (DiscountKind::Fixed, Some(v)) => DiscountMode::Fixed(v),
        (DiscountKind::Adaptive, Some(_)) => {
            return Err(schema(origin, "adaptive discount takes no `value`"))
        }
        (DiscountKind::Fixed, None) => {
            return Err(schema(origin, "fixed discount needs a `value`"))
        }
    };

    Ok(Scenario {
        shared_resource: file
            .shared_resource
            .as_deref()
            .map(|id| lookup(id, "shared_resource"))
            .transpose()?,
        private_resource: file
            .private_resource
            .as_deref()
            .map(|id| lookup(id, "private_resource"))
            .transpose()?,
        config: AuctionConfig {
            epsilon: file.auction.epsilon,
            budget_mode: file.auction.budget_mode,
            baseline_mode: file.auction.baseline_mode,
            price_rule: file.auction.price_rule,
            reauction: file.auction.reauction,
            discount: DiscountPolicy {
                mode,
                clamp_min: d.clamp_min,
                clamp_max: d.clamp_max,
            },
            max_rounds: file.auction.max_rounds,
        },
        resources,
        applications,
        congestion,
    })
}

fn to_file(s: &Scenario) -> ScenarioFile {
    let rid = |r: crate::model::ResourceIdx| s.resources[r.0].id.clone();
    let (kind, value) = match s.config.discount.mode {
        DiscountMode::Adaptive => (DiscountKind::Adaptive, None),
        DiscountMode::Fixed(v) => (DiscountKind::Fixed, Some(v)),
    };
    ScenarioFile {
        shared_resource: s.shared_resource.map(rid),
        private_resource: s.private_resource.map(rid),
        auction: AuctionFile {
            epsilon: s.config.epsilon,
            budget_mode: s.config.budget_mode,
            baseline_mode: s.config.baseline_mode,
            price_rule: s.config.price_rule,
            reauction: s.config.reauction,
            max_rounds: s.config.max_rounds,
            discount: DiscountFile {
                mode: kind,
                value,
                clamp_min: s.config.discount.clamp_min,
                clamp_max: s.config.discount.clamp_max,
            },
        },
        resources: s
            .resources
            .iter()
            .map(|r| ResourceFile {
                id: r.id.clone(),
                label: r.label.clone(),
                slots: r.slots,
            })
            .collect(),
        applications: s
            .applications
            .iter()
            .map(|a| ApplicationFile {
                id: a.id.clone(),
                budget: a.budget.is_finite().then_some(a.budget),
                arrival: a.arrival(),
                phases: a
                    .phases
                    .iter()
                    .map(|p| PhaseFile {
                        periods: p.end.saturating_sub(p.start),
                        valuations: s
                            .resources
                            .iter()
                            .zip(&p.valuations)
                            .map(|(r, v)| (r.id.clone(), *v))
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
        congestion_curves: s
            .resources
            .iter()
            .zip(&s.congestion)
            .filter_map(|(r, c)| c.as_ref().map(|c| (r.id.clone(), c.clone())))
            .collect(),
    }
}

/// Parses and validates scenario text. `origin` names the source in errors.
pub fn parse_scenario(text: &str, origin: &str) -> Result<Scenario, IoError> {
    let file: ScenarioFile = toml::from_str(text).map_err(|e| IoError::Parse {
        origin: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;
    let scenario = from_file(file, origin)?;
    let violations = validate_scenario(&scenario);
    if !violations.is_empty() {
        return Err(IoError::Invalid {
            origin: origin.to_string(),
            violations,
        });
    }
    Ok(scenario)
}

pub fn load_scenario(path: &Path) -> Result<Scenario, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_scenario(&text, &path.display().to_string())
}

/// Scenario as file text. Phases must be contiguous from the arrival.
pub fn scenario_to_string(scenario: &Scenario) -> Result<String, IoError> {
    toml::to_string(&to_file(scenario)).map_err(|e| IoError::Serialize(e.to_string()))
}

pub fn write_scenario(scenario: &Scenario, path: &Path) -> Result<(), IoError> {
    write_atomic(path, scenario_to_string(scenario)?.as_bytes())
}

const BUNDLED: &[(&str, &str)] = &[
    ("matrix_m", include_str!("../scenarios/matrix_m.toml")),
    ("hmmer_mcf", include_str!("../scenarios/hmmer_mcf.toml")),
    ("congestion", include_str!("../scenarios/congestion.toml")),
    ("synthetic16", include_str!("../scenarios/synthetic16.toml")),
];

pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_scenario(name: &str) -> Option<Result<Scenario, IoError>> {
    BUNDLED
        .iter()
        .find(|(n, _)| *n == name)
        .map(|(n, text)| parse_scenario(text, &format!("bundled scenario `{n}`")))
}

/// Loads `arg` as a path, or as the name of a bundled scenario when no such
/// file exists.
pub fn resolve_scenario(arg: &str) -> Result<Scenario, IoError> {
    let path = Path::new(arg);
    if !path.exists() {
        if let Some(s) = bundled_scenario(arg) {
            return s;
        }
    }
    load_scenario(path)
}

// ---- output ----

/// Writes through a temporary file in the destination directory, then
/// renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let err = |source| IoError::Write {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&dir).map_err(err)?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(err)?;
    tmp.write_all(bytes).map_err(err)?;
    tmp.as_file().sync_all().map_err(err)?;
    tmp.persist(path).map_err(|e| err(e.error))?;
    Ok(())
}

/// Where a trace goes when no output path is given: `dir` (the CLI fills it
/// from the environment), else the working directory.
pub fn default_output_path(dir: Option<&Path>, stem: &str, format: TraceFormat) -> PathBuf {
    dir.unwrap_or(Path::new("."))
        .join(format!("{stem}.trace.{}", format.extension()))
}

/// Six significant digits, trailing zeros dropped.
pub fn fmt6(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let exp = x.abs().log10().floor() as i32;
    if !(-5..=15).contains(&exp) {
        return format!("{x:.5e}");
    }
    let decimals = (5 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    let s = if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    };
    if s == "-0" {
        "0".into()
    } else {
        s
    }
}

pub const TABLE_HEADER: &str = "period,app,resource,bid,price,payment,payoff,converged";

/// Table rendering: one row per period and application.
pub fn trace_table(trace: &GameTrace) -> String {
    let converged = detect_convergence(trace, CONVERGENCE_WINDOW, CONVERGENCE_TOL);
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for (k, p) in trace.periods.iter().enumerate() {
        let flag = converged.is_some_and(|c| k >= c);
        for (i, app) in trace.app_ids.iter().enumerate() {
            let a = AppIdx(i);
            let held = p.assignment.resource_of(a);
            let last = p.bids.iter().rev().find(|b| b.bidder == a);
            let (resource, bid) = match (held, p.state.holding_of(a), last) {
                (Some(r), Some((_, amount)), _) => (Some(r), Some(amount)),
                (Some(r), None, _) => (Some(r), None),
                (None, _, Some(b)) => (None, Some(b.amount)),
                (None, _, None) => (None, None),
            };
            let price_of = resource.or(last.map(|b| b.resource));
            let cell = |v: Option<f64>| v.map(fmt6).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                p.t,
                app,
                resource.map_or("-".to_string(), |r| trace.resource_ids[r.0].clone()),
                cell(bid),
                cell(price_of.map(|r| p.state.prices[r.0])),
                fmt6(p.assignment.payments[i]),
                fmt6(p.payoffs[i]),
                u8::from(flag),
            );
        }
    }
    out
}

pub fn trace_document(trace: &GameTrace) -> Result<String, IoError> {
    serde_json::to_string_pretty(trace).map_err(|e| IoError::Serialize(e.to_string()))
}

pub fn write_trace(trace: &GameTrace, path: &Path, format: TraceFormat) -> Result<(), IoError> {
    let text = match format {
        TraceFormat::Table => trace_table(trace),
        TraceFormat::Document => trace_document(trace)?,
    };
    write_atomic(path, text.as_bytes())
}

/// Reads a trace written in document format.
pub fn read_trace(path: &Path) -> Result<GameTrace, IoError> {
    let text = std::fs::read_to_string(path).map_err(|source| IoError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|e| IoError::Parse {
        origin: path.display().to_string(),
        message: e.to_string(),
    })
}

/// Plain-text rendering of a comparison report.
pub fn format_report(report: &Report) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "app,performance,shared,improvement_pct");
    for (i, id) in report.app_ids.iter().enumerate() {
        let _ = writeln!(
            out,
            "{id},{},{},{}",
            fmt6(report.per_app[i]),
            fmt6(report.shared_per_app[i]),
            fmt6(report.improvement_pct[i])
        );
    }
    let opt = |v: Option<f64>| v.map_or("-".to_string(), fmt6);
    let _ = writeln!(out);
    let _ = writeln!(
        out,
        "normalized_throughput {}",
        fmt6(report.normalized_throughput)
    );
    let _ = writeln!(out, "gain_over_shared {}", fmt6(report.gain_over_shared));
    let _ = writeln!(out, "private_throughput {}", opt(report.private_throughput));
    let _ = writeln!(
        out,
        "static_gain_over_shared {}",
        opt(report.static_gain_over_shared)
    );
    let _ = writeln!(
        out,
        "improvement_over_static {}",
        opt(report.improvement_over_static)
    );
    let _ = writeln!(out, "mean_rounds {}", fmt6(report.mean_rounds));
    let _ = writeln!(out, "revenue {}", fmt6(report.revenue));
    let _ = writeln!(
        out,
        "converged_at {}",
        report
            .converged_at
            .map_or("-".to_string(), |c| c.to_string())
    );
    out
}
