use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::{
    default_output_path, fmt6, format_report, resolve_scenario, write_atomic, write_trace, IoError,
    TraceFormat, OUT_DIR_ENV,
};
use crate::budget::BudgetMode;
use crate::instances::InstanceShape;
use crate::model::{AppIdx, PriceRule, Scenario, Time};
use crate::oracle::{
    brute_force_optimal, private_baseline, shared_baseline, static_schedule_baseline,
};
use crate::sim::{budget_sweep, metrics, run, Baselines};
use crate::strategy::{check_equilibrium, truthfulness_sweep, Estimator, SearchOptions, WinRule};
use crate::valuation::BaselineMode;

#[derive(Debug, Parser)]
#[command(
    name = "contend",
    version,
    about = "Auction-based resource contention simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate a scenario and write its trace.
    Run(RunArgs),
    /// Simulate a scenario and compare it with the shared, private and static baselines.
    Compare(CompareArgs),
    /// Check equilibrium bidding and truthfulness numerically.
    Verify(VerifyArgs),
    /// Exhaustive welfare optimum of a scenario at one period.
    Oracle(OracleArgs),
}

#[derive(Debug, Args)]
struct ScenarioArgs {
    /// Scenario file, or the name of a bundled scenario.
    #[arg(long)]
    scenario: String,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long, value_enum)]
    budget_mode: Option<BudgetMode>,
    #[arg(long, value_enum)]
    baseline_mode: Option<BaselineMode>,
    #[arg(long, value_enum)]
    price_rule: Option<PriceRule>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<Scenario, IoError> {
        let mut s = resolve_scenario(&self.scenario)?;
        if let Some(e) = self.epsilon {
            s.config.epsilon = Some(e);
        }
        if let Some(m) = self.budget_mode {
            s.config.budget_mode = m;
        }
        if let Some(m) = self.baseline_mode {
            s.config.baseline_mode = m;
        }
        if let Some(r) = self.price_rule {
            s.config.price_rule = r;
        }
        Ok(s)
    }

    fn stem(&self) -> String {
        Path::new(&self.scenario)
            .file_stem()
            .map_or_else(|| "scenario".into(), |s| s.to_string_lossy().into_owned())
    }
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Periods to simulate; defaults to the scenario's length.
    #[arg(long)]
    horizon: Option<Time>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Directory for the trace when --out is not given.
    #[arg(long, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = TraceFormat::Table)]
    format: TraceFormat,
}

#[derive(Debug, Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    #[arg(long)]
    horizon: Option<Time>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Also sweep budgets, given as fractions of unconstrained spend.
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    budget_sweep: Option<Vec<f64>>,
    /// Write the report here as well as to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    /// Bidders; with --m, checks only this pair.
    #[arg(long, requires = "m")]
    n: Option<u32>,
    /// Slots.
    #[arg(long, requires = "n")]
    m: Option<u32>,
    #[arg(long, value_delimiter = ',', default_values_t = [0.3, 0.8])]
    v: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, default_value_t = 0.01)]
    grid: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Estimator::Pooled)]
    estimator: Estimator,
    /// Random instances per truthfulness probe; 0 skips the probes.
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [0.5, 2.0])]
    multipliers: Vec<f64>,
}

#[derive(Debug, Args)]
struct OracleArgs {
    #[arg(long)]
    scenario: String,
    /// Period whose phase valuations are used.
    #[arg(long, default_value_t = 0)]
    t: Time,
}

enum Failure {
    Usage(String),
    Error(String),
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Read { ref source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                Failure::Usage(e.to_string())
            }
            e => Failure::Error(e.to_string()),
        }
    }
}

impl From<crate::Error> for Failure {
    fn from(e: crate::Error) -> Self {
        Failure::Error(e.to_string())
    }
}

fn fail<E: Into<crate::Error>>(e: E) -> Failure {
    Failure::from(e.into())
}

/// Runs the command line `args` (program name first), writing normal output
/// to `out` and diagnostics to `err`. Returns the process exit code: 0 on
/// success, 1 on failure or a failed check, 2 on a usage error.
pub fn cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let parsed = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            return code;
        }
    };
    let result = match parsed.command {
        Command::Run(a) => cmd_run(&a, out),
        Command::Compare(a) => cmd_compare(&a, out),
        Command::Verify(a) => cmd_verify(&a, out),
        Command::Oracle(a) => cmd_oracle(&a, out),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 1,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}\n\nFor more information, try '--help'.");
            2
        }
        Err(Failure::Error(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            1
        }
    }
}

fn cmd_run(a: &RunArgs, out: &mut dyn Write) -> Result<bool, Failure> {
    let scenario = a.scenario.load()?;
    let horizon = a.horizon.unwrap_or_else(|| scenario.horizon_end());
    let trace = run(&scenario, horizon, a.seed, None).map_err(fail)?;
    let path = a
        .out
        .clone()
        .unwrap_or_else(|| default_output_path(a.out_dir.as_deref(), &a.scenario.stem(), a.format));
    write_trace(&trace, &path, a.format)?;
    let _ = writeln!(
        out,
        "{} periods, mean rounds {}, revenue {}, written to {}",
        trace.periods.len(),
        fmt6(trace.mean_rounds()),
        fmt6(trace.revenue()),
        path.display()
    );
    Ok(true)
}

fn cmd_compare(a: &CompareArgs, out: &mut dyn Write) -> Result<bool, Failure> {
    let scenario = a.scenario.load()?;
    let horizon = a.horizon.unwrap_or_else(|| scenario.horizon_end());
    let trace = run(&scenario, horizon, a.seed, None).map_err(fail)?;
    let clip = |mut p: Vec<Vec<Option<f64>>>| {
        p.truncate(horizon as usize);
        p
    };
    let baselines = Baselines {
        shared: Some(clip(shared_baseline(&scenario).map_err(fail)?)),
        private: private_baseline(&scenario).ok().map(clip),
        static_schedule: static_schedule_baseline(&scenario)
            .ok()
            .map(|(_, p)| clip(p)),
    };
    let report = metrics(
        &trace,
        &baselines,
        super::CONVERGENCE_WINDOW,
        super::CONVERGENCE_TOL,
    )
    .map_err(fail)?;
    let mut text = format_report(&report);
    if let Some(fractions) = &a.budget_sweep {
        let points = budget_sweep(&scenario, horizon, fractions, scenario.config.budget_mode)
            .map_err(fail)?;
        text.push_str("\nbudget,throughput\n");
        for p in points {
            text.push_str(&format!(
                "{},{}\n",
                fmt6(p.normalized_budget),
                fmt6(p.throughput)
            ));
        }
    }
    let _ = write!(out, "{text}");
    if let Some(path) = &a.out {
        write_atomic(path, text.as_bytes())?;
    }
    Ok(true)
}

fn cmd_verify(a: &VerifyArgs, out: &mut dyn Write) -> Result<bool, Failure> {
    let pairs = match (a.n, a.m) {
        (Some(n), Some(m)) => vec![(n, m)],
        _ => vec![(2, 1), (5, 2), (10, 1)],
    };
    let mut all = true;
    for &(n, m) in &pairs {
        for &v in &a.v {
            let opts = SearchOptions {
                grid_step: a.grid,
                samples: a.samples,
                seed: a.seed,
                rule: WinRule::default(),
                estimator: a.estimator,
            };
            let c = check_equilibrium(n, m, v, &opts).map_err(fail)?;
            let ok = c.argmax_ok(a.grid, 2.0) && c.curve_ok(3.0);
            all &= ok;
            let _ = writeln!(
                out,
                "{} equilibrium n={n} m={m} v={}: argmax {} expected {}, max deviation {} se over {} points",
                if ok { "PASS" } else { "FAIL" },
                fmt6(v),
                fmt6(c.argmax),
                fmt6(c.expected),
                fmt6(c.max_z),
                c.interior_points
            );
        }
    }
    if a.trials > 0 {
        for &k in &a.multipliers {
            let r = truthfulness_sweep(
                InstanceShape::default(),
                k,
                a.trials,
                a.seed,
                PriceRule::default(),
            )
            .map_err(fail)?;
            let tol = r.mean_tolerance();
            let over = r.exceeding(5.0);
            let ok = r.mean_delta <= tol && over == 0;
            all &= ok;
            let _ = writeln!(
                out,
                "{} truthfulness multiplier={}: mean delta {} (limit {}), {} of {} trials above 5 eps",
                if ok { "PASS" } else { "FAIL" },
                fmt6(k),
                fmt6(r.mean_delta),
                fmt6(tol),
                over,
                a.trials
            );
        }
    }
    Ok(all)
}

fn cmd_oracle(a: &OracleArgs, out: &mut dyn Write) -> Result<bool, Failure> {
    let scenario = resolve_scenario(&a.scenario)?;
    let values: Vec<Vec<f64>> = scenario
        .applications
        .iter()
        .map(|app| {
            app.phase_at(a.t).map_or_else(
                || vec![0.0; scenario.num_resources()],
                |p| p.valuations.clone(),
            )
        })
        .collect();
    let opt = brute_force_optimal(&values, &scenario.slots()).map_err(fail)?;
    let _ = writeln!(out, "app,resource,value");
    for (i, app) in scenario.applications.iter().enumerate() {
        if !app.is_active(a.t) {
            continue;
        }
        match opt.assignment.resource_of(AppIdx(i)) {
            Some(r) => {
                let _ = writeln!(
                    out,
                    "{},{},{}",
                    app.id,
                    scenario.resources[r.0].id,
                    fmt6(values[i][r.0])
                );
            }
            None => {
                let _ = writeln!(out, "{},-,0", app.id);
            }
        }
    }
    let _ = writeln!(out, "\ntotal {}", fmt6(opt.total));
    if opt.runner_up.is_finite() {
        let _ = writeln!(out, "runner_up {}", fmt6(opt.runner_up));
    }
    Ok(true)
}
