//! C interface to the `contend` simulator.
//!
//! Every fallible function returns a status code, `CONTEND_OK` on success,
//! and writes its result through an out-pointer. On failure the message is
//! available from `contend_last_error` on the same thread. Scenarios and
//! traces are opaque handles released with their `_free` functions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use contend::io::{self, IoError, TraceFormat};
use contend::model::AppIdx;
use contend::oracle::brute_force_optimal;
use contend::sim::{self, GameTrace};
use contend::strategy::equilibrium_bid;
use contend::Scenario;

pub const CONTEND_OK: i32 = 0;
/// A required pointer argument was null.
pub const CONTEND_ERR_NULL: i32 = 1;
/// A string argument was not valid UTF-8.
pub const CONTEND_ERR_UTF8: i32 = 2;
/// A file could not be read or written.
pub const CONTEND_ERR_IO: i32 = 3;
/// Scenario text could not be parsed or named unknown entities.
pub const CONTEND_ERR_PARSE: i32 = 4;
/// The scenario parsed but broke an invariant.
pub const CONTEND_ERR_INVALID: i32 = 5;
/// The simulation or a numeric routine failed.
pub const CONTEND_ERR_COMPUTE: i32 = 6;
/// An index or enumeration value was out of range.
pub const CONTEND_ERR_RANGE: i32 = 7;
/// Internal error; the library panicked.
pub const CONTEND_ERR_PANIC: i32 = 8;

pub const CONTEND_FORMAT_TABLE: u32 = 0;
pub const CONTEND_FORMAT_DOCUMENT: u32 = 1;

/// Opaque scenario handle.
pub struct ContendScenario(Scenario);

/// Opaque simulation trace handle.
pub struct ContendTrace(GameTrace);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

struct Fail(i32, String);

impl From<IoError> for Fail {
    fn from(e: IoError) -> Self {
        let code = match e {
            IoError::Read { .. } | IoError::Write { .. } => CONTEND_ERR_IO,
            IoError::Parse { .. } | IoError::Schema { .. } | IoError::Serialize(_) => {
                CONTEND_ERR_PARSE
            }
            IoError::Invalid { .. } => CONTEND_ERR_INVALID,
        };
        Fail(code, e.to_string())
    }
}

fn compute<E: std::fmt::Display>(e: E) -> Fail {
    Fail(CONTEND_ERR_COMPUTE, e.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => CONTEND_OK,
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            CONTEND_ERR_PANIC
        }
    }
}

fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Fail> {
    // SAFETY: the caller passes either null or a valid pointer.
    unsafe { p.as_ref() }.ok_or_else(|| Fail(CONTEND_ERR_NULL, format!("{name} is null")))
}

fn out<T>(p: *mut T, name: &str) -> Result<*mut T, Fail> {
    if p.is_null() {
        Err(Fail(CONTEND_ERR_NULL, format!("{name} is null")))
    } else {
        Ok(p)
    }
}

fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(CONTEND_ERR_NULL, format!("{name} is null")));
    }
    // SAFETY: non-null and, per the contract, NUL-terminated.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Fail(CONTEND_ERR_UTF8, format!("{name} is not UTF-8")))
}

/// Message for the last failure on this thread, or null if none. The
/// pointer stays valid until the next failing call on the thread.
#[no_mangle]
pub extern "C" fn contend_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn contend_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

fn give<T>(slot: *mut *mut T, value: T) {
    // SAFETY: `slot` was checked non-null by the caller.
    unsafe { *slot = Box::into_raw(Box::new(value)) };
}

/// Loads and validates a scenario file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out_scenario` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_scenario_load(
    path: *const c_char,
    out_scenario: *mut *mut ContendScenario,
) -> i32 {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let s = io::load_scenario(Path::new(text(path, "path")?))?;
        give(slot, ContendScenario(s));
        Ok(())
    })
}

/// Parses and validates scenario text.
///
/// # Safety
/// `source` must be a NUL-terminated string and `out_scenario` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_scenario_parse(
    source: *const c_char,
    out_scenario: *mut *mut ContendScenario,
) -> i32 {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let s = io::parse_scenario(text(source, "source")?, "<text>")?;
        give(slot, ContendScenario(s));
        Ok(())
    })
}

/// Loads one of the scenarios shipped with the library by name.
///
/// # Safety
/// `name` must be a NUL-terminated string and `out_scenario` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_scenario_bundled(
    name: *const c_char,
    out_scenario: *mut *mut ContendScenario,
) -> i32 {
    guard(|| {
        let slot = out(out_scenario, "out_scenario")?;
        let name = text(name, "name")?;
        let s = io::bundled_scenario(name)
            .ok_or_else(|| Fail(CONTEND_ERR_RANGE, format!("no bundled scenario `{name}`")))??;
        give(slot, ContendScenario(s));
        Ok(())
    })
}

/// Releases a scenario. Null is ignored.
///
/// # Safety
/// `scenario` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn contend_scenario_free(scenario: *mut ContendScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// # Safety
/// `scenario` must be a live handle and `out_apps` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_scenario_num_apps(
    scenario: *const ContendScenario,
    out_apps: *mut usize,
) -> i32 {
    guard(|| {
        let s = non_null(scenario, "scenario")?;
        unsafe { *out(out_apps, "out_apps")? = s.0.num_apps() };
        Ok(())
    })
}

/// # Safety
/// `scenario` must be a live handle and `out_resources` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_scenario_num_resources(
    scenario: *const ContendScenario,
    out_resources: *mut usize,
) -> i32 {
    guard(|| {
        let s = non_null(scenario, "scenario")?;
        unsafe { *out(out_resources, "out_resources")? = s.0.num_resources() };
        Ok(())
    })
}

/// Simulates up to `horizon` periods.
///
/// # Safety
/// `scenario` must be a live handle and `out_trace` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_run(
    scenario: *const ContendScenario,
    horizon: u64,
    seed: u64,
    out_trace: *mut *mut ContendTrace,
) -> i32 {
    guard(|| {
        let s = non_null(scenario, "scenario")?;
        let slot = out(out_trace, "out_trace")?;
        let trace = sim::run(&s.0, horizon, seed, None).map_err(compute)?;
        give(slot, ContendTrace(trace));
        Ok(())
    })
}

/// Releases a trace. Null is ignored.
///
/// # Safety
/// `trace` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn contend_trace_free(trace: *mut ContendTrace) {
    if !trace.is_null() {
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// # Safety
/// `trace` must be a live handle and `out_periods` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_trace_num_periods(
    trace: *const ContendTrace,
    out_periods: *mut usize,
) -> i32 {
    guard(|| {
        let t = non_null(trace, "trace")?;
        unsafe { *out(out_periods, "out_periods")? = t.0.periods.len() };
        Ok(())
    })
}

fn cell(t: &GameTrace, period: usize, app: usize) -> Result<&sim::PeriodRecord, Fail> {
    let p = t
        .periods
        .get(period)
        .ok_or_else(|| Fail(CONTEND_ERR_RANGE, format!("period {period} out of range")))?;
    if app >= t.app_ids.len() {
        return Err(Fail(
            CONTEND_ERR_RANGE,
            format!("application {app} out of range"),
        ));
    }
    Ok(p)
}

/// Resource index held by `app` in `period`, or -1 when it holds none.
///
/// # Safety
/// `trace` must be a live handle and `out_resource` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_trace_assignment(
    trace: *const ContendTrace,
    period: usize,
    app: usize,
    out_resource: *mut i64,
) -> i32 {
    guard(|| {
        let t = non_null(trace, "trace")?;
        let p = cell(&t.0, period, app)?;
        let r = p
            .assignment
            .resource_of(AppIdx(app))
            .map_or(-1, |r| r.0 as i64);
        unsafe { *out(out_resource, "out_resource")? = r };
        Ok(())
    })
}

/// Payoff of `app` in `period`: realized valuation minus payment.
///
/// # Safety
/// `trace` must be a live handle and `out_payoff` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_trace_payoff(
    trace: *const ContendTrace,
    period: usize,
    app: usize,
    out_payoff: *mut f64,
) -> i32 {
    guard(|| {
        let t = non_null(trace, "trace")?;
        let p = cell(&t.0, period, app)?;
        unsafe { *out(out_payoff, "out_payoff")? = p.payoffs[app] };
        Ok(())
    })
}

/// Auctioneer revenue over the whole trace.
///
/// # Safety
/// `trace` must be a live handle and `out_revenue` writable.
#[no_mangle]
pub unsafe extern "C" fn contend_trace_revenue(
    trace: *const ContendTrace,
    out_revenue: *mut f64,
) -> i32 {
    guard(|| {
        let t = non_null(trace, "trace")?;
        unsafe { *out(out_revenue, "out_revenue")? = t.0.revenue() };
        Ok(())
    })
}

/// Writes the trace as a table (`CONTEND_FORMAT_TABLE`) or document
/// (`CONTEND_FORMAT_DOCUMENT`).
///
/// # Safety
/// `trace` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn contend_trace_write(
    trace: *const ContendTrace,
    path: *const c_char,
    format: u32,
) -> i32 {
    guard(|| {
        let t = non_null(trace, "trace")?;
        let format = match format {
            CONTEND_FORMAT_TABLE => TraceFormat::Table,
            CONTEND_FORMAT_DOCUMENT => TraceFormat::Document,
            f => return Err(Fail(CONTEND_ERR_RANGE, format!("unknown format {f}"))),
        };
        io::write_trace(&t.0, Path::new(text(path, "path")?), format)?;
        Ok(())
    })
}

/// Exhaustive welfare optimum for `apps × resources` valuations given row by
/// row. Writes each application's resource index (-1 for none) to
/// `out_assignment`, which must hold `apps` entries.
///
/// # Safety
/// `values` must hold `apps * resources` doubles, `slots` `resources`
/// integers, and both out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn contend_brute_force(
    values: *const f64,
    apps: usize,
    resources: usize,
    slots: *const u32,
    out_assignment: *mut i64,
    out_total: *mut f64,
) -> i32 {
    guard(|| {
        non_null(values, "values")?;
        non_null(slots, "slots")?;
        let assignment = out(out_assignment, "out_assignment")?;
        let total = out(out_total, "out_total")?;
        let cells = apps
            .checked_mul(resources)
            .ok_or_else(|| Fail(CONTEND_ERR_RANGE, "dimensions overflow".into()))?;
        // SAFETY: sizes are guaranteed by the caller.
        let flat = unsafe { std::slice::from_raw_parts(values, cells) };
        let slots = unsafe { std::slice::from_raw_parts(slots, resources) };
        let rows: Vec<Vec<f64>> = if resources == 0 {
            vec![Vec::new(); apps]
        } else {
            flat.chunks(resources).map(<[f64]>::to_vec).collect()
        };
        let opt = brute_force_optimal(&rows, slots).map_err(compute)?;
        let dest = unsafe { std::slice::from_raw_parts_mut(assignment, apps) };
        for (i, d) in dest.iter_mut().enumerate() {
            *d = opt
                .assignment
                .resource_of(AppIdx(i))
                .map_or(-1, |r| r.0 as i64);
        }
        unsafe { *total = opt.total };
        Ok(())
    })
}

/// Symmetric equilibrium bid for `n` bidders, `m` slots and valuation `v`.
///
/// # Safety
/// `out_bid` must be writable.
#[no_mangle]
pub unsafe extern "C" fn contend_equilibrium_bid(n: u32, m: u32, v: f64, out_bid: *mut f64) -> i32 {
    guard(|| {
        let slot = out(out_bid, "out_bid")?;
        let b = equilibrium_bid(n, m, v).map_err(|e| Fail(CONTEND_ERR_RANGE, e.to_string()))?;
        unsafe { *slot = b };
        Ok(())
    })
}
