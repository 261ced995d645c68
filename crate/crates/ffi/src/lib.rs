//! C interface to the agedebt simulator.
//!
//! Objects are opaque handles created by `ad_*` constructors and released
//! with the matching `*_free`. Every fallible function returns an
//! [`AdStatus`]; on failure, [`ad_last_error`] describes the problem for
//! the calling thread. Strings returned through out-pointers are owned by
//! the caller and released with [`ad_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use agedebt::config::{parse_config, ExperimentConfig};
use agedebt::graphs::enumerate_connected_graphs;
use agedebt::policy::{dp_optimal, DpOptions, DpSolution, PolicySelector};
use agedebt::sim::{run, RunMetrics};
use agedebt::sweep::{select_policy, sweep, write_sweep_csv, SweepOptions};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdStatus {
    Ok = 0,
    ConfigError = 1,
    RuntimeError = 2,
    NullPointer = 3,
    InvalidArgument = 4,
    Panic = 5,
}

/// Parsed experiment config.
pub struct AdConfig(ExperimentConfig);

/// Metrics of one simulation run.
pub struct AdMetrics(RunMetrics);

/// Solved average-cost DP.
pub struct AdDp(DpSolution);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).unwrap_or_default());
}

fn fail(status: AdStatus, message: impl Into<String>) -> AdStatus {
    set_error(message);
    status
}

fn guard(f: impl FnOnce() -> AdStatus) -> AdStatus {
    set_error("");
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| fail(AdStatus::Panic, "internal panic"))
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<Option<&'a str>, AdStatus> {
    if p.is_null() {
        return Ok(None);
    }
    CStr::from_ptr(p)
        .to_str()
        .map(Some)
        .map_err(|_| fail(AdStatus::InvalidArgument, "string is not valid UTF-8"))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).unwrap_or_default().into_raw()
}

/// Message for the last failure on this thread; empty after a success.
/// The pointer stays valid until the next `ad_*` call on the same thread.
#[no_mangle]
pub extern "C" fn ad_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must be null or come from this library.
#[no_mangle]
pub unsafe extern "C" fn ad_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses TOML config text. On success `*out` owns a new handle.
///
/// # Safety
/// `text` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_config_parse(text: *const c_char, out: *mut *mut AdConfig) -> AdStatus {
    guard(|| {
        if out.is_null() {
            return fail(AdStatus::NullPointer, "out is null");
        }
        *out = ptr::null_mut();
        let text = match read_str(text) {
            Ok(Some(t)) => t,
            Ok(None) => return fail(AdStatus::NullPointer, "text is null"),
            Err(s) => return s,
        };
        match parse_config(text) {
            Ok(cfg) => {
                *out = Box::into_raw(Box::new(AdConfig(cfg)));
                AdStatus::Ok
            }
            Err(e) => fail(AdStatus::ConfigError, e.to_string()),
        }
    })
}

/// Serializes a config back to TOML.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_config_to_toml(config: *const AdConfig, out: *mut *mut c_char) -> AdStatus {
    guard(|| {
        let (Some(cfg), false) = (config.as_ref(), out.is_null()) else {
            return fail(AdStatus::NullPointer, "null argument");
        };
        *out = into_c_string(cfg.0.to_toml());
        AdStatus::Ok
    })
}

/// # Safety
/// `config` must be null or a handle from [`ad_config_parse`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ad_config_free(config: *mut AdConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Simulates one policy on the config's only scenario. `policy` may be null
/// for the first configured policy; `horizon` 0 keeps the configured one.
///
/// # Safety
/// `config` must be a live handle, `policy` null or a NUL-terminated
/// string, and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_run(config: *const AdConfig, policy: *const c_char, seed: u64, horizon: u64, out: *mut *mut AdMetrics) -> AdStatus {
    guard(|| {
        let (Some(cfg), false) = (config.as_ref(), out.is_null()) else {
            return fail(AdStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        let name = match read_str(policy) {
            Ok(n) => n,
            Err(s) => return s,
        };
        let cfg = &cfg.0;
        let scenario = match cfg.scenarios(seed) {
            Ok(mut s) if s.len() == 1 => s.remove(0),
            Ok(s) => return fail(AdStatus::ConfigError, format!("config expands to {} scenarios, expected 1", s.len())),
            Err(e) => return fail(AdStatus::ConfigError, e.to_string()),
        };
        let policy = match select_policy(cfg, name) {
            Ok(p) => p,
            Err(e) => return fail(AdStatus::ConfigError, e.to_string()),
        };
        let mut sim = cfg.sim_config(&policy, seed);
        if horizon > 0 {
            sim.horizon = horizon;
        }
        match run(&scenario.scenario.instance, &scenario.scenario.costs, &sim) {
            Ok(m) => {
                *out = Box::into_raw(Box::new(AdMetrics(m)));
                AdStatus::Ok
            }
            Err(e) => fail(AdStatus::RuntimeError, e.to_string()),
        }
    })
}

/// Sum over pairs of time-average cost; NaN for a null handle.
///
/// # Safety
/// `metrics` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ad_metrics_sum_cost(metrics: *const AdMetrics) -> f64 {
    metrics.as_ref().map_or(f64::NAN, |m| m.0.sum_cost)
}

/// # Safety
/// `metrics` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ad_metrics_pair_count(metrics: *const AdMetrics) -> usize {
    metrics.as_ref().map_or(0, |m| m.0.pairs.len())
}

unsafe fn pair_value(metrics: *const AdMetrics, pair: usize, out: *mut f64, pick: impl Fn(&RunMetrics) -> &[f64]) -> AdStatus {
    guard(|| {
        let (Some(m), false) = (metrics.as_ref(), out.is_null()) else {
            return fail(AdStatus::NullPointer, "null argument");
        };
        match pick(&m.0).get(pair) {
            Some(&v) => {
                *out = v;
                AdStatus::Ok
            }
            None => fail(AdStatus::InvalidArgument, format!("pair {pair} out of range")),
        }
    })
}

/// Time-average cost of pair `pair` (zero-based, in flow then destination order).
///
/// # Safety
/// `metrics` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_metrics_pair_cost(metrics: *const AdMetrics, pair: usize, out: *mut f64) -> AdStatus {
    pair_value(metrics, pair, out, |m| &m.per_pair_cost)
}

/// Time-average age of pair `pair`.
///
/// # Safety
/// `metrics` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_metrics_pair_age(metrics: *const AdMetrics, pair: usize, out: *mut f64) -> AdStatus {
    pair_value(metrics, pair, out, |m| &m.per_pair_age)
}

/// Final debt over horizon, `Q(T)/T`, of pair `pair`.
///
/// # Safety
/// `metrics` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_metrics_q_over_t(metrics: *const AdMetrics, pair: usize, out: *mut f64) -> AdStatus {
    pair_value(metrics, pair, out, |m| &m.q_over_t)
}

/// # Safety
/// `metrics` must be null or a handle from [`ad_run`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ad_metrics_free(metrics: *mut AdMetrics) {
    if !metrics.is_null() {
        drop(Box::from_raw(metrics));
    }
}

/// Solves the DP on the config's only scenario, with the options of the
/// first `dp` policy if one is configured.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_dp_solve(config: *const AdConfig, seed: u64, out: *mut *mut AdDp) -> AdStatus {
    guard(|| {
        let (Some(cfg), false) = (config.as_ref(), out.is_null()) else {
            return fail(AdStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        let cfg = &cfg.0;
        let scenario = match cfg.scenarios(seed) {
            Ok(mut s) if s.len() == 1 => s.remove(0),
            Ok(s) => return fail(AdStatus::ConfigError, format!("config expands to {} scenarios, expected 1", s.len())),
            Err(e) => return fail(AdStatus::ConfigError, e.to_string()),
        };
        let options = cfg
            .policies()
            .into_iter()
            .find_map(|p| match p.selector {
                PolicySelector::Dp(o) => Some(o),
                _ => None,
            })
            .unwrap_or_else(DpOptions::default);
        match dp_optimal(&scenario.scenario.instance, &scenario.scenario.costs, &options) {
            Ok(sol) => {
                *out = Box::into_raw(Box::new(AdDp(sol)));
                AdStatus::Ok
            }
            Err(e) => fail(AdStatus::RuntimeError, e.to_string()),
        }
    })
}

/// Optimal average cost; NaN for a null handle.
///
/// # Safety
/// `dp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ad_dp_average_cost(dp: *const AdDp) -> f64 {
    dp.as_ref().map_or(f64::NAN, |d| d.0.average_cost)
}

/// Number of states in the solved model.
///
/// # Safety
/// `dp` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ad_dp_state_count(dp: *const AdDp) -> usize {
    dp.as_ref().map_or(0, |d| d.0.policy.len())
}

/// Writes the exported table (state, action index, relative value) as CSV.
///
/// # Safety
/// `dp` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_dp_table_csv(dp: *const AdDp, out: *mut *mut c_char) -> AdStatus {
    guard(|| {
        let (Some(d), false) = (dp.as_ref(), out.is_null()) else {
            return fail(AdStatus::NullPointer, "null argument");
        };
        let mut buf = Vec::new();
        if let Err(e) = d.0.write_table(&mut buf) {
            return fail(AdStatus::RuntimeError, e.to_string());
        }
        *out = into_c_string(String::from_utf8_lossy(&buf).into_owned());
        AdStatus::Ok
    })
}

/// # Safety
/// `dp` must be null or a handle from [`ad_dp_solve`], freed once.
#[no_mangle]
pub unsafe extern "C" fn ad_dp_free(dp: *mut AdDp) {
    if !dp.is_null() {
        drop(Box::from_raw(dp));
    }
}

/// Number of connected graphs on `n` vertices up to isomorphism, `2 <= n <= 7`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_graph_count(n: usize, out: *mut usize) -> AdStatus {
    guard(|| {
        if out.is_null() {
            return fail(AdStatus::NullPointer, "out is null");
        }
        match enumerate_connected_graphs(n) {
            Ok(g) => {
                *out = g.len();
                AdStatus::Ok
            }
            Err(e) => fail(AdStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs the full sweep and returns its CSV. `jobs` 0 uses the default
/// thread count. Individual run failures leave empty fields and return
/// `RuntimeError` with the CSV still written.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ad_sweep_csv(config: *const AdConfig, jobs: usize, out: *mut *mut c_char) -> AdStatus {
    guard(|| {
        let (Some(cfg), false) = (config.as_ref(), out.is_null()) else {
            return fail(AdStatus::NullPointer, "null argument");
        };
        *out = ptr::null_mut();
        let options = SweepOptions {
            jobs: (jobs > 0).then_some(jobs),
            ..Default::default()
        };
        let report = match sweep(&cfg.0, &options) {
            Ok(r) => r,
            Err(e) => return fail(AdStatus::ConfigError, e.to_string()),
        };
        let mut buf = Vec::new();
        if let Err(e) = write_sweep_csv(&report, &mut buf) {
            return fail(AdStatus::RuntimeError, e.to_string());
        }
        *out = into_c_string(String::from_utf8_lossy(&buf).into_owned());
        match report.failures().count() {
            0 => AdStatus::Ok,
            n => fail(AdStatus::RuntimeError, format!("{n} of {} runs failed", report.rows.len())),
        }
    })
}
