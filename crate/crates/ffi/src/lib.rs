//! C ABI for the hormsim simulator.
//!
//! Scenarios and run results live behind opaque handles; every fallible call
//! reports an `HsStatus` (or returns null) and stores a human-readable
//! message retrievable with [`hs_last_error`]. Strings returned by the
//! library are owned by the caller and must be released with
//! [`hs_string_free`]; handles have their matching `_free` functions.
//!
//! The generated header lands in `include/hormsim.h`.

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use hormsim::engine::{self, RunOutput};
use hormsim::metrics::{self, Summary};
use hormsim::scenario::Scenario;

/// Result codes for every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    RunFailed = 4,
    IoFailed = 5,
    Panicked = 6,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into();
    let c = CString::new(msg).unwrap_or_else(|_| CString::new("error").unwrap());
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

/// Scenario handle. Opaque; construct, adjust, run, free.
pub struct HsScenario {
    inner: Scenario,
}

/// Finished-run handle holding the metrics log and derived summary.
pub struct HsResult {
    output: RunOutput,
    summary: Summary,
}

unsafe fn cstr<'a>(p: *const c_char) -> Result<&'a str, HsStatus> {
    if p.is_null() {
        set_error("null pointer argument");
        return Err(HsStatus::NullPointer);
    }
    unsafe { CStr::from_ptr(p) }.to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        HsStatus::InvalidUtf8
    })
}

fn into_string(s: String) -> *mut c_char {
    CString::new(s)
        .unwrap_or_else(|_| CString::new("").unwrap())
        .into_raw()
}

/// Message describing the most recent failure on this thread, or null.
/// Valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hs_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| {
        slot.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr())
    })
}

/// Library version as a static string; do not free.
#[no_mangle]
pub extern "C" fn hs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must have been returned by a `hormsim_ffi` function and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn hs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(unsafe { CString::from_raw(s) });
    }
}

/// New scenario with default settings (the 50-node setup).
#[no_mangle]
pub extern "C" fn hs_scenario_new() -> *mut HsScenario {
    clear_error();
    Box::into_raw(Box::new(HsScenario { inner: Scenario::default() }))
}

/// Parses a scenario from its flat key-value text; null on error.
///
/// # Safety
/// `text` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hs_scenario_parse(text: *const c_char) -> *mut HsScenario {
    clear_error();
    let Ok(text) = (unsafe { cstr(text) }) else {
        return std::ptr::null_mut();
    };
    match Scenario::parse(text) {
        Ok(inner) => Box::into_raw(Box::new(HsScenario { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Loads a scenario file; null on error.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hs_scenario_load(path: *const c_char) -> *mut HsScenario {
    clear_error();
    let Ok(path) = (unsafe { cstr(path) }) else {
        return std::ptr::null_mut();
    };
    match Scenario::load(Path::new(path)) {
        Ok(inner) => Box::into_raw(Box::new(HsScenario { inner })),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Applies one `key = value` override.
///
/// # Safety
/// `scenario` must be a live handle; `key`/`value` valid NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn hs_scenario_set(
    scenario: *mut HsScenario,
    key: *const c_char,
    value: *const c_char,
) -> HsStatus {
    clear_error();
    if scenario.is_null() {
        set_error("null scenario handle");
        return HsStatus::NullPointer;
    }
    let (key, value) = match (unsafe { cstr(key) }, unsafe { cstr(value) }) {
        (Ok(k), Ok(v)) => (k, v),
        (Err(s), _) | (_, Err(s)) => return s,
    };
    match unsafe { &mut *scenario }.inner.set(key, value) {
        Ok(()) => HsStatus::Ok,
        Err(e) => {
            set_error(e.to_string());
            HsStatus::InvalidArgument
        }
    }
}

/// Scenario serialized back to its file format; free with hs_string_free.
///
/// # Safety
/// `scenario` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_scenario_to_text(scenario: *const HsScenario) -> *mut c_char {
    clear_error();
    if scenario.is_null() {
        set_error("null scenario handle");
        return std::ptr::null_mut();
    }
    into_string(unsafe { &*scenario }.inner.to_config_text())
}

/// # Safety
/// `scenario` must be a live handle or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_scenario_free(scenario: *mut HsScenario) {
    if !scenario.is_null() {
        drop(unsafe { Box::from_raw(scenario) });
    }
}

/// Runs the scenario to completion; null on error.
///
/// # Safety
/// `scenario` must be a live handle (it stays valid and reusable).
#[no_mangle]
pub unsafe extern "C" fn hs_run(scenario: *const HsScenario) -> *mut HsResult {
    clear_error();
    if scenario.is_null() {
        set_error("null scenario handle");
        return std::ptr::null_mut();
    }
    let s = unsafe { &*scenario }.inner.clone();
    let outcome = catch_unwind(AssertUnwindSafe(move || -> Result<HsResult, String> {
        let output = engine::run(s).map_err(|e| e.to_string())?;
        let summary = metrics::summarize(&output.log, output.dt, output.config.clone())
            .map_err(|e| e.to_string())?;
        Ok(HsResult { output, summary })
    }));
    match outcome {
        Ok(Ok(result)) => Box::into_raw(Box::new(result)),
        Ok(Err(msg)) => {
            set_error(msg);
            std::ptr::null_mut()
        }
        Err(_) => {
            set_error("simulation panicked");
            std::ptr::null_mut()
        }
    }
}

/// Keyword slots fulfilled within their deadline.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_result_fulfilled_slots(result: *const HsResult) -> u64 {
    unsafe { &*result }.summary.fulfilled_slots as u64
}

/// Keyword slots whose deadline was missed.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_result_missed_slots(result: *const HsResult) -> u64 {
    unsafe { &*result }.summary.missed_slots as u64
}

/// Missed slots over terminal slots.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_result_missed_rate(result: *const HsResult) -> f64 {
    unsafe { &*result }.summary.missed_rate
}

/// Mean slot delay in seconds (missed slots at their maximum delay).
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_result_mean_delay_s(result: *const HsResult) -> f64 {
    unsafe { &*result }.summary.mean_delay_s
}

/// Median slot delay in seconds.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_result_median_delay_s(result: *const HsResult) -> f64 {
    unsafe { &*result }.summary.median_delay_s
}

/// Mean per-unit utilization (presentations over replica-time).
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_result_mean_utilization(result: *const HsResult) -> f64 {
    unsafe { &*result }.summary.mean_utilization
}

/// Clean-up sweeps that could not reach the trigger level.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_result_cleanup_failures(result: *const HsResult) -> u64 {
    unsafe { &*result }.summary.cleanup_failures
}

/// Full summary as a JSON document; free with hs_string_free.
///
/// # Safety
/// `result` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn hs_result_summary_json(result: *const HsResult) -> *mut c_char {
    clear_error();
    if result.is_null() {
        set_error("null result handle");
        return std::ptr::null_mut();
    }
    match serde_json::to_string_pretty(&unsafe { &*result }.summary) {
        Ok(json) => into_string(json),
        Err(e) => {
            set_error(e.to_string());
            std::ptr::null_mut()
        }
    }
}

/// Writes delays.csv, cdf.csv, cleanup.csv, slots.csv and summary.json
/// into `dir` (created if missing).
///
/// # Safety
/// `result` must be a live handle; `dir` a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn hs_result_write_outputs(
    result: *const HsResult,
    dir: *const c_char,
) -> HsStatus {
    clear_error();
    if result.is_null() {
        set_error("null result handle");
        return HsStatus::NullPointer;
    }
    let Ok(dir) = (unsafe { cstr(dir) }) else {
        return HsStatus::InvalidUtf8;
    };
    match hormsim::cli::write_outputs(&unsafe { &*result }.output, Path::new(dir)) {
        Ok(()) => HsStatus::Ok,
        Err(e) => {
            set_error(e.to_string());
            HsStatus::IoFailed
        }
    }
}

/// # Safety
/// `result` must be a live handle or null; it is invalid afterwards.
#[no_mangle]
pub unsafe extern "C" fn hs_result_free(result: *mut HsResult) {
    if !result.is_null() {
        drop(unsafe { Box::from_raw(result) });
    }
}
