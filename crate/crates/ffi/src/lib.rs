//! C ABI over nrstream-core.
//!
//! Every fallible call returns an [`NrsStatus`]; on failure the message is
//! available from [`nrs_last_error`] on the same thread. Handles are opaque
//! and must be released with their `_free` function. Strings returned through
//! `char **` out-parameters are owned by the caller and released with
//! [`nrs_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nrstream_core::config::{ModeKind, ScenarioConfig};
use nrstream_core::controller::{Decision, QualityLadder, RateController};
use nrstream_core::metrics::{compare_reports, compute_report, MetricsReport};
use nrstream_core::nr_rate::CellConfig;
use nrstream_core::streaming::run_session;
use nrstream_core::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    ReservedIndex = 3,
    Unsupported = 4,
    Config = 5,
    Io = 6,
    Runtime = 7,
    Panic = 8,
}

/// Simulation controller mode for [`nrs_simulate`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NrsMode {
    Adaptive = 0,
    Fixed = 1,
}

/// A cell: one or more carriers sharing an MCS table.
pub struct NrsCell {
    cell: CellConfig,
}

/// A rate controller over a quality ladder.
pub struct NrsController {
    controller: RateController,
    current: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).expect("NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn status_of(err: &Error) -> NrsStatus {
    match err {
        Error::ReservedIndex { .. } => NrsStatus::ReservedIndex,
        Error::UnsupportedConfiguration { .. } => NrsStatus::Unsupported,
        Error::InvalidParameter(_) | Error::OutOfRange { .. } | Error::InvalidLadder(_) => NrsStatus::InvalidArgument,
        Error::Config(_) | Error::Json(_) | Error::Trace { .. } | Error::TableData { .. } => NrsStatus::Config,
        Error::Io { .. } => NrsStatus::Io,
        _ => NrsStatus::Runtime,
    }
}

/// Run `f`, translating errors and panics into a status.
fn guard(f: impl FnOnce() -> Result<(), (NrsStatus, String)>) -> NrsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => NrsStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".to_string());
            NrsStatus::Panic
        }
    }
}

fn core<T>(r: nrstream_core::Result<T>) -> Result<T, (NrsStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (NrsStatus, String) {
    (NrsStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, (NrsStatus, String)> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| (NrsStatus::InvalidArgument, format!("{what} is not UTF-8")))
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), (NrsStatus, String)> {
    if out.is_null() {
        return Err(null("out"));
    }
    let c = CString::new(s).map_err(|_| (NrsStatus::Runtime, "string contains NUL".to_string()))?;
    *out = c.into_raw();
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn nrs_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn nrs_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Release a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn nrs_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// The 40 MHz / 30 kHz QAM256 testbed cell with a 0.7 TDD downlink share.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nrs_cell_testbed(out: *mut *mut NrsCell) -> NrsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(NrsCell {
            cell: CellConfig::testbed(),
        }));
        Ok(())
    })
}

/// Parse a cell from JSON: `{"carriers": [...]}` with the scenario file's carrier fields.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nrs_cell_from_json(json: *const c_char, out: *mut *mut NrsCell) -> NrsStatus {
    guard(|| {
        let text = str_arg(json, "json")?;
        if out.is_null() {
            return Err(null("out"));
        }
        let cell: CellConfig =
            serde_json::from_str(text).map_err(|e| (NrsStatus::Config, format!("cell json: {e}")))?;
        core(cell.validate())?;
        *out = Box::into_raw(Box::new(NrsCell { cell }));
        Ok(())
    })
}

/// # Safety
/// `cell` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn nrs_cell_free(cell: *mut NrsCell) {
    if !cell.is_null() {
        drop(Box::from_raw(cell));
    }
}

/// Peak downlink rate in Mbps at `mcs`.
///
/// # Safety
/// `cell` must be a live handle and `out_mbps` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nrs_cell_rate_mbps(cell: *const NrsCell, mcs: u32, out_mbps: *mut f64) -> NrsStatus {
    guard(|| {
        let cell = cell.as_ref().ok_or_else(|| null("cell"))?;
        if out_mbps.is_null() {
            return Err(null("out_mbps"));
        }
        *out_mbps = core(cell.cell.estimate(mcs))?.mbps();
        Ok(())
    })
}

/// Rate at `mcs` rendered with six decimals, e.g. `"158.796162"`.
///
/// # Safety
/// `cell` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nrs_cell_rate_string(cell: *const NrsCell, mcs: u32, out: *mut *mut c_char) -> NrsStatus {
    guard(|| {
        let cell = cell.as_ref().ok_or_else(|| null("cell"))?;
        let rendered = core(cell.cell.estimate(mcs))?.render();
        write_string(out, rendered)
    })
}

/// Adaptive controller over a ladder. `ladder_json` may be NULL for the
/// default three-profile ladder; the controller starts in the top profile.
///
/// # Safety
/// `ladder_json` must be NULL or NUL-terminated; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nrs_controller_new(ladder_json: *const c_char, out: *mut *mut NrsController) -> NrsStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ladder = if ladder_json.is_null() {
            QualityLadder::default()
        } else {
            serde_json::from_str(str_arg(ladder_json, "ladder_json")?)
                .map_err(|e| (NrsStatus::Config, format!("ladder json: {e}")))?
        };
        let controller = core(RateController::adaptive(ladder))?;
        let current = CString::new(controller.current().name.clone()).map_err(|_| null("profile name"))?;
        *out = Box::into_raw(Box::new(NrsController { controller, current }));
        Ok(())
    })
}

/// # Safety
/// `ctl` must come from this library and not have been freed. NULL is ignored.
#[no_mangle]
pub unsafe extern "C" fn nrs_controller_free(ctl: *mut NrsController) {
    if !ctl.is_null() {
        drop(Box::from_raw(ctl));
    }
}

/// Feed one estimate. `*out_switched` is set to whether the profile changed.
///
/// # Safety
/// `ctl` must be a live handle; `out_switched` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn nrs_controller_step(
    ctl: *mut NrsController,
    estimate_mbps: f64,
    now_s: f64,
    out_switched: *mut bool,
) -> NrsStatus {
    guard(|| {
        let ctl = ctl.as_mut().ok_or_else(|| null("ctl"))?;
        let decision = core(ctl.controller.step(estimate_mbps, now_s))?;
        if let Decision::Switch { target, .. } = &decision {
            ctl.current = CString::new(target.clone()).map_err(|_| null("profile name"))?;
        }
        if !out_switched.is_null() {
            *out_switched = decision.is_switch();
        }
        Ok(())
    })
}

/// Name of the active profile; owned by the handle and valid until the next
/// step or free.
///
/// # Safety
/// `ctl` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nrs_controller_profile(ctl: *const NrsController) -> *const c_char {
    match ctl.as_ref() {
        Some(ctl) => ctl.current.as_ptr(),
        None => ptr::null(),
    }
}

/// Run a scenario file and return the metrics report as JSON.
/// `fixed_profile` may be NULL (the configured or top profile).
///
/// # Safety
/// String arguments must be NULL or NUL-terminated; `out_report_json` must be valid.
#[no_mangle]
pub unsafe extern "C" fn nrs_simulate(
    config_path: *const c_char,
    mode: NrsMode,
    fixed_profile: *const c_char,
    out_report_json: *mut *mut c_char,
) -> NrsStatus {
    guard(|| {
        let path = str_arg(config_path, "config_path")?;
        let profile = if fixed_profile.is_null() {
            None
        } else {
            Some(str_arg(fixed_profile, "fixed_profile")?)
        };
        let config = core(ScenarioConfig::load(Path::new(path)))?;
        let mode = match mode {
            NrsMode::Adaptive => ModeKind::Adaptive,
            NrsMode::Fixed => ModeKind::Fixed,
        };
        let controller = core(config.controller(Some(mode), profile))?;
        let session = core(run_session(core(config.channel_scenario())?, controller, &config.stream_params()))?;
        let report = compute_report(&session.timeline, &config.freeze_params());
        let json = serde_json::to_string(&report).map_err(|e| (NrsStatus::Runtime, e.to_string()))?;
        write_string(out_report_json, json)
    })
}

/// Freeze-time reductions in percent of a candidate against a baseline total,
/// plain and with `stall_count` stalls of `stall_ms` removed. Fails with
/// `NRS_STATUS_INVALID_ARGUMENT` when the baseline has no freeze time.
///
/// # Safety
/// Out pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn nrs_compare(
    baseline_f_tot_ms: f64,
    candidate_f_tot_ms: f64,
    stall_ms: f64,
    stall_count: u32,
    out_reduction_pct: *mut f64,
    out_stall_free_reduction_pct: *mut f64,
) -> NrsStatus {
    guard(|| {
        if out_reduction_pct.is_null() || out_stall_free_reduction_pct.is_null() {
            return Err(null("out"));
        }
        let base = MetricsReport::from_totals(0, baseline_f_tot_ms, 1.0);
        let cand = MetricsReport::from_totals(0, candidate_f_tot_ms, 1.0);
        let summary = core(compare_reports(&base, &cand, stall_ms, stall_count))?;
        match (summary.freeze_time_reduction_pct, summary.stall_free_reduction_pct) {
            (Some(a), Some(b)) => {
                *out_reduction_pct = a;
                *out_stall_free_reduction_pct = b;
                Ok(())
            }
            _ => Err((
                NrsStatus::InvalidArgument,
                summary.note.unwrap_or_else(|| "reduction undefined".into()),
            )),
        }
    })
}
