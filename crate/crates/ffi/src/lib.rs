//! C ABI over the harness core.
//!
//! Every fallible function returns a [`HarnessStatus`] and writes its
//! result through an out pointer. On failure the message is available from
//! [`harness_last_error_message`] on the same thread. Strings returned by
//! the library are owned by the caller and released with
//! [`harness_string_free`]; handles are released with their `_free`
//! function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use harness::curate::{curate, write_samples, ExportFormat, StageLabel};
use harness::eval::{
    parse_report, pass_at_k, render_report, EvalReport, PassAtKQuery, RenderFormat,
};
use harness::model::{is_empty_patch, load_suite, TaskInstance};
use harness::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HarnessStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Validation = 4,
    Infra = 5,
    Aborted = 6,
    Io = 7,
    Json = 8,
    OutOfRange = 9,
    Panic = 10,
}

/// Parsed evaluation report.
pub struct HarnessReport(EvalReport);

/// Loaded instance suite.
pub struct HarnessSuite(Vec<TaskInstance>);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(HarnessStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Config(_) => HarnessStatus::Config,
            Error::Validation(_) => HarnessStatus::Validation,
            Error::Infra(_) => HarnessStatus::Infra,
            Error::Aborted(_) => HarnessStatus::Aborted,
            Error::Io { .. } => HarnessStatus::Io,
            Error::Json(_) => HarnessStatus::Json,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', "\\0")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> HarnessStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            HarnessStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            HarnessStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(
            HarnessStatus::NullArgument,
            format!("{what} is null"),
        ));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        Failure(
            HarnessStatus::InvalidUtf8,
            format!("{what} is not valid UTF-8"),
        )
    })
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure(HarnessStatus::NullArgument, format!("{what} is null")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(HarnessStatus::NullArgument, format!("{what} is null")))
}

fn owned_string(bytes: Vec<u8>) -> Result<*mut c_char, Failure> {
    CString::new(bytes).map(CString::into_raw).map_err(|_| {
        Failure(
            HarnessStatus::InvalidUtf8,
            "output contains a NUL byte".into(),
        )
    })
}

/// Message of the last failed call on this thread, or NULL after a
/// successful call. Free with `harness_string_free`.
#[no_mangle]
pub extern "C" fn harness_last_error_message() -> *mut c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(c) => c.clone().into_raw(),
        None => ptr::null_mut(),
    })
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed already.
#[no_mangle]
pub unsafe extern "C" fn harness_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn harness_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Unbiased pass@k for `c` successes among `n` samples.
///
/// # Safety
/// `out_value` must be a valid pointer to a double.
#[no_mangle]
pub unsafe extern "C" fn harness_pass_at_k(
    n: u32,
    c: u32,
    k: u32,
    out_value: *mut f64,
) -> HarnessStatus {
    guard(|| {
        let slot = out(out_value, "out_value")?;
        *slot = pass_at_k(PassAtKQuery { n, c, k }).map_err(Failure::from)?;
        Ok(())
    })
}

/// Whether a unified diff changes nothing.
///
/// # Safety
/// `patch` must be a NUL-terminated string; `out_empty` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn harness_is_empty_patch(
    patch: *const c_char,
    out_empty: *mut bool,
) -> HarnessStatus {
    guard(|| {
        let patch = text(patch, "patch")?;
        *out(out_empty, "out_empty")? = is_empty_patch(patch);
        Ok(())
    })
}

/// Parses a structured (JSON) report.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out_report` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn harness_report_parse(
    json: *const c_char,
    out_report: *mut *mut HarnessReport,
) -> HarnessStatus {
    guard(|| {
        let json = text(json, "json")?;
        let slot = out(out_report, "out_report")?;
        let report = parse_report(json.as_bytes()).map_err(Failure::from)?;
        *slot = Box::into_raw(Box::new(HarnessReport(report)));
        Ok(())
    })
}

/// Renders a report as `structured`, `table`, or `plot-data`.
///
/// # Safety
/// `report` must be a live handle; `format` a NUL-terminated string;
/// `out_text` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn harness_report_render(
    report: *const HarnessReport,
    format: *const c_char,
    out_text: *mut *mut c_char,
) -> HarnessStatus {
    guard(|| {
        let report = handle(report, "report")?;
        let format: RenderFormat = text(format, "format")?.parse().map_err(Failure::from)?;
        let slot = out(out_text, "out_text")?;
        let bytes = render_report(&report.0, format).map_err(Failure::from)?;
        *slot = owned_string(bytes)?;
        Ok(())
    })
}

/// Number of instances the report covers.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn harness_report_suite_size(report: *const HarnessReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.suite_size)
}

/// Number of instances resolved by any attempt.
///
/// # Safety
/// `report` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn harness_report_resolved(report: *const HarnessReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.resolved)
}

/// # Safety
/// `report` must come from `harness_report_parse` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn harness_report_free(report: *mut HarnessReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Loads and validates a JSON-lines instance file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_suite` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn harness_suite_load(
    path: *const c_char,
    out_suite: *mut *mut HarnessSuite,
) -> HarnessStatus {
    guard(|| {
        let path = text(path, "path")?;
        let slot = out(out_suite, "out_suite")?;
        let suite = load_suite(Path::new(path)).map_err(Failure::from)?;
        *slot = Box::into_raw(Box::new(HarnessSuite(suite)));
        Ok(())
    })
}

/// # Safety
/// `suite` must be a live handle or NULL.
#[no_mangle]
pub unsafe extern "C" fn harness_suite_len(suite: *const HarnessSuite) -> usize {
    suite.as_ref().map_or(0, |s| s.0.len())
}

/// Id of the instance at `index`.
///
/// # Safety
/// `suite` must be a live handle; `out_id` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn harness_suite_instance_id(
    suite: *const HarnessSuite,
    index: usize,
    out_id: *mut *mut c_char,
) -> HarnessStatus {
    guard(|| {
        let suite = handle(suite, "suite")?;
        let slot = out(out_id, "out_id")?;
        let instance = suite.0.get(index).ok_or_else(|| {
            Failure(
                HarnessStatus::OutOfRange,
                format!("index {index} out of range for {} instances", suite.0.len()),
            )
        })?;
        *slot = owned_string(instance.id.clone().into_bytes())?;
        Ok(())
    })
}

/// # Safety
/// `suite` must come from `harness_suite_load` and not be used again.
#[no_mangle]
pub unsafe extern "C" fn harness_suite_free(suite: *mut HarnessSuite) {
    if !suite.is_null() {
        drop(Box::from_raw(suite));
    }
}

/// Filters the attempts under `run_dir` at `stage` (1 or 2) and writes the
/// samples in `format` (`function_calling` or `xml`) to `output` as JSON
/// lines.
///
/// # Safety
/// All strings must be NUL-terminated; `out_exported` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn harness_curate(
    run_dir: *const c_char,
    stage: u32,
    format: *const c_char,
    output: *const c_char,
    out_exported: *mut usize,
) -> HarnessStatus {
    guard(|| {
        let run_dir = text(run_dir, "run_dir")?;
        let format: ExportFormat = text(format, "format")?.parse().map_err(Failure::from)?;
        let output = text(output, "output")?;
        let slot = out(out_exported, "out_exported")?;
        let stage: StageLabel = stage.to_string().parse().map_err(Failure::from)?;
        let result = curate(Path::new(run_dir), stage, format).map_err(Failure::from)?;
        write_samples(Path::new(output), &result.export.samples).map_err(Failure::from)?;
        *slot = result.export.samples.len();
        Ok(())
    })
}
