//! C ABI over the forensic-kg pipeline.
//!
//! Strings returned through `out` parameters are owned by the caller and
//! must be released with `fkg_string_free`. On failure the message for the
//! calling thread is available from `fkg_last_error_message`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::sync::Mutex;

use forensic_kg::evaluate::{compute_metrics, Metric, Tally, VerdictError, VerdictSubmission};
use forensic_kg::flatten::{make_uid, UidParts};
use forensic_kg::pipeline::current_timestamp;
use forensic_kg::refine::{normalize_timestamp, EpochUnit};
use forensic_kg::store::{Run, StoreError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FkgStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    NotFound = 4,
    StageNotReady = 5,
    CustodyBreach = 6,
    IllegalTransition = 7,
    Io = 8,
    Internal = 9,
}

/// Counts behind the reliability metrics.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct FkgTally {
    pub true_extractions: u64,
    pub total_potential_extractions: u64,
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub correctly_consolidated: u64,
    pub total_consolidated: u64,
    pub correct_connections: u64,
    pub total_connections: u64,
    pub exact_value_matches: u64,
    pub artifacts_matching_context: u64,
    pub artifacts_with_intact_custody: u64,
    pub total_artifacts: u64,
}

/// Metric values in hundredths of a percent; -1 means undefined.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FkgMetrics {
    pub eea: i64,
    pub eca: i64,
    pub kgca: i64,
    pub fap: i64,
    pub far: i64,
    pub faf1: i64,
    pub ais: i64,
    pub cca: i64,
    pub ccs: i64,
}

/// An opened run directory.
pub struct FkgRun {
    run: Mutex<Run>,
}

struct Failure(FkgStatus, String);

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let status = match &e {
            StoreError::RunNotFound(_) | StoreError::UnknownUid(_) => FkgStatus::NotFound,
            StoreError::Verdict(VerdictError::UnknownEdge { .. }) => FkgStatus::NotFound,
            StoreError::Verdict(VerdictError::IllegalTransition { .. }) => FkgStatus::IllegalTransition,
            StoreError::StageNotReady { .. } => FkgStatus::StageNotReady,
            StoreError::CustodyBreach { .. } => FkgStatus::CustodyBreach,
            StoreError::Io { .. } | StoreError::Locked { .. } => FkgStatus::Io,
            StoreError::Invalid(_) => FkgStatus::InvalidArgument,
            _ => FkgStatus::Internal,
        };
        Failure(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard<F: FnOnce() -> Result<(), Failure>>(f: F) -> FkgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FkgStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(_) => {
            set_last_error("internal panic");
            FkgStatus::Internal
        }
    }
}

unsafe fn arg_str<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(FkgStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(FkgStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn put_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(FkgStatus::Internal, "result contains a nul byte".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn check_out<T>(out: *mut T) -> Result<(), Failure> {
    if out.is_null() {
        Err(Failure(FkgStatus::NullArgument, "out is null".into()))
    } else {
        Ok(())
    }
}

unsafe fn with_run<F>(run: *const FkgRun, out: *mut *mut c_char, f: F) -> FkgStatus
where
    F: FnOnce(&Run) -> Result<String, Failure>,
{
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let handle = run
            .as_ref()
            .ok_or_else(|| Failure(FkgStatus::NullArgument, "run is null".into()))?;
        let run = handle.run.lock().unwrap_or_else(|e| e.into_inner());
        let s = f(&run)?;
        put_string(out, s)
    })
}

fn to_json<T: serde::Serialize>(v: &T) -> Result<String, Failure> {
    serde_json::to_string(v).map_err(|e| Failure(FkgStatus::Internal, e.to_string()))
}

/// Message for the last failed call on this thread, or null. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fkg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fkg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Opens a run directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fkg_run_open(dir: *const c_char, out: *mut *mut FkgRun) -> FkgStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let dir = arg_str(dir, "dir")?;
        if !std::path::Path::new(dir)
            .join(forensic_kg::store::RUN_FILE_NAME)
            .is_file()
        {
            return Err(Failure(FkgStatus::NotFound, format!("no run at {dir}")));
        }
        let run = Run::open(dir)?;
        *out = Box::into_raw(Box::new(FkgRun { run: Mutex::new(run) }));
        Ok(())
    })
}

/// Releases a run handle. Null is ignored.
///
/// # Safety
/// `run` must come from `fkg_run_open` and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn fkg_run_free(run: *mut FkgRun) {
    if !run.is_null() {
        drop(Box::from_raw(run));
    }
}

/// Stored `graph.json`, verbatim.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fkg_run_graph_json(run: *const FkgRun, out: *mut *mut c_char) -> FkgStatus {
    with_run(run, out, |r| {
        String::from_utf8(r.graph_bytes()?).map_err(|_| Failure(FkgStatus::Internal, "graph is not UTF-8".into()))
    })
}

/// Stored metrics report.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fkg_run_metrics_json(run: *const FkgRun, out: *mut *mut c_char) -> FkgStatus {
    with_run(run, out, |r| to_json(&r.metrics()?))
}

/// Hypothesis instances with their verdict state.
///
/// # Safety
/// `run` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fkg_run_hypotheses_json(run: *const FkgRun, out: *mut *mut c_char) -> FkgStatus {
    with_run(run, out, |r| to_json(&r.hypotheses()?))
}

/// Source record of `uid`, after re-deriving it.
///
/// # Safety
/// `run` must be a live handle; `uid` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fkg_run_provenance_json(
    run: *const FkgRun,
    uid: *const c_char,
    out: *mut *mut c_char,
) -> FkgStatus {
    with_run(run, out, |r| {
        let uid = arg_str(uid, "uid")?;
        match r.provenance(uid)? {
            Some(p) => to_json(&p),
            None => Err(Failure(FkgStatus::NotFound, format!("uid {uid} is not in this run"))),
        }
    })
}

/// Applies a verdict given as JSON
/// `{"edge_id","uid","verdict","reviewer","note"}` and returns the outcome.
///
/// # Safety
/// `run` must be a live handle; `submission` NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fkg_run_record_verdict(
    run: *const FkgRun,
    submission: *const c_char,
    out: *mut *mut c_char,
) -> FkgStatus {
    with_run(run, out, |r| {
        let text = arg_str(submission, "submission")?;
        let sub: VerdictSubmission =
            serde_json::from_str(text).map_err(|e| Failure(FkgStatus::InvalidArgument, format!("submission: {e}")))?;
        to_json(&r.record_verdict(&sub, &current_timestamp())?)
    })
}

/// Builds the UID of a source row.
///
/// # Safety
/// String arguments must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fkg_make_uid(
    device_id: *const c_char,
    file_path: *const c_char,
    database_name: *const c_char,
    table_name: *const c_char,
    lid: u64,
    out: *mut *mut c_char,
) -> FkgStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let parts = UidParts {
            device_id: arg_str(device_id, "device_id")?,
            file_path: arg_str(file_path, "file_path")?,
            database_name: arg_str(database_name, "database_name")?,
            table_name: arg_str(table_name, "table_name")?,
            lid,
        };
        let uid = make_uid(&parts).map_err(|e| Failure(FkgStatus::InvalidArgument, e.to_string()))?;
        put_string(out, uid)
    })
}

/// Renders an epoch (milliseconds when `millis` is true, else seconds) in
/// the IANA zone `zone`.
///
/// # Safety
/// `zone` must be NUL-terminated; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fkg_normalize_timestamp(
    epoch: i64,
    millis: bool,
    zone: *const c_char,
    out: *mut *mut c_char,
) -> FkgStatus {
    guard(|| {
        check_out(out)?;
        *out = ptr::null_mut();
        let zone = arg_str(zone, "zone")?;
        let unit = if millis { EpochUnit::Millis } else { EpochUnit::Seconds };
        let s =
            normalize_timestamp(epoch, unit, zone).map_err(|e| Failure(FkgStatus::InvalidArgument, e.to_string()))?;
        put_string(out, s)
    })
}

fn hundredths(m: Metric) -> i64 {
    m.hundredths().map_or(-1, |v| v as i64)
}

/// Computes every metric from a tally.
///
/// # Safety
/// `tally` must be readable and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn fkg_compute_metrics(tally: *const FkgTally, out: *mut FkgMetrics) -> FkgStatus {
    guard(|| {
        check_out(out)?;
        let t = tally
            .as_ref()
            .ok_or_else(|| Failure(FkgStatus::NullArgument, "tally is null".into()))?;
        let m = compute_metrics(&Tally {
            true_extractions: t.true_extractions,
            total_potential_extractions: t.total_potential_extractions,
            tp: t.tp,
            fp: t.fp,
            fn_: t.fn_,
            correctly_consolidated: t.correctly_consolidated,
            total_consolidated: t.total_consolidated,
            correct_connections: t.correct_connections,
            total_connections: t.total_connections,
            exact_value_matches: t.exact_value_matches,
            artifacts_matching_context: t.artifacts_matching_context,
            artifacts_with_intact_custody: t.artifacts_with_intact_custody,
            total_artifacts: t.total_artifacts,
        });
        *out = FkgMetrics {
            eea: hundredths(m.EEA),
            eca: hundredths(m.ECA),
            kgca: hundredths(m.KGCA),
            fap: hundredths(m.FAP),
            far: hundredths(m.FAR),
            faf1: hundredths(m.FAF1),
            ais: hundredths(m.AIS),
            cca: hundredths(m.CCA),
            ccs: hundredths(m.CCS),
        };
        Ok(())
    })
}
