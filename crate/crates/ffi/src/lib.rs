//! C ABI over the paircausal estimators.
//!
//! Every fallible call returns a [`PcStatus`]; on failure the message is
//! available from [`pc_last_error_message`] on the same thread. Handles are
//! opaque and must be released with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use paircausal::estimators::Estimand;
use paircausal::pairs::ObservedDataset;
use paircausal::variance::Method;
use paircausal::workflow::{run_estimates, AnalysisConfig, EstimateRow};
use paircausal::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Precondition = 3,
    RankDeficient = 4,
    MethodMismatch = 5,
    Config = 6,
    Io = 7,
    EnumerationTooLarge = 8,
    OutOfRange = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcEstimand {
    Lambda10 = 0,
    Lambda01 = 1,
    Tau = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PcMethod {
    Hr = 0,
    Cr = 1,
    Tw = 2,
    Ctw = 3,
}

/// One line of an estimate table. The estimator name is available from
/// [`pc_result_estimator`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PcEstimateRow {
    pub estimand: PcEstimand,
    pub method: PcMethod,
    pub estimate: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

/// Opaque observed dataset.
pub struct PcDataset(ObservedDataset);

/// Opaque estimate table.
pub struct PcResult {
    rows: Vec<PcEstimateRow>,
    names: Vec<CString>,
    json: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PcStatus {
    match e {
        Error::Input(_) => PcStatus::InvalidInput,
        Error::Precondition(_) => PcStatus::Precondition,
        Error::RankDeficient { .. } => PcStatus::RankDeficient,
        Error::MethodMismatch { .. } => PcStatus::MethodMismatch,
        Error::EnumerationTooLarge { .. } => PcStatus::EnumerationTooLarge,
        Error::Config(_) => PcStatus::Config,
        Error::Io(_) => PcStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), (PcStatus, String)>) -> PcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            PcStatus::Ok
        }
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            PcStatus::Panic
        }
    }
}

fn lib_err(e: Error) -> (PcStatus, String) {
    (status_of(&e), e.to_string())
}

fn null(what: &str) -> (PcStatus, String) {
    (PcStatus::NullPointer, format!("{what} is null"))
}

/// Slice from a possibly-null pointer; a zero length accepts null.
unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], (PcStatus, String)> {
    if len == 0 {
        Ok(&[])
    } else if p.is_null() {
        Err(null(what))
    } else {
        Ok(std::slice::from_raw_parts(p, len))
    }
}

/// Builds a dataset from row-major buffers: `treatment[n]` with values 0/1,
/// `outcomes[n*q]` and `covariates[n*d]` (may be null when `d == 0`).
///
/// # Safety
/// The buffers must hold at least the stated number of elements and `out`
/// must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_new(
    n: usize,
    treatment: *const u8,
    outcomes: *const f64,
    q: usize,
    covariates: *const f64,
    d: usize,
    out: *mut *mut PcDataset,
) -> PcStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let a = slice(treatment, n, "treatment")?;
        let y = slice(outcomes, n.saturating_mul(q), "outcomes")?;
        let x = slice(covariates, n.saturating_mul(d), "covariates")?;
        let ids = (1..=n).map(|k| k.to_string()).collect();
        let ds = ObservedDataset::from_columns(ids, a.to_vec(), y.to_vec(), q, x.to_vec(), d).map_err(lib_err)?;
        *out = Box::into_raw(Box::new(PcDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be null or a handle from [`pc_dataset_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pc_dataset_free(ds: *mut PcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

fn estimand_code(name: &str) -> PcEstimand {
    match name {
        n if n == Estimand::Lambda10.name() => PcEstimand::Lambda10,
        n if n == Estimand::Lambda01.name() => PcEstimand::Lambda01,
        _ => PcEstimand::Tau,
    }
}

fn method_code(name: &str) -> Result<PcMethod, (PcStatus, String)> {
    Ok(match Method::parse(name).map_err(lib_err)? {
        Method::Hr => PcMethod::Hr,
        Method::Cr => PcMethod::Cr,
        Method::Tw => PcMethod::Tw,
        Method::Ctw => PcMethod::Ctw,
    })
}

/// Runs the estimators in `config_json`, an analysis configuration such as
/// `{"contrast": {"kind": "win_strict"}, "estimators": ["I-un"], "methods": ["CTW"]}`.
/// Column selection fields are ignored.
///
/// # Safety
/// `ds` must be a live dataset handle, `config_json` a NUL-terminated UTF-8
/// string and `out` writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pc_estimate(
    ds: *const PcDataset,
    config_json: *const c_char,
    out: *mut *mut PcResult,
) -> PcStatus {
    guard(|| {
        if ds.is_null() {
            return Err(null("dataset"));
        }
        if config_json.is_null() {
            return Err(null("config_json"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let text = CStr::from_ptr(config_json)
            .to_str()
            .map_err(|e| (PcStatus::Config, format!("config is not UTF-8: {e}")))?;
        let config: AnalysisConfig =
            serde_json::from_str(text).map_err(|e| (PcStatus::Config, format!("config: {e}")))?;
        let report = run_estimates(&(*ds).0, &config).map_err(lib_err)?;
        let json = serde_json::to_string(&report.rows).map_err(|e| (PcStatus::Io, e.to_string()))?;
        let rows = report
            .rows
            .iter()
            .map(|r: &EstimateRow| {
                Ok(PcEstimateRow {
                    estimand: estimand_code(&r.estimand),
                    method: method_code(&r.method)?,
                    estimate: r.estimate,
                    se: r.se,
                    ci_lo: r.ci_lo,
                    ci_hi: r.ci_hi,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        let names = report.rows.iter().map(|r| CString::new(r.estimator.clone()).unwrap_or_default()).collect();
        *out = Box::into_raw(Box::new(PcResult { rows, names, json: CString::new(json).unwrap_or_default() }));
        Ok(())
    })
}

/// Number of rows; 0 for a null handle.
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pc_result_len(res: *const PcResult) -> usize {
    res.as_ref().map_or(0, |r| r.rows.len())
}

/// Copies row `index` into `out`.
///
/// # Safety
/// `res` must be a live result handle and `out` writable storage for one row.
#[no_mangle]
pub unsafe extern "C" fn pc_result_row(res: *const PcResult, index: usize, out: *mut PcEstimateRow) -> PcStatus {
    guard(|| {
        let r = res.as_ref().ok_or_else(|| null("result"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let row =
            r.rows.get(index).ok_or_else(|| (PcStatus::OutOfRange, format!("row {index} of {}", r.rows.len())))?;
        *out = *row;
        Ok(())
    })
}

/// Estimator name of row `index`, or null when out of range. The string is
/// owned by the result and lives until [`pc_result_free`].
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pc_result_estimator(res: *const PcResult, index: usize) -> *const c_char {
    res.as_ref().and_then(|r| r.names.get(index)).map_or(ptr::null(), |s| s.as_ptr())
}

/// The whole table as a JSON array, owned by the result.
///
/// # Safety
/// `res` must be null or a live result handle.
#[no_mangle]
pub unsafe extern "C" fn pc_result_json(res: *const PcResult) -> *const c_char {
    res.as_ref().map_or(ptr::null(), |r| r.json.as_ptr())
}

/// # Safety
/// `res` must be null or a handle from [`pc_estimate`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pc_result_free(res: *mut PcResult) {
    if !res.is_null() {
        drop(Box::from_raw(res));
    }
}

/// Message of the last failed call on this thread, or null after a success.
/// Valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn pc_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn pc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
