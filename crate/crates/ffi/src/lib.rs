//! C ABI over the autograph library.
//!
//! Datasets and prediction sets are opaque handles created and freed by this
//! library. Every fallible call returns an [`AgStatus`]; on failure the
//! message is available from [`ag_last_error_message`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use autograph::graph::{load_dataset, DatasetBundle};
use autograph::harness::{accuracy, balanced_accuracy, ingest_bundle, write_outputs, IngestReport, Solution};
use autograph::search::{SearchOptions, TimeBudget};
use autograph::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Load = 3,
    Format = 4,
    Contract = 5,
    Capacity = 6,
    Budget = 7,
    Usage = 8,
    Scoring = 9,
    Io = 10,
    OutOfRange = 11,
    Panic = 12,
}

/// A loaded dataset.
pub struct AgDataset {
    bundle: DatasetBundle,
}

/// Predictions of one run, in test-id order.
pub struct AgPredictions {
    report: IngestReport,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(err: &Error) -> AgStatus {
    match err {
        Error::Load { .. } => AgStatus::Load,
        Error::Format { .. } => AgStatus::Format,
        Error::Contract(_) => AgStatus::Contract,
        Error::Capacity(_) => AgStatus::Capacity,
        Error::Budget(_) => AgStatus::Budget,
        Error::Usage(_) => AgStatus::Usage,
        Error::Scoring(_) => AgStatus::Scoring,
        Error::Io(_) | Error::Json(_) => AgStatus::Io,
    }
}

fn guard(f: impl FnOnce() -> Result<(), AgStatus>) -> AgStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AgStatus::Ok,
        Ok(Err(s)) => s,
        Err(_) => {
            set_error("internal panic");
            AgStatus::Panic
        }
    }
}

fn fail(err: Error) -> AgStatus {
    set_error(err.to_string());
    status_of(&err)
}

fn null(what: &str) -> AgStatus {
    set_error(format!("{what} is null"));
    AgStatus::NullPointer
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, AgStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error(format!("{what} is not valid UTF-8"));
        AgStatus::InvalidUtf8
    })
}

unsafe fn slice_arg<'a>(p: *const usize, n: usize, what: &str) -> Result<&'a [usize], AgStatus> {
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, AgStatus> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ag_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ag_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Loads a dataset directory.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_dataset_load(dir: *const c_char, out: *mut *mut AgDataset) -> AgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let dir = PathBuf::from(str_arg(dir, "dir")?);
        let bundle = load_dataset(dir).map_err(fail)?;
        *out = Box::into_raw(Box::new(AgDataset { bundle }));
        Ok(())
    })
}

/// Frees a dataset. NULL is ignored.
///
/// # Safety
/// `ds` must come from [`ag_dataset_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ag_dataset_free(ds: *mut AgDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Node, test-node and class counts of a dataset. Any output may be NULL.
///
/// # Safety
/// `ds` must be a live dataset handle; non-NULL outputs must be valid.
#[no_mangle]
pub unsafe extern "C" fn ag_dataset_shape(
    ds: *const AgDataset,
    n_nodes: *mut usize,
    n_test: *mut usize,
    n_classes: *mut usize,
) -> AgStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let b = &ds.bundle;
        for (p, v) in [(n_nodes, b.n_nodes()), (n_test, b.test_ids.len()), (n_classes, b.n_classes)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Runs a named solution (`baseline_gcn2`, `gcn4`, `autograph`, `f2gcn`)
/// under a time budget in seconds. `max_trials` of 0 means no cap.
///
/// # Safety
/// `ds` must be a live dataset handle, `solution` a NUL-terminated string
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_run(
    ds: *const AgDataset,
    solution: *const c_char,
    budget_seconds: f64,
    seed: u64,
    max_trials: usize,
    out: *mut *mut AgPredictions,
) -> AgStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let ds = ds.as_ref().ok_or_else(|| null("dataset"))?;
        let solution: Solution = str_arg(solution, "solution")?.parse().map_err(fail)?;
        if !(budget_seconds.is_finite() && budget_seconds >= 0.0) {
            return Err(fail(Error::Usage(format!("invalid budget {budget_seconds}"))));
        }
        let opts = SearchOptions {
            seed,
            max_trials: (max_trials > 0).then_some(max_trials),
            ..SearchOptions::default()
        };
        let report = ingest_bundle(&ds.bundle, solution, &TimeBudget::new(budget_seconds), &opts);
        *out = Box::into_raw(Box::new(AgPredictions { report }));
        Ok(())
    })
}

/// Frees a prediction set. NULL is ignored.
///
/// # Safety
/// `p` must come from [`ag_run`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ag_predictions_free(p: *mut AgPredictions) {
    if !p.is_null() {
        drop(Box::from_raw(p));
    }
}

/// Number of predicted nodes.
///
/// # Safety
/// `p` must be a live prediction handle and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_predictions_len(p: *const AgPredictions, len: *mut usize) -> AgStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("predictions"))?;
        *out_arg(len, "len")? = p.report.predictions.len();
        Ok(())
    })
}

/// Node id and predicted label of entry `index`.
///
/// # Safety
/// `p` must be a live prediction handle; outputs must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn ag_predictions_get(
    p: *const AgPredictions,
    index: usize,
    node_id: *mut usize,
    label: *mut usize,
) -> AgStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("predictions"))?;
        let Some(&(id, l)) = p.report.predictions.get(index) else {
            set_error(format!("index {index} out of range"));
            return Err(AgStatus::OutOfRange);
        };
        *out_arg(node_id, "node_id")? = id;
        *out_arg(label, "label")? = l;
        Ok(())
    })
}

/// Whether the run fell back to majority-class predictions or overran
/// its budget.
///
/// # Safety
/// `p` must be a live prediction handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn ag_predictions_budget_exceeded(p: *const AgPredictions, out: *mut bool) -> AgStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("predictions"))?;
        *out_arg(out, "out")? = p.report.meta.budget_exceeded;
        Ok(())
    })
}

/// Writes predictions.tsv and its sidecars into `dir`.
///
/// # Safety
/// `p` must be a live prediction handle and `dir` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ag_predictions_write(p: *const AgPredictions, dir: *const c_char) -> AgStatus {
    guard(|| {
        let p = p.as_ref().ok_or_else(|| null("predictions"))?;
        let dir = str_arg(dir, "dir")?;
        write_outputs(&p.report, dir).map_err(fail)
    })
}

/// Fraction of `n` predictions equal to the truth.
///
/// # Safety
/// `pred` and `truth` must point to `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ag_accuracy(pred: *const usize, truth: *const usize, n: usize, out: *mut f64) -> AgStatus {
    guard(|| {
        let pred = slice_arg(pred, n, "pred")?;
        let truth = slice_arg(truth, n, "truth")?;
        *out_arg(out, "out")? = accuracy(pred, truth).map_err(fail)?;
        Ok(())
    })
}

/// Mean per-class recall over the classes present in `truth`.
///
/// # Safety
/// `pred` and `truth` must point to `n` values; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn ag_balanced_accuracy(
    pred: *const usize,
    truth: *const usize,
    n: usize,
    n_classes: usize,
    out: *mut f64,
) -> AgStatus {
    guard(|| {
        let pred = slice_arg(pred, n, "pred")?;
        let truth = slice_arg(truth, n, "truth")?;
        *out_arg(out, "out")? = balanced_accuracy(pred, truth, n_classes).map_err(fail)?;
        Ok(())
    })
}
