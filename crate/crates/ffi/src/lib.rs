//! C ABI over `audit-repair`.
//!
//! Objects cross the boundary as opaque handles owned by the caller and
//! released with the matching `*_free`. Every fallible call returns an
//! [`ArStatus`]; on failure `ar_last_error` describes what went wrong on the
//! calling thread. Group arrays use 1 for Young and 0 for Older, label
//! arrays use 1 for a callback.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use audit_repair::causal::{estimate_ite, fit_twin_model, CausalError, TreatmentFrame};
use audit_repair::data::{
    generate_synthetic, load_csv, write_csv, AgeGroup, DataError, Dataset, FeatureEncoder, FeatureMatrix, SchemaSpec,
    SynthConfig,
};
use audit_repair::forest::{fit_forest, predict_proba, ForestError, ForestModel, ForestParams};
use audit_repair::metrics::{compute_auc, evaluate, threshold_by_budget, LabelSource, MetricsError};
use audit_repair::repair::{equalize_base_rate, repair_labels_ite, RepairError};

/// Result codes. Zero is success.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Data = 4,
    Metrics = 5,
    Forest = 6,
    Causal = 7,
    Repair = 8,
    Panic = 99,
}

/// Opaque dataset handle.
pub struct ArDataset(Dataset);

/// Opaque random-forest handle.
pub struct ArForest(ForestModel);

/// Callback counts by age group.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ArGroupCounts {
    pub young_pos: u64,
    pub young_neg: u64,
    pub older_pos: u64,
    pub older_neg: u64,
}

/// Budget-thresholded fairness summary.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct ArEvalReport {
    pub auc: f64,
    pub fpr_young: f64,
    pub fpr_old: f64,
    pub fprd: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(ArStatus, String);

impl From<DataError> for Failure {
    fn from(e: DataError) -> Self {
        let code = if matches!(e, DataError::Io(_)) { ArStatus::Io } else { ArStatus::Data };
        Failure(code, e.to_string())
    }
}

impl From<MetricsError> for Failure {
    fn from(e: MetricsError) -> Self {
        Failure(ArStatus::Metrics, e.to_string())
    }
}

impl From<ForestError> for Failure {
    fn from(e: ForestError) -> Self {
        Failure(ArStatus::Forest, e.to_string())
    }
}

impl From<CausalError> for Failure {
    fn from(e: CausalError) -> Self {
        Failure(ArStatus::Causal, e.to_string())
    }
}

impl From<RepairError> for Failure {
    fn from(e: RepairError) -> Self {
        Failure(ArStatus::Repair, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure(ArStatus::Io, e.to_string())
    }
}

fn invalid(msg: &str) -> Failure {
    Failure(ArStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ArStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArStatus::Ok,
        Ok(Err(Failure(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic".into());
            ArStatus::Panic
        }
    }
}

unsafe fn as_ref<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure(ArStatus::NullPointer, "null pointer argument".into()))
}

unsafe fn slice<'a, T>(p: *const T, n: usize) -> Result<&'a [T], Failure> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure(ArStatus::NullPointer, "null array argument".into()));
    }
    Ok(std::slice::from_raw_parts(p, n))
}

unsafe fn slice_mut<'a, T>(p: *mut T, n: usize) -> Result<&'a mut [T], Failure> {
    if n == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(Failure(ArStatus::NullPointer, "null output array".into()));
    }
    Ok(std::slice::from_raw_parts_mut(p, n))
}

unsafe fn c_path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(ArStatus::NullPointer, "null path".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|_| invalid("path is not UTF-8"))
}

unsafe fn put<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(ArStatus::NullPointer, "null output pointer".into()));
    }
    out.write(value);
    Ok(())
}

fn bools(v: &[u8]) -> Vec<bool> {
    v.iter().map(|&b| b != 0).collect()
}

fn matrix(x: &[f64], n_rows: usize, n_cols: usize) -> Result<FeatureMatrix, Failure> {
    if n_cols == 0 || x.len() != n_rows * n_cols {
        return Err(invalid("matrix dimensions do not match the buffer"));
    }
    let rows: Vec<Vec<f64>> = x.chunks(n_cols).map(<[f64]>::to_vec).collect();
    Ok(FeatureMatrix::from_rows(&rows))
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn ar_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Loads an audit CSV.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_load_csv(path: *const c_char, out: *mut *mut ArDataset) -> ArStatus {
    guard(|| {
        let data = load_csv(c_path(path)?, &SchemaSpec::default())?;
        put(out, Box::into_raw(Box::new(ArDataset(data))))
    })
}

/// Generates the synthetic replica of the published audit counts.
/// `n_records` of 0 keeps the replica size.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_generate(seed: u64, n_records: usize, out: *mut *mut ArDataset) -> ArStatus {
    guard(|| {
        let mut cfg = SynthConfig::table2_replica(seed);
        if n_records > 0 {
            cfg.n_records = n_records;
        }
        let data = generate_synthetic(&cfg)?;
        put(out, Box::into_raw(Box::new(ArDataset(data))))
    })
}

/// # Safety
/// `data` must be NULL or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_free(data: *mut ArDataset) {
    if !data.is_null() {
        drop(Box::from_raw(data));
    }
}

/// Record count, or 0 for NULL.
///
/// # Safety
/// `data` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_len(data: *const ArDataset) -> usize {
    data.as_ref().map_or(0, |d| d.0.len())
}

/// # Safety
/// `data` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_counts(data: *const ArDataset, out: *mut ArGroupCounts) -> ArStatus {
    guard(|| {
        let c = as_ref(data)?.0.group_counts();
        put(
            out,
            ArGroupCounts {
                young_pos: c.young_pos as u64,
                young_neg: c.young_neg as u64,
                older_pos: c.older_pos as u64,
                older_neg: c.older_neg as u64,
            },
        )
    })
}

/// Copies callbacks (`labels`) and age groups (`groups`) into caller
/// buffers of `n` entries each; either may be NULL to skip it.
///
/// # Safety
/// Non-NULL buffers must hold `n` bytes; `n` must equal the record count.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_columns(
    data: *const ArDataset,
    labels: *mut u8,
    groups: *mut u8,
    n: usize,
) -> ArStatus {
    guard(|| {
        let d = &as_ref(data)?.0;
        if n != d.len() {
            return Err(invalid("buffer length differs from the record count"));
        }
        if !labels.is_null() {
            for (o, r) in slice_mut(labels, n)?.iter_mut().zip(&d.records) {
                *o = u8::from(r.callback);
            }
        }
        if !groups.is_null() {
            for (o, r) in slice_mut(groups, n)?.iter_mut().zip(&d.records) {
                *o = u8::from(r.age_group == AgeGroup::Young);
            }
        }
        Ok(())
    })
}

/// # Safety
/// `data` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn ar_dataset_write_csv(data: *const ArDataset, path: *const c_char) -> ArStatus {
    guard(|| {
        let d = as_ref(data)?;
        let file = std::fs::File::create(c_path(path)?)?;
        write_csv(&d.0, file)?;
        Ok(())
    })
}

/// Mann-Whitney AUC.
///
/// # Safety
/// `scores` and `labels` must hold `n` entries; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ar_auc(scores: *const f64, labels: *const u8, n: usize, out: *mut f64) -> ArStatus {
    guard(|| {
        let auc = compute_auc(slice(scores, n)?, &bools(slice(labels, n)?))?;
        put(out, auc)
    })
}

/// Marks the `round(budget_rate * n)` highest scores with 1 in `out`.
///
/// # Safety
/// `scores` and `out` must hold `n` entries.
#[no_mangle]
pub unsafe extern "C" fn ar_threshold(scores: *const f64, n: usize, budget_rate: f64, out: *mut u8) -> ArStatus {
    guard(|| {
        let pred = threshold_by_budget(slice(scores, n)?, budget_rate)?;
        for (o, p) in slice_mut(out, n)?.iter_mut().zip(pred) {
            *o = u8::from(p);
        }
        Ok(())
    })
}

/// AUC and false-positive-rate difference at a callback budget.
///
/// # Safety
/// `scores`, `labels` and `groups` must hold `n` entries; `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn ar_evaluate(
    scores: *const f64,
    labels: *const u8,
    groups: *const u8,
    n: usize,
    budget_rate: f64,
    out: *mut ArEvalReport,
) -> ArStatus {
    guard(|| {
        let groups: Vec<AgeGroup> = slice(groups, n)?
            .iter()
            .map(|&g| if g != 0 { AgeGroup::Young } else { AgeGroup::Older })
            .collect();
        let r = evaluate(slice(scores, n)?, &bools(slice(labels, n)?), &groups, budget_rate, LabelSource::Observed)?;
        put(
            out,
            ArEvalReport {
                auc: r.auc,
                fpr_young: r.fpr_young,
                fpr_old: r.fpr_old,
                fprd: r.fprd,
            },
        )
    })
}

/// Fits a random forest on a row-major `n_rows x n_cols` matrix.
///
/// # Safety
/// `x` must hold `n_rows * n_cols` values, `y` `n_rows`; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_forest_fit(
    x: *const f64,
    y: *const u8,
    n_rows: usize,
    n_cols: usize,
    n_estimators: usize,
    seed: u64,
    out: *mut *mut ArForest,
) -> ArStatus {
    guard(|| {
        let x = matrix(slice(x, n_rows * n_cols)?, n_rows, n_cols)?;
        let params = ForestParams {
            n_estimators,
            seed,
            ..ForestParams::default()
        };
        let model = fit_forest(&x, &bools(slice(y, n_rows)?), &params)?;
        put(out, Box::into_raw(Box::new(ArForest(model))))
    })
}

/// Class-1 probabilities for each row of `x` into `out`.
///
/// # Safety
/// `model` must be live; `x` holds `n_rows * n_cols` values, `out` `n_rows`.
#[no_mangle]
pub unsafe extern "C" fn ar_forest_predict(
    model: *const ArForest,
    x: *const f64,
    n_rows: usize,
    n_cols: usize,
    out: *mut f64,
) -> ArStatus {
    guard(|| {
        let m = as_ref(model)?;
        let x = matrix(slice(x, n_rows * n_cols)?, n_rows, n_cols)?;
        let p = predict_proba(&m.0, &x)?;
        slice_mut(out, n_rows)?.copy_from_slice(&p);
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn ar_forest_free(model: *mut ArForest) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fits a virtual-twins forest on the whole dataset and writes each
/// record's estimated effect of being Young into `tau`.
///
/// # Safety
/// `data` must be live; `tau` must hold `n` entries, `n` the record count.
#[no_mangle]
pub unsafe extern "C" fn ar_ite(
    data: *const ArDataset,
    n_estimators: usize,
    seed: u64,
    tau: *mut f64,
    n: usize,
) -> ArStatus {
    guard(|| {
        let d = &as_ref(data)?.0;
        if n != d.len() {
            return Err(invalid("buffer length differs from the record count"));
        }
        let enc = FeatureEncoder::fit(d, false, FeatureEncoder::DEFAULT_MIN_CITY_SHARE)?;
        let frame = TreatmentFrame::from_dataset(d, &enc)?;
        let params = ForestParams {
            n_estimators,
            seed,
            ..ForestParams::default()
        };
        let model = fit_twin_model(&frame, &params)?;
        let scores = estimate_ite(&model, &frame.x)?;
        slice_mut(tau, n)?.copy_from_slice(&scores.tau);
        Ok(())
    })
}

/// Flips callback labels in order of `tau` until group rates match.
/// Writes a new dataset to `out` and the number of flipped pairs to
/// `iterations` (which may be NULL).
///
/// # Safety
/// `data` must be live; `tau` holds `n` entries; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_repair_ite(
    data: *const ArDataset,
    tau: *const f64,
    n: usize,
    out: *mut *mut ArDataset,
    iterations: *mut usize,
) -> ArStatus {
    guard(|| {
        let d = &as_ref(data)?.0;
        let (repaired, log) = repair_labels_ite(d, slice(tau, n)?)?;
        if !iterations.is_null() {
            iterations.write(log.iterations);
        }
        put(out, Box::into_raw(Box::new(ArDataset(repaired))))
    })
}

/// Deletes random older non-callbacks until the older callback rate
/// reaches the young one. `removed` (may be NULL) receives the count.
///
/// # Safety
/// `data` must be live; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ar_equalize_base_rate(
    data: *const ArDataset,
    seed: u64,
    out: *mut *mut ArDataset,
    removed: *mut usize,
) -> ArStatus {
    guard(|| {
        let r = equalize_base_rate(&as_ref(data)?.0, seed);
        if !removed.is_null() {
            removed.write(r.removed.len());
        }
        put(out, Box::into_raw(Box::new(ArDataset(r.data))))
    })
}
