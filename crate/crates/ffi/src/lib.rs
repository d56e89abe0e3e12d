//! C ABI over the experiment, synthesis and estimation API.
//!
//! Objects are opaque handles created by `dss_*_new`/`dss_*_load`-style
//! functions and released with the matching `dss_*_free`. Every fallible
//! call returns a [`DssStatus`]; on failure [`dss_last_error`] gives the
//! message for the calling thread. Panics are caught at the boundary and
//! reported as [`DssStatus::Panic`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use dss_sage::harness::experiment::ResultFile;
use dss_sage::harness::{ExperimentSpec, Prepared};
use dss_sage::sage::{estimate, EstimationResult, EstimatorKind};
use dss_sage::synth::{load_tensor, save_tensor, CirTensor};
use dss_sage::Error;

/// Result codes of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DssStatus {
    Ok = 0,
    /// Null pointer, invalid UTF-8, index out of range or too small a buffer.
    InvalidArgument = 1,
    Config = 2,
    Format = 3,
    Numerical = 4,
    Io = 5,
    Panic = 6,
}

/// A validated experiment configuration.
pub struct DssExperiment {
    prepared: Prepared,
}

/// A CIR tensor of shape (n_tx, n_rx, samples).
pub struct DssTensor {
    tensor: CirTensor,
}

/// The outcome of one estimator run.
pub struct DssResult {
    result: EstimationResult,
    file: ResultFile,
}

/// One estimated path in interface units. Distances are NaN when infinite.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct DssPath {
    pub gain: f64,
    pub gain_db: f64,
    pub delay_ns: f64,
    pub doa_az_deg: f64,
    pub doa_el_deg: f64,
    pub dod_az_deg: f64,
    pub dod_el_deg: f64,
    pub d_rx_m: f64,
    pub d_tx_m: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> DssStatus {
    match e {
        Error::Config(_) => DssStatus::Config,
        Error::InvalidInput(_) => DssStatus::InvalidArgument,
        Error::Format(_) => DssStatus::Format,
        Error::Numerical(_) => DssStatus::Numerical,
        Error::Io(_) => DssStatus::Io,
    }
}

struct Fail(DssStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn bad(msg: &str) -> Fail {
    Fail(DssStatus::InvalidArgument, msg.to_string())
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> DssStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => DssStatus::Ok,
        Ok(Err(Fail(s, msg))) => {
            set_error(msg);
            s
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            DssStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(bad(&format!("{what} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| bad(&format!("{what} is not UTF-8")))
}

unsafe fn ref_arg<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| bad(&format!("{what} is null")))
}

unsafe fn out_arg<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| bad(&format!("{what} is null")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).map_or(ptr::null_mut(), CString::into_raw)
}

/// Message of the last failed call on this thread, or null. Valid until the next failing call on the thread.
#[no_mangle]
pub extern "C" fn dss_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn dss_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Frees a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dss_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Parses and validates an experiment configuration from JSON text.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dss_experiment_from_json(json: *const c_char, out: *mut *mut DssExperiment) -> DssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec = ExperimentSpec::from_json(str_arg(json, "json")?)?;
        *out = Box::into_raw(Box::new(DssExperiment { prepared: Prepared::new(&spec)? }));
        Ok(())
    })
}

/// Loads an experiment configuration file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dss_experiment_load(path: *const c_char, out: *mut *mut DssExperiment) -> DssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let spec = ExperimentSpec::load(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(DssExperiment { prepared: Prepared::new(&spec)? }));
        Ok(())
    })
}

/// Releases an experiment. Null is ignored.
///
/// # Safety
/// `e` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dss_experiment_free(e: *mut DssExperiment) {
    if !e.is_null() {
        drop(Box::from_raw(e));
    }
}

/// Synthesizes the measured tensor of trial `trial`.
///
/// # Safety
/// `e` must be a live experiment; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dss_synthesize(e: *const DssExperiment, trial: usize, out: *mut *mut DssTensor) -> DssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let tensor = ref_arg(e, "experiment")?.prepared.synthesize(trial)?;
        *out = Box::into_raw(Box::new(DssTensor { tensor }));
        Ok(())
    })
}

/// Reads a CIRT file and its sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dss_tensor_load(path: *const c_char, out: *mut *mut DssTensor) -> DssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let tensor = load_tensor(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(DssTensor { tensor }));
        Ok(())
    })
}

/// Writes a CIRT file and its sidecar.
///
/// # Safety
/// `t` must be a live tensor; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn dss_tensor_save(t: *const DssTensor, path: *const c_char) -> DssStatus {
    guard(|| {
        save_tensor(&ref_arg(t, "tensor")?.tensor, &PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// Shape of a tensor.
///
/// # Safety
/// `t` must be a live tensor; the out pointers valid.
#[no_mangle]
pub unsafe extern "C" fn dss_tensor_shape(t: *const DssTensor, n_tx: *mut usize, n_rx: *mut usize, samples: *mut usize) -> DssStatus {
    guard(|| {
        let (a, b, c) = ref_arg(t, "tensor")?.tensor.shape();
        *out_arg(n_tx, "n_tx")? = a;
        *out_arg(n_rx, "n_rx")? = b;
        *out_arg(samples, "samples")? = c;
        Ok(())
    })
}

/// Copies the samples as interleaved (re, im) pairs in (n_tx, n_rx, sample) order.
/// `len` is the buffer length in doubles and must be at least twice the element count.
///
/// # Safety
/// `t` must be a live tensor; `buf` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn dss_tensor_copy(t: *const DssTensor, buf: *mut f64, len: usize) -> DssStatus {
    guard(|| {
        let data = ref_arg(t, "tensor")?.tensor.data();
        if buf.is_null() || len < 2 * data.len() {
            return Err(bad(&format!("buffer needs {} doubles", 2 * data.len())));
        }
        let out = std::slice::from_raw_parts_mut(buf, 2 * data.len());
        for (pair, v) in out.chunks_exact_mut(2).zip(data) {
            pair[0] = v.re;
            pair[1] = v.im;
        }
        Ok(())
    })
}

/// Releases a tensor. Null is ignored.
///
/// # Safety
/// `t` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dss_tensor_free(t: *mut DssTensor) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Runs `estimator` ("dss-o-sage", "pwf-sage", "swf-sage" or "noise-elim") on `t`
/// with the experiment's sounding and estimator configuration.
///
/// # Safety
/// `e` and `t` must be live handles; `estimator` a NUL-terminated string; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dss_estimate(e: *const DssExperiment, t: *const DssTensor, estimator: *const c_char, out: *mut *mut DssResult) -> DssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let p = &ref_arg(e, "experiment")?.prepared;
        let tensor = &ref_arg(t, "tensor")?.tensor;
        let name = str_arg(estimator, "estimator")?;
        let kind: EstimatorKind = serde_json::from_value(serde_json::Value::String(name.into()))
            .map_err(|_| Fail(DssStatus::Config, format!("unknown estimator '{name}'")))?;
        let result = estimate(kind, tensor, &p.cfg, &p.est)?;
        let distance = p.spec.scenario.paths.is_empty().then_some(p.spec.scenario.distance_m);
        let file = ResultFile::new(&result, p.spec.scenario.name.clone(), distance, p.cfg.center_frequency());
        *out = Box::into_raw(Box::new(DssResult { result, file }));
        Ok(())
    })
}

/// Number of estimated paths; 0 for null.
///
/// # Safety
/// `r` must be null or a live result.
#[no_mangle]
pub unsafe extern "C" fn dss_result_path_count(r: *const DssResult) -> usize {
    r.as_ref().map_or(0, |r| r.result.paths.len())
}

/// Copies path `index` (decreasing gain order for noise elimination, estimation order otherwise).
///
/// # Safety
/// `r` must be a live result; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dss_result_path(r: *const DssResult, index: usize, out: *mut DssPath) -> DssStatus {
    guard(|| {
        let r = ref_arg(r, "result")?;
        let out = out_arg(out, "out")?;
        let rec = r.file.paths.get(index).ok_or_else(|| bad(&format!("path index {index} out of range")))?;
        let p = &rec.path;
        *out = DssPath {
            gain: rec.gain,
            gain_db: p.gain_db,
            delay_ns: p.delay_ns,
            doa_az_deg: p.doa_az_deg,
            doa_el_deg: p.doa_el_deg,
            dod_az_deg: p.dod_az_deg,
            dod_el_deg: p.dod_el_deg,
            d_rx_m: p.d_rx_m.unwrap_or(f64::NAN),
            d_tx_m: p.d_tx_m.unwrap_or(f64::NAN),
        };
        Ok(())
    })
}

/// Likelihood evaluations spent by the run; 0 for null.
///
/// # Safety
/// `r` must be null or a live result.
#[no_mangle]
pub unsafe extern "C" fn dss_result_likelihood_evals(r: *const DssResult) -> u64 {
    r.as_ref().map_or(0, |r| r.result.counters.likelihood_evals)
}

/// The result as JSON, in the CLI's result-file schema. Free with [`dss_string_free`].
///
/// # Safety
/// `r` must be a live result; `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn dss_result_to_json(r: *const DssResult, out: *mut *mut c_char) -> DssStatus {
    guard(|| {
        let out = out_arg(out, "out")?;
        *out = ptr::null_mut();
        let s = serde_json::to_string(&ref_arg(r, "result")?.file).map_err(|e| Fail(DssStatus::Format, e.to_string()))?;
        *out = into_c_string(s);
        Ok(())
    })
}

/// Releases a result. Null is ignored.
///
/// # Safety
/// `r` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn dss_result_free(r: *mut DssResult) {
    if !r.is_null() {
        drop(Box::from_raw(r));
    }
}
