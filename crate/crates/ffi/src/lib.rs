//! C ABI for the forecasting harness.
//!
//! Every fallible function returns a [`TsfStatus`]. On failure the message is
//! available from [`tsf_last_error_message`] on the same thread. Strings
//! returned through `char **` out-parameters are owned by the caller and must
//! be released with [`tsf_string_free`]. Strings returned directly as
//! `const char *` are borrowed from their handle and stay valid until the
//! handle is freed.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use tsf_core::dataset::{slice_windows, CsvSchema, Dataset};
use tsf_core::evaluation::{mae, mse, render_json};
use tsf_core::gateway::GatewayError;
use tsf_core::neighbors::{build_pool, top_k, PoolOptions, DEFAULT_K};
use tsf_core::patching::slot_index;
use tsf_core::prompting::{assemble, PromptBundle, PromptOptions, SeriesInfo, Strategy, TemplateSet};
use tsf_core::{format_value, load_csv, pipeline, Error, RunConfig};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TsfStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    DatasetError = 4,
    PatchError = 5,
    NeighborError = 6,
    PromptError = 7,
    ParseError = 8,
    GatewayError = 9,
    EvalError = 10,
    ConfigError = 11,
    IoError = 12,
    Panic = 13,
}

/// A loaded dataset.
pub struct TsfDataset {
    inner: Dataset,
}

/// An assembled prompt bundle.
pub struct TsfBundle {
    bundle: PromptBundle,
    system: CString,
    user: CString,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

struct Failure(TsfStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Dataset(_) => TsfStatus::DatasetError,
            Error::Patch(_) => TsfStatus::PatchError,
            Error::Neighbor(_) => TsfStatus::NeighborError,
            Error::Prompt(_) => TsfStatus::PromptError,
            Error::Parse(_) => TsfStatus::ParseError,
            Error::Gateway(GatewayError::Config(_)) => TsfStatus::ConfigError,
            Error::Gateway(_) => TsfStatus::GatewayError,
            Error::Eval(_) => TsfStatus::EvalError,
            Error::Config(_) => TsfStatus::ConfigError,
            Error::Io { .. } => TsfStatus::IoError,
            Error::Window { .. } => TsfStatus::GatewayError,
        };
        Failure(status, e.to_string())
    }
}

fn invalid(message: impl Into<String>) -> Failure {
    Failure(TsfStatus::InvalidArgument, message.into())
}

fn null(name: &str) -> Failure {
    Failure(TsfStatus::NullPointer, format!("`{name}` is null"))
}

/// Runs `body`, converting errors and panics into a status code.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> TsfStatus {
    clear_last_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => TsfStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            TsfStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(name));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure(TsfStatus::InvalidUtf8, format!("`{name}` is not valid UTF-8")))
}

unsafe fn slice_arg<'a>(p: *const f64, len: usize, name: &str) -> Result<&'a [f64], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(name));
    }
    out.write(value);
    Ok(())
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| invalid("string contains an interior nul byte"))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn tsf_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Releases a string returned through a `char **` out-parameter.
///
/// # Safety
/// `s` must be null or a pointer obtained from this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsf_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Renders a value with at most `max_decimals` fractional digits.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one `char *`.
#[no_mangle]
pub unsafe extern "C" fn tsf_format_value(x: f64, max_decimals: usize, out: *mut *mut c_char) -> TsfStatus {
    guard(|| {
        let s = format_value(x, max_decimals).map_err(|e| Failure::from(Error::from(e)))?;
        write_out(out, into_c_string(s)?, "out")
    })
}

/// Ten-minute slot of the day for a clock time.
///
/// # Safety
/// `out` must be a valid pointer to one `uint32_t`.
#[no_mangle]
pub unsafe extern "C" fn tsf_slot_index(hour: u32, minute: u32, out: *mut u32) -> TsfStatus {
    guard(|| {
        let slot = slot_index(hour, minute).map_err(|e| Failure::from(Error::from(e)))?;
        write_out(out, slot, "out")
    })
}

/// Mean squared error of two arrays of length `len`.
///
/// # Safety
/// `pred` and `truth` must point to `len` readable doubles; `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn tsf_mse(pred: *const f64, truth: *const f64, len: usize, out: *mut f64) -> TsfStatus {
    guard(|| {
        let v = mse(slice_arg(pred, len, "pred")?, slice_arg(truth, len, "truth")?)
            .map_err(|e| Failure::from(Error::from(e)))?;
        write_out(out, v, "out")
    })
}

/// Mean absolute error of two arrays of length `len`.
///
/// # Safety
/// `pred` and `truth` must point to `len` readable doubles; `out` to one double.
#[no_mangle]
pub unsafe extern "C" fn tsf_mae(pred: *const f64, truth: *const f64, len: usize, out: *mut f64) -> TsfStatus {
    guard(|| {
        let v = mae(slice_arg(pred, len, "pred")?, slice_arg(truth, len, "truth")?)
            .map_err(|e| Failure::from(Error::from(e)))?;
        write_out(out, v, "out")
    })
}

/// Extracts exactly `horizon` forecast values from a model response into
/// `out_values`.
///
/// # Safety
/// `text` must be a nul-terminated string; `out_values` must have room for
/// `horizon` doubles.
#[no_mangle]
pub unsafe extern "C" fn tsf_parse_prediction(text: *const c_char, horizon: usize, out_values: *mut f64) -> TsfStatus {
    guard(|| {
        let text = str_arg(text, "text")?;
        let values = tsf_core::parse_prediction(text, horizon).map_err(|e| Failure::from(Error::from(e)))?;
        if out_values.is_null() {
            return Err(null("out_values"));
        }
        ptr::copy_nonoverlapping(values.as_ptr(), out_values, values.len());
        Ok(())
    })
}

/// Loads a CSV dataset. `schema_path` may be null for the default layout.
///
/// # Safety
/// `path` must be a nul-terminated string, `schema_path` null or one, and
/// `out` a valid pointer to one `TsfDataset *`.
#[no_mangle]
pub unsafe extern "C" fn tsf_dataset_load(
    path: *const c_char,
    schema_path: *const c_char,
    out: *mut *mut TsfDataset,
) -> TsfStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        let schema = if schema_path.is_null() {
            CsvSchema::default()
        } else {
            CsvSchema::from_toml_file(&PathBuf::from(str_arg(schema_path, "schema_path")?))
                .map_err(|e| Failure::from(Error::from(e)))?
        };
        let inner = load_csv(&path, &schema).map_err(|e| Failure::from(Error::from(e)))?;
        write_out(out, Box::into_raw(Box::new(TsfDataset { inner })), "out")
    })
}

/// Number of series in the dataset; zero for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle from [`tsf_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn tsf_dataset_feature_count(dataset: *const TsfDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.feature_count)
}

/// Number of observations per series; zero for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle from [`tsf_dataset_load`].
#[no_mangle]
pub unsafe extern "C" fn tsf_dataset_length(dataset: *const TsfDataset) -> usize {
    dataset.as_ref().and_then(|d| d.inner.series.first()).map_or(0, |s| s.len())
}

/// # Safety
/// `dataset` must be null or a handle from [`tsf_dataset_load`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsf_dataset_free(dataset: *mut TsfDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Assembles the prompt for the window of series `feature_index` whose
/// context starts at `context_start`. Neighbor strategies retrieve `k`
/// neighbors (zero selects the default of 5) from the whole dataset.
///
/// # Safety
/// `dataset` must be a live handle, `strategy` a nul-terminated strategy
/// name, and `out` a valid pointer to one `TsfBundle *`.
#[no_mangle]
pub unsafe extern "C" fn tsf_bundle_assemble(
    dataset: *const TsfDataset,
    feature_index: usize,
    strategy: *const c_char,
    context_start: usize,
    context_len: usize,
    horizon: usize,
    k: usize,
    out: *mut *mut TsfBundle,
) -> TsfStatus {
    guard(|| {
        let ds = &dataset.as_ref().ok_or_else(|| null("dataset"))?.inner;
        let strategy: Strategy = str_arg(strategy, "strategy")?
            .parse()
            .map_err(|e| Failure::from(Error::from(e)))?;
        let series = ds
            .series
            .get(feature_index)
            .ok_or_else(|| invalid(format!("feature index {feature_index} out of range")))?;
        let window = slice_windows(series, context_len, horizon, 1)
            .map_err(|e| Failure::from(Error::from(e)))?
            .into_iter()
            .nth(context_start)
            .ok_or_else(|| invalid(format!("no window starts at {context_start}")))?;
        let neighbors = if strategy.needs_neighbors() {
            let pool = build_pool(ds, &window, &PoolOptions::default()).map_err(|e| Failure::from(Error::from(e)))?;
            let k = if k == 0 { DEFAULT_K } else { k };
            Some(top_k(&window, &pool, k, false).map_err(|e| Failure::from(Error::from(e)))?)
        } else {
            None
        };
        let info = SeriesInfo::from_series(series, ds.utc_offset_seconds);
        let bundle = assemble(
            strategy,
            &window,
            &info,
            &PromptOptions::default(),
            &TemplateSet::builtin(),
            neighbors.as_ref(),
        )
        .map_err(|e| Failure::from(Error::from(e)))?;
        let system = CString::new(bundle.system.clone()).map_err(|_| invalid("system prompt contains nul"))?;
        let user = CString::new(bundle.user.clone()).map_err(|_| invalid("user prompt contains nul"))?;
        write_out(out, Box::into_raw(Box::new(TsfBundle { bundle, system, user })), "out")
    })
}

/// System message of a bundle, borrowed from the handle; null for a null handle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsf_bundle_system(bundle: *const TsfBundle) -> *const c_char {
    bundle.as_ref().map_or(ptr::null(), |b| b.system.as_ptr())
}

/// User message of a bundle, borrowed from the handle; null for a null handle.
///
/// # Safety
/// `bundle` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn tsf_bundle_user(bundle: *const TsfBundle) -> *const c_char {
    bundle.as_ref().map_or(ptr::null(), |b| b.user.as_ptr())
}

/// Content hash of a bundle as lowercase hex.
///
/// # Safety
/// `bundle` must be a live handle and `out` a valid pointer to one `char *`.
#[no_mangle]
pub unsafe extern "C" fn tsf_bundle_hash(bundle: *const TsfBundle, out: *mut *mut c_char) -> TsfStatus {
    guard(|| {
        let b = bundle.as_ref().ok_or_else(|| null("bundle"))?;
        write_out(out, into_c_string(b.bundle.content_hash())?, "out")
    })
}

/// # Safety
/// `bundle` must be null or a handle from [`tsf_bundle_assemble`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tsf_bundle_free(bundle: *mut TsfBundle) {
    if !bundle.is_null() {
        drop(Box::from_raw(bundle));
    }
}

/// Runs a TOML run configuration and returns the reports as JSON. Window
/// failures do not fail the call; they are absent from the reports.
///
/// # Safety
/// `config_toml` must be a nul-terminated string and `out_json` a valid
/// pointer to one `char *`.
#[no_mangle]
pub unsafe extern "C" fn tsf_run_config(config_toml: *const c_char, out_json: *mut *mut c_char) -> TsfStatus {
    guard(|| {
        let cfg = RunConfig::from_toml_str(str_arg(config_toml, "config_toml")?)?;
        let outcome = pipeline::execute(&cfg)?;
        let json = render_json(&outcome.reports).map_err(|e| Failure::from(Error::from(e)))?;
        write_out(out_json, into_c_string(json)?, "out_json")
    })
}
