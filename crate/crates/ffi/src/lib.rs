//! C ABI over the `bridgerec` engine.
//!
//! Every fallible function returns a [`BrStatus`] and writes results through
//! out-pointers. On failure, [`br_last_error_message`] describes the error
//! for the calling thread. Handles are opaque and must be released with
//! their matching `*_free` function; strings returned by the library are
//! released with [`br_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use bridgerec::bridge::{MetaBridge, UserContext};
use bridgerec::config::RunConfig;
use bridgerec::data::{load_domain, make_split, overlap_users, DomainDataset, Format};
use bridgerec::models::DomainModel;
use bridgerec::nn::Checkpoint;
use bridgerec::pipeline::{compute_metrics, Experiment, Method, MetricsReport};
use bridgerec::Error;

/// Result code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Parse = 4,
    Shape = 5,
    NoSupervision = 6,
    Config = 7,
    Numeric = 8,
    MissingArtifact = 9,
    Panic = 10,
}

/// Methods accepted by [`br_experiment_run`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrMethod {
    Tgt = 0,
    Cmf = 1,
    Emcdr = 2,
    Ptupcdr = 3,
    PtupcdrMappingAblation = 4,
}

/// Input file layout for [`br_dataset_load`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BrFormat {
    /// Chosen from the file extension.
    Auto = 0,
    Csv = 1,
    JsonLines = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BrMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub n_eval: usize,
    pub skipped_users: usize,
}

/// A loaded rating log.
pub struct BrDataset(DomainDataset);

/// Data, split and pre-trained models of one run.
pub struct BrExperiment(Experiment);

/// A pre-trained per-domain model.
pub struct BrModel(DomainModel);

/// Trained encoder and meta network.
pub struct BrMetaBridge(MetaBridge);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BrStatus {
    match e {
        Error::Io { .. } => BrStatus::Io,
        Error::Parse { .. } | Error::Json(_) | Error::Csv(_) | Error::RatingOutOfRange { .. } => BrStatus::Parse,
        Error::InvalidArgument { .. } | Error::IndexOutOfRange { .. } | Error::Empty(_) | Error::SharedItems(_) => {
            BrStatus::InvalidArgument
        }
        Error::Shape { .. } => BrStatus::Shape,
        Error::NoSupervision(_) | Error::ColdInSource => BrStatus::NoSupervision,
        Error::Config(_) | Error::Checkpoint(_) => BrStatus::Config,
        Error::Diverged { .. } | Error::NonFiniteLoss(_) => BrStatus::Numeric,
        Error::MissingArtifact(_) => BrStatus::MissingArtifact,
    }
}

struct Failure(BrStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(BrStatus::NullPointer, format!("{what} is null"))
}

fn invalid(msg: impl Into<String>) -> Failure {
    Failure(BrStatus::InvalidArgument, msg.into())
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BrStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_error(format!("panic: {msg}"));
            BrStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| invalid(format!("{what} is not valid UTF-8")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| null(what))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| null(what))
}

fn into_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| invalid("output contains a nul byte"))
}

fn metrics(r: &MetricsReport) -> BrMetrics {
    BrMetrics {
        mae: r.mae,
        rmse: r.rmse,
        n_eval: r.n_eval,
        skipped_users: r.skipped_users,
    }
}

fn method(m: BrMethod) -> Method {
    match m {
        BrMethod::Tgt => Method::Tgt,
        BrMethod::Cmf => Method::Cmf,
        BrMethod::Emcdr => Method::Emcdr,
        BrMethod::Ptupcdr => Method::Ptupcdr,
        BrMethod::PtupcdrMappingAblation => Method::PtupcdrMappingAblation,
    }
}

/// Message of the calling thread's most recent failure, or null. The pointer
/// stays valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn br_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn br_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn br_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a rating log.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_load(
    path: *const c_char,
    format: BrFormat,
    out: *mut *mut BrDataset,
) -> BrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let path = PathBuf::from(str_arg(path, "path")?);
        let format = match format {
            BrFormat::Auto => Format::from_path(&path),
            BrFormat::Csv => Format::Csv,
            BrFormat::JsonLines => Format::JsonLines,
        };
        let ds = load_domain(&path, format)?;
        *out = Box::into_raw(Box::new(BrDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must come from [`br_dataset_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_free(ds: *mut BrDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Writes user, item and rating counts. Any out-pointer may be null.
///
/// # Safety
/// `ds` must be a live dataset handle.
#[no_mangle]
pub unsafe extern "C" fn br_dataset_counts(
    ds: *const BrDataset,
    n_users: *mut usize,
    n_items: *mut usize,
    n_ratings: *mut usize,
) -> BrStatus {
    guard(|| {
        let ds = &handle(ds, "dataset")?.0;
        if let Some(p) = n_users.as_mut() {
            *p = ds.users.len();
        }
        if let Some(p) = n_items.as_mut() {
            *p = ds.items.len();
        }
        if let Some(p) = n_ratings.as_mut() {
            *p = ds.len();
        }
        Ok(())
    })
}

/// Number of users present in both datasets.
///
/// # Safety
/// Both handles must be live; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_overlap_count(
    src: *const BrDataset,
    tgt: *const BrDataset,
    out: *mut usize,
) -> BrStatus {
    guard(|| {
        let (s, t) = (&handle(src, "src")?.0, &handle(tgt, "tgt")?.0);
        *out_ptr(out, "out")? = overlap_users(s, t).len();
        Ok(())
    })
}

/// Splits the overlapping users and returns the plan as JSON. Free the
/// string with [`br_string_free`].
///
/// # Safety
/// Both handles must be live; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_make_split_json(
    src: *const BrDataset,
    tgt: *const BrDataset,
    beta: f64,
    seed: u64,
    out_json: *mut *mut c_char,
) -> BrStatus {
    guard(|| {
        let out = out_ptr(out_json, "out_json")?;
        let (s, t) = (&handle(src, "src")?.0, &handle(tgt, "tgt")?.0);
        let json = make_split(s, t, beta, seed)?.to_json()?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// Loads data, splits it and pre-trains both domains as described by a run
/// configuration in JSON. Relative paths resolve against the working
/// directory, and `stage` / `checkpoint_dir` are honoured.
///
/// # Safety
/// `config_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_experiment_prepare(
    config_json: *const c_char,
    out: *mut *mut BrExperiment,
) -> BrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg: RunConfig = serde_json::from_str(str_arg(config_json, "config_json")?)
            .map_err(|e| Failure(BrStatus::Config, e.to_string()))?;
        cfg.validate()?;
        let pretraining = match (&cfg.stage, &cfg.checkpoint_dir) {
            (bridgerec::config::RunStage::Meta, Some(dir)) => bridgerec::pipeline::Pretraining::Load(dir),
            _ => bridgerec::pipeline::Pretraining::Train,
        };
        let exp = Experiment::prepare_with(&cfg.task, cfg.base_model, cfg.beta, cfg.seed, &cfg.hyper, pretraining)?;
        *out = Box::into_raw(Box::new(BrExperiment(exp)));
        Ok(())
    })
}

/// # Safety
/// `exp` must come from [`br_experiment_prepare`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn br_experiment_free(exp: *mut BrExperiment) {
    if !exp.is_null() {
        drop(Box::from_raw(exp));
    }
}

/// Runs one method's cold and warm stages. Either out-pointer may be null.
/// When `out_meta` is non-null and the method trains a personalized bridge,
/// a new bridge handle is written there (null otherwise).
///
/// # Safety
/// `exp` must be a live handle; non-null out-pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_experiment_run(
    exp: *const BrExperiment,
    m: BrMethod,
    cold: *mut BrMetrics,
    warm: *mut BrMetrics,
    out_meta: *mut *mut BrMetaBridge,
) -> BrStatus {
    guard(|| {
        let exp = &handle(exp, "experiment")?.0;
        let start = exp.cold_start(method(m))?;
        let (warm_report, _) = exp.warm_start(&start)?;
        if let Some(p) = cold.as_mut() {
            *p = metrics(&start.report);
        }
        if let Some(p) = warm.as_mut() {
            *p = metrics(&warm_report);
        }
        if let Some(p) = out_meta.as_mut() {
            *p = match start.meta {
                Some(meta) => Box::into_raw(Box::new(BrMetaBridge(meta))),
                None => ptr::null_mut(),
            };
        }
        Ok(())
    })
}

/// The experiment's split plan as JSON.
///
/// # Safety
/// `exp` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_experiment_split_json(
    exp: *const BrExperiment,
    out_json: *mut *mut c_char,
) -> BrStatus {
    guard(|| {
        let out = out_ptr(out_json, "out_json")?;
        let json = handle(exp, "experiment")?.0.split.to_json()?;
        *out = into_c_string(json)?;
        Ok(())
    })
}

/// Copies the pre-trained target model into a new handle.
///
/// # Safety
/// `exp` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_experiment_target_model(
    exp: *const BrExperiment,
    out: *mut *mut BrModel,
) -> BrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let model = handle(exp, "experiment")?.0.target_model.clone();
        *out = Box::into_raw(Box::new(BrModel(model)));
        Ok(())
    })
}

/// Loads a model checkpoint manifest.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_model_load(path: *const c_char, out: *mut *mut BrModel) -> BrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ck = Checkpoint::load(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(BrModel(DomainModel::from_checkpoint(&ck)?)));
        Ok(())
    })
}

/// Writes a model checkpoint manifest and its `.bin` payload.
///
/// # Safety
/// `model` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn br_model_save(model: *const BrModel, path: *const c_char) -> BrStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        m.to_checkpoint().save(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn br_model_free(model: *mut BrModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Embedding dimension, user count and item count. Any out-pointer may be
/// null.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn br_model_shape(
    model: *const BrModel,
    dim: *mut usize,
    n_users: *mut usize,
    n_items: *mut usize,
) -> BrStatus {
    guard(|| {
        let m = &handle(model, "model")?.0;
        if let Some(p) = dim.as_mut() {
            *p = m.dim();
        }
        if let Some(p) = n_users.as_mut() {
            *p = m.users.count();
        }
        if let Some(p) = n_items.as_mut() {
            *p = m.items.count();
        }
        Ok(())
    })
}

/// Predicted rating of a user-item pair (unclipped).
///
/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_model_score(
    model: *const BrModel,
    user: usize,
    item: usize,
    out: *mut f64,
) -> BrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = handle(model, "model")?.0.score(user, item)?;
        Ok(())
    })
}

/// Score of an arbitrary user representation (`dim` values) against an
/// item.
///
/// # Safety
/// `user_rep` must point to `dim` readable doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_model_score_representation(
    model: *const BrModel,
    user_rep: *const f64,
    dim: usize,
    item: usize,
    out: *mut f64,
) -> BrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = &handle(model, "model")?.0;
        if user_rep.is_null() {
            return Err(null("user_rep"));
        }
        let rep = std::slice::from_raw_parts(user_rep, dim);
        *out = m.score_representation(rep, item)?;
        Ok(())
    })
}

/// Loads a meta bridge checkpoint manifest.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_meta_bridge_load(
    path: *const c_char,
    out: *mut *mut BrMetaBridge,
) -> BrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ck = Checkpoint::load(&PathBuf::from(str_arg(path, "path")?))?;
        *out = Box::into_raw(Box::new(BrMetaBridge(MetaBridge::from_checkpoint(&ck)?)));
        Ok(())
    })
}

/// Writes a meta bridge checkpoint manifest and its `.bin` payload.
///
/// # Safety
/// `bridge` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn br_meta_bridge_save(
    bridge: *const BrMetaBridge,
    path: *const c_char,
) -> BrStatus {
    guard(|| {
        let b = &handle(bridge, "bridge")?.0;
        b.to_checkpoint().save(&PathBuf::from(str_arg(path, "path")?))?;
        Ok(())
    })
}

/// # Safety
/// `bridge` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn br_meta_bridge_free(bridge: *mut BrMetaBridge) {
    if !bridge.is_null() {
        drop(Box::from_raw(bridge));
    }
}

/// Embedding dimension of the bridge.
///
/// # Safety
/// `bridge` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_meta_bridge_dim(bridge: *const BrMetaBridge, out: *mut usize) -> BrStatus {
    guard(|| {
        *out_ptr(out, "out")? = handle(bridge, "bridge")?.0.dim();
        Ok(())
    })
}

/// Maps a source representation into the target domain through the bridge
/// generated from the user's history.
///
/// `src_rep` and `out` hold `dim` doubles; `history` holds `n_items` item
/// embeddings of `dim` doubles each, oldest first, row-major.
///
/// # Safety
/// All buffers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn br_meta_bridge_transform(
    bridge: *const BrMetaBridge,
    src_rep: *const f64,
    history: *const f64,
    n_items: usize,
    dim: usize,
    out: *mut f64,
) -> BrStatus {
    guard(|| {
        let b = &handle(bridge, "bridge")?.0;
        if dim != b.dim() {
            return Err(Failure(
                BrStatus::Shape,
                format!("dim {dim} does not match bridge dimension {}", b.dim()),
            ));
        }
        if src_rep.is_null() || out.is_null() || (history.is_null() && n_items > 0) {
            return Err(null("buffer"));
        }
        let flat = if n_items == 0 {
            &[][..]
        } else {
            std::slice::from_raw_parts(history, n_items * dim)
        };
        let ctx = UserContext {
            src_rep: std::slice::from_raw_parts(src_rep, dim).to_vec(),
            history: flat.chunks(dim).map(<[f64]>::to_vec).collect(),
        };
        let v = b.transform(&ctx)?;
        std::slice::from_raw_parts_mut(out, dim).copy_from_slice(&v);
        Ok(())
    })
}

/// MAE and RMSE of `n` (rating, prediction) pairs.
///
/// # Safety
/// `ratings` and `predictions` must hold `n` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn br_compute_metrics(
    ratings: *const f64,
    predictions: *const f64,
    n: usize,
    out: *mut BrMetrics,
) -> BrStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        if n > 0 && (ratings.is_null() || predictions.is_null()) {
            return Err(null("buffer"));
        }
        let pairs: Vec<(f64, f64)> = (0..n).map(|i| (*ratings.add(i), *predictions.add(i))).collect();
        let (mae, rmse) = compute_metrics(&pairs)?;
        *out = BrMetrics {
            mae,
            rmse,
            n_eval: n,
            skipped_users: 0,
        };
        Ok(())
    })
}
