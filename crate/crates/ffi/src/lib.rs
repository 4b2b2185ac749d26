//! C interface to the `lspc` crate.
//!
//! Datasets and trained models cross the boundary as opaque handles that
//! must be released with the matching `*_free` function. Every fallible
//! call returns an [`LspcStatus`]; on failure a message for the calling
//! thread is available from [`lspc_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use lspc::dataset::{self, BehaviorSpec, OfflineDataset};
use lspc::env::AnyEnv;
use lspc::policy::PolicyKind;
use lspc::trainer::{load_model, LoadedModel, TrainConfig, Trainer};
use lspc::{rng, LspcError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LspcStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// Bad shape, configuration or identifier.
    InvalidInput = 2,
    /// File system or format error.
    Io = 3,
    /// A non-finite value appeared.
    Numeric = 4,
    /// A Rust panic was caught at the boundary.
    Internal = 5,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LspcPolicy {
    LspcS = 0,
    LspcO = 1,
    Cvae = 2,
}

impl From<LspcPolicy> for PolicyKind {
    fn from(p: LspcPolicy) -> Self {
        match p {
            LspcPolicy::LspcS => PolicyKind::LspcS,
            LspcPolicy::LspcO => PolicyKind::LspcO,
            LspcPolicy::Cvae => PolicyKind::Cvae,
        }
    }
}

/// Offline transition dataset.
pub struct LspcDataset(OfflineDataset);

/// Trained critics and policy networks loaded from a checkpoint directory.
pub struct LspcModel(LoadedModel);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let text = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn status_of(e: &LspcError) -> LspcStatus {
    match e {
        LspcError::Usage(_) | LspcError::Shape(_) | LspcError::Config(_) | LspcError::Infeasible(_) => {
            LspcStatus::InvalidInput
        }
        LspcError::Io(_) | LspcError::Parse(_) | LspcError::Json(_) => LspcStatus::Io,
        LspcError::Numeric { .. } => LspcStatus::Numeric,
    }
}

enum Failure {
    Null(&'static str),
    Lib(LspcError),
}

impl From<LspcError> for Failure {
    fn from(e: LspcError) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, records any error and converts it to a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LspcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            LspcStatus::Ok
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("{what} is null"));
            LspcStatus::NullArgument
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(_) => {
            set_error("internal panic");
            LspcStatus::Internal
        }
    }
}

unsafe fn text<'a>(p: *const c_char, what: &'static str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Lib(LspcError::Usage(format!("{what} is not valid UTF-8"))))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

/// Message for the last failed call on this thread, or null after a
/// successful call. Valid until the next `lspc_*` call on the same thread.
#[no_mangle]
pub extern "C" fn lspc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lspc_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Rolls out a scripted behavior on `env_id` until `n_transitions` are stored.
///
/// # Safety
/// `env_id` and `behavior` must be NUL-terminated strings; `out` must be
/// valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lspc_dataset_collect(
    env_id: *const c_char,
    behavior: *const c_char,
    n_transitions: usize,
    seed: u64,
    out: *mut *mut LspcDataset,
) -> LspcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let env = AnyEnv::from_id(text(env_id, "env_id")?)?;
        let spec: BehaviorSpec = text(behavior, "behavior")?.parse()?;
        let ds = dataset::collect(&env, &spec, n_transitions, seed)?;
        *out = Box::into_raw(Box::new(LspcDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lspc_dataset_load(path: *const c_char, out: *mut *mut LspcDataset) -> LspcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let ds = dataset::load(text(path, "path")?)?;
        *out = Box::into_raw(Box::new(LspcDataset(ds)));
        Ok(())
    })
}

/// # Safety
/// `ds` must be a live handle; `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lspc_dataset_save(ds: *const LspcDataset, path: *const c_char) -> LspcStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or(Failure::Null("ds"))?;
        dataset::save(&ds.0, text(path, "path")?)?;
        Ok(())
    })
}

/// Number of transitions, or 0 for a null handle.
///
/// # Safety
/// `ds` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lspc_dataset_len(ds: *const LspcDataset) -> usize {
    ds.as_ref().map_or(0, |d| d.0.n)
}

/// # Safety
/// `ds` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lspc_dataset_free(ds: *mut LspcDataset) {
    if !ds.is_null() {
        drop(Box::from_raw(ds));
    }
}

/// Trains on `ds` with a JSON config (same keys as the CLI config file)
/// and writes the checkpoint directory `out_dir`.
///
/// # Safety
/// `ds` must be a live handle; the strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn lspc_train(ds: *const LspcDataset, config_json: *const c_char, out_dir: *const c_char) -> LspcStatus {
    guard(|| {
        let ds = ds.as_ref().ok_or(Failure::Null("ds"))?;
        let cfg = TrainConfig::from_json(text(config_json, "config_json")?)?;
        let dir = PathBuf::from(text(out_dir, "out_dir")?);
        let mut t = Trainer::new(cfg, &ds.0)?;
        t.run(&ds.0)?;
        t.save(&dir)?;
        Ok(())
    })
}

/// # Safety
/// `dir` must be a NUL-terminated string; `out` valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lspc_model_load(dir: *const c_char, out: *mut *mut LspcModel) -> LspcStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let m = load_model(text(dir, "dir")?.as_ref())?;
        *out = Box::into_raw(Box::new(LspcModel(m)));
        Ok(())
    })
}

/// # Safety
/// `model` must be a live handle; the output pointers valid for writes.
#[no_mangle]
pub unsafe extern "C" fn lspc_model_dims(model: *const LspcModel, state_dim: *mut usize, action_dim: *mut usize) -> LspcStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Failure::Null("model"))?;
        *out_ptr(state_dim, "state_dim")? = m.0.meta.state_dim;
        *out_ptr(action_dim, "action_dim")? = m.0.meta.action_dim;
        Ok(())
    })
}

/// Samples one action. Stochastic policies draw from the stream keyed by
/// `(seed, index)`, so equal arguments give equal actions.
///
/// # Safety
/// `model` must be a live handle; `state` must point to `state_len`
/// readable doubles and `action` to `action_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn lspc_model_act(
    model: *const LspcModel,
    policy: LspcPolicy,
    state: *const f64,
    state_len: usize,
    seed: u64,
    index: u64,
    action: *mut f64,
    action_len: usize,
) -> LspcStatus {
    guard(|| {
        let m = model.as_ref().ok_or(Failure::Null("model"))?;
        if state.is_null() {
            return Err(Failure::Null("state"));
        }
        if action.is_null() {
            return Err(Failure::Null("action"));
        }
        if action_len != m.0.meta.action_dim {
            return Err(LspcError::Shape(format!("action buffer holds {action_len}, need {}", m.0.meta.action_dim)).into());
        }
        let s = std::slice::from_raw_parts(state, state_len);
        let mut r = rng::stream(seed, "ffi-act", index);
        let a = m.0.policy.act(policy.into(), s, &mut r)?;
        std::slice::from_raw_parts_mut(action, action_len).copy_from_slice(&a);
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lspc_model_free(model: *mut LspcModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Asymmetric squared loss `|xi - 1(u < 0)| * u^2`.
#[no_mangle]
pub extern "C" fn lspc_expectile_loss(u: f64, xi: f64) -> f64 {
    lspc::nn::expectile_loss(u, xi)
}

/// Derivative of [`lspc_expectile_loss`] with respect to `u`.
#[no_mangle]
pub extern "C" fn lspc_expectile_grad(u: f64, xi: f64) -> f64 {
    lspc::nn::expectile_grad(u, xi)
}
