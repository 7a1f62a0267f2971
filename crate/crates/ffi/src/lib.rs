//! C ABI over `isac-core`.
//!
//! Every fallible call returns an [`IsacStatus`]; on failure the message is
//! available from [`isac_last_error`] on the same thread. Handles are
//! opaque and owned by the caller once returned; release them with the
//! matching `_free` function. Panics never cross the boundary.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use isac_core::baselines::{naive_dl_beamformer, NaiveNet};
use isac_core::channel::{steering, C64};
use isac_core::harness::{monte_carlo_eval, Method};
use isac_core::model_file::{self, Container, PayloadKind};
use isac_core::nn::hcl::{project_power, HclNet};
use isac_core::nn::{HistoryWindow, Tensor};
use isac_core::sensing::{crlb_d, crlb_theta};
use isac_core::{Error, SimConfig};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    Io = 3,
    Format = 4,
    Shape = 5,
    Numeric = 6,
    InvalidUtf8 = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IsacModelKind {
    Hcl = 0,
    Naive = 1,
}

/// Opaque simulation configuration.
pub struct IsacConfig {
    inner: SimConfig,
}

/// Opaque trained beamformer (HCL-Net or naive DL).
pub struct IsacModel {
    inner: Model,
}

enum Model {
    Hcl(HclNet),
    Naive(NaiveNet),
}

impl Model {
    fn dims(&self) -> (usize, usize) {
        match self {
            Model::Hcl(n) => (n.shape().k, n.shape().m),
            Model::Naive(n) => (n.k, n.m),
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).expect("NUL bytes removed"));
}

fn status_of(err: &Error) -> IsacStatus {
    match err {
        Error::InvalidConfig(_) | Error::ConfigParse { .. } | Error::UnknownKey(_) => IsacStatus::InvalidConfig,
        Error::Io { .. } => IsacStatus::Io,
        Error::Format(_) | Error::Json(_) => IsacStatus::Format,
        Error::Shape(_) => IsacStatus::Shape,
        _ => IsacStatus::Numeric,
    }
}

struct Fail(IsacStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> IsacStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            IsacStatus::Ok
        }
        Ok(Err(Fail(code, msg))) => {
            set_error(msg);
            code
        }
        Err(_) => {
            set_error("internal panic");
            IsacStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref()
        .ok_or_else(|| Fail(IsacStatus::NullPointer, format!("{what} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut()
        .ok_or_else(|| Fail(IsacStatus::NullPointer, format!("{what} is null")))
}

unsafe fn c_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(Fail(IsacStatus::NullPointer, format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Fail(IsacStatus::InvalidUtf8, format!("{what} is not UTF-8")))
}

unsafe fn slice<'a>(p: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Fail(IsacStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn isac_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or an empty string.
/// Valid until the next library call on the same thread.
#[no_mangle]
pub extern "C" fn isac_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// New configuration with default values. Never null.
#[no_mangle]
pub extern "C" fn isac_config_new() -> *mut IsacConfig {
    Box::into_raw(Box::new(IsacConfig {
        inner: SimConfig::default(),
    }))
}

/// Loads a `key = value` configuration file into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn isac_config_load(path: *const c_char, out: *mut *mut IsacConfig) -> IsacStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let cfg = SimConfig::load(&PathBuf::from(c_str(path, "path")?))?;
        *out = Box::into_raw(Box::new(IsacConfig { inner: cfg }));
        Ok(())
    })
}

/// Sets one key. The configuration is revalidated; on failure it is left
/// unchanged.
///
/// # Safety
/// `cfg` must come from this library; `key` and `value` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn isac_config_set(cfg: *mut IsacConfig, key: *const c_char, value: *const c_char) -> IsacStatus {
    guard(|| {
        let cfg = out_ptr(cfg, "cfg")?;
        let mut next = cfg.inner.clone();
        next.set(c_str(key, "key")?, c_str(value, "value")?)?;
        next.validate()?;
        cfg.inner = next;
        Ok(())
    })
}

/// # Safety
/// `cfg` must come from this library or be null; it must not be used after.
#[no_mangle]
pub unsafe extern "C" fn isac_config_free(cfg: *mut IsacConfig) {
    if !cfg.is_null() {
        drop(Box::from_raw(cfg));
    }
}

/// Closed-form CRLBs of angle (rad²) and distance (m²) for the aligned beam
/// `√power · a(theta)`.
///
/// # Safety
/// `cfg` must be valid; the output pointers writable.
#[no_mangle]
pub unsafe extern "C" fn isac_crlb(
    cfg: *const IsacConfig,
    theta: f64,
    dist: f64,
    power: f64,
    out_crlb_theta: *mut f64,
    out_crlb_d: *mut f64,
) -> IsacStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.inner;
        let (ot, od) = (out_ptr(out_crlb_theta, "out_crlb_theta")?, out_ptr(out_crlb_d, "out_crlb_d")?);
        if power.is_nan() || power < 0.0 {
            return Err(Fail(IsacStatus::InvalidConfig, "power must be non-negative".into()));
        }
        let w: Vec<C64> = steering(theta, cfg.n_tx).into_iter().map(|z| z * power.sqrt()).collect();
        *ot = crlb_theta(theta, dist, &w, cfg)?;
        *od = crlb_d(theta, dist, &w, cfg)?;
        Ok(())
    })
}

/// Loads a model file written by `isac train`.
///
/// # Safety
/// `path` must be NUL-terminated; `out` writable.
#[no_mangle]
pub unsafe extern "C" fn isac_model_load(path: *const c_char, out: *mut *mut IsacModel) -> IsacStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = ptr::null_mut();
        let c = Container::read(&PathBuf::from(c_str(path, "path")?))?;
        let inner = match c.kind {
            PayloadKind::Hcl => Model::Hcl(model_file::decode_hcl(&c)?),
            PayloadKind::Naive => Model::Naive(model_file::decode_naive(&c)?),
            PayloadKind::Dataset => return Err(Fail(IsacStatus::Format, "file holds a dataset, not a model".into())),
        };
        *out = Box::into_raw(Box::new(IsacModel { inner }));
        Ok(())
    })
}

/// # Safety
/// `model` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn isac_model_kind(model: *const IsacModel, out: *mut IsacModelKind) -> IsacStatus {
    guard(|| {
        *out_ptr(out, "out")? = match deref(model, "model")?.inner {
            Model::Hcl(_) => IsacModelKind::Hcl,
            Model::Naive(_) => IsacModelKind::Naive,
        };
        Ok(())
    })
}

/// Number of doubles a prediction writes: `K · M · 2`.
///
/// # Safety
/// `model` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn isac_model_output_len(model: *const IsacModel, out: *mut usize) -> IsacStatus {
    guard(|| {
        let (k, m) = deref(model, "model")?.inner.dims();
        *out_ptr(out, "out")? = k * m * 2;
        Ok(())
    })
}

/// Predicts the next-slot beamforming matrix.
///
/// `history` holds `tau · K · M · 2` doubles, row-major over
/// `[slot][vehicle][antenna][re, im]`, oldest slot first. `est_thetas`
/// and `est_dists` hold `tau · K` estimates each, same slot order; the
/// HCL-Net ignores them and they may be null with `est_len = 0`. `out`
/// receives `K · M · 2` doubles as `[vehicle][antenna][re, im]`. With
/// `project` nonzero the beams are scaled onto the power budget of `cfg`.
///
/// # Safety
/// All pointers must be valid for the given lengths.
#[no_mangle]
pub unsafe extern "C" fn isac_model_predict(
    model: *const IsacModel,
    cfg: *const IsacConfig,
    history: *const f64,
    history_len: usize,
    est_thetas: *const f64,
    est_dists: *const f64,
    est_len: usize,
    project: i32,
    out: *mut f64,
    out_len: usize,
) -> IsacStatus {
    guard(|| {
        let model = &deref(model, "model")?.inner;
        let cfg = &deref(cfg, "cfg")?.inner;
        let (k, m) = model.dims();
        let per_slot = k * m * 2;
        if history_len == 0 || !history_len.is_multiple_of(per_slot) {
            return Err(Fail(
                IsacStatus::Shape,
                format!("history length {history_len} is not a positive multiple of K·M·2 = {per_slot}"),
            ));
        }
        let tau = history_len / per_slot;
        if out_len != per_slot {
            return Err(Fail(IsacStatus::Shape, format!("output length must be {per_slot}")));
        }
        let hist = slice(history, history_len, "history")?;
        let tensor = Tensor::new(vec![tau, k, m, 2], hist.to_vec())?;
        let split = |v: &[f64]| -> Vec<Vec<f64>> { v.chunks(k).map(<[f64]>::to_vec).collect() };
        let (thetas, dists) = if est_len == 0 {
            (vec![vec![0.0; k]; tau], vec![vec![0.0; k]; tau])
        } else {
            if est_len != tau * k {
                return Err(Fail(IsacStatus::Shape, format!("estimate length must be tau·K = {}", tau * k)));
            }
            (split(slice(est_thetas, est_len, "est_thetas")?), split(slice(est_dists, est_len, "est_dists")?))
        };
        let window = HistoryWindow {
            slots: HistoryWindow::channels_from_tensor(&tensor)?,
            est_thetas: thetas,
            est_dists: dists,
        };
        let mut w = match model {
            Model::Hcl(n) => n.predict(&window, cfg.power_budget, false)?,
            Model::Naive(n) => {
                if est_len == 0 {
                    return Err(Fail(IsacStatus::Shape, "the naive network needs angle and distance estimates".into()));
                }
                naive_dl_beamformer(&window, n)?
            }
        };
        if project != 0 {
            project_power(&mut w, cfg.power_budget);
        }
        let out = std::slice::from_raw_parts_mut(out_ptr(out, "out")?, out_len);
        for (kk, col) in w.columns().enumerate() {
            for (mm, z) in col.iter().enumerate() {
                out[(kk * m + mm) * 2] = z.re;
                out[(kk * m + mm) * 2 + 1] = z.im;
            }
        }
        Ok(())
    })
}

/// # Safety
/// `model` must come from this library or be null; it must not be used after.
#[no_mangle]
pub unsafe extern "C" fn isac_model_free(model: *mut IsacModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Monte-Carlo mean sum-rates (bits/s/Hz) over `realizations` episodes.
/// `model` may be null, in which case `out_model_rate` is left untouched
/// and may be null too.
///
/// # Safety
/// `cfg` must be valid; non-null pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn isac_eval_rates(
    cfg: *const IsacConfig,
    model: *const IsacModel,
    realizations: usize,
    seed: u64,
    out_genie_rate: *mut f64,
    out_model_rate: *mut f64,
    out_random_rate: *mut f64,
) -> IsacStatus {
    guard(|| {
        let cfg = &deref(cfg, "cfg")?.inner;
        let (og, orand) = (out_ptr(out_genie_rate, "out_genie_rate")?, out_ptr(out_random_rate, "out_random_rate")?);
        let mut methods = vec![Method::Genie, Method::Random];
        if let Some(mdl) = model.as_ref() {
            let (k, m) = mdl.inner.dims();
            if (k, m) != (cfg.n_vehicles, cfg.n_tx) {
                return Err(Fail(IsacStatus::Shape, "model shape does not match the configuration".into()));
            }
            methods.push(match &mdl.inner {
                Model::Hcl(net) => Method::Hcl { net, project: false },
                Model::Naive(net) => Method::NaiveDl { net, project: false },
            });
        }
        let rep = monte_carlo_eval(cfg, &methods, realizations, seed)?;
        *og = rep.methods[0].rate_mean;
        *orand = rep.methods[1].rate_mean;
        if methods.len() == 3 {
            *out_ptr(out_model_rate, "out_model_rate")? = rep.methods[2].rate_mean;
        }
        Ok(())
    })
}
