//! C ABI for the homogenisation engine: opaque handles, integer status
//! codes, and a thread-local error message. The generated header lives in
//! `include/fdhom.h`.
//!
//! Ownership rules: every handle returned by `fdhom_config_parse` must be
//! released with `fdhom_config_free`; the string returned by
//! `fdhom_last_error` is borrowed and valid until the next failing call on
//! the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use fdhom::config::{ExperimentConfig, ExperimentKind};
use fdhom::experiments;
use fdhom::homogenize::{surface_limit, volume_limit, CellFormulaCfg};
use fdhom::integrands::{derivative_at_zero, recession, SampleSpec};

/// Status codes returned by every fallible entry point.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum FdhomStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    ConfigError = 3,
    RunError = 4,
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let sanitized = msg.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

/// Message describing the most recent failure on this thread; empty when the
/// last call succeeded. Borrowed pointer, do not free.
#[no_mangle]
pub extern "C" fn fdhom_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Library version as a static NUL-terminated string, e.g. "0.1.0".
#[no_mangle]
pub extern "C" fn fdhom_version() -> *const c_char {
    static VERSION: &str = concat!(env!("CARGO_PKG_VERSION"), "\0");
    VERSION.as_ptr() as *const c_char
}

/// Opaque parsed experiment configuration.
pub struct FdhomConfig {
    config: ExperimentConfig,
    raw: String,
}

unsafe fn cstr_arg<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, FdhomStatus> {
    if ptr.is_null() {
        set_error(&format!("{what} is null"));
        return Err(FdhomStatus::NullPointer);
    }
    CStr::from_ptr(ptr).to_str().map_err(|_| {
        set_error(&format!("{what} is not valid UTF-8"));
        FdhomStatus::InvalidUtf8
    })
}

fn guarded<F: FnOnce() -> FdhomStatus>(f: F) -> FdhomStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            FdhomStatus::Panic
        }
    }
}

/// Parse a TOML experiment configuration into an opaque handle.
///
/// # Safety
/// `toml_text` must be a valid NUL-terminated string; `out` must point to
/// writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn fdhom_config_parse(
    toml_text: *const c_char,
    out: *mut *mut FdhomConfig,
) -> FdhomStatus {
    guarded(|| {
        if out.is_null() {
            set_error("out is null");
            return FdhomStatus::NullPointer;
        }
        let text = match cstr_arg(toml_text, "toml_text") {
            Ok(t) => t,
            Err(s) => return s,
        };
        match ExperimentConfig::from_toml(text) {
            Ok(config) => {
                let boxed = Box::new(FdhomConfig {
                    config,
                    raw: text.to_string(),
                });
                *out = Box::into_raw(boxed);
                FdhomStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                FdhomStatus::ConfigError
            }
        }
    })
}

/// Release a configuration handle. Accepts null.
///
/// # Safety
/// `config` must originate from `fdhom_config_parse` and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn fdhom_config_free(config: *mut FdhomConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

fn kind_from_code(code: u32) -> Option<ExperimentKind> {
    match code {
        0 => Some(ExperimentKind::Check),
        1 => Some(ExperimentKind::CellSolve),
        2 => Some(ExperimentKind::Homogenize),
        3 => Some(ExperimentKind::Stochastic),
        4 => Some(ExperimentKind::Gamma),
        _ => None,
    }
}

/// Run an experiment, writing CSV/JSON artifacts under `out_dir`.
/// `kind`: 0 = check, 1 = cell_solve, 2 = homogenize, 3 = stochastic,
/// 4 = gamma.
///
/// # Safety
/// `config` must be a live handle from `fdhom_config_parse`; `out_dir` a
/// valid NUL-terminated path.
#[no_mangle]
pub unsafe extern "C" fn fdhom_run(
    config: *const FdhomConfig,
    kind: u32,
    out_dir: *const c_char,
) -> FdhomStatus {
    guarded(|| {
        if config.is_null() {
            set_error("config is null");
            return FdhomStatus::NullPointer;
        }
        let dir = match cstr_arg(out_dir, "out_dir") {
            Ok(t) => t,
            Err(s) => return s,
        };
        let Some(kind) = kind_from_code(kind) else {
            set_error("unknown experiment kind code");
            return FdhomStatus::ConfigError;
        };
        let handle = &*config;
        match experiments::run(kind, &handle.config, &handle.raw, Path::new(dir), None) {
            Ok(_) => FdhomStatus::Ok,
            Err(e @ fdhom::Error::Config { .. }) => {
                set_error(&e.to_string());
                FdhomStatus::ConfigError
            }
            Err(e) => {
                set_error(&e.to_string());
                FdhomStatus::RunError
            }
        }
    })
}

struct Materialized {
    f: fdhom::integrands::VolumeIntegrand,
    g: fdhom::integrands::SurfaceIntegrand,
    cfg: CellFormulaCfg,
    r_schedule: Vec<f64>,
}

fn materialize(handle: &FdhomConfig) -> Result<Materialized, String> {
    let config = &handle.config;
    if config.domain.dim != 1 {
        return Err("the scalar cell-limit entry points are 1D".into());
    }
    let f = config
        .volume
        .as_ref()
        .ok_or("config has no [volume] section")?
        .build((1, 1))
        .map_err(|e| e.to_string())?;
    let g = config
        .surface
        .as_ref()
        .ok_or("config has no [surface] section")?
        .build((1, 1))
        .map_err(|e| e.to_string())?;
    Ok(Materialized {
        f,
        g,
        cfg: config.cell_formula_cfg(config.experiment.seed),
        r_schedule: config.schedule.r.clone(),
    })
}

/// Effective volume density at scalar argument `xi` for the config's
/// integrand pair (1D): writes the extrapolated limit and its tail spread.
///
/// # Safety
/// `config` must be a live handle; `out_limit`/`out_spread` must be valid.
#[no_mangle]
pub unsafe extern "C" fn fdhom_volume_cell_limit(
    config: *const FdhomConfig,
    xi: f64,
    out_limit: *mut f64,
    out_spread: *mut f64,
) -> FdhomStatus {
    guarded(|| {
        if config.is_null() || out_limit.is_null() || out_spread.is_null() {
            set_error("null pointer argument");
            return FdhomStatus::NullPointer;
        }
        let handle = &*config;
        let mat = match materialize(handle) {
            Ok(m) => m,
            Err(e) => {
                set_error(&e);
                return FdhomStatus::ConfigError;
            }
        };
        let spec = SampleSpec::surface_default(1, 1);
        let g0 = match derivative_at_zero(
            &mat.g,
            &handle.config.schedule.derivative_t,
            &spec,
            f64::INFINITY,
        ) {
            Ok((g0, _)) => g0,
            Err(e) => {
                set_error(&e.to_string());
                return FdhomStatus::RunError;
            }
        };
        match volume_limit(
            &mat.f,
            &g0,
            &[xi],
            &[0.0],
            &[1.0],
            1,
            &mat.r_schedule,
            &mat.cfg,
        ) {
            Ok(ex) => {
                *out_limit = ex.limit;
                *out_spread = ex.spread;
                FdhomStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                FdhomStatus::RunError
            }
        }
    })
}

/// Effective surface density at scalar jump amplitude `zeta` (1D, normal +1).
///
/// # Safety
/// Same contract as `fdhom_volume_cell_limit`.
#[no_mangle]
pub unsafe extern "C" fn fdhom_surface_cell_limit(
    config: *const FdhomConfig,
    zeta: f64,
    out_limit: *mut f64,
    out_spread: *mut f64,
) -> FdhomStatus {
    guarded(|| {
        if config.is_null() || out_limit.is_null() || out_spread.is_null() {
            set_error("null pointer argument");
            return FdhomStatus::NullPointer;
        }
        let handle = &*config;
        let mat = match materialize(handle) {
            Ok(m) => m,
            Err(e) => {
                set_error(&e);
                return FdhomStatus::ConfigError;
            }
        };
        let spec = SampleSpec::volume_default(1, 1);
        let f_inf = match recession(
            &mat.f,
            &handle.config.schedule.recession_t,
            &spec,
            f64::INFINITY,
        ) {
            Ok((fi, _)) => fi,
            Err(e) => {
                set_error(&e.to_string());
                return FdhomStatus::RunError;
            }
        };
        match surface_limit(
            &f_inf,
            &mat.g,
            &[zeta],
            &[1.0],
            &[0.0],
            &mat.r_schedule,
            &mat.cfg,
        ) {
            Ok(ex) => {
                *out_limit = ex.limit;
                *out_spread = ex.spread;
                FdhomStatus::Ok
            }
            Err(e) => {
                set_error(&e.to_string());
                FdhomStatus::RunError
            }
        }
    })
}
