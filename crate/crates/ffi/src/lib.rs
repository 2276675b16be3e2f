//! C interface: an opaque model handle built from a JSON run config, status
//! codes on every call and a per-thread message for the last failure.
//!
//! Output arrays are caller-allocated; a call with a too-short buffer
//! returns `WAVEBIF_STATUS_BUFFER_TOO_SMALL` and stores the needed length.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use wavebif::cli::RunConfig;
use wavebif::laminar::{compute_gamma_rel, lambda0, laminar_flow, RelativeCirculation};
use wavebif::model::{GridD, PhysicalParams};
use wavebif::spectral1d::{find_lambda_star, nu};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavebifStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidConfig = 2,
    InvalidArgument = 3,
    Numeric = 4,
    BufferTooSmall = 5,
    Panic = 6,
}

/// Parameters, grid and relative circulation of one configuration.
pub struct WavebifModel {
    config: RunConfig,
    params: PhysicalParams,
    grid: GridD,
    gamma_rel: RelativeCirculation,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn fail(status: WavebifStatus, msg: impl Into<String>) -> WavebifStatus {
    set_error(msg.into());
    status
}

fn guard(f: impl FnOnce() -> WavebifStatus) -> WavebifStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(WavebifStatus::Panic, "internal panic"),
    }
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn wavebif_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a model from a JSON run config (the `--config` document of the CLI).
///
/// # Safety
/// `config_json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn wavebif_model_new(config_json: *const c_char, out: *mut *mut WavebifModel) -> WavebifStatus {
    guard(|| {
        if config_json.is_null() || out.is_null() {
            return fail(WavebifStatus::NullPointer, "null argument");
        }
        *out = ptr::null_mut();
        let text = match CStr::from_ptr(config_json).to_str() {
            Ok(t) => t,
            Err(e) => return fail(WavebifStatus::InvalidConfig, format!("config is not UTF-8: {e}")),
        };
        let config: RunConfig = match serde_json::from_str(text) {
            Ok(c) => c,
            Err(e) => return fail(WavebifStatus::InvalidConfig, e.to_string()),
        };
        let bad = config.validate();
        if !bad.is_empty() {
            return fail(WavebifStatus::InvalidConfig, bad.join("; "));
        }
        let grid = match config.grid_d() {
            Ok(g) => g,
            Err(e) => return fail(WavebifStatus::InvalidConfig, e),
        };
        let gamma_rel = match compute_gamma_rel(&config.params, &grid) {
            Ok(r) => r,
            Err(e) => return fail(WavebifStatus::Numeric, e.to_string()),
        };
        let params = config.params.clone();
        *out = Box::into_raw(Box::new(WavebifModel { config, params, grid, gamma_rel }));
        WavebifStatus::Ok
    })
}

/// Releases a model; null is ignored.
///
/// # Safety
/// `model` must come from `wavebif_model_new` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn wavebif_model_free(model: *mut WavebifModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Number of p-nodes (bed to lid, interface once).
///
/// # Safety
/// `model` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn wavebif_node_count(model: *const WavebifModel) -> usize {
    model.as_ref().map_or(0, |m| m.grid.np_total())
}

/// Overrides the surface tension of the model.
///
/// # Safety
/// `model` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn wavebif_set_sigma(model: *mut WavebifModel, sigma: f64) -> WavebifStatus {
    guard(|| {
        let Some(m) = model.as_mut() else {
            return fail(WavebifStatus::NullPointer, "null model");
        };
        if !(sigma.is_finite() && sigma >= 0.0) {
            return fail(WavebifStatus::InvalidArgument, format!("sigma must be finite and >= 0, got {sigma}"));
        }
        m.params.sigma = sigma;
        m.config.params.sigma = sigma;
        WavebifStatus::Ok
    })
}

/// `lambda0`, the maximizer of the Bernoulli constant.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wavebif_lambda0(model: *const WavebifModel, out: *mut f64) -> WavebifStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out.is_null()) else {
            return fail(WavebifStatus::NullPointer, "null argument");
        };
        *out = lambda0(&m.params).0;
        WavebifStatus::Ok
    })
}

unsafe fn check_buffer(buf: *mut f64, len: usize, needed: usize, written: *mut usize) -> Result<(), WavebifStatus> {
    if !written.is_null() {
        *written = needed;
    }
    if buf.is_null() {
        return Err(fail(WavebifStatus::NullPointer, "null output buffer"));
    }
    if len < needed {
        return Err(fail(WavebifStatus::BufferTooSmall, format!("need {needed} values, got {len}")));
    }
    Ok(())
}

/// Laminar heights `H(p; lambda)` on the p-nodes and the Bernoulli constant.
///
/// # Safety
/// `h` must hold `len` doubles; `q` and `written` may be null.
#[no_mangle]
pub unsafe extern "C" fn wavebif_laminar(
    model: *const WavebifModel,
    lambda: f64,
    h: *mut f64,
    len: usize,
    q: *mut f64,
    written: *mut usize,
) -> WavebifStatus {
    guard(|| {
        let Some(m) = model.as_ref() else {
            return fail(WavebifStatus::NullPointer, "null model");
        };
        if let Err(s) = check_buffer(h, len, m.grid.np_total(), written) {
            return s;
        }
        let flow = match laminar_flow(&m.params, &m.gamma_rel, lambda, &m.grid) {
            Ok(f) => f,
            Err(e) => return fail(WavebifStatus::Numeric, e.to_string()),
        };
        std::slice::from_raw_parts_mut(h, flow.h.len()).copy_from_slice(&flow.h);
        if !q.is_null() {
            *q = flow.q;
        }
        WavebifStatus::Ok
    })
}

/// Negative-type eigenvalue `nu(lambda)`.
///
/// # Safety
/// `model` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn wavebif_nu(model: *const WavebifModel, lambda: f64, out: *mut f64) -> WavebifStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), out.is_null()) else {
            return fail(WavebifStatus::NullPointer, "null argument");
        };
        match nu(&m.params, &m.gamma_rel, lambda, &m.grid) {
            Ok(v) => {
                *out = v;
                WavebifStatus::Ok
            }
            Err(e) => fail(WavebifStatus::Numeric, e.to_string()),
        }
    })
}

/// `lambda*` with `nu(lambda*) = -1` and its mode on the p-nodes. The search
/// interval comes from the config.
///
/// # Safety
/// `lambda_star` must be valid; `mode` holds `len` doubles or is null with
/// `len == 0` when the mode is not wanted.
#[no_mangle]
pub unsafe extern "C" fn wavebif_find_lambda_star(
    model: *const WavebifModel,
    lambda_star: *mut f64,
    mode: *mut f64,
    len: usize,
    written: *mut usize,
) -> WavebifStatus {
    guard(|| {
        let (Some(m), false) = (model.as_ref(), lambda_star.is_null()) else {
            return fail(WavebifStatus::NullPointer, "null argument");
        };
        let want_mode = !(mode.is_null() && len == 0);
        if want_mode {
            if let Err(s) = check_buffer(mode, len, m.grid.np_total(), written) {
                return s;
            }
        }
        match find_lambda_star(&m.params, &m.gamma_rel, &m.grid, m.config.lambda_star.interval) {
            Ok(star) => {
                *lambda_star = star.lambda;
                if want_mode {
                    std::slice::from_raw_parts_mut(mode, star.mode.len()).copy_from_slice(&star.mode);
                }
                WavebifStatus::Ok
            }
            Err(e) => fail(WavebifStatus::Numeric, e.to_string()),
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn panics_become_status_codes() {
        let s = guard(|| panic!("boom"));
        assert_eq!(s, WavebifStatus::Panic);
        let msg = unsafe { CStr::from_ptr(wavebif_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "internal panic");
    }

    #[test]
    fn interior_nul_is_sanitized() {
        set_error("a\0b".into());
        let msg = unsafe { CStr::from_ptr(wavebif_last_error()) };
        assert_eq!(msg.to_str().unwrap(), "a b");
    }

    #[test]
    fn buffer_check_reports_needed_length() {
        let mut buf = [0.0; 2];
        let mut needed = 0;
        let r = unsafe { check_buffer(buf.as_mut_ptr(), 2, 5, &mut needed) };
        assert_eq!(r, Err(WavebifStatus::BufferTooSmall));
        assert_eq!(needed, 5);
        assert!(unsafe { check_buffer(buf.as_mut_ptr(), 2, 2, ptr::null_mut()) }.is_ok());
    }
}
