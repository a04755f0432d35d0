//! C interface to avgshape. Objects are opaque handles created by the
//! `*_new` / `*_from_*` functions and released with the matching `*_free`.
//! Every fallible call returns an [`AvgshapeStatus`]; on failure a message
//! is available from [`avgshape_last_error`] on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use avgshape::env::{Advice, EnvError, EnvName, Task};
use avgshape::harness::{compare_methods, run_experiment, CurveTable, ExperimentConfig, HarnessError, Method};
use avgshape::mdp::Mdp;
use avgshape::solver::solve_average_reward;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AvgshapeStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Parse = 4,
    Solver = 5,
    UnknownEnv = 6,
    InsufficientSeeds = 7,
    Io = 8,
    BufferTooSmall = 9,
    Panic = 10,
}

pub struct AvgshapeMdp(Mdp);

pub struct AvgshapeAdvice(Advice);

pub struct AvgshapeCurves(CurveTable);

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct AvgshapeComparison {
    pub diff: f64,
    pub lower: f64,
    pub upper: f64,
    pub df: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

type Failure = (AvgshapeStatus, String);

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior nul");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> AvgshapeStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AvgshapeStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal panic: {msg}"));
            AvgshapeStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err((AvgshapeStatus::NullPointer, "string argument is null".into()));
    }
    CStr::from_ptr(p).to_str().map_err(|e| (AvgshapeStatus::InvalidUtf8, e.to_string()))
}

unsafe fn obj<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| (AvgshapeStatus::NullPointer, "handle is null".into()))
}

unsafe fn out<'a, T>(p: *mut T) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| (AvgshapeStatus::NullPointer, "output pointer is null".into()))
}

fn harness_failure(e: HarnessError) -> Failure {
    let status = match &e {
        HarnessError::Env(EnvError::UnknownEnv(_)) => AvgshapeStatus::UnknownEnv,
        HarnessError::InsufficientSeeds { .. } => AvgshapeStatus::InsufficientSeeds,
        HarnessError::Io(_) => AvgshapeStatus::Io,
        HarnessError::Config(_) | HarnessError::Parse(_) => AvgshapeStatus::Parse,
        _ => AvgshapeStatus::InvalidArgument,
    };
    (status, e.to_string())
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn avgshape_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static nul-terminated string.
#[no_mangle]
pub extern "C" fn avgshape_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Parses an MDP from its JSON file format.
///
/// # Safety
/// `json` must be a nul-terminated string and `out_mdp` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avgshape_mdp_from_json(json: *const c_char, out_mdp: *mut *mut AvgshapeMdp) -> AvgshapeStatus {
    guard(|| {
        let text = str_arg(json)?;
        let slot = out(out_mdp)?;
        let mdp = Mdp::from_json_str(text).map_err(|e| (AvgshapeStatus::Parse, e.to_string()))?;
        *slot = Box::into_raw(Box::new(AvgshapeMdp(mdp)));
        Ok(())
    })
}

/// # Safety
/// `mdp` must be null or a handle from [`avgshape_mdp_from_json`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn avgshape_mdp_free(mdp: *mut AvgshapeMdp) {
    if !mdp.is_null() {
        drop(Box::from_raw(mdp));
    }
}

/// # Safety
/// `mdp` must be a valid handle; `num_states` and `num_actions` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn avgshape_mdp_shape(
    mdp: *const AvgshapeMdp,
    num_states: *mut usize,
    num_actions: *mut usize,
) -> AvgshapeStatus {
    guard(|| {
        let m = &obj(mdp)?.0;
        *out(num_states)? = m.num_states();
        *out(num_actions)? = m.num_actions();
        Ok(())
    })
}

/// Solves the MDP exactly. Writes the optimal gain and, when `policy` is not
/// null, one action index per state into `policy[0..policy_len]`.
///
/// # Safety
/// `mdp` must be a valid handle, `gain` a valid pointer and `policy` either
/// null or writable for `policy_len` elements.
#[no_mangle]
pub unsafe extern "C" fn avgshape_solve(
    mdp: *const AvgshapeMdp,
    gain: *mut f64,
    policy: *mut usize,
    policy_len: usize,
) -> AvgshapeStatus {
    guard(|| {
        let m = &obj(mdp)?.0;
        let g = out(gain)?;
        if !policy.is_null() && policy_len < m.num_states() {
            return Err((AvgshapeStatus::BufferTooSmall, format!("policy buffer needs {} entries", m.num_states())));
        }
        let sol = solve_average_reward(m).map_err(|e| (AvgshapeStatus::Solver, e.to_string()))?;
        *g = sol.gain();
        if !policy.is_null() {
            std::slice::from_raw_parts_mut(policy, m.num_states()).copy_from_slice(sol.policy.actions());
        }
        Ok(())
    })
}

/// Synthesises the reference advice of a built-in task such as `"gridworld"`.
///
/// # Safety
/// `env_name` must be a nul-terminated string and `out_advice` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avgshape_advice_new(
    env_name: *const c_char,
    out_advice: *mut *mut AvgshapeAdvice,
) -> AvgshapeStatus {
    guard(|| {
        let name: EnvName = str_arg(env_name)?.parse().map_err(|e: EnvError| (AvgshapeStatus::UnknownEnv, e.to_string()))?;
        let slot = out(out_advice)?;
        let advice = Task::new(name).advice().map_err(|e| (AvgshapeStatus::InvalidArgument, e.to_string()))?;
        *slot = Box::into_raw(Box::new(AvgshapeAdvice(advice)));
        Ok(())
    })
}

/// # Safety
/// `advice` must be null or a live handle from [`avgshape_advice_new`].
#[no_mangle]
pub unsafe extern "C" fn avgshape_advice_free(advice: *mut AvgshapeAdvice) {
    if !advice.is_null() {
        drop(Box::from_raw(advice));
    }
}

/// # Safety
/// `advice` must be a valid handle; the outputs valid pointers.
#[no_mangle]
pub unsafe extern "C" fn avgshape_advice_shape(
    advice: *const AvgshapeAdvice,
    num_states: *mut usize,
    num_actions: *mut usize,
) -> AvgshapeStatus {
    guard(|| {
        let a = &obj(advice)?.0;
        *out(num_states)? = a.potential.num_states();
        *out(num_actions)? = a.potential.num_actions();
        Ok(())
    })
}

fn check_pair(a: &Advice, s: usize, act: usize) -> Result<(), Failure> {
    if s >= a.potential.num_states() || act >= a.potential.num_actions() {
        return Err((AvgshapeStatus::InvalidArgument, format!("pair ({s}, {act}) out of range")));
    }
    Ok(())
}

/// Potential value `Φ(s, a)`.
///
/// # Safety
/// `advice` must be a valid handle and `value` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avgshape_advice_potential(
    advice: *const AvgshapeAdvice,
    state: usize,
    action: usize,
    value: *mut f64,
) -> AvgshapeStatus {
    guard(|| {
        let a = &obj(advice)?.0;
        check_pair(a, state, action)?;
        *out(value)? = a.potential.get(state, action);
        Ok(())
    })
}

/// Whether the shield allows `action` in `state`.
///
/// # Safety
/// `advice` must be a valid handle and `allowed` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avgshape_advice_allows(
    advice: *const AvgshapeAdvice,
    state: usize,
    action: usize,
    allowed: *mut bool,
) -> AvgshapeStatus {
    guard(|| {
        let a = &obj(advice)?.0;
        check_pair(a, state, action)?;
        *out(allowed)? = a.shield.allows(state, action);
        Ok(())
    })
}

/// Runs an experiment described by a TOML config string.
///
/// # Safety
/// `config_toml` must be a nul-terminated string and `out_curves` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avgshape_experiment_run(
    config_toml: *const c_char,
    out_curves: *mut *mut AvgshapeCurves,
) -> AvgshapeStatus {
    guard(|| {
        let text = str_arg(config_toml)?;
        let slot = out(out_curves)?;
        let config = ExperimentConfig::from_toml_str(text).map_err(harness_failure)?;
        let table = run_experiment(&config).map_err(harness_failure)?;
        *slot = Box::into_raw(Box::new(AvgshapeCurves(table)));
        Ok(())
    })
}

/// # Safety
/// `curves` must be null or a live handle from [`avgshape_experiment_run`].
#[no_mangle]
pub unsafe extern "C" fn avgshape_curves_free(curves: *mut AvgshapeCurves) {
    if !curves.is_null() {
        drop(Box::from_raw(curves));
    }
}

/// Number of raw rows.
///
/// # Safety
/// `curves` must be a valid handle and `len` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avgshape_curves_len(curves: *const AvgshapeCurves, len: *mut usize) -> AvgshapeStatus {
    guard(|| {
        *out(len)? = obj(curves)?.0.rows.len();
        Ok(())
    })
}

/// Writes the raw rows as CSV to `path`.
///
/// # Safety
/// `curves` must be a valid handle and `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn avgshape_curves_write_raw(curves: *const AvgshapeCurves, path: *const c_char) -> AvgshapeStatus {
    guard(|| {
        let t = &obj(curves)?.0;
        t.write_raw(Path::new(str_arg(path)?)).map_err(harness_failure)
    })
}

/// Welch comparison `a − b` of two methods at `step`.
///
/// # Safety
/// `curves` must be a valid handle, `method_a`/`method_b` nul-terminated
/// strings and `result` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn avgshape_curves_compare(
    curves: *const AvgshapeCurves,
    step: u64,
    method_a: *const c_char,
    method_b: *const c_char,
    result: *mut AvgshapeComparison,
) -> AvgshapeStatus {
    guard(|| {
        let t = &obj(curves)?.0;
        let a: Method = str_arg(method_a)?.parse().map_err(harness_failure)?;
        let b: Method = str_arg(method_b)?.parse().map_err(harness_failure)?;
        let r = out(result)?;
        let c = compare_methods(t, step, a, b).map_err(harness_failure)?;
        *r = AvgshapeComparison { diff: c.diff, lower: c.lower, upper: c.upper, df: c.df };
        Ok(())
    })
}
