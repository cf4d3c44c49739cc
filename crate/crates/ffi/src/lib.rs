//! C ABI for `fldisc`.
//!
//! A scenario is an opaque handle created by [`fld_scenario_new`] and
//! released with [`fld_scenario_free`]. Every fallible call returns an
//! [`FldStatus`]; the message of the most recent failure on the calling
//! thread is available from [`fld_last_error`]. Arrays are passed as a
//! pointer plus an element count, which must match the scenario dimensions.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use fldisc::geometry::{make_builtin_map, MapKind};
use fldisc::integrator::{
    linearity_residual, run_with_reference, steps_for, DiscreteScheme, ReferenceKind,
};
use fldisc::linearizability::{grizzle_audit, DiscreteMapModel, Verdict};
use fldisc::presets::{preset_by_name, stabilizing_controller, ScenarioPreset};
use fldisc::sampling::DEFAULT_POINTS;
use fldisc::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FldStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Dimension = 3,
    /// The state left the chart of the linearizing coordinates.
    Domain = 4,
    Singular = 5,
    /// Newton or an inversion did not converge.
    Numeric = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FldVerdict {
    Linearizable = 0,
    LinearizableConsistent = 1,
    NotLinearizable = 2,
    Inconclusive = 3,
}

impl From<Verdict> for FldVerdict {
    fn from(v: Verdict) -> Self {
        match v {
            Verdict::Linearizable => FldVerdict::Linearizable,
            Verdict::LinearizableConsistent => FldVerdict::LinearizableConsistent,
            Verdict::NotLinearizable => FldVerdict::NotLinearizable,
            Verdict::Inconclusive => FldVerdict::Inconclusive,
        }
    }
}

/// Opaque scenario: a preset together with a discretization scheme.
pub struct FldScenario {
    preset: ScenarioPreset,
    scheme: DiscreteScheme,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).ok());
}

fn status_of(e: &Error) -> FldStatus {
    match e {
        Error::Dimension { .. } | Error::GridMismatch(_) => FldStatus::Dimension,
        Error::Domain { .. } => FldStatus::Domain,
        Error::Singular { .. } => FldStatus::Singular,
        Error::InversionFailed { .. } | Error::NewtonDiverged { .. } | Error::AffinityViolation { .. } => {
            FldStatus::Numeric
        }
        Error::UnknownKind(_) | Error::InvalidInput(_) => FldStatus::InvalidArgument,
        Error::StepFailed { source, .. } | Error::OrderFailed { source, .. } => status_of(source),
        Error::Io(_) => FldStatus::Io,
    }
}

struct Failure(FldStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(status_of(&e), e.to_string())
    }
}

fn guarded(f: impl FnOnce() -> Result<(), Failure>) -> FldStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => FldStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FldStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(FldStatus::NullPointer, format!("`{what}` is null"))
}

unsafe fn scenario<'a>(s: *const FldScenario) -> Result<&'a FldScenario, Failure> {
    s.as_ref().ok_or_else(|| null("scenario"))
}

unsafe fn input<'a>(p: *const f64, len: usize, expected: usize, what: &str) -> Result<&'a [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len != expected {
        return Err(Error::Dimension {
            what: what.to_string(),
            expected,
            found: len,
        }
        .into());
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn output<'a>(p: *mut f64, len: usize, expected: usize, what: &str) -> Result<&'a mut [f64], Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    if len < expected {
        return Err(Error::Dimension {
            what: what.to_string(),
            expected,
            found: len,
        }
        .into());
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn string_arg(p: *const c_char, what: &str) -> Result<String, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map(str::to_string)
        .map_err(|_| Failure(FldStatus::InvalidArgument, format!("`{what}` is not UTF-8")))
}

/// Creates a scenario from a preset name (`"unicycle"`), a map kind
/// (`"explicit-euler"`, `"implicit-euler"`, `"midpoint"`), the lifting flag
/// and the step size. On success `*out` receives a handle to free with
/// [`fld_scenario_free`].
///
/// # Safety
/// `preset` and `map` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_new(
    preset: *const c_char,
    map: *const c_char,
    lifted: bool,
    h: f64,
    out: *mut *mut FldScenario,
) -> FldStatus {
    guarded(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let preset = preset_by_name(&string_arg(preset, "preset")?)?;
        let kind: MapKind = string_arg(map, "map")?.parse()?;
        if !kind.is_builtin() {
            return Err(Failure(FldStatus::InvalidArgument, format!("map `{kind}` is not a builtin map")));
        }
        let base = make_builtin_map(kind, preset.extended.dim())?;
        let scheme = if lifted {
            DiscreteScheme::lifted(base, preset.extended.clone(), preset.lin.clone(), h)?
        } else {
            DiscreteScheme::implicit(base, preset.extended.clone(), h)?
        };
        *out = Box::into_raw(Box::new(FldScenario { preset, scheme }));
        Ok(())
    })
}

/// # Safety
/// `s` must be null or a handle from [`fld_scenario_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_free(s: *mut FldScenario) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

/// State and input dimensions of the extended system.
///
/// # Safety
/// `s` must be a live handle; `state_dim` and `input_dim` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_dims(
    s: *const FldScenario,
    state_dim: *mut usize,
    input_dim: *mut usize,
) -> FldStatus {
    guarded(|| {
        let s = scenario(s)?;
        if state_dim.is_null() || input_dim.is_null() {
            return Err(null("dims"));
        }
        *state_dim = s.preset.extended.dim();
        *input_dim = s.preset.extended.m();
        Ok(())
    })
}

/// Copies the preset initial state into `out`.
///
/// # Safety
/// `s` must be a live handle; `out` must hold `out_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_initial_state(
    s: *const FldScenario,
    out: *mut f64,
    out_len: usize,
) -> FldStatus {
    guarded(|| {
        let s = scenario(s)?;
        let d = s.preset.extended.dim();
        output(out, out_len, d, "out")?[..d].copy_from_slice(&s.preset.xi0);
        Ok(())
    })
}

/// One step `ξ_{k+1} = F̄_h(ξ_k, μ_k)`.
///
/// # Safety
/// `s` must be a live handle; the arrays must hold the given counts.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_step(
    s: *const FldScenario,
    xi: *const f64,
    xi_len: usize,
    mu: *const f64,
    mu_len: usize,
    out: *mut f64,
    out_len: usize,
) -> FldStatus {
    guarded(|| {
        let s = scenario(s)?;
        let (d, m) = (s.preset.extended.dim(), s.preset.extended.m());
        let xi = input(xi, xi_len, d, "xi")?;
        let mu = input(mu, mu_len, m, "mu")?;
        let next = s.scheme.step(xi, mu)?;
        output(out, out_len, d, "out")?[..d].copy_from_slice(&next);
        Ok(())
    })
}

/// Linearizing feedback `μ = α̃(ξ) + β̃(ξ)v`.
///
/// # Safety
/// `s` must be a live handle; the arrays must hold the given counts.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_feedback(
    s: *const FldScenario,
    xi: *const f64,
    xi_len: usize,
    v: *const f64,
    v_len: usize,
    mu_out: *mut f64,
    mu_len: usize,
) -> FldStatus {
    guarded(|| {
        let s = scenario(s)?;
        let (d, m) = (s.preset.extended.dim(), s.preset.extended.m());
        let xi = input(xi, xi_len, d, "xi")?;
        let v = input(v, v_len, m, "v")?;
        let mu = s.preset.lin.feedback(xi, v)?;
        output(mu_out, mu_len, m, "mu_out")?[..m].copy_from_slice(&mu);
        Ok(())
    })
}

/// Linearizing coordinates `z = Φ(ξ)`.
///
/// # Safety
/// `s` must be a live handle; the arrays must hold the given counts.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_phi(
    s: *const FldScenario,
    xi: *const f64,
    xi_len: usize,
    z_out: *mut f64,
    z_len: usize,
) -> FldStatus {
    guarded(|| {
        let s = scenario(s)?;
        let d = s.preset.extended.dim();
        let xi = input(xi, xi_len, d, "xi")?;
        let z = s.preset.lin.transform(xi);
        output(z_out, z_len, d, "z_out")?[..d].copy_from_slice(&z);
        Ok(())
    })
}

/// `ξ = Φ⁻¹(z)`.
///
/// # Safety
/// `s` must be a live handle; the arrays must hold the given counts.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_phi_inverse(
    s: *const FldScenario,
    z: *const f64,
    z_len: usize,
    xi_out: *mut f64,
    xi_len: usize,
) -> FldStatus {
    guarded(|| {
        let s = scenario(s)?;
        let d = s.preset.extended.dim();
        let z = input(z, z_len, d, "z")?;
        let xi = s.preset.lin.diffeo().invert(z)?;
        output(xi_out, xi_len, d, "xi_out")?[..d].copy_from_slice(&xi);
        Ok(())
    })
}

/// Closed-loop run over `[0, horizon]` from the preset initial state with
/// the preset gains. Writes the `(steps + 1) × state_dim` states row by row
/// into `states_out` (may be null) and the maximum distance to the
/// continuous closed loop into `max_error` (may be null). `*steps_out`
/// receives the number of steps.
///
/// # Safety
/// `s` must be a live handle; non-null outputs must be writable, with
/// `states_out` holding `states_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_simulate(
    s: *const FldScenario,
    horizon: f64,
    states_out: *mut f64,
    states_len: usize,
    steps_out: *mut usize,
    max_error: *mut f64,
) -> FldStatus {
    guarded(|| {
        let s = scenario(s)?;
        let steps = steps_for(horizon, s.scheme.h())?;
        let d = s.preset.extended.dim();
        let mut ctrl = stabilizing_controller(&s.preset, None)?;
        let run = run_with_reference(&s.scheme, &mut ctrl, &s.preset.xi0, steps, ReferenceKind::ClosedLoop)?;
        if !states_out.is_null() {
            let out = output(states_out, states_len, (steps + 1) * d, "states_out")?;
            for (row, state) in out.chunks_mut(d).zip(&run.trajectory.states) {
                row.copy_from_slice(state);
            }
        }
        if !steps_out.is_null() {
            *steps_out = steps;
        }
        if !max_error.is_null() {
            *max_error = run.max_error();
        }
        Ok(())
    })
}

/// Worst `‖Φ(ξ_{k+1}) − A_h Φ(ξ_k) − B_h v_k‖` over `steps` closed-loop steps.
///
/// # Safety
/// `s` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_linearity_residual(
    s: *const FldScenario,
    steps: usize,
    out: *mut f64,
) -> FldStatus {
    guarded(|| {
        let s = scenario(s)?;
        if out.is_null() {
            return Err(null("out"));
        }
        let ctrl = stabilizing_controller(&s.preset, None)?;
        let mut v_of = |_k: usize, z: &[f64]| Ok(ctrl.new_control(z));
        let r = linearity_residual(&s.scheme, &s.preset.lin, &mut v_of, &s.preset.xi0, steps)?;
        *out = r.max_residual;
        Ok(())
    })
}

/// Discrete linearizability audit of the scenario's step map on seeded
/// sample points. `json_out` (may be null) receives the report, to be
/// released with [`fld_string_free`].
///
/// # Safety
/// `s` must be a live handle; `verdict` must be writable; `json_out` must
/// be null or writable.
#[no_mangle]
pub unsafe extern "C" fn fld_scenario_audit(
    s: *const FldScenario,
    seed: u64,
    verdict: *mut FldVerdict,
    json_out: *mut *mut c_char,
) -> FldStatus {
    guarded(|| {
        let s = scenario(s)?;
        if verdict.is_null() {
            return Err(null("verdict"));
        }
        let model = DiscreteMapModel::from_scheme(&s.scheme)?;
        let points = model.sample_points(seed, DEFAULT_POINTS)?;
        let report = grizzle_audit(&model, &points)?;
        *verdict = report.verdict.into();
        if !json_out.is_null() {
            *json_out = CString::new(report.to_json()).map_or(ptr::null_mut(), CString::into_raw);
        }
        Ok(())
    })
}

/// # Safety
/// `p` must be null or a string returned by this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fld_string_free(p: *mut c_char) {
    if !p.is_null() {
        drop(CString::from_raw(p));
    }
}

/// Message of the last failure on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn fld_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn fld_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
