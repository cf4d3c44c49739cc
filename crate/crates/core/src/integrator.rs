//! One-step schemes induced by discretization maps, closed-loop simulation,
//! the reference integrator and order estimation.
//!
//! A discretization map `D` and a controlled vector field `F_μ` define the
//! scheme `D⁻¹(ξ_k, ξ_{k+1}) = h·F_μ(π(D⁻¹(ξ_k, ξ_{k+1})))`, where `π`
//! takes the base point.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::ad::{fd_step, jvp, ConstField, AffineField, Field, FieldRef, Scalar, SmoothMap};
use crate::geometry::{lift_map, MapKind, MapRef};
use crate::linalg::{euclid, inf_norm, newton, NewtonOptions};
use crate::systems::{
    affine_velocity, eval_dynamics, inverse_transform, ControlAffineSystem, DiscreteLTI,
    ExtendedSystem, LinearizingData,
};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchemeMode {
    /// Newton on the defining relation of the scheme.
    ImplicitGeneral,
    /// Step the underlying map in linear coordinates, then map back with `Φ⁻¹`.
    LiftedFastPath,
}

/// A first-order scheme `ξ_{k+1} = F̄_h(ξ_k, μ_k)`.
#[derive(Clone)]
pub struct DiscreteScheme {
    map: MapRef,
    base: Option<MapRef>,
    ext: ExtendedSystem,
    lin: Option<LinearizingData>,
    h: f64,
    mode: SchemeMode,
}

impl std::fmt::Debug for DiscreteScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteScheme")
            .field("map", &self.map.kind())
            .field("base", &self.base.as_ref().map(|b| b.kind()))
            .field("h", &self.h)
            .field("mode", &self.mode)
            .finish()
    }
}

fn check_step(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("step size must be positive, got {h}")))
    }
}

impl DiscreteScheme {
    /// Scheme induced by `map` directly on the state space of `ext`.
    pub fn implicit(map: MapRef, ext: ExtendedSystem, h: f64) -> Result<Self> {
        check_step(h)?;
        if map.dim() != ext.dim() {
            return Err(Error::dim("discretization map", ext.dim(), map.dim()));
        }
        Ok(Self {
            map,
            base: None,
            ext,
            lin: None,
            h,
            mode: SchemeMode::ImplicitGeneral,
        })
    }

    /// Scheme induced by `base` acting in the linear coordinates `z = Φ(ξ)`,
    /// i.e. by the map `(Φ⁻¹×Φ⁻¹)∘base∘TΦ`.
    pub fn lifted(base: MapRef, ext: ExtendedSystem, lin: LinearizingData, h: f64) -> Result<Self> {
        check_step(h)?;
        if lin.dim() != ext.dim() {
            return Err(Error::dim("linearizing data", ext.dim(), lin.dim()));
        }
        let map = lift_map(base.clone(), lin.diffeo().inverse())?;
        Ok(Self {
            map,
            base: Some(base),
            ext,
            lin: Some(lin),
            h,
            mode: SchemeMode::LiftedFastPath,
        })
    }

    pub fn with_mode(mut self, mode: SchemeMode) -> Result<Self> {
        if mode == SchemeMode::LiftedFastPath && self.base.is_none() {
            return Err(Error::InvalidInput(
                "the lifted fast path needs linearizing data".into(),
            ));
        }
        self.mode = mode;
        Ok(self)
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn mode(&self) -> SchemeMode {
        self.mode
    }

    pub fn map(&self) -> &MapRef {
        &self.map
    }

    /// Map acting in linear coordinates, for lifted schemes.
    pub fn base_map(&self) -> Option<&MapRef> {
        self.base.as_ref()
    }

    pub fn system(&self) -> &ExtendedSystem {
        &self.ext
    }

    pub fn linearizing_data(&self) -> Option<&LinearizingData> {
        self.lin.as_ref()
    }

    pub fn is_lifted(&self) -> bool {
        self.base.is_some()
    }

    /// The map whose linear-system discretization the scheme should reproduce
    /// in linear coordinates.
    pub fn linear_model_map(&self) -> &MapRef {
        self.base.as_ref().unwrap_or(&self.map)
    }

    /// `ξ_{k+1}` from `(ξ_k, μ_k)`.
    pub fn step(&self, xi: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        match self.mode {
            SchemeMode::ImplicitGeneral => self.step_implicit(xi, mu),
            SchemeMode::LiftedFastPath => self.step_lifted(xi, mu),
        }
    }

    fn step_implicit(&self, xi: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        let vel = eval_dynamics(&self.ext, xi, mu)?;
        let seed: Vec<f64> = xi.iter().zip(&vel).map(|(x, v)| x + self.h * v).collect();
        let residual = |x1: &[f64]| -> Result<Vec<f64>> {
            let (base, v) = self.map.invert(xi, x1)?;
            let f = eval_dynamics(&self.ext, &base, mu)?;
            Ok(v.iter().zip(&f).map(|(v, f)| v - self.h * f).collect())
        };
        let sol = newton(
            &residual,
            |x| fd_jacobian(&residual, x),
            &seed,
            NewtonOptions::default(),
        )?;
        Ok(sol.x)
    }

    fn step_lifted(&self, xi: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
        let (Some(lin), Some(base)) = (&self.lin, &self.base) else {
            unreachable!("lifted mode without linearizing data");
        };
        let margin = lin.guard().margin(xi);
        if !(margin > 0.0) {
            return Err(Error::Domain {
                guard: lin.guard().label().to_string(),
                margin,
            });
        }
        let vel = eval_dynamics(&self.ext, xi, mu)?;
        let (z, zdot) = jvp::<f64>(&**lin.phi(), xi, &vel);
        let z1: Vec<f64> = if base.kind() == MapKind::ExplicitEuler {
            z.iter().zip(&zdot).map(|(z, v)| z + self.h * v).collect()
        } else {
            let field = |zb: &[f64]| -> Result<Vec<f64>> {
                let xb = inverse_transform(lin, zb, Some(xi))?;
                let vel = eval_dynamics(&self.ext, &xb, mu)?;
                Ok(lin.diffeo().push(&xb, &vel))
            };
            let residual = |z1: &[f64]| -> Result<Vec<f64>> {
                let (zb, v) = base.invert(&z, z1)?;
                let f = field(&zb)?;
                Ok(v.iter().zip(&f).map(|(v, f)| v - self.h * f).collect())
            };
            let seed: Vec<f64> = z.iter().zip(&zdot).map(|(z, v)| z + self.h * v).collect();
            newton(
                &residual,
                |x| fd_jacobian(&residual, x),
                &seed,
                NewtonOptions::default(),
            )?
            .x
        };
        inverse_transform(lin, &z1, Some(xi))
    }

    /// The step as a smooth map `(ξ, μ) ↦ ξ_{k+1}` when it has a closed
    /// form (explicit Euler, plain or lifted).
    pub fn step_field(&self) -> Option<FieldRef> {
        let (d, m) = (self.ext.dim(), self.ext.m());
        match (&self.base, &self.lin) {
            (Some(base), Some(lin)) if base.kind() == MapKind::ExplicitEuler => {
                Some(Arc::new(LiftedEulerStep {
                    d,
                    m,
                    h: self.h,
                    drift: self.ext.drift().clone(),
                    inputs: self.ext.inputs().clone(),
                    phi: lin.phi().clone(),
                    phi_inv: lin.diffeo().inverse_field().clone(),
                }))
            }
            (None, _) if self.map.kind() == MapKind::ExplicitEuler => Some(Arc::new(EulerStep {
                d,
                m,
                h: self.h,
                drift: self.ext.drift().clone(),
                inputs: self.ext.inputs().clone(),
            })),
            _ => None,
        }
    }
}

fn fd_jacobian(f: &impl Fn(&[f64]) -> Result<Vec<f64>>, x: &[f64]) -> Result<DMatrix<f64>> {
    let mut cols = Vec::with_capacity(x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let s = fd_step(x[j]);
        xp[j] = x[j] + s;
        let fp = f(&xp)?;
        xp[j] = x[j] - s;
        let fm = f(&xp)?;
        xp[j] = x[j];
        cols.push(DVector::from_iterator(
            fp.len(),
            fp.iter().zip(&fm).map(|(a, b)| (a - b) / (2.0 * s)),
        ));
    }
    Ok(DMatrix::from_columns(&cols))
}

/// `(ξ, μ) ↦ ξ + h(F(ξ) + G(ξ)μ)`.
pub struct EulerStep {
    d: usize,
    m: usize,
    h: f64,
    drift: FieldRef,
    inputs: FieldRef,
}

impl EulerStep {
    pub fn new(ext: &ExtendedSystem, h: f64) -> Self {
        Self {
            d: ext.dim(),
            m: ext.m(),
            h,
            drift: ext.drift().clone(),
            inputs: ext.inputs().clone(),
        }
    }
}

impl SmoothMap for EulerStep {
    fn dims(&self) -> (usize, usize) {
        (self.d + self.m, self.d)
    }
    fn apply<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let (xi, mu) = p.split_at(self.d);
        let vel = affine_velocity(&*self.drift, &*self.inputs, xi, mu);
        xi.iter().zip(vel).map(|(&x, v)| x + v * self.h).collect()
    }
}

/// `(ξ, μ) ↦ Φ⁻¹(Φ(ξ) + h·DΦ(ξ)·(F(ξ) + G(ξ)μ))`.
struct LiftedEulerStep {
    d: usize,
    m: usize,
    h: f64,
    drift: FieldRef,
    inputs: FieldRef,
    phi: FieldRef,
    phi_inv: FieldRef,
}

impl SmoothMap for LiftedEulerStep {
    fn dims(&self) -> (usize, usize) {
        (self.d + self.m, self.d)
    }
    fn apply<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let (xi, mu) = p.split_at(self.d);
        let vel = affine_velocity(&*self.drift, &*self.inputs, xi, mu);
        let (z, zdot) = jvp::<S>(&*self.phi, xi, &vel);
        let z1: Vec<S> = z.into_iter().zip(zdot).map(|(z, v)| z + v * self.h).collect();
        S::call(&*self.phi_inv, &z1)
    }
}

/// `ż = Az + Bv` as an extended system.
pub fn linear_system(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<ExtendedSystem> {
    let d = a.nrows();
    if a.ncols() != d {
        return Err(Error::dim("matrix A columns", d, a.ncols()));
    }
    if b.nrows() != d {
        return Err(Error::dim("matrix B rows", d, b.nrows()));
    }
    let drift: FieldRef = Arc::new(AffineField::linear(a.clone()));
    let inputs: FieldRef = Arc::new(ConstField::new(d, b.as_slice().to_vec()));
    Ok(ExtendedSystem::direct(ControlAffineSystem::new(drift, inputs, b.ncols())?))
}

/// Tolerance for the affinity checks of [`discretize_lti`].
pub const AFFINITY_TOL: f64 = 1e-9;

/// `(A_h, B_h)` of the scheme `map` induces on `ż = Az + Bv`.
pub fn discretize_lti(map: &MapRef, a: &DMatrix<f64>, b: &DMatrix<f64>, h: f64) -> Result<DiscreteLTI> {
    let ext = linear_system(a, b)?;
    let (d, m) = (a.nrows(), b.ncols());
    let scheme = DiscreteScheme::implicit(map.clone(), ext, h)?;
    let step = |z: &[f64], v: &[f64]| scheme.step(z, v);
    let origin = step(&vec![0.0; d], &vec![0.0; m])?;
    let offset = inf_norm(&origin);
    if offset > AFFINITY_TOL {
        return Err(Error::AffinityViolation { defect: offset });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut draw = |k: usize| -> Vec<f64> { (0..k).map(|_| rng.random_range(-1.0..=1.0)).collect() };
    let (z1, z2, v1, v2) = (draw(d), draw(d), draw(m), draw(m));
    let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x + y).collect::<Vec<_>>();
    let s12 = step(&add(&z1, &z2), &add(&v1, &v2))?;
    let s1 = step(&z1, &v1)?;
    let s2 = step(&z2, &v2)?;
    let defect = inf_norm(
        &(0..d)
            .map(|i| s12[i] - s2[i] - s1[i] + origin[i])
            .collect::<Vec<_>>(),
    );
    if defect > AFFINITY_TOL {
        return Err(Error::AffinityViolation { defect });
    }
    let mut a_h = DMatrix::zeros(d, d);
    let mut e = vec![0.0; d];
    for j in 0..d {
        e[j] = 1.0;
        let col = step(&e, &vec![0.0; m])?;
        e[j] = 0.0;
        a_h.set_column(j, &DVector::from_vec(col));
    }
    let mut b_h = DMatrix::zeros(d, m);
    let mut e = vec![0.0; m];
    for j in 0..m {
        e[j] = 1.0;
        let col = step(&vec![0.0; d], &e)?;
        e[j] = 0.0;
        b_h.set_column(j, &DVector::from_vec(col));
    }
    Ok(DiscreteLTI::new(a_h, b_h, h))
}

/// States on a uniform grid with piecewise-constant controls.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    pub h: f64,
    pub t: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    pub controls: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn new(t0: f64, h: f64, xi0: Vec<f64>) -> Self {
        Self {
            h,
            t: vec![t0],
            states: vec![xi0],
            controls: Vec::new(),
        }
    }

    pub fn push(&mut self, mu: Vec<f64>, next: Vec<f64>) {
        let k = self.states.len();
        self.t.push(self.t[0] + k as f64 * self.h);
        self.controls.push(mu);
        self.states.push(next);
    }

    pub fn steps(&self) -> usize {
        self.controls.len()
    }

    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has an initial state")
    }

    /// Columns `t, xi_1…, mu_1…`; the control cells of the last row are empty.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states[0].len();
        let m = self.controls.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("xi_{i}")));
        header.extend((1..=m).map(|i| format!("mu_{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (k, (t, xi)) in self.t.iter().zip(&self.states).enumerate() {
            let mut row = vec![fmt_num(*t)];
            row.extend(xi.iter().map(|v| fmt_num(*v)));
            match self.controls.get(k) {
                Some(mu) => row.extend(mu.iter().map(|v| fmt_num(*v))),
                None => row.extend(std::iter::repeat_n(String::new(), m)),
            }
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ASCII output")
    }
}

/// Decimal with 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

/// Source of the control `μ_k` given `(k, ξ_k)`.
pub trait Controller {
    fn control(&mut self, k: usize, xi: &[f64]) -> Result<Vec<f64>>;

    /// The continuous-time law `μ = κ(ξ)` behind the controller, if it has one.
    fn law(&self, _xi: &[f64]) -> Option<Result<Vec<f64>>> {
        None
    }
}

impl<F: FnMut(usize, &[f64]) -> Result<Vec<f64>>> Controller for F {
    fn control(&mut self, k: usize, xi: &[f64]) -> Result<Vec<f64>> {
        self(k, xi)
    }
}

/// Runs `steps` steps of closed-loop simulation from `ξ₀` at `t₀ = 0`.
/// A failing step returns [`Error::StepFailed`] with the trajectory so far.
pub fn simulate(
    scheme: &DiscreteScheme,
    controller: &mut dyn Controller,
    xi0: &[f64],
    steps: usize,
) -> Result<Trajectory> {
    let d = scheme.ext.dim();
    if xi0.len() != d {
        return Err(Error::dim("initial state ξ₀", d, xi0.len()));
    }
    let mut traj = Trajectory::new(0.0, scheme.h, xi0.to_vec());
    for k in 0..steps {
        let xi = traj.final_state().to_vec();
        let next = controller
            .control(k, &xi)
            .and_then(|mu| scheme.step(&xi, &mu).map(|next| (mu, next)));
        match next {
            Ok((mu, next)) => traj.push(mu, next),
            Err(source) => {
                return Err(Error::StepFailed {
                    k,
                    source: Box::new(source),
                    partial: Box::new(traj),
                })
            }
        }
    }
    Ok(traj)
}

/// What the discrete trajectory is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReferenceKind {
    /// The continuous closed loop `ξ̇ = F(ξ) + G(ξ)κ(ξ)` under the
    /// controller's own law.
    #[default]
    ClosedLoop,
    /// The open-loop flow driven by the recorded controls, held constant on
    /// each grid interval.
    SampledControls,
}

impl fmt::Display for ReferenceKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReferenceKind::ClosedLoop => "closed-loop",
            ReferenceKind::SampledControls => "sampled",
        })
    }
}

impl FromStr for ReferenceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "closed-loop" => Ok(ReferenceKind::ClosedLoop),
            "sampled" => Ok(ReferenceKind::SampledControls),
            other => Err(Error::UnknownKind(format!(
                "reference `{other}` (expected closed-loop or sampled)"
            ))),
        }
    }
}

/// Substeps per grid interval of the reference integrator.
pub const REFERENCE_SUBSTEPS: usize = 100;

fn rk4_interval(
    x: &mut [f64],
    h: f64,
    mut velocity: impl FnMut(&[f64]) -> Result<Vec<f64>>,
) -> Result<()> {
    let hs = h / REFERENCE_SUBSTEPS as f64;
    let axpy = |x: &[f64], a: f64, k: &[f64]| x.iter().zip(k).map(|(x, k)| x + a * k).collect::<Vec<_>>();
    for _ in 0..REFERENCE_SUBSTEPS {
        let k1 = velocity(x)?;
        let k2 = velocity(&axpy(x, hs / 2.0, &k1))?;
        let k3 = velocity(&axpy(x, hs / 2.0, &k2))?;
        let k4 = velocity(&axpy(x, hs, &k3))?;
        for i in 0..x.len() {
            x[i] += hs / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
        }
    }
    Ok(())
}

fn blew_up(x: &[f64], k: usize) -> Result<()> {
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "reference solution blew up on interval {k}"
        )));
    }
    Ok(())
}

/// Fine fixed-step RK4 solution under piecewise-constant controls, sampled
/// on the grid `t₀ + kh`.
pub fn reference_trajectory(
    ext: &ExtendedSystem,
    controls: &[Vec<f64>],
    xi0: &[f64],
    t0: f64,
    h: f64,
) -> Result<Trajectory> {
    check_step(h)?;
    if xi0.len() != ext.dim() {
        return Err(Error::dim("initial state ξ₀", ext.dim(), xi0.len()));
    }
    let mut traj = Trajectory::new(t0, h, xi0.to_vec());
    for (k, mu) in controls.iter().enumerate() {
        if mu.len() != ext.m() {
            return Err(Error::dim(format!("control μ_{k}"), ext.m(), mu.len()));
        }
        let mut x = traj.final_state().to_vec();
        rk4_interval(&mut x, h, |x| Ok(ext.velocity(x, mu)))?;
        blew_up(&x, k)?;
        traj.push(mu.clone(), x);
    }
    Ok(traj)
}

/// Fine fixed-step RK4 solution of the continuous closed loop under `law`.
/// The recorded controls are `law(ξ(t_k))`.
pub fn closed_loop_reference(
    ext: &ExtendedSystem,
    law: &dyn Fn(&[f64]) -> Result<Vec<f64>>,
    xi0: &[f64],
    t0: f64,
    h: f64,
    steps: usize,
) -> Result<Trajectory> {
    check_step(h)?;
    if xi0.len() != ext.dim() {
        return Err(Error::dim("initial state ξ₀", ext.dim(), xi0.len()));
    }
    let mut traj = Trajectory::new(t0, h, xi0.to_vec());
    for k in 0..steps {
        let mut x = traj.final_state().to_vec();
        let mu = law(&x)?;
        rk4_interval(&mut x, h, |x| Ok(ext.velocity(x, &law(x)?)))?;
        blew_up(&x, k)?;
        traj.push(mu, x);
    }
    Ok(traj)
}

/// `‖ξ(t_k) − ξ_k‖₂` for every grid point.
pub fn global_error(traj: &Trajectory, reference: &Trajectory) -> Result<Vec<f64>> {
    if traj.t.len() != reference.t.len() {
        return Err(Error::GridMismatch(format!(
            "{} vs {} grid points",
            traj.t.len(),
            reference.t.len()
        )));
    }
    for (k, (a, b)) in traj.t.iter().zip(&reference.t).enumerate() {
        if (a - b).abs() > 1e-12 * a.abs().max(1.0) {
            return Err(Error::GridMismatch(format!("t_{k} = {a} vs {b}")));
        }
    }
    traj.states
        .iter()
        .zip(&reference.states)
        .map(|(a, b)| {
            if a.len() != b.len() {
                return Err(Error::dim("reference state", a.len(), b.len()));
            }
            Ok(euclid(&a.iter().zip(b).map(|(x, y)| x - y).collect::<Vec<_>>()))
        })
        .collect()
}

/// Simulation together with the reference solution driven by the same controls.
#[derive(Debug, Clone)]
pub struct ErrorRun {
    pub trajectory: Trajectory,
    pub reference: Trajectory,
    pub errors: Vec<f64>,
}

impl ErrorRun {
    pub fn max_error(&self) -> f64 {
        self.errors.iter().fold(0.0, |m: f64, &e| m.max(e))
    }
}

pub fn run_with_reference(
    scheme: &DiscreteScheme,
    controller: &mut dyn Controller,
    xi0: &[f64],
    steps: usize,
    kind: ReferenceKind,
) -> Result<ErrorRun> {
    if kind == ReferenceKind::ClosedLoop && controller.law(xi0).is_none() {
        return Err(Error::InvalidInput(
            "closed-loop reference needs a controller with a state-feedback law".into(),
        ));
    }
    let trajectory = simulate(scheme, controller, xi0, steps)?;
    let reference = match kind {
        ReferenceKind::SampledControls => {
            reference_trajectory(scheme.system(), &trajectory.controls, xi0, 0.0, scheme.h)?
        }
        ReferenceKind::ClosedLoop => {
            let law = |x: &[f64]| controller.law(x).expect("checked above");
            closed_loop_reference(scheme.system(), &law, xi0, 0.0, scheme.h, steps)?
        }
    };
    let errors = global_error(&trajectory, &reference)?;
    Ok(ErrorRun {
        trajectory,
        reference,
        errors,
    })
}

/// Least-squares fit of `log(max error)` against `log h`.
#[derive(Debug, Clone, Serialize)]
pub struct OrderFit {
    pub hs: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    /// The step sizes form a geometric sequence.
    pub geometric: bool,
    /// Some error sits at the rounding floor, so the slope is meaningless.
    pub degenerate: bool,
}

impl OrderFit {
    pub fn first_order(&self) -> bool {
        !self.degenerate && (0.8..=1.2).contains(&self.slope)
    }
}

pub const MIN_ORDER_POINTS: usize = 4;
const ROUNDING_FLOOR: f64 = 1e-12;

pub fn fit_order(hs: &[f64], errors: &[f64]) -> Result<OrderFit> {
    if hs.len() < MIN_ORDER_POINTS {
        return Err(Error::InvalidInput(format!(
            "order estimation needs at least {MIN_ORDER_POINTS} step sizes, got {}",
            hs.len()
        )));
    }
    if hs.len() != errors.len() {
        return Err(Error::dim("error list", hs.len(), errors.len()));
    }
    if hs.iter().any(|h| !(h.is_finite() && *h > 0.0)) {
        return Err(Error::InvalidInput("step sizes must be positive".into()));
    }
    let ratio = hs[0] / hs[1];
    let geometric = hs
        .windows(2)
        .all(|w| ((w[0] / w[1]) - ratio).abs() <= 1e-9 * ratio.abs());
    let degenerate = errors.iter().any(|e| !(e.is_finite() && *e >= ROUNDING_FLOOR));
    let xs: Vec<f64> = hs.iter().map(|h| h.ln()).collect();
    let ys: Vec<f64> = errors.iter().map(|e| e.max(f64::MIN_POSITIVE).ln()).collect();
    let n = xs.len() as f64;
    let (mx, my) = (xs.iter().sum::<f64>() / n, ys.iter().sum::<f64>() / n);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let slope = sxy / sxx;
    Ok(OrderFit {
        hs: hs.to_vec(),
        errors: errors.to_vec(),
        slope,
        intercept: my - slope * mx,
        geometric,
        degenerate: degenerate || !slope.is_finite(),
    })
}

/// Steps needed to cover `[0, horizon]` with step `h`.
pub fn steps_for(horizon: f64, h: f64) -> Result<usize> {
    check_step(h)?;
    if !(horizon.is_finite() && horizon >= 0.0) {
        return Err(Error::InvalidInput(format!("horizon must be non-negative, got {horizon}")));
    }
    Ok((horizon / h).round() as usize)
}

/// Maximum global error over `[0, horizon]` for each `h`, fitted on a
/// log-log scale. The runs are independent and execute concurrently.
pub fn order_estimate<M, C>(
    hs: &[f64],
    horizon: f64,
    xi0: &[f64],
    kind: ReferenceKind,
    make_scheme: M,
    make_controller: C,
) -> Result<OrderFit>
where
    M: Fn(f64) -> Result<DiscreteScheme> + Sync,
    C: Fn(&DiscreteScheme) -> Box<dyn Controller> + Sync,
{
    if hs.len() < MIN_ORDER_POINTS {
        return fit_order(hs, &vec![0.0; hs.len()]);
    }
    let results: Vec<Result<f64>> = std::thread::scope(|scope| {
        let handles: Vec<_> = hs
            .iter()
            .map(|&h| {
                let (make_scheme, make_controller) = (&make_scheme, &make_controller);
                scope.spawn(move || -> Result<f64> {
                    let wrap = |e: Error| Error::OrderFailed {
                        h,
                        source: Box::new(e),
                    };
                    let scheme = make_scheme(h).map_err(wrap)?;
                    let steps = steps_for(horizon, h).map_err(wrap)?;
                    let mut controller = make_controller(&scheme);
                    run_with_reference(&scheme, &mut *controller, xi0, steps, kind)
                        .map(|r| r.max_error())
                        .map_err(wrap)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("simulation thread panicked"))
            .collect()
    });
    let errors = results.into_iter().collect::<Result<Vec<f64>>>()?;
    fit_order(hs, &errors)
}

/// Worst deviation from `z_{k+1} = A_h z_k + B_h v_k` along a closed-loop run.
#[derive(Debug, Clone, Serialize)]
pub struct LinearityReport {
    pub steps: usize,
    pub max_residual: f64,
    pub worst_step: Option<usize>,
    pub passed: bool,
}

pub const LINEARITY_TOL: f64 = 1e-9;

/// Runs the scheme under `μ_k = α̃(ξ_k) + β̃(ξ_k)v_k`, with `v_k` supplied by
/// `new_control(k, z_k)`, and measures `‖Φ(ξ_{k+1}) − A_h Φ(ξ_k) − B_h v_k‖₂`.
/// `(A_h, B_h)` is the discretization of `(A, B)` by the scheme's map in
/// linear coordinates.
pub fn linearity_residual(
    scheme: &DiscreteScheme,
    lin: &LinearizingData,
    new_control: &mut dyn FnMut(usize, &[f64]) -> Result<Vec<f64>>,
    xi0: &[f64],
    steps: usize,
) -> Result<LinearityReport> {
    let lti = discretize_lti(scheme.linear_model_map(), lin.a(), lin.b(), scheme.h)?;
    let mut report = LinearityReport {
        steps,
        max_residual: 0.0,
        worst_step: None,
        passed: false,
    };
    let mut xi = xi0.to_vec();
    let mut z = lin.transform(&xi);
    for k in 0..steps {
        let wrap = |e: Error| Error::StepFailed {
            k,
            source: Box::new(e),
            partial: Box::new(Trajectory::new(0.0, scheme.h, xi0.to_vec())),
        };
        let v = new_control(k, &z).map_err(wrap)?;
        let mu = lin.feedback(&xi, &v).map_err(wrap)?;
        xi = scheme.step(&xi, &mu).map_err(wrap)?;
        let predicted = lti.step(&z, &v);
        z = lin.transform(&xi);
        let r = euclid(&z.iter().zip(&predicted).map(|(a, b)| a - b).collect::<Vec<_>>());
        if !(r <= report.max_residual) {
            report.max_residual = r;
            report.worst_step = Some(k);
        }
    }
    report.passed = report.max_residual <= LINEARITY_TOL;
    Ok(report)
}

/// Evaluates a field that may be a step map at `(ξ, μ)`.
pub fn eval_step_field(field: &dyn Field, xi: &[f64], mu: &[f64]) -> Vec<f64> {
    let p: Vec<f64> = xi.iter().chain(mu).copied().collect();
    field.eval0(&p)
}
