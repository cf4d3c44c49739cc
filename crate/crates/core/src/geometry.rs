//! Retraction and discretization maps on open subsets of ℝ^d.
//!
//! Tangent vectors are pairs `(x, v)` of a base point and a vector of the
//! same dimension. A discretization map sends `(x, v)` to a pair of points
//! `(D¹, D²)`; it must fix the zero section, `D(x, 0) = (x, x)`, and the
//! difference of its vertical derivatives at `v = 0` must be the identity.

use std::any::TypeId;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::ad::{self, jacobian_at, jvp, lift_slice, primal, Field, FieldRef, Scalar, SmoothMap};
use crate::linalg::{self, inf_norm, newton, NewtonOptions};
use crate::{Error, Result};

/// Predicate marking where a chart (or a feedback law) is valid.
///
/// The guard is encoded by a margin function: the point is admissible when
/// the margin is strictly positive. Sampling routines may additionally keep
/// a safety distance from the zero set of the margin.
#[derive(Clone)]
pub struct ChartGuard {
    label: Arc<str>,
    margin: Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl ChartGuard {
    pub fn new(label: &str, margin: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            label: label.into(),
            margin: Arc::new(margin),
        }
    }

    /// Guard satisfied everywhere.
    pub fn everywhere() -> Self {
        Self::new("true", |_| f64::INFINITY)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn margin(&self, x: &[f64]) -> f64 {
        (self.margin)(x)
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.margin(x) > 0.0
    }
}

impl fmt::Debug for ChartGuard {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("ChartGuard").field(&self.label).finish()
    }
}

/// Tolerance on `‖φ(φ⁻¹(y)) − y‖∞`, relative to `max(1, ‖y‖∞)`.
pub const INVERSE_TOL: f64 = 1e-10;

/// Damped Newton inversion of `forward` at `target`, seeded from `seed`.
pub fn newton_invert(forward: &dyn Field, target: &[f64], seed: &[f64]) -> Result<Vec<f64>> {
    let opts = NewtonOptions {
        tol: 1e-12 * target.iter().fold(1.0, |m: f64, v| m.max(v.abs())),
        max_iter: 50,
        damped: true,
    };
    newton(
        |x| {
            Ok(forward
                .eval(x)
                .iter()
                .zip(target)
                .map(|(a, b)| a - b)
                .collect())
        },
        |x| Ok(ad::jacobian_ad(forward, x)),
        seed,
        opts,
    )
    .map(|s| s.x)
    .map_err(|e| match e {
        Error::NewtonDiverged {
            residual,
            iterations,
        } => Error::InversionFailed {
            residual,
            iterations,
        },
        other => other,
    })
}

/// Inverse of a field computed by Newton's method. Derivatives are obtained
/// by a few extra Newton steps carried out in dual arithmetic, which
/// reproduces the implicit-function derivatives.
pub struct NewtonInverse {
    forward: FieldRef,
}

impl NewtonInverse {
    pub fn new(forward: FieldRef) -> Self {
        Self { forward }
    }
}

/// Newton refinement steps in dual arithmetic; each one doubles the number
/// of correct derivative orders.
const REFINE_STEPS: usize = 3;

pub(crate) fn refine_root<S: Scalar>(
    residual: impl Fn(&[S]) -> Vec<S>,
    jac: impl Fn(&[S]) -> Vec<Vec<S>>,
    root: &[f64],
) -> Vec<S> {
    let mut x: Vec<S> = lift_slice(root);
    if TypeId::of::<S>() == TypeId::of::<f64>() {
        return x;
    }
    for _ in 0..REFINE_STEPS {
        let r = residual(&x);
        let Some(dx) = linalg::solve_generic(jac(&x), r) else {
            break;
        };
        for (xi, d) in x.iter_mut().zip(dx) {
            *xi = *xi - d;
        }
    }
    x
}

impl SmoothMap for NewtonInverse {
    fn dims(&self) -> (usize, usize) {
        (self.forward.dim_out(), self.forward.dim_in())
    }

    fn apply<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let target = primal(y);
        let Ok(root) = newton_invert(&*self.forward, &target, &target) else {
            return vec![S::cst(f64::NAN); self.forward.dim_in()];
        };
        let f = &*self.forward;
        refine_root(
            |x| {
                S::call(f, x)
                    .into_iter()
                    .zip(y)
                    .map(|(a, &b)| a - b)
                    .collect()
            },
            |x| jacobian_at(f, x),
            &root,
        )
    }
}

/// A diffeomorphism between open subsets of ℝ^d with forward and inverse
/// maps, both differentiable through [`Field`].
#[derive(Clone)]
pub struct Diffeo {
    forward: FieldRef,
    inverse: FieldRef,
}

impl fmt::Debug for Diffeo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Diffeo").field("dim", &self.dim()).finish()
    }
}

impl Diffeo {
    pub fn new(forward: FieldRef, inverse: FieldRef) -> Result<Self> {
        let d = forward.dim_in();
        for (what, f) in [("forward map", &forward), ("inverse map", &inverse)] {
            if f.dim_in() != d {
                return Err(Error::dim(format!("{what} input"), d, f.dim_in()));
            }
            if f.dim_out() != d {
                return Err(Error::dim(format!("{what} output"), d, f.dim_out()));
            }
        }
        Ok(Self { forward, inverse })
    }

    /// Inverse computed numerically.
    pub fn newton(forward: FieldRef) -> Result<Self> {
        let inverse: FieldRef = Arc::new(NewtonInverse::new(forward.clone()));
        Self::new(forward, inverse)
    }

    pub fn identity(dim: usize) -> Self {
        let id: FieldRef = Arc::new(ad::AffineField::linear(DMatrix::identity(dim, dim)));
        Self {
            forward: id.clone(),
            inverse: id,
        }
    }

    pub fn dim(&self) -> usize {
        self.forward.dim_in()
    }

    pub fn forward(&self) -> &FieldRef {
        &self.forward
    }

    pub fn inverse_field(&self) -> &FieldRef {
        &self.inverse
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        self.forward.eval(x)
    }

    /// `φ⁻¹(y)`, checked by the round trip.
    pub fn invert(&self, y: &[f64]) -> Result<Vec<f64>> {
        let x = self.inverse.eval(y);
        let residual = if x.iter().all(|v| v.is_finite()) {
            let back = self.forward.eval(&x);
            inf_norm(&back.iter().zip(y).map(|(a, b)| a - b).collect::<Vec<_>>())
        } else {
            f64::INFINITY
        };
        if residual.is_finite() && residual <= INVERSE_TOL * inf_norm(y).max(1.0) {
            Ok(x)
        } else {
            Err(Error::InversionFailed {
                residual,
                iterations: 0,
            })
        }
    }

    /// Tangent map `Dφ(x)·v`.
    pub fn push(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        jvp::<f64>(&*self.forward, x, v).1
    }

    /// `Dφ⁻¹(y)·w`.
    pub fn pull(&self, y: &[f64], w: &[f64]) -> Vec<f64> {
        jvp::<f64>(&*self.inverse, y, w).1
    }

    /// The inverse diffeomorphism.
    pub fn inverse(&self) -> Diffeo {
        Diffeo {
            forward: self.inverse.clone(),
            inverse: self.forward.clone(),
        }
    }

    /// `next ∘ self`.
    pub fn then(&self, next: &Diffeo) -> Result<Diffeo> {
        if next.dim() != self.dim() {
            return Err(Error::dim("diffeomorphism composition", self.dim(), next.dim()));
        }
        Diffeo::new(
            Arc::new(ad::Compose::new(self.forward.clone(), next.forward.clone())),
            Arc::new(ad::Compose::new(next.inverse.clone(), self.inverse.clone())),
        )
    }
}

/// Provenance tag of a discretization map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum MapKind {
    ExplicitEuler,
    ImplicitEuler,
    Midpoint,
    Lifted,
    FromRetraction,
    Custom,
}

impl MapKind {
    pub const BUILTIN: [MapKind; 3] = [MapKind::ExplicitEuler, MapKind::ImplicitEuler, MapKind::Midpoint];

    pub fn is_builtin(self) -> bool {
        Self::BUILTIN.contains(&self)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MapKind::ExplicitEuler => "explicit-euler",
            MapKind::ImplicitEuler => "implicit-euler",
            MapKind::Midpoint => "midpoint",
            MapKind::Lifted => "lifted",
            MapKind::FromRetraction => "from-retraction",
            MapKind::Custom => "custom",
        }
    }
}

impl fmt::Display for MapKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MapKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            MapKind::ExplicitEuler,
            MapKind::ImplicitEuler,
            MapKind::Midpoint,
            MapKind::Lifted,
            MapKind::FromRetraction,
            MapKind::Custom,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::UnknownKind(s.to_string()))
    }
}

/// A discretization map `D = (D¹, D²)` together with its inverse.
pub trait DiscretizationMap: Send + Sync {
    fn dim(&self) -> usize;
    fn kind(&self) -> MapKind;
    fn apply(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
    /// `D⁻¹(x₀, x₁) = (base point, tangent vector)`.
    fn invert(&self, x0: &[f64], x1: &[f64]) -> Result<(Vec<f64>, Vec<f64>)>;
}

pub type MapRef = Arc<dyn DiscretizationMap>;

/// Closed-form builtin map, generic over the scalar.
pub(crate) fn builtin_apply<S: Scalar>(kind: MapKind, x: &[S], v: &[S]) -> (Vec<S>, Vec<S>) {
    let shifted = |c: f64| x.iter().zip(v).map(|(&a, &b)| a + b * c).collect::<Vec<S>>();
    match kind {
        MapKind::ExplicitEuler => (x.to_vec(), shifted(1.0)),
        MapKind::ImplicitEuler => (shifted(-1.0), x.to_vec()),
        MapKind::Midpoint => (shifted(-0.5), shifted(0.5)),
        _ => unreachable!("not a builtin map"),
    }
}

pub(crate) fn builtin_invert<S: Scalar>(kind: MapKind, x0: &[S], x1: &[S]) -> (Vec<S>, Vec<S>) {
    let diff: Vec<S> = x1.iter().zip(x0).map(|(&a, &b)| a - b).collect();
    let base = match kind {
        MapKind::ExplicitEuler => x0.to_vec(),
        MapKind::ImplicitEuler => x1.to_vec(),
        MapKind::Midpoint => x0.iter().zip(x1).map(|(&a, &b)| (a + b) * 0.5).collect(),
        _ => unreachable!("not a builtin map"),
    };
    (base, diff)
}

#[derive(Debug, Clone, Copy)]
pub struct BuiltinMap {
    kind: MapKind,
    dim: usize,
}

impl DiscretizationMap for BuiltinMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn kind(&self) -> MapKind {
        self.kind
    }
    fn apply(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("base point", self.dim, x)?;
        check_len("tangent vector", self.dim, v)?;
        Ok(builtin_apply(self.kind, x, v))
    }
    fn invert(&self, x0: &[f64], x1: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("first point", self.dim, x0)?;
        check_len("second point", self.dim, x1)?;
        Ok(builtin_invert(self.kind, x0, x1))
    }
}

fn check_len(what: &str, dim: usize, x: &[f64]) -> Result<()> {
    if x.len() == dim {
        Ok(())
    } else {
        Err(Error::dim(what, dim, x.len()))
    }
}

/// Explicit Euler `(x, x+v)`, implicit Euler `(x−v, x)` or midpoint
/// `(x−v/2, x+v/2)` on ℝ^dim.
pub fn make_builtin_map(kind: MapKind, dim: usize) -> Result<MapRef> {
    if !kind.is_builtin() {
        return Err(Error::UnknownKind(kind.to_string()));
    }
    if dim == 0 {
        return Err(Error::InvalidInput("map dimension must be at least 1".into()));
    }
    Ok(Arc::new(BuiltinMap { kind, dim }))
}

/// A retraction `R(x, v)`, given as a field on the stacked vector `(x, v)`.
#[derive(Clone)]
pub struct RetractionMap {
    dim: usize,
    field: FieldRef,
}

impl RetractionMap {
    pub fn new(dim: usize, field: FieldRef) -> Result<Self> {
        if field.dim_in() != 2 * dim {
            return Err(Error::dim("retraction input (x, v)", 2 * dim, field.dim_in()));
        }
        if field.dim_out() != dim {
            return Err(Error::dim("retraction output", dim, field.dim_out()));
        }
        Ok(Self { dim, field })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn apply(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        let xv: Vec<f64> = x.iter().chain(v).copied().collect();
        self.field.eval(&xv)
    }

    /// `∂R/∂v` at `(x, v)` by automatic differentiation.
    fn vertical_jacobian(&self, x: &[f64], v: &[f64]) -> DMatrix<f64> {
        let xv: Vec<f64> = x.iter().chain(v).copied().collect();
        let mut jac = DMatrix::zeros(self.dim, self.dim);
        let mut dir = vec![0.0; 2 * self.dim];
        for j in 0..self.dim {
            dir[self.dim + j] = 1.0;
            let col = jvp::<f64>(&*self.field, &xv, &dir).1;
            jac.set_column(j, &nalgebra::DVector::from_vec(col));
            dir[self.dim + j] = 0.0;
        }
        jac
    }
}

struct RetractionDiscretization {
    retraction: RetractionMap,
}

impl DiscretizationMap for RetractionDiscretization {
    fn dim(&self) -> usize {
        self.retraction.dim
    }
    fn kind(&self) -> MapKind {
        MapKind::FromRetraction
    }
    fn apply(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("base point", self.dim(), x)?;
        check_len("tangent vector", self.dim(), v)?;
        Ok((x.to_vec(), self.retraction.apply(x, v)))
    }
    fn invert(&self, x0: &[f64], x1: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("first point", self.dim(), x0)?;
        check_len("second point", self.dim(), x1)?;
        let seed: Vec<f64> = x1.iter().zip(x0).map(|(a, b)| a - b).collect();
        let sol = newton(
            |v| {
                Ok(self
                    .retraction
                    .apply(x0, v)
                    .iter()
                    .zip(x1)
                    .map(|(a, b)| a - b)
                    .collect())
            },
            |v| Ok(self.retraction.vertical_jacobian(x0, v)),
            &seed,
            NewtonOptions::default(),
        )?;
        Ok((x0.to_vec(), sol.x))
    }
}

/// `D(x, v) = (x, R(x, v))`; the inverse solves `R(x₀, v) = x₁` by Newton.
pub fn retraction_to_discretization(retraction: RetractionMap) -> MapRef {
    Arc::new(RetractionDiscretization { retraction })
}

/// `D_φ = (φ×φ)∘D∘Tφ⁻¹`.
struct LiftedMap {
    base: MapRef,
    phi: Diffeo,
}

impl DiscretizationMap for LiftedMap {
    fn dim(&self) -> usize {
        self.base.dim()
    }
    fn kind(&self) -> MapKind {
        MapKind::Lifted
    }
    fn apply(&self, y: &[f64], ydot: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("base point", self.dim(), y)?;
        check_len("tangent vector", self.dim(), ydot)?;
        let x = self.phi.invert(y)?;
        let v = self.phi.pull(y, ydot);
        let (a, b) = self.base.apply(&x, &v)?;
        Ok((self.phi.apply(&a), self.phi.apply(&b)))
    }
    fn invert(&self, y0: &[f64], y1: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("first point", self.dim(), y0)?;
        check_len("second point", self.dim(), y1)?;
        let x0 = self.phi.invert(y0)?;
        let x1 = self.phi.invert(y1)?;
        let (x, v) = self.base.invert(&x0, &x1)?;
        let w = self.phi.push(&x, &v);
        Ok((self.phi.apply(&x), w))
    }
}

/// Lift of `base` (a map on the domain of `phi`) to the image of `phi`.
pub fn lift_map(base: MapRef, phi: Diffeo) -> Result<MapRef> {
    if base.dim() != phi.dim() {
        return Err(Error::dim("lifted map", phi.dim(), base.dim()));
    }
    Ok(Arc::new(LiftedMap { base, phi }))
}

type PairFn = dyn Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync;

/// A user-supplied map; the inverse defaults to Newton on `D(x, v) = (x₀, x₁)`.
pub struct CustomMap {
    dim: usize,
    apply: Box<PairFn>,
    inverse: Option<Box<PairFn>>,
}

impl CustomMap {
    pub fn new(
        dim: usize,
        apply: impl Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            apply: Box::new(apply),
            inverse: None,
        }
    }

    pub fn with_inverse(
        mut self,
        inverse: impl Fn(&[f64], &[f64]) -> (Vec<f64>, Vec<f64>) + Send + Sync + 'static,
    ) -> Self {
        self.inverse = Some(Box::new(inverse));
        self
    }

    pub fn into_ref(self) -> MapRef {
        Arc::new(self)
    }
}

impl DiscretizationMap for CustomMap {
    fn dim(&self) -> usize {
        self.dim
    }
    fn kind(&self) -> MapKind {
        MapKind::Custom
    }
    fn apply(&self, x: &[f64], v: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("base point", self.dim, x)?;
        check_len("tangent vector", self.dim, v)?;
        Ok((self.apply)(x, v))
    }
    fn invert(&self, x0: &[f64], x1: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
        check_len("first point", self.dim, x0)?;
        check_len("second point", self.dim, x1)?;
        if let Some(inv) = &self.inverse {
            return Ok(inv(x0, x1));
        }
        let d = self.dim;
        let stacked = |xv: &[f64]| {
            let (a, b) = (self.apply)(&xv[..d], &xv[d..]);
            a.into_iter().chain(b).collect::<Vec<f64>>()
        };
        let target: Vec<f64> = x0.iter().chain(x1).copied().collect();
        let seed: Vec<f64> = x0
            .iter()
            .copied()
            .chain(x1.iter().zip(x0).map(|(a, b)| a - b))
            .collect();
        let sol = newton(
            |xv| Ok(stacked(xv).iter().zip(&target).map(|(a, b)| a - b).collect()),
            |xv| Ok(ad::jacobian_fd_fn(stacked, xv, 2 * d)),
            &seed,
            NewtonOptions::default(),
        )?;
        Ok((sol.x[..d].to_vec(), sol.x[d..].to_vec()))
    }
}

/// Tolerance on `D(x, 0) = (x, x)`.
pub const ZERO_SECTION_TOL: f64 = 1e-12;
/// Tolerance on the derivative condition.
pub const DERIVATIVE_TOL: f64 = 1e-6;
/// Central-difference step for the derivative condition.
pub const AXIOM_FD_STEP: f64 = 1e-6;

/// Outcome of an axiom check over a sample of base points.
#[derive(Debug, Clone, Serialize)]
pub struct AxiomReport {
    pub points: usize,
    /// Worst `‖D(x,0) − (x,x)‖∞` (or `‖R(x,0) − x‖∞`).
    pub zero_defect: f64,
    pub zero_worst_at: Option<Vec<f64>>,
    /// Worst max-entry deviation of the vertical derivative from the identity.
    pub derivative_defect: f64,
    pub derivative_worst_at: Option<Vec<f64>>,
    pub passed: bool,
}

impl AxiomReport {
    fn from_samples(samples: Vec<(Vec<f64>, f64, f64)>) -> Self {
        let points = samples.len();
        let mut report = AxiomReport {
            points,
            zero_defect: 0.0,
            zero_worst_at: None,
            derivative_defect: 0.0,
            derivative_worst_at: None,
            passed: true,
        };
        for (x, zero, deriv) in samples {
            if !(zero <= report.zero_defect) {
                report.zero_defect = zero;
                report.zero_worst_at = Some(x.clone());
            }
            if !(deriv <= report.derivative_defect) {
                report.derivative_defect = deriv;
                report.derivative_worst_at = Some(x);
            }
        }
        report.passed =
            report.zero_defect <= ZERO_SECTION_TOL && report.derivative_defect <= DERIVATIVE_TOL;
        report
    }
}

fn identity_deviation(cols: impl Iterator<Item = Vec<f64>>) -> f64 {
    cols.enumerate()
        .flat_map(|(j, col)| {
            col.into_iter()
                .enumerate()
                .map(move |(i, c)| (c - if i == j { 1.0 } else { 0.0 }).abs())
        })
        .fold(0.0, |m: f64, v| if v.is_nan() { f64::INFINITY } else { m.max(v) })
}

/// Checks `D(x,0) = (x,x)` and `(∂D²/∂v − ∂D¹/∂v)|_{v=0} = I` at each point.
pub fn check_map_axioms(map: &dyn DiscretizationMap, points: &[Vec<f64>]) -> AxiomReport {
    let d = map.dim();
    let t = AXIOM_FD_STEP;
    let samples = points
        .iter()
        .map(|x| {
            let zero = match map.apply(x, &vec![0.0; d]) {
                Ok((a, b)) => a
                    .iter()
                    .chain(&b)
                    .zip(x.iter().chain(x))
                    .fold(0.0, |m: f64, (p, q)| m.max((p - q).abs())),
                Err(_) => f64::INFINITY,
            };
            let gap = |v: &[f64]| -> Option<Vec<f64>> {
                let (a, b) = map.apply(x, v).ok()?;
                Some(b.iter().zip(&a).map(|(p, q)| p - q).collect())
            };
            let cols: Option<Vec<Vec<f64>>> = (0..d)
                .map(|j| {
                    let mut v = vec![0.0; d];
                    v[j] = t;
                    let plus = gap(&v)?;
                    v[j] = -t;
                    let minus = gap(&v)?;
                    Some(plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * t)).collect())
                })
                .collect();
            let deriv = cols.map_or(f64::INFINITY, |c| identity_deviation(c.into_iter()));
            (x.clone(), zero, deriv)
        })
        .collect();
    AxiomReport::from_samples(samples)
}

/// Checks `R(x,0) = x` and `∂R/∂v|_{v=0} = I` at each point.
pub fn check_retraction_axioms(retraction: &RetractionMap, points: &[Vec<f64>]) -> AxiomReport {
    let d = retraction.dim;
    let t = AXIOM_FD_STEP;
    let samples = points
        .iter()
        .map(|x| {
            let r0 = retraction.apply(x, &vec![0.0; d]);
            let zero = r0
                .iter()
                .zip(x)
                .fold(0.0, |m: f64, (p, q)| if (p - q).is_nan() { f64::INFINITY } else { m.max((p - q).abs()) });
            let cols = (0..d).map(|j| {
                let mut v = vec![0.0; d];
                v[j] = t;
                let plus = retraction.apply(x, &v);
                v[j] = -t;
                let minus = retraction.apply(x, &v);
                plus.iter().zip(&minus).map(|(p, m)| (p - m) / (2.0 * t)).collect()
            });
            (x.clone(), zero, identity_deviation(cols))
        })
        .collect();
    AxiomReport::from_samples(samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smooth_map;

    smooth_map!(Cubic2(2 => 2) |x| { vec![x[0] + x[0] * x[0] * x[0], x[1] * 2.0 + x[0]] });

    #[test]
    fn explicit_euler_definition() {
        let m = make_builtin_map(MapKind::ExplicitEuler, 2).unwrap();
        let (a, b) = m.apply(&[1.0, 2.0], &[0.1, 0.0]).unwrap();
        assert_eq!(a, vec![1.0, 2.0]);
        assert_eq!(b, vec![1.1, 2.0]);
    }

    #[test]
    fn midpoint_inverse_definition() {
        let m = make_builtin_map(MapKind::Midpoint, 2).unwrap();
        let (x, v) = m.invert(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_eq!(x, vec![0.5, 0.0]);
        assert_eq!(v, vec![1.0, 0.0]);
    }

    #[test]
    fn zero_vector_maps_to_diagonal() {
        for kind in MapKind::BUILTIN {
            let m = make_builtin_map(kind, 3).unwrap();
            let x = [0.3, -0.2, 1.5];
            let (a, b) = m.apply(&x, &[0.0; 3]).unwrap();
            assert_eq!(a, x.to_vec());
            assert_eq!(b, x.to_vec());
        }
    }

    #[test]
    fn non_builtin_kinds_are_rejected() {
        assert!(matches!(
            make_builtin_map(MapKind::Lifted, 2),
            Err(Error::UnknownKind(_))
        ));
        assert!(matches!("trapezoid".parse::<MapKind>(), Err(Error::UnknownKind(_))));
        assert!(make_builtin_map(MapKind::Midpoint, 0).is_err());
        assert_eq!("implicit-euler".parse::<MapKind>().unwrap(), MapKind::ImplicitEuler);
    }

    #[test]
    fn broken_map_fails_derivative_axiom() {
        let broken = CustomMap::new(2, |x, v| {
            (x.to_vec(), x.iter().zip(v).map(|(a, b)| a + 2.0 * b).collect())
        });
        let report = check_map_axioms(&broken, &[vec![0.1, 0.2], vec![-0.5, 0.4]]);
        assert!(!report.passed);
        assert!(report.zero_defect <= ZERO_SECTION_TOL);
        assert!((report.derivative_defect - 1.0).abs() < 1e-6);
    }

    #[test]
    fn newton_diffeo_inverts() {
        let phi = Diffeo::newton(Arc::new(Cubic2)).unwrap();
        let x = [0.4, -0.7];
        let y = phi.apply(&x);
        let back = phi.invert(&y).unwrap();
        assert!((back[0] - x[0]).abs() < 1e-12 && (back[1] - x[1]).abs() < 1e-12);
        // D(φ⁻¹)(y)·(Dφ(x)·v) = v
        let v = [0.3, 0.9];
        let w = phi.push(&x, &v);
        let v2 = phi.pull(&y, &w);
        assert!((v2[0] - v[0]).abs() < 1e-10 && (v2[1] - v[1]).abs() < 1e-10);
    }

    #[test]
    fn custom_map_numeric_inverse() {
        let m = CustomMap::new(1, |x, v| (x.to_vec(), vec![x[0] + v[0] + v[0] * v[0]]));
        let (x, v) = m.invert(&[0.5], &[0.62]).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-10);
        assert!((v[0] + v[0] * v[0] - 0.12).abs() < 1e-10);
    }
}
