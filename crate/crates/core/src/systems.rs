//! Control-affine systems, dynamic compensators and linearizing data.
//!
//! Matrix-valued maps (input matrices, feedback gains) are stored as fields
//! with column-major output: entry `(i, j)` of an `r×c` matrix is component
//! `j·r + i`, so each column is a contiguous slice.

use std::fmt;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::ad::{self, jacobian_ad, ConstField, FieldRef, Scalar, SmoothMap};
use crate::geometry::{newton_invert, ChartGuard, Diffeo, INVERSE_TOL};
use crate::linalg::{self, inf_norm};
use crate::{Error, Result};

fn expect_dims(what: &str, f: &FieldRef, din: usize, dout: usize) -> Result<()> {
    if f.dim_in() != din {
        return Err(Error::dim(format!("{what} input"), din, f.dim_in()));
    }
    if f.dim_out() != dout {
        return Err(Error::dim(format!("{what} output"), dout, f.dim_out()));
    }
    Ok(())
}

fn check_len(what: &str, expected: usize, v: &[f64]) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::dim(what, expected, v.len()))
    }
}

/// Reshapes column-major data into a matrix.
pub fn column_major(rows: usize, cols: usize, data: &[f64]) -> DMatrix<f64> {
    DMatrix::from_column_slice(rows, cols, data)
}

/// `ẋ = f(x) + g(x)u` with `x ∈ ℝⁿ`, `u ∈ ℝᵐ`.
#[derive(Clone)]
pub struct ControlAffineSystem {
    n: usize,
    m: usize,
    drift: FieldRef,
    inputs: FieldRef,
    guard: ChartGuard,
}

impl fmt::Debug for ControlAffineSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ControlAffineSystem")
            .field("n", &self.n)
            .field("m", &self.m)
            .field("guard", &self.guard)
            .finish()
    }
}

impl ControlAffineSystem {
    /// `inputs` maps ℝⁿ to the column-major `n×m` matrix `g(x)`.
    pub fn new(drift: FieldRef, inputs: FieldRef, m: usize) -> Result<Self> {
        let n = drift.dim_in();
        expect_dims("drift f", &drift, n, n)?;
        expect_dims("input matrix g", &inputs, n, n * m)?;
        Ok(Self {
            n,
            m,
            drift,
            inputs,
            guard: ChartGuard::everywhere(),
        })
    }

    pub fn with_guard(mut self, guard: ChartGuard) -> Self {
        self.guard = guard;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn drift(&self) -> &FieldRef {
        &self.drift
    }

    pub fn inputs(&self) -> &FieldRef {
        &self.inputs
    }

    pub fn guard(&self) -> &ChartGuard {
        &self.guard
    }

    pub fn f(&self, x: &[f64]) -> Vec<f64> {
        self.drift.eval(x)
    }

    pub fn g(&self, x: &[f64]) -> DMatrix<f64> {
        column_major(self.n, self.m, &self.inputs.eval(x))
    }

    /// The input vector field `g_j` as a field of its own.
    pub fn input_field(&self, j: usize) -> FieldRef {
        assert!(j < self.m, "input index {j} out of range");
        Arc::new(InputColumn {
            inputs: self.inputs.clone(),
            n: self.n,
            j,
        })
    }

    /// `f(x) + g(x)u`, without the chart check.
    pub fn velocity(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        affine_velocity(&*self.drift, &*self.inputs, x, u)
    }

    /// Numerical rank of `g(x)`.
    pub fn input_rank(&self, x: &[f64]) -> usize {
        linalg::rank(&self.g(x))
    }
}

pub(crate) fn affine_velocity<S: Scalar>(
    drift: &dyn ad::Field,
    inputs: &dyn ad::Field,
    x: &[S],
    u: &[S],
) -> Vec<S> {
    let mut v = S::call(drift, x);
    let n = v.len();
    if u.is_empty() {
        return v;
    }
    let g = S::call(inputs, x);
    for (j, &uj) in u.iter().enumerate() {
        for i in 0..n {
            v[i] = v[i] + g[j * n + i] * uj;
        }
    }
    v
}

struct InputColumn {
    inputs: FieldRef,
    n: usize,
    j: usize,
}

impl SmoothMap for InputColumn {
    fn dims(&self) -> (usize, usize) {
        (self.n, self.n)
    }
    fn apply<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let g = S::call(&*self.inputs, x);
        g[self.j * self.n..(self.j + 1) * self.n].to_vec()
    }
}

/// `u = α(x,w) + β(x,w)μ`, `ẇ = γ(x,w) + δ(x,w)μ` with `w ∈ ℝ^q`.
///
/// All maps take the stacked vector `(x, w)`; `β` and `δ` return
/// column-major `m×m` and `q×m` matrices.
#[derive(Clone)]
pub struct DynamicCompensator {
    pub q: usize,
    pub alpha: FieldRef,
    pub beta: FieldRef,
    pub gamma: FieldRef,
    pub delta: FieldRef,
    pub w0: Vec<f64>,
}

impl DynamicCompensator {
    /// Compensator with `w₀ = 0`.
    pub fn new(q: usize, alpha: FieldRef, beta: FieldRef, gamma: FieldRef, delta: FieldRef) -> Self {
        Self {
            q,
            alpha,
            beta,
            gamma,
            delta,
            w0: vec![0.0; q],
        }
    }

    /// `q = 0`, `α = 0`, `β = I`.
    pub fn identity(n: usize, m: usize) -> Self {
        let eye: Vec<f64> = DMatrix::<f64>::identity(m, m).as_slice().to_vec();
        Self::new(
            0,
            Arc::new(ConstField::zeros(n, m)),
            Arc::new(ConstField::new(n, eye)),
            Arc::new(ConstField::zeros(n, 0)),
            Arc::new(ConstField::zeros(n, 0)),
        )
    }
}

impl fmt::Debug for DynamicCompensator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DynamicCompensator")
            .field("q", &self.q)
            .field("w0", &self.w0)
            .finish()
    }
}

/// `ξ̇ = F(ξ) + G(ξ)μ` on ℝ^{n+q}.
#[derive(Clone, Debug)]
pub struct ExtendedSystem {
    system: ControlAffineSystem,
    base_dim: usize,
    provenance: Option<Arc<(ControlAffineSystem, DynamicCompensator)>>,
}

impl ExtendedSystem {
    /// An already-extended system given directly by `F` and `G`.
    pub fn direct(system: ControlAffineSystem) -> Self {
        Self {
            base_dim: system.n,
            system,
            provenance: None,
        }
    }

    pub fn dim(&self) -> usize {
        self.system.n
    }

    pub fn m(&self) -> usize {
        self.system.m
    }

    /// `n` of the original system.
    pub fn base_dim(&self) -> usize {
        self.base_dim
    }

    pub fn compensator_dim(&self) -> usize {
        self.system.n - self.base_dim
    }

    pub fn provenance(&self) -> Option<(&ControlAffineSystem, &DynamicCompensator)> {
        self.provenance.as_deref().map(|(s, c)| (s, c))
    }

    pub fn as_control_affine(&self) -> &ControlAffineSystem {
        &self.system
    }

    pub fn drift(&self) -> &FieldRef {
        &self.system.drift
    }

    pub fn inputs(&self) -> &FieldRef {
        &self.system.inputs
    }

    pub fn guard(&self) -> &ChartGuard {
        &self.system.guard
    }

    pub fn with_guard(mut self, guard: ChartGuard) -> Self {
        self.system.guard = guard;
        self
    }

    /// `F(ξ) + G(ξ)μ`, without the chart check.
    pub fn velocity(&self, xi: &[f64], mu: &[f64]) -> Vec<f64> {
        self.system.velocity(xi, mu)
    }

    /// Initial extended state `(x₀, w₀)`.
    pub fn initial_state(&self, x0: &[f64]) -> Vec<f64> {
        let w0 = self
            .provenance
            .as_ref()
            .map(|p| p.1.w0.clone())
            .unwrap_or_default();
        x0.iter().copied().chain(w0).collect()
    }
}

struct ExtendedDrift {
    n: usize,
    q: usize,
    m: usize,
    f: FieldRef,
    g: FieldRef,
    alpha: FieldRef,
    gamma: FieldRef,
}

impl SmoothMap for ExtendedDrift {
    fn dims(&self) -> (usize, usize) {
        (self.n + self.q, self.n + self.q)
    }
    fn apply<S: Scalar>(&self, xi: &[S]) -> Vec<S> {
        let x = &xi[..self.n];
        let a = S::call(&*self.alpha, xi);
        let mut out = affine_velocity(&*self.f, &*self.g, x, &a[..self.m]);
        out.extend(S::call(&*self.gamma, xi));
        out
    }
}

struct ExtendedInputs {
    n: usize,
    q: usize,
    m: usize,
    g: FieldRef,
    beta: FieldRef,
    delta: FieldRef,
}

impl SmoothMap for ExtendedInputs {
    fn dims(&self) -> (usize, usize) {
        let d = self.n + self.q;
        (d, d * self.m)
    }
    fn apply<S: Scalar>(&self, xi: &[S]) -> Vec<S> {
        let (n, q, m) = (self.n, self.q, self.m);
        let g = S::call(&*self.g, &xi[..n]);
        let beta = S::call(&*self.beta, xi);
        let delta = S::call(&*self.delta, xi);
        let mut out = Vec::with_capacity((n + q) * m);
        for j in 0..m {
            for i in 0..n {
                out.push((0..m).fold(S::zero(), |acc, k| acc + g[k * n + i] * beta[j * m + k]));
            }
            out.extend_from_slice(&delta[j * q..(j + 1) * q]);
        }
        out
    }
}

/// Closes the loop with a dynamic compensator:
/// `F = (f + gα, γ)`, `G = (gβ, δ)`.
pub fn extend(sys: &ControlAffineSystem, comp: &DynamicCompensator) -> Result<ExtendedSystem> {
    let (n, m, q) = (sys.n, sys.m, comp.q);
    let d = n + q;
    expect_dims("compensator map α", &comp.alpha, d, m)?;
    expect_dims("compensator map β", &comp.beta, d, m * m)?;
    expect_dims("compensator map γ", &comp.gamma, d, q)?;
    expect_dims("compensator map δ", &comp.delta, d, q * m)?;
    check_len("compensator initial state w₀", q, &comp.w0)?;
    let drift: FieldRef = Arc::new(ExtendedDrift {
        n,
        q,
        m,
        f: sys.drift.clone(),
        g: sys.inputs.clone(),
        alpha: comp.alpha.clone(),
        gamma: comp.gamma.clone(),
    });
    let inputs: FieldRef = Arc::new(ExtendedInputs {
        n,
        q,
        m,
        g: sys.inputs.clone(),
        beta: comp.beta.clone(),
        delta: comp.delta.clone(),
    });
    let base_guard = sys.guard.clone();
    let label = base_guard.label().to_string();
    let guard = ChartGuard::new(&label, move |xi| base_guard.margin(&xi[..n]));
    let system = ControlAffineSystem::new(drift, inputs, m)?.with_guard(guard);
    Ok(ExtendedSystem {
        system,
        base_dim: n,
        provenance: Some(Arc::new((sys.clone(), comp.clone()))),
    })
}

/// `F(ξ) + G(ξ)μ`, failing off the chart.
pub fn eval_dynamics(ext: &ExtendedSystem, xi: &[f64], mu: &[f64]) -> Result<Vec<f64>> {
    check_len("extended state ξ", ext.dim(), xi)?;
    check_len("control μ", ext.m(), mu)?;
    let guard = ext.guard();
    let margin = guard.margin(xi);
    if !(margin > 0.0) {
        return Err(Error::Domain {
            guard: guard.label().to_string(),
            margin,
        });
    }
    Ok(ext.velocity(xi, mu))
}

/// Linearizing coordinates and feedback: `z = Φ(ξ)`, `μ = α̃(ξ) + β̃(ξ)v`,
/// with target `ż = Az + Bv`.
#[derive(Clone)]
pub struct LinearizingData {
    phi: FieldRef,
    phi_inv: Option<FieldRef>,
    diffeo: Diffeo,
    alpha: FieldRef,
    beta: FieldRef,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    guard: ChartGuard,
}

impl fmt::Debug for LinearizingData {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("LinearizingData")
            .field("dim", &self.dim())
            .field("m", &self.m())
            .field("closed_form_inverse", &self.phi_inv.is_some())
            .field("guard", &self.guard)
            .finish()
    }
}

impl LinearizingData {
    pub fn new(
        phi: FieldRef,
        phi_inv: Option<FieldRef>,
        alpha: FieldRef,
        beta: FieldRef,
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        guard: ChartGuard,
    ) -> Result<Self> {
        let d = phi.dim_in();
        let m = b.ncols();
        if a.nrows() != d || a.ncols() != d {
            return Err(Error::dim("matrix A", d, if a.nrows() != d { a.nrows() } else { a.ncols() }));
        }
        if b.nrows() != d {
            return Err(Error::dim("matrix B rows", d, b.nrows()));
        }
        expect_dims("feedback α̃", &alpha, d, m)?;
        expect_dims("feedback β̃", &beta, d, m * m)?;
        let diffeo = match &phi_inv {
            Some(inv) => Diffeo::new(phi.clone(), inv.clone())?,
            None => Diffeo::newton(phi.clone())?,
        };
        Ok(Self {
            phi,
            phi_inv,
            diffeo,
            alpha,
            beta,
            a,
            b,
            guard,
        })
    }

    pub fn dim(&self) -> usize {
        self.phi.dim_in()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    pub fn phi(&self) -> &FieldRef {
        &self.phi
    }

    pub fn has_closed_form_inverse(&self) -> bool {
        self.phi_inv.is_some()
    }

    /// `Φ` with its inverse.
    pub fn diffeo(&self) -> &Diffeo {
        &self.diffeo
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn guard(&self) -> &ChartGuard {
        &self.guard
    }

    pub fn alpha_field(&self) -> &FieldRef {
        &self.alpha
    }

    pub fn beta_field(&self) -> &FieldRef {
        &self.beta
    }

    pub fn transform(&self, xi: &[f64]) -> Vec<f64> {
        self.phi.eval(xi)
    }

    pub fn jacobian(&self, xi: &[f64]) -> DMatrix<f64> {
        jacobian_ad(&*self.phi, xi)
    }

    /// `(α̃(ξ), β̃(ξ))`, failing where the feedback is singular.
    pub fn feedback_terms(&self, xi: &[f64]) -> Result<(Vec<f64>, DMatrix<f64>)> {
        check_len("extended state ξ", self.dim(), xi)?;
        let margin = self.guard.margin(xi);
        if !(margin > 0.0) {
            return Err(Error::Singular {
                guard: self.guard.label().to_string(),
                margin,
            });
        }
        let m = self.m();
        Ok((self.alpha.eval(xi), column_major(m, m, &self.beta.eval(xi))))
    }

    /// `μ = α̃(ξ) + β̃(ξ)v`.
    pub fn feedback(&self, xi: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        check_len("new control v", self.m(), v)?;
        let (alpha, beta) = self.feedback_terms(xi)?;
        Ok(alpha
            .iter()
            .enumerate()
            .map(|(i, a)| a + (0..v.len()).map(|j| beta[(i, j)] * v[j]).sum::<f64>())
            .collect())
    }
}

/// `apply_feedback(lin, ξ, v) = α̃(ξ) + β̃(ξ)v`.
pub fn apply_feedback(lin: &LinearizingData, xi: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    lin.feedback(xi, v)
}

/// `Φ⁻¹(z)`: the closed form when available, else damped Newton seeded from
/// `hint` (or from `z` itself). The result satisfies `‖Φ(ξ) − z‖∞ ≤ 1e-10`
/// relative to `max(1, ‖z‖∞)`.
pub fn inverse_transform(lin: &LinearizingData, z: &[f64], hint: Option<&[f64]>) -> Result<Vec<f64>> {
    check_len("linear coordinates z", lin.dim(), z)?;
    if lin.phi_inv.is_some() {
        return lin.diffeo.invert(z);
    }
    let seed = hint.unwrap_or(z);
    check_len("inversion hint", lin.dim(), seed)?;
    let xi = newton_invert(&*lin.phi, z, seed)?;
    let back = lin.phi.eval(&xi);
    let residual = inf_norm(&back.iter().zip(z).map(|(a, b)| a - b).collect::<Vec<_>>());
    if residual <= INVERSE_TOL * inf_norm(z).max(1.0) {
        Ok(xi)
    } else {
        Err(Error::InversionFailed {
            residual,
            iterations: 50,
        })
    }
}

/// Worst residuals of the linearization identities over a sample.
#[derive(Debug, Clone, Serialize)]
pub struct LinearizationReport {
    pub points: usize,
    /// `max ‖DΦ·(F + Gα̃) − AΦ‖∞`
    pub drift_residual: f64,
    pub drift_worst_at: Option<Vec<f64>>,
    /// `max ‖DΦ·G·β̃ − B‖` (largest entry)
    pub input_residual: f64,
    pub input_worst_at: Option<Vec<f64>>,
    pub passed: bool,
}

pub const LINEARIZATION_TOL: f64 = 1e-9;

/// Checks `DΦ(F + Gα̃) = AΦ` and `DΦ·G·β̃ = B` at every point.
pub fn verify_linearization(
    ext: &ExtendedSystem,
    lin: &LinearizingData,
    points: &[Vec<f64>],
) -> Result<LinearizationReport> {
    if ext.dim() != lin.dim() {
        return Err(Error::dim("linearizing data", ext.dim(), lin.dim()));
    }
    if ext.m() != lin.m() {
        return Err(Error::dim("linearizing data inputs", ext.m(), lin.m()));
    }
    let (d, m) = (ext.dim(), ext.m());
    let mut report = LinearizationReport {
        points: points.len(),
        drift_residual: 0.0,
        drift_worst_at: None,
        input_residual: 0.0,
        input_worst_at: None,
        passed: false,
    };
    for xi in points {
        check_len("sample point", d, xi)?;
        let dphi = lin.jacobian(xi);
        let (alpha, beta) = lin.feedback_terms(xi)?;
        let g = column_major(d, m, &ext.inputs().eval(xi));
        let vel = nalgebra::DVector::from_vec(ext.velocity(xi, &alpha));
        let z = nalgebra::DVector::from_vec(lin.transform(xi));
        let drift = (&dphi * vel - &lin.a * z).amax();
        let input = (&dphi * &g * &beta - &lin.b).amax();
        if !(drift <= report.drift_residual) {
            report.drift_residual = drift;
            report.drift_worst_at = Some(xi.clone());
        }
        if !(input <= report.input_residual) {
            report.input_residual = input;
            report.input_worst_at = Some(xi.clone());
        }
    }
    report.passed =
        report.drift_residual <= LINEARIZATION_TOL && report.input_residual <= LINEARIZATION_TOL;
    Ok(report)
}

/// `z_{k+1} = A_h z_k + B_h v_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteLTI {
    a_h: DMatrix<f64>,
    b_h: DMatrix<f64>,
    h: f64,
}

impl DiscreteLTI {
    pub(crate) fn new(a_h: DMatrix<f64>, b_h: DMatrix<f64>, h: f64) -> Self {
        Self { a_h, b_h, h }
    }

    pub fn a_h(&self) -> &DMatrix<f64> {
        &self.a_h
    }

    pub fn b_h(&self) -> &DMatrix<f64> {
        &self.b_h
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn step(&self, z: &[f64], v: &[f64]) -> Vec<f64> {
        let z = nalgebra::DVector::from_column_slice(z);
        let v = nalgebra::DVector::from_column_slice(v);
        (&self.a_h * z + &self.b_h * v).as_slice().to_vec()
    }
}
