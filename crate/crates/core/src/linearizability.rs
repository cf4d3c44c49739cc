//! Lie brackets, distributions and linearizability tests.
//!
//! Distributions are spans of vector fields and every query is pointwise:
//! ranks, sums, intersections and involutivity are decided at sample points
//! with the singular-value rank of [`crate::linalg::rank`].

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::ad::{jacobian_ad, jacobian_at, jvp, primal, ConstField, FieldRef, FnField, Scalar, SmoothMap, MAX_DEPTH};
use crate::geometry::{refine_root, ChartGuard};
use crate::integrator::{DiscreteScheme, EulerStep};
use crate::linalg::{self, gram_schmidt, newton, solve_generic, NewtonOptions};
use crate::systems::{ControlAffineSystem, DiscreteLTI, ExtendedSystem};
use crate::{Error, Result};

pub use crate::ad::{jacobian, Provider};

/// `[X, Y] = DY·X − DX·Y` as a field.
pub struct Bracket {
    x: FieldRef,
    y: FieldRef,
}

impl SmoothMap for Bracket {
    fn dims(&self) -> (usize, usize) {
        (self.x.dim_in(), self.x.dim_out())
    }
    fn apply<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let xv = S::call(&*self.x, p);
        let yv = S::call(&*self.y, p);
        let (_, dy_x) = jvp::<S>(&*self.y, p, &xv);
        let (_, dx_y) = jvp::<S>(&*self.x, p, &yv);
        dy_x.into_iter().zip(dx_y).map(|(a, b)| a - b).collect()
    }
}

fn check_vector_field(what: &str, f: &FieldRef, d: usize) -> Result<()> {
    if f.dim_in() != d {
        return Err(Error::dim(format!("{what} input"), d, f.dim_in()));
    }
    if f.dim_out() != d {
        return Err(Error::dim(format!("{what} output"), d, f.dim_out()));
    }
    Ok(())
}

pub fn lie_bracket_field(x: FieldRef, y: FieldRef) -> Result<FieldRef> {
    let d = x.dim_in();
    check_vector_field("bracket argument X", &x, d)?;
    check_vector_field("bracket argument Y", &y, d)?;
    Ok(Arc::new(Bracket { x, y }))
}

/// `[X, Y](p)`.
pub fn lie_bracket(x: &FieldRef, y: &FieldRef, p: &[f64]) -> Result<Vec<f64>> {
    let d = x.dim_in();
    check_vector_field("bracket argument X", x, d)?;
    check_vector_field("bracket argument Y", y, d)?;
    if p.len() != d {
        return Err(Error::dim("bracket point", d, p.len()));
    }
    Ok(bracket_at(&**x, &**y, p))
}

fn bracket_at(x: &dyn crate::ad::Field, y: &dyn crate::ad::Field, p: &[f64]) -> Vec<f64> {
    let xv = x.eval(p);
    let yv = y.eval(p);
    let dy_x = jvp::<f64>(y, p, &xv).1;
    let dx_y = jvp::<f64>(x, p, &yv).1;
    dy_x.iter().zip(&dx_y).map(|(a, b)| a - b).collect()
}

/// First pair of generators whose bracket leaves the distribution.
#[derive(Debug, Clone, Serialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub pair: (usize, usize),
    pub labels: (String, String),
    pub rank_before: usize,
    pub rank_after: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct Involutivity {
    pub involutive: bool,
    /// Rank at each point checked.
    pub ranks: Vec<usize>,
    pub witness: Option<Witness>,
}

/// A span of vector fields on ℝ^d.
#[derive(Clone)]
pub struct Distribution {
    dim: usize,
    generators: Vec<FieldRef>,
    labels: Vec<String>,
}

impl std::fmt::Debug for Distribution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Distribution")
            .field("dim", &self.dim)
            .field("generators", &self.labels)
            .finish()
    }
}

impl Distribution {
    pub fn empty(dim: usize) -> Self {
        Self {
            dim,
            generators: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn with(mut self, label: impl Into<String>, field: FieldRef) -> Result<Self> {
        check_vector_field("generator", &field, self.dim)?;
        self.generators.push(field);
        self.labels.push(label.into());
        Ok(self)
    }

    pub fn from_fields(dim: usize, fields: impl IntoIterator<Item = (String, FieldRef)>) -> Result<Self> {
        fields
            .into_iter()
            .try_fold(Self::empty(dim), |d, (label, f)| d.with(label, f))
    }

    /// Span of constant vectors.
    pub fn constant(dim: usize, vectors: &[Vec<f64>]) -> Result<Self> {
        Self::from_fields(
            dim,
            vectors.iter().enumerate().map(|(i, v)| {
                (format!("c{}", i + 1), Arc::new(ConstField::new(dim, v.clone())) as FieldRef)
            }),
        )
    }

    /// `span{e_i : i ∈ indices}` (zero-based).
    pub fn coordinate(dim: usize, indices: &[usize]) -> Result<Self> {
        let vectors: Vec<Vec<f64>> = indices
            .iter()
            .map(|&i| {
                if i >= dim {
                    return Err(Error::InvalidInput(format!("coordinate {i} outside ℝ^{dim}")));
                }
                let mut e = vec![0.0; dim];
                e[i] = 1.0;
                Ok(e)
            })
            .collect::<Result<_>>()?;
        let mut d = Self::constant(dim, &vectors)?;
        d.labels = indices.iter().map(|i| format!("e{}", i + 1)).collect();
        Ok(d)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.generators.len()
    }

    pub fn is_empty(&self) -> bool {
        self.generators.is_empty()
    }

    pub fn generators(&self) -> &[FieldRef] {
        &self.generators
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Generators evaluated at `p`, as columns.
    pub fn matrix_at(&self, p: &[f64]) -> DMatrix<f64> {
        let cols: Vec<_> = self
            .generators
            .iter()
            .map(|g| nalgebra::DVector::from_vec(g.eval(p)))
            .collect();
        if cols.is_empty() {
            DMatrix::zeros(self.dim, 0)
        } else {
            DMatrix::from_columns(&cols)
        }
    }

    pub fn rank_at(&self, p: &[f64]) -> usize {
        linalg::rank(&self.matrix_at(p))
    }

    /// Orthonormal basis of the span at `p`.
    pub fn basis_at(&self, p: &[f64]) -> DMatrix<f64> {
        linalg::column_space(&self.matrix_at(p))
    }

    /// Whether `v` lies in the span at `p`.
    pub fn contains_at(&self, p: &[f64], v: &[f64]) -> bool {
        let m = self.matrix_at(p);
        let r = linalg::rank(&m);
        let k = m.ncols();
        let mut extended = m.insert_column(k, 0.0);
        extended.set_column(k, &nalgebra::DVector::from_column_slice(v));
        linalg::rank(&extended) == r
    }

    /// Generators of both.
    pub fn sum(&self, other: &Distribution) -> Result<Distribution> {
        if other.dim != self.dim {
            return Err(Error::dim("distribution sum", self.dim, other.dim));
        }
        let mut out = self.clone();
        out.generators.extend(other.generators.iter().cloned());
        out.labels.extend(other.labels.iter().cloned());
        Ok(out)
    }

    /// Intersection at `p`, as constant generators.
    pub fn intersect(&self, other: &Distribution, p: &[f64]) -> Result<Distribution> {
        if other.dim != self.dim {
            return Err(Error::dim("distribution intersection", self.dim, other.dim));
        }
        let d = self.dim;
        let complement = |m: DMatrix<f64>| -> DMatrix<f64> {
            if linalg::rank(&m) == 0 {
                DMatrix::identity(d, d)
            } else {
                linalg::nullspace(&m.transpose())
            }
        };
        let ca = complement(self.matrix_at(p));
        let cb = complement(other.matrix_at(p));
        let rows = ca.ncols() + cb.ncols();
        let basis = if rows == 0 {
            DMatrix::identity(d, d)
        } else {
            let mut stacked = DMatrix::zeros(rows, d);
            stacked.view_mut((0, 0), (ca.ncols(), d)).copy_from(&ca.transpose());
            stacked
                .view_mut((ca.ncols(), 0), (cb.ncols(), d))
                .copy_from(&cb.transpose());
            linalg::nullspace(&stacked)
        };
        let vectors: Vec<Vec<f64>> = basis.column_iter().map(|c| c.iter().copied().collect()).collect();
        Self::constant(d, &vectors)
    }

    /// Checks that every bracket `[X_i, X_j]` stays in the span at every
    /// point; stops at the first failure.
    pub fn involutive(&self, points: &[Vec<f64>]) -> Involutivity {
        let mut ranks = Vec::with_capacity(points.len());
        for p in points {
            let m = self.matrix_at(p);
            let r = linalg::rank(&m);
            ranks.push(r);
            for i in 0..self.len() {
                for j in i + 1..self.len() {
                    let b = bracket_at(&*self.generators[i], &*self.generators[j], p);
                    let mut ext = m.clone().insert_column(m.ncols(), 0.0);
                    ext.set_column(m.ncols(), &nalgebra::DVector::from_vec(b));
                    let r2 = linalg::rank(&ext);
                    if r2 > r {
                        return Involutivity {
                            involutive: false,
                            ranks,
                            witness: Some(Witness {
                                point: p.clone(),
                                pair: (i, j),
                                labels: (self.labels[i].clone(), self.labels[j].clone()),
                                rank_before: r,
                                rank_after: r2,
                            }),
                        };
                    }
                }
            }
        }
        Involutivity {
            involutive: true,
            ranks,
            witness: None,
        }
    }
}

/// A discrete-time system `x_{k+1} = F_h(x_k, u_k)`, stored as a field on
/// the stacked vector `(x, u)`.
#[derive(Clone)]
pub struct DiscreteMapModel {
    field: FieldRef,
    d: usize,
    m: usize,
    guard: ChartGuard,
    label: String,
}

impl std::fmt::Debug for DiscreteMapModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DiscreteMapModel")
            .field("label", &self.label)
            .field("d", &self.d)
            .field("m", &self.m)
            .finish()
    }
}

impl DiscreteMapModel {
    pub fn new(field: FieldRef, m: usize, label: impl Into<String>) -> Result<Self> {
        let total = field.dim_in();
        if total < m {
            return Err(Error::dim("model input (x, u)", m, total));
        }
        let d = total - m;
        if field.dim_out() != d {
            return Err(Error::dim("model output", d, field.dim_out()));
        }
        Ok(Self {
            field,
            d,
            m,
            guard: ChartGuard::everywhere(),
            label: label.into(),
        })
    }

    /// Restricts sampling to states where `guard` holds.
    pub fn with_guard(mut self, guard: ChartGuard) -> Self {
        self.guard = guard;
        self
    }

    /// Explicit Euler `x + h(F(x) + G(x)u)`.
    pub fn euler(ext: &ExtendedSystem, h: f64) -> Result<Self> {
        Ok(Self::new(Arc::new(EulerStep::new(ext, h)), ext.m(), "explicit Euler")?
            .with_guard(ext.guard().clone()))
    }

    /// The step map of a scheme. Closed-form steps are differentiated
    /// exactly; other schemes fall back to finite differences.
    pub fn from_scheme(scheme: &DiscreteScheme) -> Result<Self> {
        let (d, m) = (scheme.system().dim(), scheme.system().m());
        let label = if scheme.is_lifted() {
            format!("lifted {}", scheme.linear_model_map().kind())
        } else {
            scheme.map().kind().to_string()
        };
        let field = scheme.step_field().unwrap_or_else(|| {
            let s = scheme.clone();
            Arc::new(FnField::new(d + m, d, move |p: &[f64]| {
                s.step(&p[..d], &p[d..]).unwrap_or_else(|_| vec![f64::NAN; d])
            }))
        });
        let guard = scheme
            .linearizing_data()
            .filter(|_| scheme.is_lifted())
            .map(|l| l.guard().clone())
            .unwrap_or_else(|| scheme.system().guard().clone());
        Ok(Self::new(field, m, label)?.with_guard(guard))
    }

    /// `A_h z + B_h v`.
    pub fn linear(lti: &DiscreteLTI) -> Result<Self> {
        let (d, m) = (lti.a_h().nrows(), lti.b_h().ncols());
        let mut ab = DMatrix::zeros(d, d + m);
        ab.view_mut((0, 0), (d, d)).copy_from(lti.a_h());
        ab.view_mut((0, d), (d, m)).copy_from(lti.b_h());
        Self::new(Arc::new(crate::ad::AffineField::linear(ab)), m, "linear")
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn control_dim(&self) -> usize {
        self.m
    }

    pub fn field(&self) -> &FieldRef {
        &self.field
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn guard(&self) -> &ChartGuard {
        &self.guard
    }

    pub fn eval(&self, x: &[f64], u: &[f64]) -> Vec<f64> {
        let p: Vec<f64> = x.iter().chain(u).copied().collect();
        self.field.eval(&p)
    }

    /// `[∂F_h/∂x | ∂F_h/∂u]` at `p = (x, u)`.
    pub fn jacobian(&self, p: &[f64]) -> DMatrix<f64> {
        jacobian_ad(&*self.field, p)
    }

    /// Seeded unit-box sample of `(x, u)` with `x` inside the guard.
    pub fn sample_points(&self, seed: u64, count: usize) -> Result<Vec<Vec<f64>>> {
        let d = self.d;
        let guard = self.guard.clone();
        let field = self.field.clone();
        crate::sampling::sample_unit_box(seed, count, d + self.m, move |p| {
            guard.margin(&p[..d]) > crate::sampling::CHART_SAFETY
                && field.eval(p).iter().all(|v| v.is_finite())
        })
    }
}

/// The `index`-th orthonormalised kernel vector of the model Jacobian.
struct KernelField {
    model: FieldRef,
    nullity: usize,
    index: usize,
}

impl SmoothMap for KernelField {
    fn dims(&self) -> (usize, usize) {
        (self.model.dim_in(), self.model.dim_in())
    }
    fn apply<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let total = self.model.dim_in();
        let jac = jacobian_at::<S>(&*self.model, p);
        let jp = DMatrix::from_fn(jac.len(), total, |i, j| jac[i][j].re());
        let rows = linalg::independent_columns(&jp.transpose());
        let basic = linalg::independent_columns(&jp.select_rows(&rows));
        let free: Vec<usize> = (0..total).filter(|j| !basic.contains(j)).collect();
        if free.len() != self.nullity || rows.len() != basic.len() {
            return vec![S::cst(f64::NAN); total];
        }
        let jb: Vec<Vec<S>> = rows
            .iter()
            .map(|&i| basic.iter().map(|&j| jac[i][j]).collect())
            .collect();
        let vectors: Vec<Vec<S>> = free
            .iter()
            .map(|&f| {
                let rhs: Vec<S> = rows.iter().map(|&i| jac[i][f]).collect();
                let x = solve_generic(jb.clone(), rhs).unwrap_or_else(|| vec![S::cst(f64::NAN); basic.len()]);
                let mut k = vec![S::zero(); total];
                k[f] = S::one();
                for (&b, xb) in basic.iter().zip(x) {
                    k[b] = -xb;
                }
                k
            })
            .collect();
        gram_schmidt(&vectors).swap_remove(self.index)
    }
}

/// `K = ker [∂F_h/∂x | ∂F_h/∂u]`, with as many generators as the nullity at `p`.
pub fn kernel_distribution(model: &DiscreteMapModel, p: &[f64]) -> Result<Distribution> {
    let total = model.d + model.m;
    if p.len() != total {
        return Err(Error::dim("kernel point (x, u)", total, p.len()));
    }
    let nullity = total - linalg::rank(&model.jacobian(p));
    Distribution::from_fields(
        total,
        (0..nullity).map(|index| {
            (
                format!("k{}", index + 1),
                Arc::new(KernelField {
                    model: model.field.clone(),
                    nullity,
                    index,
                }) as FieldRef,
            )
        }),
    )
}

/// `(∂F_h/∂u_j(x̃, 0), 0)` where `F_h(x̃, 0) = x`: the image of the control
/// direction `j`, carried back as a state direction.
struct ControlImage {
    model: FieldRef,
    d: usize,
    m: usize,
    j: usize,
}

impl ControlImage {
    fn preimage(&self, y: &[f64]) -> Option<Vec<f64>> {
        let (d, m) = (self.d, self.m);
        let stacked = |x: &[f64]| -> Vec<f64> { x.iter().copied().chain(std::iter::repeat_n(0.0, m)).collect() };
        let opts = NewtonOptions {
            damped: true,
            ..NewtonOptions::default()
        };
        newton(
            |x| Ok(self.model.eval(&stacked(x)).iter().zip(y).map(|(a, b)| a - b).collect()),
            |x| Ok(jacobian_ad(&*self.model, &stacked(x)).columns(0, d).into_owned()),
            y,
            opts,
        )
        .ok()
        .map(|s| s.x)
    }
}

impl SmoothMap for ControlImage {
    fn dims(&self) -> (usize, usize) {
        (self.d + self.m, self.d + self.m)
    }
    fn apply<S: Scalar>(&self, p: &[S]) -> Vec<S> {
        let (d, m) = (self.d, self.m);
        let y = &p[..d];
        let Some(root) = self.preimage(&primal(y)) else {
            return vec![S::cst(f64::NAN); d + m];
        };
        let stacked = |x: &[S]| -> Vec<S> { x.iter().copied().chain(std::iter::repeat_n(S::zero(), m)).collect() };
        let model = &*self.model;
        let x = refine_root(
            |x: &[S]| {
                S::call(model, &stacked(x))
                    .into_iter()
                    .zip(y)
                    .map(|(a, &b)| a - b)
                    .collect()
            },
            |x: &[S]| {
                jacobian_at::<S>(model, &stacked(x))
                    .into_iter()
                    .map(|row| row[..d].to_vec())
                    .collect()
            },
            &root,
        );
        let mut dir = vec![S::zero(); d + m];
        dir[d + self.j] = S::one();
        let (_, col) = jvp::<S>(model, &stacked(&x), &dir);
        col.into_iter().chain(std::iter::repeat_n(S::zero(), m)).collect()
    }
}

/// Outcome of a linearizability test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "SCREAMING-KEBAB-CASE")]
pub enum Verdict {
    Linearizable,
    LinearizableConsistent,
    NotLinearizable,
    Inconclusive,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Linearizable => "LINEARIZABLE",
            Verdict::LinearizableConsistent => "LINEARIZABLE-CONSISTENT",
            Verdict::NotLinearizable => "NOT-LINEARIZABLE",
            Verdict::Inconclusive => "INCONCLUSIVE",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One distribution examined by a test.
#[derive(Debug, Clone, Serialize)]
pub struct StageReport {
    pub stage: String,
    pub generators: Vec<String>,
    pub ranks: Vec<usize>,
    pub constant_rank: bool,
    /// `None` when involutivity is not part of the stage.
    pub involutive: Option<bool>,
    pub witness: Option<Witness>,
    pub note: Option<String>,
}

impl StageReport {
    fn passed(&self) -> bool {
        self.constant_rank && self.involutive != Some(false)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct AuditReport {
    pub model: String,
    pub verdict: Verdict,
    pub failing_stage: Option<String>,
    pub points: Vec<Vec<f64>>,
    pub stages: Vec<StageReport>,
}

impl AuditReport {
    pub fn stage(&self, name: &str) -> Option<&StageReport> {
        self.stages.iter().find(|s| s.stage == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}", self.model);
        let _ = writeln!(out, "sample points: {}", self.points.len());
        for s in &self.stages {
            let _ = writeln!(out);
            let _ = writeln!(out, "stage {}", s.stage);
            let _ = writeln!(out, "  generators: {}", s.generators.join(", "));
            let _ = writeln!(out, "  ranks: {:?}", s.ranks);
            let _ = writeln!(out, "  constant rank: {}", s.constant_rank);
            if let Some(inv) = s.involutive {
                let _ = writeln!(out, "  involutive: {inv}");
            }
            if let Some(w) = &s.witness {
                let _ = writeln!(
                    out,
                    "  witness: [{}, {}] raises rank {} -> {} at {:?}",
                    w.labels.0, w.labels.1, w.rank_before, w.rank_after, w.point
                );
            }
            if let Some(note) = &s.note {
                let _ = writeln!(out, "  note: {note}");
            }
        }
        let _ = writeln!(out);
        match &self.failing_stage {
            Some(stage) => {
                let _ = writeln!(out, "verdict: {} (stage {stage})", self.verdict);
            }
            None => {
                let _ = writeln!(out, "verdict: {}", self.verdict);
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

fn stage_of(name: &str, dist: &Distribution, points: &[Vec<f64>], check_involutive: bool) -> StageReport {
    let (ranks, involutive, witness) = if check_involutive {
        let inv = dist.involutive(points);
        let mut ranks = inv.ranks;
        ranks.extend(points[ranks.len()..].iter().map(|p| dist.rank_at(p)));
        (ranks, Some(inv.involutive), inv.witness)
    } else {
        (points.iter().map(|p| dist.rank_at(p)).collect(), None, None)
    };
    let constant_rank = ranks.windows(2).all(|w| w[0] == w[1]);
    StageReport {
        stage: name.to_string(),
        generators: dist.labels.clone(),
        ranks,
        constant_rank,
        involutive,
        witness,
        note: None,
    }
}

fn conclude(model: String, points: &[Vec<f64>], stages: Vec<StageReport>, pass: Verdict) -> AuditReport {
    let failing = stages.iter().find(|s| !s.passed());
    let (verdict, failing_stage) = match failing {
        Some(s) if !s.constant_rank => (Verdict::Inconclusive, Some(s.stage.clone())),
        Some(s) => (Verdict::NotLinearizable, Some(s.stage.clone())),
        None => (pass, None),
    };
    AuditReport {
        model,
        verdict,
        failing_stage,
        points: points.to_vec(),
        stages,
    }
}

/// Stage names of [`grizzle_audit`], in order.
pub const AUDIT_STAGES: [&str; 5] = ["K", "D0+K", "D0^K", "D1", "D1+K"];

/// Discrete-time linearizability audit of `x_{k+1} = F_h(x_k, u_k)`:
/// `Δ₀ = span{∂/∂u}`, the kernel distribution `K`, involutivity of `Δ₀+K`,
/// constant dimension of `Δ₀∩K`, then `Δ₁ = Δ₀ + (images of the control
/// directions)` and involutivity of `Δ₁+K`. Stops at the first failing stage.
pub fn grizzle_audit(model: &DiscreteMapModel, points: &[Vec<f64>]) -> Result<AuditReport> {
    let (d, m) = (model.d, model.m);
    let total = d + m;
    if points.is_empty() {
        return Err(Error::InvalidInput("the audit needs at least one sample point".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != total) {
        return Err(Error::dim("audit point (x, u)", total, p.len()));
    }
    let mut stages = Vec::new();
    let name = model.label.clone();
    let finish = |stages: Vec<StageReport>| conclude(name.clone(), points, stages, Verdict::LinearizableConsistent);

    let delta0 = Distribution::coordinate(total, &(d..total).collect::<Vec<_>>())?;
    let kernel = kernel_distribution(model, &points[0])?;
    stages.push(stage_of("K", &kernel, points, false));
    if !stages.last().unwrap().passed() {
        return Ok(finish(stages));
    }

    let d0k = delta0.sum(&kernel)?;
    stages.push(stage_of("D0+K", &d0k, points, true));
    if !stages.last().unwrap().passed() {
        return Ok(finish(stages));
    }

    let cap_ranks: Vec<usize> = points
        .iter()
        .map(|p| delta0.intersect(&kernel, p).map(|c| c.rank_at(p)))
        .collect::<Result<_>>()?;
    stages.push(StageReport {
        stage: "D0^K".into(),
        generators: vec!["pointwise intersection".into()],
        constant_rank: cap_ranks.windows(2).all(|w| w[0] == w[1]),
        ranks: cap_ranks,
        involutive: None,
        witness: None,
        note: None,
    });
    if !stages.last().unwrap().passed() {
        return Ok(finish(stages));
    }

    let images = (0..m).map(|j| {
        (
            format!("F*du{}", j + 1),
            Arc::new(ControlImage {
                model: model.field.clone(),
                d,
                m,
                j,
            }) as FieldRef,
        )
    });
    let delta1 = delta0.sum(&Distribution::from_fields(total, images)?)?;
    stages.push(stage_of("D1", &delta1, points, true));
    if !stages.last().unwrap().passed() {
        return Ok(finish(stages));
    }

    let d1k = delta1.sum(&kernel)?;
    stages.push(stage_of("D1+K", &d1k, points, true));
    Ok(finish(stages))
}

#[derive(Debug, Clone, Serialize)]
pub struct StaticFlReport {
    pub verdict: Verdict,
    pub failing_stage: Option<String>,
    pub stages: Vec<StageReport>,
    pub points: Vec<Vec<f64>>,
}

impl StaticFlReport {
    pub fn is_linearizable(&self) -> bool {
        self.verdict == Verdict::Linearizable
    }

    pub fn to_text(&self) -> String {
        AuditReport {
            model: "continuous-time system".into(),
            verdict: self.verdict,
            failing_stage: self.failing_stage.clone(),
            points: self.points.clone(),
            stages: self.stages.clone(),
        }
        .to_text()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report is serializable")
    }
}

/// Static feedback linearizability of `ẋ = f(x) + g(x)u` on a sample:
/// `G₀ = span{g_i}`, `G_{k+1} = G_k + [f, G_k]`. Every `G_k` must be
/// involutive with constant rank, reaching rank `n` by `G_{n−1}`.
///
/// Once `G_k` is involutive and contains the `g_i`, brackets `[g_i, X]` add
/// nothing, so only `[f, X]` for the newest generators are formed; those
/// that do not raise the rank at any point are dropped.
pub fn static_fl_check(sys: &ControlAffineSystem, points: &[Vec<f64>]) -> Result<StaticFlReport> {
    let n = sys.n();
    if points.is_empty() {
        return Err(Error::InvalidInput("the check needs at least one sample point".into()));
    }
    if let Some(p) = points.iter().find(|p| p.len() != n) {
        return Err(Error::dim("sample point", n, p.len()));
    }
    let mut dist = Distribution::from_fields(
        n,
        (0..sys.m()).map(|j| (format!("g{}", j + 1), sys.input_field(j))),
    )?;
    let mut newest: Vec<(String, FieldRef)> = dist
        .labels
        .iter()
        .cloned()
        .zip(dist.generators.iter().cloned())
        .collect();
    let mut stages = Vec::new();
    let report = |stages: Vec<StageReport>, verdict: Option<Verdict>| {
        let mut r = conclude(String::new(), points, stages, Verdict::Linearizable);
        if let Some(v) = verdict {
            r.verdict = v;
            r.failing_stage = r.stages.last().map(|s| s.stage.clone());
        }
        StaticFlReport {
            verdict: r.verdict,
            failing_stage: r.failing_stage,
            stages: r.stages,
            points: r.points,
        }
    };
    for k in 0..n {
        let name = format!("G{k}");
        let mut stage = stage_of(&name, &dist, points, true);
        let full = stage.ranks.iter().all(|&r| r == n);
        if full && stage.constant_rank {
            stages.push(stage);
            return Ok(report(stages, None));
        }
        if !stage.passed() {
            stages.push(stage);
            return Ok(report(stages, None));
        }
        if k + 1 == n {
            stage.note = Some(format!("rank {} < {n} at the last stage", stage.ranks[0]));
            stages.push(stage);
            return Ok(report(stages, Some(Verdict::NotLinearizable)));
        }
        if k + 1 >= MAX_DEPTH {
            stage.note = Some("bracket depth exceeds the differentiation limit".into());
            stages.push(stage);
            return Ok(report(stages, Some(Verdict::Inconclusive)));
        }
        let mut added = Vec::new();
        for (label, x) in &newest {
            let candidate = lie_bracket_field(sys.drift().clone(), x.clone())?;
            let raises = points.iter().any(|p| {
                let with = dist.clone().with("candidate", candidate.clone()).expect("dimensions checked");
                with.rank_at(p) > dist.rank_at(p)
            });
            if raises {
                let label = format!("[f,{label}]");
                dist = dist.with(label.clone(), candidate.clone())?;
                added.push((label, candidate));
            }
        }
        if added.is_empty() {
            stage.note = Some(format!("chain stalls at rank {} < {n}", stage.ranks[0]));
            stages.push(stage);
            return Ok(report(stages, Some(Verdict::NotLinearizable)));
        }
        stages.push(stage);
        newest = added;
    }
    unreachable!("the loop returns by stage n-1")
}
