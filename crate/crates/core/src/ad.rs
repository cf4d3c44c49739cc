//! Forward-mode automatic differentiation.
//!
//! Every smooth map in the crate is written once, generically over a
//! [`Scalar`], and evaluated either on `f64` or on nested dual numbers.
//! A single level of nesting yields directional derivatives, two levels
//! yield derivatives of derivatives (needed by Lie brackets of fields that
//! themselves contain a Jacobian), and so on up to [`MAX_DEPTH`].
//!
//! Dynamic dispatch goes through [`Field`], an object-safe trait with one
//! evaluation entry point per nesting level. Types implementing the generic
//! [`SmoothMap`] get [`Field`] for free.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::DMatrix;

/// Deepest supported nesting of dual numbers.
pub const MAX_DEPTH: usize = 5;

/// Arithmetic shared by `f64` and every dual level.
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
{
    fn cst(v: f64) -> Self;
    /// Primal value with every infinitesimal part dropped.
    fn re(&self) -> f64;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn powi(self, n: i32) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn recip(self) -> Self {
        Self::one() / self
    }
}

impl Real for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
}

/// `re + eps·ε` with `ε² = 0`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Self { re, eps }
    }

    pub fn constant(re: T) -> Self {
        Self { re, eps: T::zero() }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Self::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let re = self.re / o.re;
        Self::new(re, (self.eps - re * o.eps) / o.re)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.re, -self.eps)
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Self::new(self.re + o, self.eps)
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Self::new(self.re - o, self.eps)
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Self::new(self.re * o, self.eps * o)
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        Self::new(self.re / o, self.eps / o)
    }
}

impl<T: Real> Real for Dual<T> {
    fn cst(v: f64) -> Self {
        Self::constant(T::cst(v))
    }
    fn re(&self) -> f64 {
        self.re.re()
    }
    fn sqrt(self) -> Self {
        let s = self.re.sqrt();
        Self::new(s, self.eps / (s * 2.0))
    }
    fn sin(self) -> Self {
        Self::new(self.re.sin(), self.eps * self.re.cos())
    }
    fn cos(self) -> Self {
        Self::new(self.re.cos(), -(self.eps * self.re.sin()))
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Self::new(e, self.eps * e)
    }
    fn ln(self) -> Self {
        Self::new(self.re.ln(), self.eps / self.re)
    }
    fn powi(self, n: i32) -> Self {
        match n {
            0 => Self::one(),
            1 => self,
            _ => Self::new(
                self.re.powi(n),
                self.eps * self.re.powi(n - 1) * f64::from(n),
            ),
        }
    }
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;
pub type D4 = Dual<D3>;
pub type D5 = Dual<D4>;

/// A [`Real`] that knows its nesting level: it can dispatch a [`Field`]
/// evaluation to the matching entry point and build the next level up.
pub trait Scalar: Real {
    /// One more level of nesting.
    type Up: Scalar;

    fn call(f: &dyn Field, x: &[Self]) -> Vec<Self>;

    fn seed(re: Self, eps: Self) -> Self::Up;

    fn split(u: Self::Up) -> (Self, Self);

    /// Evaluate a plain `f64` closure at this level, approximating every
    /// infinitesimal part by central differences.
    fn fd_call(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[Self], step: f64) -> Vec<Self>;
}

impl Scalar for f64 {
    type Up = D1;

    fn call(f: &dyn Field, x: &[Self]) -> Vec<Self> {
        f.eval0(x)
    }
    fn seed(re: Self, eps: Self) -> D1 {
        Dual::new(re, eps)
    }
    fn split(u: D1) -> (Self, Self) {
        (u.re, u.eps)
    }
    fn fd_call(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[Self], _step: f64) -> Vec<Self> {
        f(x)
    }
}

macro_rules! scalar_level {
    ($ty:ty, $inner:ty, $up:ty, $eval:ident) => {
        impl Scalar for $ty {
            type Up = $up;

            fn call(f: &dyn Field, x: &[Self]) -> Vec<Self> {
                f.$eval(x)
            }
            fn seed(re: Self, eps: Self) -> $up {
                Dual::new(re, eps)
            }
            fn split(u: $up) -> (Self, Self) {
                (u.re, u.eps)
            }
            fn fd_call(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[Self], step: f64) -> Vec<Self> {
                let re: Vec<$inner> = x.iter().map(|d| d.re).collect();
                let plus: Vec<$inner> = x.iter().map(|d| d.re + d.eps * step).collect();
                let minus: Vec<$inner> = x.iter().map(|d| d.re - d.eps * step).collect();
                let f0 = <$inner>::fd_call(f, &re, step);
                let fp = <$inner>::fd_call(f, &plus, step);
                let fm = <$inner>::fd_call(f, &minus, step);
                f0.into_iter()
                    .zip(fp.into_iter().zip(fm))
                    .map(|(v, (p, m))| Dual::new(v, (p - m) / (2.0 * step)))
                    .collect()
            }
        }
    };
}

scalar_level!(D1, f64, D2, eval1);
scalar_level!(D2, D1, D3, eval2);
scalar_level!(D3, D2, D4, eval3);
scalar_level!(D4, D3, D5, eval4);

impl Scalar for D5 {
    type Up = D5;

    fn call(f: &dyn Field, x: &[Self]) -> Vec<Self> {
        f.eval5(x)
    }
    fn seed(_re: Self, _eps: Self) -> D5 {
        panic!("automatic differentiation nested deeper than {MAX_DEPTH} levels")
    }
    fn split(_u: D5) -> (Self, Self) {
        panic!("automatic differentiation nested deeper than {MAX_DEPTH} levels")
    }
    fn fd_call(f: &dyn Fn(&[f64]) -> Vec<f64>, x: &[Self], step: f64) -> Vec<Self> {
        let re: Vec<D4> = x.iter().map(|d| d.re).collect();
        let plus: Vec<D4> = x.iter().map(|d| d.re + d.eps * step).collect();
        let minus: Vec<D4> = x.iter().map(|d| d.re - d.eps * step).collect();
        let f0 = D4::fd_call(f, &re, step);
        let fp = D4::fd_call(f, &plus, step);
        let fm = D4::fd_call(f, &minus, step);
        f0.into_iter()
            .zip(fp.into_iter().zip(fm))
            .map(|(v, (p, m))| Dual::new(v, (p - m) / (2.0 * step)))
            .collect()
    }
}

/// Object-safe smooth map `ℝ^dim_in → ℝ^dim_out`.
pub trait Field: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval0(&self, x: &[f64]) -> Vec<f64>;
    fn eval1(&self, x: &[D1]) -> Vec<D1>;
    fn eval2(&self, x: &[D2]) -> Vec<D2>;
    fn eval3(&self, x: &[D3]) -> Vec<D3>;
    fn eval4(&self, x: &[D4]) -> Vec<D4>;
    fn eval5(&self, x: &[D5]) -> Vec<D5>;
}

impl<'a> dyn Field + 'a {
    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        self.eval0(x)
    }

    pub fn eval_at<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        S::call(self, x)
    }
}

/// A map written generically over the scalar type.
pub trait SmoothMap: Send + Sync {
    /// `(input dimension, output dimension)`.
    fn dims(&self) -> (usize, usize);
    fn apply<S: Scalar>(&self, x: &[S]) -> Vec<S>;
}

impl<T: SmoothMap> Field for T {
    fn dim_in(&self) -> usize {
        self.dims().0
    }
    fn dim_out(&self) -> usize {
        self.dims().1
    }
    fn eval0(&self, x: &[f64]) -> Vec<f64> {
        self.apply(x)
    }
    fn eval1(&self, x: &[D1]) -> Vec<D1> {
        self.apply(x)
    }
    fn eval2(&self, x: &[D2]) -> Vec<D2> {
        self.apply(x)
    }
    fn eval3(&self, x: &[D3]) -> Vec<D3> {
        self.apply(x)
    }
    fn eval4(&self, x: &[D4]) -> Vec<D4> {
        self.apply(x)
    }
    fn eval5(&self, x: &[D5]) -> Vec<D5> {
        self.apply(x)
    }
}

pub type FieldRef = Arc<dyn Field>;

/// Declare a unit struct implementing [`SmoothMap`] from a generic body.
///
/// ```
/// use fldisc::smooth_map;
/// smooth_map!(pub Square(1 => 1) |x| { vec![x[0] * x[0]] });
/// ```
#[macro_export]
macro_rules! smooth_map {
    ($(#[$meta:meta])* $vis:vis $name:ident ($nin:expr => $nout:expr) |$x:ident| $body:block) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, Default)]
        $vis struct $name;

        impl $crate::ad::SmoothMap for $name {
            fn dims(&self) -> (usize, usize) {
                ($nin, $nout)
            }
            #[allow(unused_imports)]
            fn apply<S: $crate::ad::Scalar>(&self, $x: &[S]) -> Vec<S> {
                use $crate::ad::Real as _;
                $body
            }
        }
    };
}

/// Wraps an `f64`-only closure. Derivatives come from central differences
/// with a fixed step, so nested evaluations lose accuracy quickly.
pub struct FnField {
    dims: (usize, usize),
    step: f64,
    f: Box<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>,
}

impl FnField {
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            dims: (dim_in, dim_out),
            step: 1e-6,
            f: Box::new(f),
        }
    }
}

impl Field for FnField {
    fn dim_in(&self) -> usize {
        self.dims.0
    }
    fn dim_out(&self) -> usize {
        self.dims.1
    }
    fn eval0(&self, x: &[f64]) -> Vec<f64> {
        (self.f)(x)
    }
    fn eval1(&self, x: &[D1]) -> Vec<D1> {
        D1::fd_call(&*self.f, x, self.step)
    }
    fn eval2(&self, x: &[D2]) -> Vec<D2> {
        D2::fd_call(&*self.f, x, self.step)
    }
    fn eval3(&self, x: &[D3]) -> Vec<D3> {
        D3::fd_call(&*self.f, x, self.step)
    }
    fn eval4(&self, x: &[D4]) -> Vec<D4> {
        D4::fd_call(&*self.f, x, self.step)
    }
    fn eval5(&self, x: &[D5]) -> Vec<D5> {
        D5::fd_call(&*self.f, x, self.step)
    }
}

/// Constant map.
#[derive(Debug, Clone)]
pub struct ConstField {
    dim_in: usize,
    value: Vec<f64>,
}

impl ConstField {
    pub fn new(dim_in: usize, value: Vec<f64>) -> Self {
        Self { dim_in, value }
    }

    pub fn zeros(dim_in: usize, dim_out: usize) -> Self {
        Self::new(dim_in, vec![0.0; dim_out])
    }
}

impl SmoothMap for ConstField {
    fn dims(&self) -> (usize, usize) {
        (self.dim_in, self.value.len())
    }
    fn apply<S: Scalar>(&self, _x: &[S]) -> Vec<S> {
        self.value.iter().map(|&v| S::cst(v)).collect()
    }
}

/// `x ↦ M·x + c`.
#[derive(Debug, Clone)]
pub struct AffineField {
    matrix: DMatrix<f64>,
    offset: Vec<f64>,
}

impl AffineField {
    pub fn linear(matrix: DMatrix<f64>) -> Self {
        let offset = vec![0.0; matrix.nrows()];
        Self { matrix, offset }
    }

    pub fn new(matrix: DMatrix<f64>, offset: Vec<f64>) -> Self {
        assert_eq!(matrix.nrows(), offset.len(), "offset length");
        Self { matrix, offset }
    }
}

impl SmoothMap for AffineField {
    fn dims(&self) -> (usize, usize) {
        (self.matrix.ncols(), self.matrix.nrows())
    }
    fn apply<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        (0..self.matrix.nrows())
            .map(|i| {
                (0..self.matrix.ncols())
                    .fold(S::cst(self.offset[i]), |acc, j| acc + x[j] * self.matrix[(i, j)])
            })
            .collect()
    }
}

/// `x ↦ outer(inner(x))`.
#[derive(Clone)]
pub struct Compose {
    inner: FieldRef,
    outer: FieldRef,
}

impl Compose {
    pub fn new(inner: FieldRef, outer: FieldRef) -> Self {
        assert_eq!(inner.dim_out(), outer.dim_in(), "composition dimensions");
        Self { inner, outer }
    }
}

impl SmoothMap for Compose {
    fn dims(&self) -> (usize, usize) {
        (self.inner.dim_in(), self.outer.dim_out())
    }
    fn apply<S: Scalar>(&self, x: &[S]) -> Vec<S> {
        let y = S::call(&*self.inner, x);
        S::call(&*self.outer, &y)
    }
}

pub(crate) fn lift_slice<S: Scalar>(x: &[f64]) -> Vec<S> {
    x.iter().map(|&v| S::cst(v)).collect()
}

pub(crate) fn primal<S: Scalar>(x: &[S]) -> Vec<f64> {
    x.iter().map(Real::re).collect()
}

/// Value and directional derivative `(f(x), Df(x)·v)`.
pub fn jvp<S: Scalar>(f: &dyn Field, x: &[S], v: &[S]) -> (Vec<S>, Vec<S>) {
    let seeded: Vec<S::Up> = x.iter().zip(v).map(|(&a, &b)| S::seed(a, b)).collect();
    S::Up::call(f, &seeded).into_iter().map(S::split).unzip()
}

/// Row-major Jacobian at any scalar level: `jac[i][j] = ∂f_i/∂x_j`.
pub fn jacobian_at<S: Scalar>(f: &dyn Field, x: &[S]) -> Vec<Vec<S>> {
    let (n, r) = (f.dim_in(), f.dim_out());
    let mut jac = vec![vec![S::zero(); n]; r];
    let mut dir = vec![S::zero(); n];
    for j in 0..n {
        dir[j] = S::one();
        let (_, col) = jvp(f, x, &dir);
        for (i, c) in col.into_iter().enumerate() {
            jac[i][j] = c;
        }
        dir[j] = S::zero();
    }
    jac
}

/// Jacobian by forward-mode differentiation.
pub fn jacobian_ad(f: &dyn Field, x: &[f64]) -> DMatrix<f64> {
    let jac = jacobian_at::<f64>(f, x);
    DMatrix::from_fn(f.dim_out(), f.dim_in(), |i, j| jac[i][j])
}

/// Central-difference step used throughout: `max(1e-6, 1e-6·|x_i|)`.
pub fn fd_step(xi: f64) -> f64 {
    1e-6_f64.max(1e-6 * xi.abs())
}

/// Jacobian of an `f64` closure by central differences.
pub fn jacobian_fd_fn(
    f: impl Fn(&[f64]) -> Vec<f64>,
    x: &[f64],
    rows: usize,
) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(rows, x.len());
    let mut xp = x.to_vec();
    for j in 0..x.len() {
        let step = fd_step(x[j]);
        xp[j] = x[j] + step;
        let fp = f(&xp);
        xp[j] = x[j] - step;
        let fm = f(&xp);
        xp[j] = x[j];
        for i in 0..rows {
            jac[(i, j)] = (fp[i] - fm[i]) / (2.0 * step);
        }
    }
    jac
}

/// Jacobian by central differences on the `f64` entry point.
pub fn jacobian_fd(f: &dyn Field, x: &[f64]) -> DMatrix<f64> {
    jacobian_fd_fn(|p| f.eval0(p), x, f.dim_out())
}

/// Which derivative provider to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Provider {
    #[default]
    Automatic,
    FiniteDifference,
}

pub fn jacobian(f: &dyn Field, x: &[f64], provider: Provider) -> DMatrix<f64> {
    match provider {
        Provider::Automatic => jacobian_ad(f, x),
        Provider::FiniteDifference => jacobian_fd(f, x),
    }
}

/// `‖J_ad − J_fd‖_F / max(‖J_ad‖_F, 1)`.
pub fn provider_disagreement(f: &dyn Field, x: &[f64]) -> f64 {
    let ad = jacobian_ad(f, x);
    let fd = jacobian_fd(f, x);
    (&ad - &fd).norm() / ad.norm().max(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    smooth_map!(Cubic(2 => 2) |x| {
        vec![x[0] * x[0] * x[1], x[0].sin() + x[1].exp()]
    });

    #[test]
    fn dual_arithmetic_matches_calculus() {
        let x = Dual::new(2.0, 1.0);
        let y = (x * x + 3.0) / x;
        // d/dx (x + 3/x) = 1 - 3/x²
        assert!((y.eps - (1.0 - 3.0 / 4.0)).abs() < 1e-15);
        let s = x.sqrt();
        assert!((s.eps - 0.5 / 2f64.sqrt()).abs() < 1e-15);
        let p = x.powi(3);
        assert_eq!(p.eps, 12.0);
    }

    #[test]
    fn nested_duals_give_second_derivatives() {
        // f(x) = x³, f''(2) = 12
        let x: D2 = Dual::new(Dual::new(2.0, 1.0), Dual::new(1.0, 0.0));
        let y = x * x * x;
        assert_eq!(y.eps.eps, 12.0);
        assert_eq!(y.re.eps, 12.0);
    }

    #[test]
    fn linear_field_jacobian_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.0, 4.0]);
        let f = AffineField::linear(a.clone());
        let j = jacobian_ad(&f, &[0.3, -1.0, 2.0]);
        assert_eq!(j, a);
        let jf = jacobian_fd(&f, &[0.3, -1.0, 2.0]);
        assert!((jf - a).amax() <= 1e-9);
    }

    #[test]
    fn ad_and_fd_agree() {
        let x = [0.7, -0.3];
        assert!(provider_disagreement(&Cubic, &x) < 1e-8);
        let j = jacobian_ad(&Cubic, &x);
        assert!((j[(0, 0)] - 2.0 * 0.7 * -0.3).abs() < 1e-15);
        assert!((j[(1, 1)] - (-0.3f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn fn_field_falls_back_to_differences() {
        let f = FnField::new(2, 1, |x| vec![x[0] * x[1]]);
        let j = jacobian_ad(&f, &[2.0, 5.0]);
        assert!((j[(0, 0)] - 5.0).abs() < 1e-8);
        assert!((j[(0, 1)] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn compose_chains() {
        let a: FieldRef = Arc::new(Cubic);
        let c = Compose::new(a.clone(), a);
        let j = jacobian_ad(&c, &[0.2, 0.1]);
        assert!((jacobian_fd(&c, &[0.2, 0.1]) - j).amax() < 1e-8);
    }
}
