//! Dense linear algebra helpers: SVD-based rank and nullspaces, a small
//! Gaussian elimination usable on dual numbers, and a Newton solver.

use nalgebra::{DMatrix, DVector};

use crate::ad::Real;
use crate::{Error, Result};

/// Relative factor of the rank tolerance `dim·σ_max·1e-10`.
pub const RANK_RTOL: f64 = 1e-10;

/// Singular values of `m`, largest first.
pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    if m.nrows() == 0 || m.ncols() == 0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Numerical rank with tolerance `max(rows, cols)·σ_max·1e-10`.
pub fn rank(m: &DMatrix<f64>) -> usize {
    let s = singular_values(m);
    let Some(&smax) = s.first() else { return 0 };
    if smax == 0.0 || !smax.is_finite() {
        return 0;
    }
    let tol = m.nrows().max(m.ncols()) as f64 * smax * RANK_RTOL;
    s.iter().filter(|&&v| v > tol).count()
}

/// Full SVD with square `V`: pads wide matrices with zero rows so the
/// right singular vectors of the nullspace are returned too.
fn full_right_svd(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let c = m.ncols();
    let padded = if m.nrows() < c {
        let mut p = DMatrix::zeros(c, c);
        p.view_mut((0, 0), (m.nrows(), c)).copy_from(m);
        p
    } else {
        m.clone()
    };
    let svd = padded.svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let s: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let v = DMatrix::from_fn(c, order.len(), |r, k| v_t[(order[k], r)]);
    (s, v)
}

/// Orthonormal basis (as columns) of the nullspace of `m`.
pub fn nullspace(m: &DMatrix<f64>) -> DMatrix<f64> {
    let c = m.ncols();
    if c == 0 {
        return DMatrix::zeros(0, 0);
    }
    let r = rank(m);
    let (_, v) = full_right_svd(m);
    v.columns(r, c - r).into_owned()
}

/// Orthonormal basis (as columns) of the column space of `m`.
pub fn column_space(m: &DMatrix<f64>) -> DMatrix<f64> {
    if m.ncols() == 0 || m.nrows() == 0 {
        return DMatrix::zeros(m.nrows(), 0);
    }
    let r = rank(m);
    let svd = m.clone().svd(true, false);
    let u = svd.u.expect("requested U");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    DMatrix::from_fn(m.nrows(), r, |i, k| u[(i, order[k])])
}

/// Greedy left-to-right selection of linearly independent columns.
pub fn independent_columns(m: &DMatrix<f64>) -> Vec<usize> {
    let mut picked: Vec<usize> = Vec::new();
    for j in 0..m.ncols() {
        let mut cols = picked.clone();
        cols.push(j);
        let sub = m.select_columns(&cols);
        if rank(&sub) == cols.len() {
            picked.push(j);
        }
    }
    picked
}

/// Solves `a·x = b` by Gaussian elimination with partial pivoting on the
/// primal values. Works on any [`Real`], so derivatives flow through.
pub fn solve_generic<S: Real>(mut a: Vec<Vec<S>>, mut b: Vec<S>) -> Option<Vec<S>> {
    let n = b.len();
    let scale = a
        .iter()
        .flat_map(|r| r.iter().map(|v| v.re().abs()))
        .fold(0.0, f64::max);
    if scale == 0.0 && n > 0 {
        return None;
    }
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].re().abs().total_cmp(&a[j][col].re().abs()))?;
        if a[piv][col].re().abs() <= scale * 1e-14 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in col + 1..n {
            let factor = a[row][col] / a[col][col];
            for k in col..n {
                let v = a[col][k];
                a[row][k] = a[row][k] - factor * v;
            }
            let bv = b[col];
            b[row] = b[row] - factor * bv;
        }
    }
    let mut x = vec![S::zero(); n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc = acc - a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Classical Gram–Schmidt on the given vectors, in order.
pub fn gram_schmidt<S: Real>(vectors: &[Vec<S>]) -> Vec<Vec<S>> {
    let mut out: Vec<Vec<S>> = Vec::with_capacity(vectors.len());
    for v in vectors {
        let mut w = v.clone();
        for q in &out {
            let dot = q.iter().zip(&w).fold(S::zero(), |acc, (&a, &b)| acc + a * b);
            for (wi, &qi) in w.iter_mut().zip(q) {
                *wi = *wi - dot * qi;
            }
        }
        let norm = w.iter().fold(S::zero(), |acc, &a| acc + a * a).sqrt();
        out.push(w.into_iter().map(|a| a / norm).collect());
    }
    out
}

pub(crate) fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub(crate) fn euclid(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Settings for [`newton`].
#[derive(Debug, Clone, Copy)]
pub struct NewtonOptions {
    /// Convergence threshold on the ∞-norm of the residual.
    pub tol: f64,
    pub max_iter: usize,
    /// Halve the step while the residual does not decrease.
    pub damped: bool,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 50,
            damped: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonSolution {
    pub x: Vec<f64>,
    pub residual: f64,
    pub iterations: usize,
}

/// Newton iteration on a square system. Stops at `‖r‖∞ ≤ tol`; also accepts
/// a stagnated iterate when the update falls to rounding level and the
/// residual is within `100·tol`.
pub fn newton(
    residual: impl Fn(&[f64]) -> Result<Vec<f64>>,
    jacobian: impl Fn(&[f64]) -> Result<DMatrix<f64>>,
    x0: &[f64],
    opts: NewtonOptions,
) -> Result<NewtonSolution> {
    let mut x = x0.to_vec();
    let mut r = residual(&x)?;
    let mut rn = inf_norm(&r);
    for it in 0..=opts.max_iter {
        if rn <= opts.tol {
            return Ok(NewtonSolution {
                x,
                residual: rn,
                iterations: it,
            });
        }
        if it == opts.max_iter || !rn.is_finite() {
            break;
        }
        let j = jacobian(&x)?;
        let Some(dx) = j.lu().solve(&DVector::from_column_slice(&r)) else {
            break;
        };
        let mut lambda = 1.0;
        let mut accepted = false;
        let mut candidate = x.clone();
        for _ in 0..if opts.damped { 30 } else { 1 } {
            candidate = x.iter().zip(dx.iter()).map(|(a, d)| a - lambda * d).collect();
            match residual(&candidate) {
                Ok(rc) => {
                    let rcn = inf_norm(&rc);
                    if !opts.damped || rcn < rn {
                        r = rc;
                        rn = rcn;
                        accepted = true;
                        break;
                    }
                }
                Err(e) if !opts.damped => return Err(e),
                Err(_) => {}
            }
            lambda *= 0.5;
        }
        if !accepted {
            break;
        }
        let step = inf_norm(&dx.as_slice().iter().map(|d| lambda * d).collect::<Vec<_>>());
        x = candidate;
        if step <= 1e-15 * (1.0 + inf_norm(&x)) && rn <= 100.0 * opts.tol {
            return Ok(NewtonSolution {
                x,
                residual: rn,
                iterations: it + 1,
            });
        }
    }
    Err(Error::NewtonDiverged {
        residual: rn,
        iterations: opts.max_iter,
    })
}
