//! Fundamental tensor, geodesic spray, nonlinear connection and the Jacobi
//! (Berwald curvature) operator.
//!
//! Conventions, fixed once for the whole crate:
//!
//! * `g_v = 1/2 Hess_v F^2`, so `g_v(v, v) = F(v)^2`.
//! * geodesics solve `x'' + 2 G(x, x') = 0` with
//!   `G^i = 1/4 g^{il} (d^2F^2/dx^k dv^l v^k - dF^2/dx^l)`.
//! * `N^i_j = dG^i/dv^j`; covariant derivative along a geodesic is
//!   `D W = W' + N W`; linear parallel transport solves `W' = -N W`.
//! * Jacobi operator `R^i_k = 2 dG^i/dx^k - v^j d^2G^i/dx^j dv^k
//!   + 2 G^j d^2G^i/dv^j dv^k - N^i_j N^j_k`, so that `D D J = -R J`.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::jets::{directional, polarize, Dual, Jet, Scalar, Tape};
use crate::metric::Metric;

/// Positive-definiteness floor: `lambda_min >= DEGENERACY_FLOOR * lambda_max`.
pub const DEGENERACY_FLOOR: f64 = 1e-8;

#[derive(Clone, Debug, Serialize)]
pub struct FundamentalTensor {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub matrix: DMatrix<f64>,
    pub inverse: DMatrix<f64>,
    pub min_eigenvalue: f64,
    pub max_eigenvalue: f64,
}

impl FundamentalTensor {
    pub fn inner(&self, a: &[f64], b: &[f64]) -> f64 {
        bilinear(&self.matrix, a, b)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SprayData {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub spray: Vec<f64>,
    pub connection: DMatrix<f64>,
    /// `max |d^3 G^i / dv^j dv^k dv^l|`.
    pub berwald_norm: f64,
}

pub(crate) fn bilinear(m: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            acc += a[i] * m[(i, j)] * b[j];
        }
    }
    acc
}

fn unit<S: Scalar>(len: usize, i: usize) -> Vec<S> {
    let mut e = vec![S::zero(); len];
    e[i] = S::one();
    e
}

/// Gaussian elimination with partial pivoting on the plain values.
/// `a` is row-major `n x n`; the solution overwrites `b`.
pub(crate) fn solve_in_place<S: Scalar>(a: &mut [S], b: &mut [S], n: usize) -> Option<()> {
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i * n + col].value().abs().total_cmp(&a[j * n + col].value().abs())
        })?;
        if a[pivot * n + col].value() == 0.0 {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let inv = S::one() / a[col * n + col];
        for row in (col + 1)..n {
            let f = a[row * n + col] * inv;
            for k in col..n {
                let t = a[col * n + k];
                a[row * n + k] -= f * t;
            }
            let t = b[col];
            b[row] -= f * t;
        }
    }
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in (row + 1)..n {
            acc -= a[row * n + k] * b[k];
        }
        b[row] = acc / a[row * n + row];
    }
    Some(())
}

/// `g_v` (row-major) over any scalar type.
pub(crate) fn fundamental_generic<S: Scalar>(tape: &Tape, x: &[S], v: &[S]) -> Result<Vec<S>> {
    let n = x.len();
    let base: Vec<S> = x.iter().chain(v).copied().collect();
    let mut g = vec![S::zero(); n * n];
    let mut dir = vec![S::zero(); 2 * n];
    for i in 0..n {
        dir[n + i] = S::one();
        g[i * n + i] = directional::<S, 3>(tape, &base, &dir)?.c[2];
        dir[n + i] = S::zero();
    }
    for i in 0..n {
        for j in (i + 1)..n {
            dir[n + i] = S::one();
            dir[n + j] = S::one();
            let c2 = directional::<S, 3>(tape, &base, &dir)?.c[2];
            let gij = (c2 - g[i * n + i] - g[j * n + j]).scale(0.5);
            g[i * n + j] = gij;
            g[j * n + i] = gij;
            dir[n + i] = S::zero();
            dir[n + j] = S::zero();
        }
    }
    Ok(g)
}

/// Spray coefficients `G(x, v)` over any scalar type.
pub(crate) fn spray_generic<S: Scalar>(metric: &Metric, x: &[S], v: &[S]) -> Result<Vec<S>> {
    let n = x.len();
    if !metric.is_x_dependent() {
        return Ok(vec![S::zero(); n]);
    }
    let tape = metric.norm_sq_tape();
    let base: Vec<S> = x.iter().chain(v).copied().collect();
    let mut g = fundamental_generic(tape, x, v)?;
    let mut dir = vec![S::zero(); 2 * n];
    dir[..n].copy_from_slice(v);
    let along_v = directional::<S, 3>(tape, &base, &dir)?.c[2];
    let mut rhs = vec![S::zero(); n];
    for l in 0..n {
        dir[n + l] = S::one();
        let c2 = directional::<S, 3>(tape, &base, &dir)?.c[2];
        dir[n + l] = S::zero();
        // d^2F^2/dx^k dv^l v^k = c2(v; e_l) - c2(v; 0) - c2(0; e_l), and c2(0; e_l) = g_ll
        rhs[l] = c2 - along_v - g[l * n + l];
    }
    let mut ex = vec![S::zero(); 2 * n];
    for (l, r) in rhs.iter_mut().enumerate() {
        ex[l] = S::one();
        let dx = directional::<S, 2>(tape, &base, &ex)?.c[1];
        ex[l] = S::zero();
        *r -= dx;
    }
    solve_in_place(&mut g, &mut rhs, n).ok_or_else(|| Error::Degenerate {
        x: x.iter().map(Scalar::value).collect(),
        v: v.iter().map(Scalar::value).collect(),
        ratio: 0.0,
    })?;
    Ok(rhs.into_iter().map(|r| r.scale(0.25)).collect())
}

/// `G` along the line `(x + t a, v + t b)` as order-(K-1) jets.
pub(crate) fn spray_jet<const K: usize>(
    metric: &Metric,
    x: &[f64],
    v: &[f64],
    a: &[f64],
    b: &[f64],
) -> Result<Vec<Jet<f64, K>>> {
    let xs: Vec<Jet<f64, K>> = x.iter().zip(a).map(|(&p, &d)| Jet::variable(p, d)).collect();
    let vs: Vec<Jet<f64, K>> = v.iter().zip(b).map(|(&p, &d)| Jet::variable(p, d)).collect();
    spray_generic(metric, &xs, &vs)
}

/// `G(x, v)`. No domain or nonzero checks: this is the integrator hot path.
pub fn spray(metric: &Metric, x: &[f64], v: &[f64]) -> Result<Vec<f64>> {
    spray_generic(metric, x, v)
}

/// `G(x, v)` and the directional derivatives `DG[(a_k; b_k)]` for each
/// direction pair.
pub fn spray_with_tangents(
    metric: &Metric,
    x: &[f64],
    v: &[f64],
    directions: &[(&[f64], &[f64])],
) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let n = x.len();
    if !metric.is_x_dependent() {
        return Ok((vec![0.0; n], vec![vec![0.0; n]; directions.len()]));
    }
    if directions.is_empty() {
        return Ok((spray(metric, x, v)?, Vec::new()));
    }
    let mut value = Vec::new();
    let mut tangents = Vec::with_capacity(directions.len());
    for chunk in directions.chunks(8) {
        value = match chunk.len() {
            1 => dual_chunk::<1>(metric, x, v, chunk, &mut tangents)?,
            2 => dual_chunk::<2>(metric, x, v, chunk, &mut tangents)?,
            3 => dual_chunk::<3>(metric, x, v, chunk, &mut tangents)?,
            4 => dual_chunk::<4>(metric, x, v, chunk, &mut tangents)?,
            5 => dual_chunk::<5>(metric, x, v, chunk, &mut tangents)?,
            6 => dual_chunk::<6>(metric, x, v, chunk, &mut tangents)?,
            7 => dual_chunk::<7>(metric, x, v, chunk, &mut tangents)?,
            _ => dual_chunk::<8>(metric, x, v, chunk, &mut tangents)?,
        };
    }
    Ok((value, tangents))
}

fn dual_chunk<const M: usize>(
    metric: &Metric,
    x: &[f64],
    v: &[f64],
    chunk: &[(&[f64], &[f64])],
    out: &mut Vec<Vec<f64>>,
) -> Result<Vec<f64>> {
    let mut xs: Vec<Dual<M>> = x.iter().map(|&p| Dual::cst(p)).collect();
    let mut vs: Vec<Dual<M>> = v.iter().map(|&p| Dual::cst(p)).collect();
    for (m, (a, b)) in chunk.iter().enumerate() {
        for i in 0..x.len() {
            xs[i].d[m] = a[i];
            vs[i].d[m] = b[i];
        }
    }
    let g = spray_generic(metric, &xs, &vs)?;
    for m in 0..M {
        out.push(g.iter().map(|gi| gi.d[m]).collect());
    }
    Ok(g.iter().map(|gi| gi.v).collect())
}

/// `N^i_j = dG^i / dv^j`.
pub fn connection(metric: &Metric, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let zero = vec![0.0; n];
    let units: Vec<Vec<f64>> = (0..n).map(|j| unit(n, j)).collect();
    let dirs: Vec<(&[f64], &[f64])> = units.iter().map(|e| (zero.as_slice(), e.as_slice())).collect();
    let (_, cols) = spray_with_tangents(metric, x, v, &dirs)?;
    Ok(DMatrix::from_fn(n, n, |i, j| cols[j][i]))
}

/// Second directional derivative `D^2 G [(a1; b1), (a2; b2)]`.
pub fn spray_second_derivative(
    metric: &Metric,
    x: &[f64],
    v: &[f64],
    first: (&[f64], &[f64]),
    second: (&[f64], &[f64]),
) -> Result<Vec<f64>> {
    let n = x.len();
    let c2 = |a: &[f64], b: &[f64]| -> Result<Vec<f64>> {
        Ok(spray_jet::<3>(metric, x, v, a, b)?.iter().map(|j| j.c[2]).collect())
    };
    let sum_a: Vec<f64> = first.0.iter().zip(second.0).map(|(p, q)| p + q).collect();
    let sum_b: Vec<f64> = first.1.iter().zip(second.1).map(|(p, q)| p + q).collect();
    let both = c2(&sum_a, &sum_b)?;
    let one = c2(first.0, first.1)?;
    let two = c2(second.0, second.1)?;
    Ok((0..n).map(|i| both[i] - one[i] - two[i]).collect())
}

fn require_nonzero(v: &[f64]) -> Result<()> {
    if v.iter().all(|&a| a == 0.0) {
        return Err(Error::Input("tangent vector must be nonzero".into()));
    }
    if v.iter().any(|a| !a.is_finite()) {
        return Err(Error::Input("non-finite tangent vector".into()));
    }
    Ok(())
}

fn require_point(metric: &Metric, x: &[f64], v: &[f64]) -> Result<()> {
    let n = metric.dim();
    if x.len() != n || v.len() != n {
        return Err(Error::Input(format!("expected {n}-dimensional point and vector")));
    }
    if x.iter().any(|a| !a.is_finite()) {
        return Err(Error::Input("non-finite point".into()));
    }
    if !metric.in_domain(x) {
        return Err(Error::Domain { x: x.to_vec() });
    }
    require_nonzero(v)
}

pub fn fundamental_tensor(metric: &Metric, x: &[f64], v: &[f64]) -> Result<FundamentalTensor> {
    require_point(metric, x, v)?;
    fundamental_tensor_unchecked(metric, x, v)
}

pub(crate) fn fundamental_matrix(metric: &Metric, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let g = fundamental_generic(metric.norm_sq_tape(), x, v)?;
    Ok(DMatrix::from_row_slice(n, n, &g))
}

pub(crate) fn fundamental_tensor_unchecked(
    metric: &Metric,
    x: &[f64],
    v: &[f64],
) -> Result<FundamentalTensor> {
    let matrix = fundamental_matrix(metric, x, v)?;
    let eig = SymmetricEigen::new(matrix.clone());
    let min = eig.eigenvalues.min();
    let max = eig.eigenvalues.max();
    let degenerate = Error::Degenerate {
        x: x.to_vec(),
        v: v.to_vec(),
        ratio: if max > 0.0 { min / max } else { 0.0 },
    };
    if !(max > 0.0) || min < DEGENERACY_FLOOR * max {
        return Err(degenerate);
    }
    let inverse = matrix.clone().try_inverse().ok_or(degenerate)?;
    Ok(FundamentalTensor {
        x: x.to_vec(),
        v: v.to_vec(),
        matrix,
        inverse,
        min_eigenvalue: min,
        max_eigenvalue: max,
    })
}

/// Third-order symmetric `v`-derivatives of `G`, `d^3 G / dv^j dv^k dv^l`,
/// for `j <= k <= l`; returns the max magnitude.
pub fn berwald_norm(metric: &Metric, x: &[f64], v: &[f64]) -> Result<f64> {
    v_derivative_max::<4>(metric, x, v, 3)
}

/// `max |d^2 G^i / dv^j dv^k|`; the natural scale for [`berwald_norm`].
pub fn spray_hessian_norm(metric: &Metric, x: &[f64], v: &[f64]) -> Result<f64> {
    v_derivative_max::<3>(metric, x, v, 2)
}

fn v_derivative_max<const K: usize>(metric: &Metric, x: &[f64], v: &[f64], order: usize) -> Result<f64> {
    let n = x.len();
    if !metric.is_x_dependent() {
        return Ok(0.0);
    }
    let zero = vec![0.0; n];
    let units: Vec<Vec<f64>> = (0..n).map(|j| unit(n, j)).collect();
    let mut best = 0.0f64;
    let mut idx = vec![0usize; order];
    loop {
        let dirs: Vec<&[f64]> = idx.iter().map(|&j| units[j].as_slice()).collect();
        for i in 0..n {
            // D^k G^i [e_j, ...]; each component needs its own polarization pass
            let d = polarize(&dirs, |w: &[f64]| -> Result<f64> {
                Ok(spray_jet::<K>(metric, x, v, &zero, w)?[i].c[order])
            })?;
            best = best.max(d.abs());
        }
        // next non-decreasing multi-index
        let mut pos = order;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            if idx[pos] + 1 < n {
                idx[pos] += 1;
                for q in (pos + 1)..order {
                    idx[q] = idx[pos];
                }
                break;
            }
        }
    }
}

pub fn spray_coefficients(metric: &Metric, x: &[f64], v: &[f64]) -> Result<SprayData> {
    require_point(metric, x, v)?;
    fundamental_tensor_unchecked(metric, x, v)?;
    let spray = spray(metric, x, v)?;
    let connection = connection(metric, x, v)?;
    let berwald_norm = berwald_norm(metric, x, v)?;
    Ok(SprayData { x: x.to_vec(), v: v.to_vec(), spray, connection, berwald_norm })
}

/// The Jacobi operator `R` at `(x, v)` in coordinates.
pub fn berwald_curvature_operator(metric: &Metric, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    require_point(metric, x, v)?;
    fundamental_tensor_unchecked(metric, x, v)?;
    curvature_unchecked(metric, x, v)
}

pub(crate) fn curvature_unchecked(metric: &Metric, x: &[f64], v: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    if !metric.is_x_dependent() {
        return Ok(DMatrix::zeros(n, n));
    }
    let zero = vec![0.0; n];
    let c = |a: &[f64], b: &[f64]| spray_jet::<3>(metric, x, v, a, b);
    let g = spray(metric, x, v)?;
    let along_v = c(v, &zero)?;
    let along_g = c(&zero, &g)?;
    let mut r = DMatrix::zeros(n, n);
    let mut nmat = DMatrix::zeros(n, n);
    let mut second_xv = DMatrix::zeros(n, n);
    let mut second_gv = DMatrix::zeros(n, n);
    for k in 0..n {
        let e: Vec<f64> = unit(n, k);
        let jx = c(&e, &zero)?;
        let jv = c(&zero, &e)?;
        let jve = c(v, &e)?;
        let g_plus_e: Vec<f64> = g.iter().zip(&e).map(|(a, b)| a + b).collect();
        let jge = c(&zero, &g_plus_e)?;
        for i in 0..n {
            r[(i, k)] = 2.0 * jx[i].c[1];
            nmat[(i, k)] = jv[i].c[1];
            second_xv[(i, k)] = jve[i].c[2] - along_v[i].c[2] - jv[i].c[2];
            second_gv[(i, k)] = jge[i].c[2] - along_g[i].c[2] - jv[i].c[2];
        }
    }
    r -= &second_xv;
    r += second_gv * 2.0;
    r -= &nmat * &nmat;
    Ok(r)
}
