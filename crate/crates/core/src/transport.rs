//! Covariant derivative along geodesics, linear parallel transport and
//! Jacobi fields.
//!
//! Everything here goes through the connection `N = dG/dv`. The osculating
//! Riemannian route is implemented only as a cross-check
//! ([`osculating_cross_check`]).

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesics::{
    check_initial, flow_with_tangents, replay, replay_with_tangents, GeodesicTrace, OdeOptions, OdeSolution,
};
use crate::metric::Metric;
use crate::spray::{
    connection, curvature_unchecked, fundamental_matrix, spray, spray_second_derivative, spray_with_tangents,
};

/// A vector field sampled along a trace. Without `derivatives` the time
/// derivative is taken from a five-point Lagrange stencil on the nodes.
#[derive(Clone, Debug, Serialize)]
pub struct VectorFieldSamples {
    pub t: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub derivatives: Option<Vec<Vec<f64>>>,
}

impl VectorFieldSamples {
    pub fn new(t: Vec<f64>, values: Vec<Vec<f64>>) -> Self {
        VectorFieldSamples { t, values, derivatives: None }
    }

    fn derivative_at(&self, k: usize) -> Vec<f64> {
        if let Some(d) = &self.derivatives {
            return d[k].clone();
        }
        lagrange_derivative(&self.t, &self.values, k)
    }
}

/// Derivative at node `k` of the interpolating polynomial through up to five
/// neighbouring nodes.
fn lagrange_derivative(t: &[f64], y: &[Vec<f64>], k: usize) -> Vec<f64> {
    let len = t.len();
    let width = len.min(5);
    let start = k.saturating_sub(width / 2).min(len - width);
    let idx: Vec<usize> = (start..start + width).collect();
    let mut out = vec![0.0; y[k].len()];
    for &j in &idx {
        let w = if j == k {
            idx.iter().filter(|&&m| m != k).map(|&m| 1.0 / (t[k] - t[m])).sum::<f64>()
        } else {
            let mut num = 1.0;
            let mut den = 1.0;
            for &m in &idx {
                if m != j {
                    den *= t[j] - t[m];
                    if m != k {
                        num *= t[k] - t[m];
                    }
                }
            }
            num / den
        };
        for (o, a) in out.iter_mut().zip(&y[j]) {
            *o += w * a;
        }
    }
    out
}

fn mat_vec(m: &DMatrix<f64>, a: &[f64]) -> Vec<f64> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * a[j]).sum()).collect()
}

fn add(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p + q).collect()
}

fn max_abs(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

/// `F(x, w)`, with `F(x, 0) = 0`.
fn norm_or_zero(metric: &Metric, x: &[f64], w: &[f64]) -> Result<f64> {
    if w.iter().all(|&a| a == 0.0) {
        Ok(0.0)
    } else {
        metric.norm(x, w)
    }
}

/// `DG[(a; b)]` at `(x, v)`.
fn spray_derivative(metric: &Metric, x: &[f64], v: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let (_, mut d) = spray_with_tangents(metric, x, v, &[(a, b)])?;
    Ok(d.pop().expect("one direction requested"))
}

/// `(D W)^i = W'^i + N^i_j W^j` at every node of `trace`.
pub fn covariant_derivative(metric: &Metric, trace: &GeodesicTrace, field: &VectorFieldSamples) -> Result<VectorFieldSamples> {
    let n = metric.dim();
    let same_grid = field.t.len() == trace.t.len()
        && field.values.len() == trace.t.len()
        && field.t.iter().zip(&trace.t).all(|(a, b)| (a - b).abs() <= 1e-12 * (1.0 + b.abs()));
    if !same_grid {
        return Err(Error::Input("vector field is not sampled on the trace nodes".into()));
    }
    if field.values.iter().any(|w| w.len() != n) {
        return Err(Error::Input(format!("vector field samples must have {n} components")));
    }
    if let Some(d) = &field.derivatives {
        if d.len() != field.values.len() || d.iter().any(|w| w.len() != n) {
            return Err(Error::Input("derivative samples do not match the values".into()));
        }
    } else if trace.len() < 2 {
        return Err(Error::Input("need at least two nodes to differentiate samples".into()));
    }
    let mut values = Vec::with_capacity(trace.len());
    for k in 0..trace.len() {
        let nmat = connection(metric, &trace.x[k], &trace.v[k])?;
        values.push(add(&field.derivative_at(k), &mat_vec(&nmat, &field.values[k])));
    }
    Ok(VectorFieldSamples { t: trace.t.clone(), values, derivatives: None })
}

/// Vectors transported along a geodesic by `W' = -N(x, x') W`.
#[derive(Clone, Debug)]
pub struct ParallelFrame {
    pub trace: GeodesicTrace,
    pub initial: Vec<Vec<f64>>,
    /// `vectors[k][node]` is `W_k` at `trace.t[node]`.
    pub vectors: Vec<Vec<Vec<f64>>>,
    /// `norms[k][node] = F(W_k)`.
    pub norms: Vec<Vec<f64>>,
    solution: OdeSolution,
}

impl ParallelFrame {
    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    /// Columns `W_1 .. W_m` at a node.
    pub fn matrix(&self, node: usize) -> DMatrix<f64> {
        let n = self.trace.x[0].len();
        DMatrix::from_fn(n, self.len(), |i, k| self.vectors[k][node][i])
    }

    /// Dense-output transported vectors at any `t` in the trace range.
    pub fn at(&self, t: f64) -> Option<Vec<Vec<f64>>> {
        let n = self.trace.x[0].len();
        let y = self.solution.eval(t)?;
        Some((0..self.len()).map(|k| y[2 * n + k * n..2 * n + (k + 1) * n].to_vec()).collect())
    }

    /// `max |W' + N W|` at step midpoints, with `W'` taken from the
    /// interpolant rather than the transport equation.
    pub fn parallel_residual(&self, metric: &Metric) -> Result<f64> {
        let n = metric.dim();
        let mut worst = 0.0f64;
        for w in self.solution.t.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let (Some(y), Some(dy)) = (self.solution.eval(mid), self.solution.eval_derivative(mid)) else {
                continue;
            };
            let nmat = connection(metric, &y[..n], &y[n..2 * n])?;
            for k in 0..self.len() {
                let off = 2 * n + k * n;
                let r = add(&dy[off..off + n], &mat_vec(&nmat, &y[off..off + n]));
                worst = worst.max(max_abs(&r));
            }
        }
        Ok(worst)
    }

    /// Smallest `|det|` of the transport matrix over the nodes; needs a full
    /// basis.
    pub fn min_abs_determinant(&self) -> Option<f64> {
        let n = self.trace.x[0].len();
        (self.len() == n).then(|| (0..self.trace.len()).map(|k| self.matrix(k).determinant().abs()).fold(f64::INFINITY, f64::min))
    }

    /// CSV with columns `t`, the components `W<k>_<i>`, then `F_W<k>`.
    pub fn to_csv(&self) -> String {
        let n = self.trace.x[0].len();
        let mut out = String::from("t");
        for k in 1..=self.len() {
            for i in 1..=n {
                write!(out, ",W{k}_{i}").unwrap();
            }
        }
        for k in 1..=self.len() {
            write!(out, ",F_W{k}").unwrap();
        }
        out.push('\n');
        for node in 0..self.trace.len() {
            write!(out, "{:.16e}", self.trace.t[node]).unwrap();
            for w in &self.vectors {
                for a in &w[node] {
                    write!(out, ",{a:.16e}").unwrap();
                }
            }
            for f in &self.norms {
                write!(out, ",{:.16e}", f[node]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Transports each vector of `w0` along `trace`. The geodesic is recomputed
/// jointly with the vectors, stepping through the trace's own nodes.
pub fn parallel_transport(metric: &Metric, trace: &GeodesicTrace, w0: &[Vec<f64>]) -> Result<ParallelFrame> {
    let n = metric.dim();
    if w0.is_empty() {
        return Err(Error::Input("nothing to transport".into()));
    }
    let solution = replay_with_tangents(metric, &trace.t, &trace.x[0], &trace.v[0], &[], w0)?;
    let mut vectors = vec![Vec::with_capacity(trace.len()); w0.len()];
    let mut norms = vec![Vec::with_capacity(trace.len()); w0.len()];
    for y in &solution.y {
        for k in 0..w0.len() {
            let w = y[2 * n + k * n..2 * n + (k + 1) * n].to_vec();
            norms[k].push(norm_or_zero(metric, &y[..n], &w)?);
            vectors[k].push(w);
        }
    }
    Ok(ParallelFrame { trace: trace.clone(), initial: w0.to_vec(), vectors, norms, solution })
}

/// Transports the coordinate basis `e_1 .. e_n`.
pub fn parallel_frame(metric: &Metric, trace: &GeodesicTrace) -> Result<ParallelFrame> {
    let n = metric.dim();
    let basis: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).collect();
    parallel_transport(metric, trace, &basis)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum JacobiConstruction {
    /// Derivative of the flow with respect to its initial data.
    Variation,
    /// Jacobi equation solved in a parallel frame.
    Ode,
}

/// A Jacobi field along a geodesic, sampled at the trace nodes.
#[derive(Clone, Debug)]
pub struct JacobiFieldData {
    pub trace: GeodesicTrace,
    pub j: Vec<Vec<f64>>,
    /// `D J` at the nodes.
    pub dj: Vec<Vec<f64>>,
    pub construction: JacobiConstruction,
    solution: OdeSolution,
}

impl JacobiFieldData {
    /// `max |D D J + R J|` at step midpoints. Time derivatives come from the
    /// interpolant, so this measures the integration, not an identity.
    pub fn residual(&self, metric: &Metric) -> Result<f64> {
        let n = metric.dim();
        let mut worst = 0.0f64;
        for w in self.solution.t.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let (Some(y), Some(dy)) = (self.solution.eval(mid), self.solution.eval_derivative(mid)) else {
                continue;
            };
            let (x, v) = (&y[..n], &y[n..2 * n]);
            let nmat = connection(metric, x, v)?;
            let r = curvature_unchecked(metric, x, v)?;
            let (j, ddj) = match self.construction {
                JacobiConstruction::Variation => {
                    let (j, jd) = (&y[2 * n..3 * n], &y[3 * n..4 * n]);
                    let jdd = &dy[3 * n..4 * n];
                    // d/dt N along the curve, with (x', v') from the interpolant
                    let ndot_j = spray_second_derivative(metric, x, v, (&vec![0.0; n], j), (&dy[..n], &dy[n..2 * n]))?;
                    let nj = mat_vec(&nmat, j);
                    let njd = mat_vec(&nmat, jd);
                    let dj = add(jd, &nj);
                    let ddj: Vec<f64> = (0..n).map(|i| jdd[i] + ndot_j[i] + njd[i]).collect();
                    (j.to_vec(), add(&ddj, &mat_vec(&nmat, &dj)))
                }
                JacobiConstruction::Ode => {
                    let e = DMatrix::from_column_slice(n, n, &y[2 * n..2 * n + n * n]);
                    let edot = DMatrix::from_column_slice(n, n, &dy[2 * n..2 * n + n * n]);
                    let a = &y[2 * n + n * n..3 * n + n * n];
                    let ad = &y[3 * n + n * n..4 * n + n * n];
                    let add_ = &dy[3 * n + n * n..4 * n + n * n];
                    let dj = mat_vec(&e, ad);
                    let ddj = add(&add(&mat_vec(&edot, ad), &mat_vec(&e, add_)), &mat_vec(&nmat, &dj));
                    (mat_vec(&e, a), ddj)
                }
            };
            worst = worst.max(max_abs(&add(&ddj, &mat_vec(&r, &j))));
        }
        Ok(worst)
    }
}

/// `J(t) = d/ds gamma_{v0 + s w}(t)` at `s = 0`, by integrating the
/// variational equation alongside the geodesic.
pub fn jacobi_by_variation(
    metric: &Metric,
    x0: &[f64],
    v0: &[f64],
    w: &[f64],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<JacobiFieldData> {
    let n = metric.dim();
    let mut block = vec![0.0; 2 * n];
    if w.len() != n {
        return Err(Error::Input(format!("variation direction must have {n} entries")));
    }
    block[n..].copy_from_slice(w);
    variation_field(metric, x0, v0, block, t_end, opts)
}

/// Jacobi field with `J(0) = j0`, `D J(0) = dj0`, computed by variation of
/// the flow (initial point and velocity both perturbed).
pub fn jacobi_by_variation_with(
    metric: &Metric,
    x0: &[f64],
    v0: &[f64],
    j0: &[f64],
    dj0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<JacobiFieldData> {
    let n = metric.dim();
    if j0.len() != n || dj0.len() != n {
        return Err(Error::Input(format!("initial data must have {n} entries")));
    }
    check_initial(metric, x0, v0)?;
    let nmat = connection(metric, x0, v0)?;
    let nj = mat_vec(&nmat, j0);
    let mut block = j0.to_vec();
    block.extend(dj0.iter().zip(&nj).map(|(a, b)| a - b));
    variation_field(metric, x0, v0, block, t_end, opts)
}

fn variation_field(
    metric: &Metric,
    x0: &[f64],
    v0: &[f64],
    block: Vec<f64>,
    t_end: f64,
    opts: &OdeOptions,
) -> Result<JacobiFieldData> {
    check_initial(metric, x0, v0)?;
    let n = metric.dim();
    let solution = flow_with_tangents(metric, x0, v0, t_end, &[block], &[], opts, &[])?;
    if let Some(t) = solution.stopped_at {
        return Err(Error::ChartExit { t });
    }
    let trace = GeodesicTrace::from_solution(metric, solution.clone(), t_end)?;
    let mut j = Vec::with_capacity(trace.len());
    let mut dj = Vec::with_capacity(trace.len());
    for y in &solution.y {
        let nmat = connection(metric, &y[..n], &y[n..2 * n])?;
        let jk = y[2 * n..3 * n].to_vec();
        dj.push(add(&y[3 * n..4 * n], &mat_vec(&nmat, &jk)));
        j.push(jk);
    }
    Ok(JacobiFieldData { trace, j, dj, construction: JacobiConstruction::Variation, solution })
}

/// Solves `D D J = -R J` with `J(0) = j0`, `D J(0) = dj0` in a parallel
/// frame `E` along `trace`: `J = E a` with `a'' = -E^{-1} R E a`.
pub fn jacobi_by_ode(metric: &Metric, trace: &GeodesicTrace, j0: &[f64], dj0: &[f64]) -> Result<JacobiFieldData> {
    let n = metric.dim();
    if j0.len() != n || dj0.len() != n {
        return Err(Error::Input(format!("initial data must have {n} entries")));
    }
    // E(0) = identity, so a(0) = j0 and a'(0) = dj0
    let mut y0: Vec<f64> = trace.x[0].iter().chain(&trace.v[0]).copied().collect();
    for k in 0..n {
        y0.extend((0..n).map(|i| if i == k { 1.0 } else { 0.0 }));
    }
    y0.extend_from_slice(j0);
    y0.extend_from_slice(dj0);
    let rhs = |_t: f64, y: &[f64], dy: &mut [f64]| -> Result<()> {
        let (x, v) = (&y[..n], &y[n..2 * n]);
        let zero = vec![0.0; n];
        let dirs: Vec<(&[f64], &[f64])> =
            (0..n).map(|k| (zero.as_slice(), &y[2 * n + k * n..2 * n + (k + 1) * n])).collect();
        let (g, ne) = spray_with_tangents(metric, x, v, &dirs)?;
        dy[..n].copy_from_slice(v);
        for i in 0..n {
            dy[n + i] = -2.0 * g[i];
        }
        for k in 0..n {
            for i in 0..n {
                dy[2 * n + k * n + i] = -ne[k][i];
            }
        }
        let off = 2 * n + n * n;
        let e = DMatrix::from_column_slice(n, n, &y[2 * n..off]);
        let r = curvature_unchecked(metric, x, v)?;
        let rja = mat_vec(&r, &mat_vec(&e, &y[off..off + n]));
        let acc = e
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&rja))
            .ok_or_else(|| Error::Consistency("parallel frame became singular".into()))?;
        for i in 0..n {
            dy[off + i] = y[off + n + i];
            dy[off + n + i] = -acc[i];
        }
        Ok(())
    };
    let solution = replay(rhs, &trace.t, &y0)?;
    let off = 2 * n + n * n;
    let mut j = Vec::with_capacity(trace.len());
    let mut dj = Vec::with_capacity(trace.len());
    for y in &solution.y {
        let e = DMatrix::from_column_slice(n, n, &y[2 * n..off]);
        j.push(mat_vec(&e, &y[off..off + n]));
        dj.push(mat_vec(&e, &y[off + n..off + 2 * n]));
    }
    Ok(JacobiFieldData { trace: trace.clone(), j, dj, construction: JacobiConstruction::Ode, solution })
}

/// `D D J` at `(x, v)` for a solution of the variational equation with
/// state `(j, j')`, using exact jet derivatives of the spray.
fn second_covariant_derivative(metric: &Metric, x: &[f64], v: &[f64], j: &[f64], jd: &[f64]) -> Result<Vec<f64>> {
    let n = x.len();
    let g = spray(metric, x, v)?;
    let nmat = connection(metric, x, v)?;
    let jdd: Vec<f64> = spray_derivative(metric, x, v, j, jd)?.iter().map(|a| -2.0 * a).collect();
    let accel: Vec<f64> = g.iter().map(|a| -2.0 * a).collect();
    let ndot_j = spray_second_derivative(metric, x, v, (&vec![0.0; n], j), (v, &accel))?;
    let dj = add(jd, &mat_vec(&nmat, j));
    let ydot: Vec<f64> = (0..n).map(|i| jdd[i] + ndot_j[i]).collect();
    let ydot = add(&ydot, &mat_vec(&nmat, jd));
    Ok(add(&ydot, &mat_vec(&nmat, &dj)))
}

/// Recovers `R` along the geodesic from `-D D J` over the basis of Jacobi
/// fields with `J(0) = e_k`, `D J(0) = 0`, and returns the largest
/// deviation from the Jacobi operator, relative to `max(1, |R|)`.
pub fn curvature_reconstruction_error(
    metric: &Metric,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
) -> Result<f64> {
    check_initial(metric, x0, v0)?;
    let n = metric.dim();
    let nmat = connection(metric, x0, v0)?;
    let blocks: Vec<Vec<f64>> = (0..n)
        .map(|k| {
            let mut b = vec![0.0; 2 * n];
            b[k] = 1.0;
            for i in 0..n {
                b[n + i] = -nmat[(i, k)];
            }
            b
        })
        .collect();
    let sol = flow_with_tangents(metric, x0, v0, t_end, &blocks, &[], opts, &[])?;
    let mut worst = 0.0f64;
    for y in &sol.y {
        let (x, v) = (&y[..n], &y[n..2 * n]);
        let mut jm = DMatrix::zeros(n, n);
        let mut ddj = DMatrix::zeros(n, n);
        for k in 0..n {
            let off = 2 * n + 2 * n * k;
            let (j, jd) = (&y[off..off + n], &y[off + n..off + 2 * n]);
            let d = second_covariant_derivative(metric, x, v, j, jd)?;
            for i in 0..n {
                jm[(i, k)] = j[i];
                ddj[(i, k)] = d[i];
            }
        }
        let svd = jm.clone().svd(false, false);
        // past a conjugate point the basis is too ill-conditioned to invert
        if svd.singular_values.min() < 1e-6 * svd.singular_values.max() {
            continue;
        }
        let inv = jm.try_inverse().ok_or_else(|| Error::Consistency("Jacobi basis not invertible".into()))?;
        let r_hat = -ddj * inv;
        let r = curvature_unchecked(metric, x, v)?;
        let scale = r.amax().max(1.0);
        worst = worst.max((r_hat - r).amax() / scale);
    }
    Ok(worst)
}

/// Result of fitting `e(t) = |J(t) - t W(t)|` against `t`.
#[derive(Clone, Debug, Serialize)]
pub struct ExpansionFit {
    /// Log-log regression slope; `None` when the fit is degenerate.
    pub slope: Option<f64>,
    /// `e(t)` stayed below the noise floor everywhere.
    pub exact: bool,
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
}

/// Number of log-spaced sample times in `[1e-3, 1e-1]`.
const EXPANSION_SAMPLES: usize = 9;

/// Compares the Jacobi field with `J(0) = 0`, `J'(0) = w` against `t`
/// times the parallel transport of `w` and fits the exponent of the
/// discrepancy.
pub fn small_time_expansion_check(metric: &Metric, x0: &[f64], v0: &[f64], w: &[f64]) -> Result<ExpansionFit> {
    check_initial(metric, x0, v0)?;
    let n = metric.dim();
    if w.len() != n || w.iter().all(|&a| a == 0.0) {
        return Err(Error::Input("w must be a nonzero vector".into()));
    }
    let times: Vec<f64> = (0..EXPANSION_SAMPLES)
        .map(|k| 10f64.powf(-3.0 + 2.0 * k as f64 / (EXPANSION_SAMPLES - 1) as f64))
        .collect();
    let t_end = *times.last().unwrap();
    let mut block = vec![0.0; 2 * n];
    block[n..].copy_from_slice(w);
    let opts = OdeOptions { rtol: 1e-13, atol: 1e-15, ..OdeOptions::default() };
    let sol = flow_with_tangents(metric, x0, v0, t_end, &[block], &[w.to_vec()], &opts, &times)?;
    if let Some(t) = sol.stopped_at {
        return Err(Error::ChartExit { t });
    }
    let wnorm = max_abs(w);
    let mut errors = Vec::with_capacity(times.len());
    for &t in &times {
        let k = sol.t.iter().position(|&s| s == t).expect("sample times are nodes");
        let y = &sol.y[k];
        let e = (0..n).map(|i| y[2 * n + i] - t * y[4 * n + i]).fold(0.0f64, |m, d| m.max(d.abs()));
        errors.push(e);
    }
    let above: Vec<(f64, f64)> = times
        .iter()
        .zip(&errors)
        .filter(|(t, e)| **e > 1e-12 * wnorm * **t)
        .map(|(t, e)| (t.ln(), e.ln()))
        .collect();
    if above.len() < 3 {
        return Ok(ExpansionFit { slope: None, exact: true, times, errors });
    }
    let m = above.len() as f64;
    let (sx, sy) = above.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let (mx, my) = (sx / m, sy / m);
    let (num, den) = above
        .iter()
        .fold((0.0, 0.0), |(a, b), (x, y)| (a + (x - mx) * (y - my), b + (x - mx) * (x - mx)));
    Ok(ExpansionFit { slope: Some(num / den), exact: false, times, errors })
}

#[derive(Clone, Debug, Serialize)]
pub struct OsculatingCheck {
    /// Largest relative entrywise gap between the Christoffel operator of
    /// the osculating metric and `N`.
    pub max_discrepancy: f64,
    pub times: Vec<f64>,
    pub discrepancies: Vec<f64>,
}

const OSCULATING_STEP: f64 = 1e-3;
const STENCIL: [(f64, f64); 4] = [(-2.0, 1.0 / 12.0), (-1.0, -8.0 / 12.0), (1.0, 8.0 / 12.0), (2.0, -1.0 / 12.0)];

/// Builds the osculating extension `V` of `x'` by flowing the
/// `g_{v0}`-orthogonal hyperplane through `x0` along the spray, and compares
/// the Levi-Civita derivative of `g_V` along the geodesic (Christoffel
/// symbols by fourth-order finite differences) with `D W = W' + N W`.
pub fn osculating_cross_check(metric: &Metric, trace: &GeodesicTrace, sample_count: usize) -> Result<OsculatingCheck> {
    let n = metric.dim();
    if sample_count == 0 {
        return Err(Error::Input("sample_count must be at least 1".into()));
    }
    let (x0, v0) = (&trace.x[0], &trace.v[0]);
    let t_end = *trace.t.last().unwrap();
    let h = OSCULATING_STEP;
    if t_end <= 4.0 * h * (sample_count + 1) as f64 {
        return Err(Error::Input("trace too short for the requested samples".into()));
    }
    let times: Vec<f64> = (1..=sample_count).map(|j| t_end * j as f64 / (sample_count + 1) as f64).collect();
    let mut stops = Vec::new();
    for &t in &times {
        stops.push(t);
        stops.extend(STENCIL.iter().map(|(o, _)| t + o * h));
    }
    let opts = OdeOptions { rtol: 1e-13, atol: 1e-15, ..OdeOptions::default() };
    let flow = |x: &[f64]| -> Result<OdeSolution> {
        if !metric.in_domain(x) {
            return Err(Error::Margin { t: 0.0 });
        }
        let sol = flow_with_tangents(metric, x, v0, t_end, &[], &[], &opts, &stops)?;
        match sol.stopped_at {
            Some(t) => Err(Error::Margin { t }),
            None => Ok(sol),
        }
    };
    let state_at = |sol: &OdeSolution, t: f64| -> Vec<f64> {
        match sol.t.iter().position(|&s| s == t) {
            Some(k) => sol.y[k].clone(),
            None => sol.eval(t).expect("time inside the flow"),
        }
    };
    let transverse = orthogonal_complement(&fundamental_matrix(metric, x0, v0)?, v0);
    let base = flow(x0)?;
    let mut shifted = Vec::with_capacity(transverse.len());
    for b in &transverse {
        let mut row = Vec::with_capacity(STENCIL.len());
        for (o, _) in STENCIL {
            let x: Vec<f64> = x0.iter().zip(b).map(|(p, q)| p + o * h * q).collect();
            row.push(flow(&x)?);
        }
        shifted.push(row);
    }
    let mut discrepancies = Vec::with_capacity(times.len());
    for &t in &times {
        let y = state_at(&base, t);
        let (x, v) = (&y[..n], &y[n..2 * n]);
        // derivatives of g_V and of the chart map in the (s, y) parameters
        let mut dg: Vec<DMatrix<f64>> = Vec::with_capacity(n);
        let mut p = DMatrix::zeros(n, n);
        let mut acc = DMatrix::zeros(n, n);
        for (o, c) in STENCIL {
            let ys = state_at(&base, t + o * h);
            acc += fundamental_matrix(metric, &ys[..n], &ys[n..2 * n])? * (c / h);
        }
        dg.push(acc);
        for i in 0..n {
            p[(i, 0)] = v[i];
        }
        for (m, row) in shifted.iter().enumerate() {
            let mut acc = DMatrix::zeros(n, n);
            for (sol, (_, c)) in row.iter().zip(STENCIL) {
                let ys = state_at(sol, t);
                acc += fundamental_matrix(metric, &ys[..n], &ys[n..2 * n])? * (c / h);
                for i in 0..n {
                    p[(i, m + 1)] += c / h * ys[i];
                }
            }
            dg.push(acc);
        }
        let pinv = p.try_inverse().ok_or_else(|| Error::Consistency("osculating chart map is singular".into()))?;
        // d g / d x^k = sum_m dG/du^m (P^{-1})_{m k}
        let dgx: Vec<DMatrix<f64>> = (0..n)
            .map(|k| (0..n).fold(DMatrix::zeros(n, n), |a, m| a + &dg[m] * pinv[(m, k)]))
            .collect();
        let ginv = fundamental_matrix(metric, x, v)?
            .try_inverse()
            .ok_or_else(|| Error::Consistency("fundamental tensor not invertible".into()))?;
        // Gamma^k_{ij} v^i as a matrix in (k, j)
        let mut lowered = DMatrix::zeros(n, n);
        for l in 0..n {
            for j in 0..n {
                let mut s = 0.0;
                for i in 0..n {
                    s += v[i] * (dgx[i][(j, l)] + dgx[j][(i, l)] - dgx[l][(i, j)]);
                }
                lowered[(l, j)] = 0.5 * s;
            }
        }
        let christoffel = &ginv * lowered;
        let nmat = connection(metric, x, v)?;
        discrepancies.push((christoffel - &nmat).amax() / nmat.amax().max(1.0));
    }
    let max_discrepancy = discrepancies.iter().copied().fold(0.0, f64::max);
    Ok(OsculatingCheck { max_discrepancy, times, discrepancies })
}

/// A `g`-orthonormal basis of the `g`-orthogonal complement of `v`.
pub(crate) fn orthogonal_complement(g: &DMatrix<f64>, v: &[f64]) -> Vec<Vec<f64>> {
    let n = v.len();
    let ip = |a: &[f64], b: &[f64]| crate::spray::bilinear(g, a, b);
    let mut basis = vec![v.iter().map(|a| a / ip(v, v).sqrt()).collect::<Vec<f64>>()];
    for k in 0..n {
        let mut e: Vec<f64> = (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect();
        for b in &basis {
            let c = ip(&e, b);
            for (ei, bi) in e.iter_mut().zip(b) {
                *ei -= c * bi;
            }
        }
        let len = ip(&e, &e).sqrt();
        if len > 1e-6 && basis.len() < n {
            basis.push(e.iter().map(|a| a / len).collect());
        }
    }
    basis.split_off(1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::geodesics::integrate_geodesic;

    fn trace(metric: &Metric, x0: &[f64], v0: &[f64], t: f64) -> GeodesicTrace {
        integrate_geodesic(metric, x0, v0, t, &OdeOptions::default()).unwrap()
    }

    fn poincare_christoffel_times(x: &[f64], v: &[f64]) -> DMatrix<f64> {
        // conformal factor e^{2 phi}, phi = ln 2 - ln(1 - |x|^2)
        let s = 1.0 - (x[0] * x[0] + x[1] * x[1]);
        let dphi = [2.0 * x[0] / s, 2.0 * x[1] / s];
        let vdphi = v[0] * dphi[0] + v[1] * dphi[1];
        DMatrix::from_fn(2, 2, |k, j| {
            let dkj = if k == j { 1.0 } else { 0.0 };
            v[k] * dphi[j] + dkj * vdphi - v[j] * dphi[k]
        })
    }

    #[test]
    fn connection_is_levi_civita_on_poincare() {
        let m = fixtures::poincare();
        let tr = trace(&m, &[0.1, -0.2], &[0.3, 0.25], 1.0);
        for k in 0..tr.len() {
            let nmat = connection(&m, &tr.x[k], &tr.v[k]).unwrap();
            let gamma = poincare_christoffel_times(&tr.x[k], &tr.v[k]);
            assert!((nmat - gamma).amax() < 1e-11);
        }
    }

    #[test]
    fn quartic_transport_is_constant() {
        let m = fixtures::minkowski_quartic(1.0);
        let tr = trace(&m, &[0.1, 0.2], &[0.4, -0.3], 1.0);
        let f = parallel_transport(&m, &tr, &[vec![0.7, 0.1]]).unwrap();
        for w in &f.vectors[0] {
            assert_eq!(w, &vec![0.7, 0.1]);
        }
        let field = VectorFieldSamples::new(tr.t.clone(), tr.t.iter().map(|t| vec![t * t, 1.0]).collect());
        let d = covariant_derivative(&m, &tr, &field).unwrap();
        for (k, t) in tr.t.iter().enumerate() {
            assert!((d.values[k][0] - 2.0 * t).abs() < 1e-10);
            assert!(d.values[k][1].abs() < 1e-12);
        }
    }

    #[test]
    fn velocity_is_parallel() {
        for m in fixtures::all() {
            let n = m.dim();
            let x0 = m.region().center();
            let v0: Vec<f64> = (0..n).map(|i| 0.3 - 0.1 * i as f64).collect();
            let tr = trace(&m, &x0, &v0, 1.0);
            let accel: Vec<Vec<f64>> =
                tr.x.iter().zip(&tr.v).map(|(x, v)| spray(&m, x, v).unwrap().iter().map(|g| -2.0 * g).collect()).collect();
            let field = VectorFieldSamples { t: tr.t.clone(), values: tr.v.clone(), derivatives: Some(accel) };
            let d = covariant_derivative(&m, &tr, &field).unwrap();
            assert!(d.values.iter().all(|w| max_abs(w) < 1e-12), "{}", m.spec().family);
            let frame = parallel_transport(&m, &tr, std::slice::from_ref(&v0)).unwrap();
            for (w, v) in frame.vectors[0].iter().zip(&tr.v) {
                assert!(max_abs(&add(w, &v.iter().map(|a| -a).collect::<Vec<_>>())) < 1e-9);
            }
        }
    }

    #[test]
    fn sampled_derivative_is_accurate_enough() {
        let m = fixtures::poincare();
        let tr = trace(&m, &[0.0, 0.1], &[0.35, 0.1], 1.0);
        let d = covariant_derivative(&m, &tr, &VectorFieldSamples::new(tr.t.clone(), tr.v.clone())).unwrap();
        assert!(d.values.iter().all(|w| max_abs(w) < 1e-4));
    }

    #[test]
    fn mismatched_grid_rejected() {
        let m = fixtures::poincare();
        let tr = trace(&m, &[0.0, 0.1], &[0.35, 0.1], 1.0);
        let mut t = tr.t.clone();
        t[1] += 1e-3;
        let e = covariant_derivative(&m, &tr, &VectorFieldSamples::new(t, tr.v.clone())).unwrap_err();
        assert!(e.is_input_error());
    }

    #[test]
    fn riemannian_transport_is_isometric_and_linear() {
        let m = fixtures::poincare();
        let tr = trace(&m, &[0.2, -0.1], &[-0.3, 0.4], 1.0);
        let u = vec![1.0, 0.3];
        let w = vec![-0.2, 0.9];
        let combo: Vec<f64> = u.iter().zip(&w).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
        let f = parallel_transport(&m, &tr, &[u.clone(), w.clone(), combo]).unwrap();
        let g0 = fundamental_matrix(&m, &tr.x[0], &tr.v[0]).unwrap();
        let ip0 = [crate::spray::bilinear(&g0, &u, &u), crate::spray::bilinear(&g0, &u, &w), crate::spray::bilinear(&g0, &w, &w)];
        for k in 0..tr.len() {
            let g = fundamental_matrix(&m, &tr.x[k], &tr.v[k]).unwrap();
            let (a, b) = (&f.vectors[0][k], &f.vectors[1][k]);
            let ip = [crate::spray::bilinear(&g, a, a), crate::spray::bilinear(&g, a, b), crate::spray::bilinear(&g, b, b)];
            for (p, q) in ip.iter().zip(&ip0) {
                assert!((p - q).abs() < 1e-8);
            }
            for i in 0..2 {
                let lin = 2.0 * a[i] - 0.5 * b[i];
                assert!((f.vectors[2][k][i] - lin).abs() <= 1e-10 * lin.abs().max(1.0));
            }
        }
        assert!(f.parallel_residual(&m).unwrap() < 1e-6);
    }

    #[test]
    fn frame_stays_invertible_and_exports() {
        let m = fixtures::randers_sine();
        let tr = trace(&m, &[0.1, 0.2], &[0.5, 0.2], 1.0);
        let f = parallel_frame(&m, &tr).unwrap();
        assert!(f.min_abs_determinant().unwrap() > 0.1);
        let csv = f.to_csv();
        assert!(csv.starts_with("t,W1_1,W1_2,W2_1,W2_2,F_W1,F_W2\n"));
        assert_eq!(csv.lines().count(), tr.len() + 1);
        assert!(f.at(0.5).is_some());
    }

    #[test]
    fn flat_jacobi_field_is_linear() {
        let m = fixtures::minkowski_quartic(1.0);
        let jf = jacobi_by_variation(&m, &[0.0, 0.0], &[0.5, 0.2], &[0.1, -0.3], 1.0, &OdeOptions::default()).unwrap();
        for (t, j) in jf.trace.t.iter().zip(&jf.j) {
            assert!((j[0] - 0.1 * t).abs() < 1e-14 && (j[1] + 0.3 * t).abs() < 1e-14);
        }
    }

    #[test]
    fn hyperbolic_jacobi_field_grows_like_sinh() {
        // unit-speed radial geodesic through 0, g-unit orthogonal w
        let m = fixtures::poincare();
        let jf = jacobi_by_variation(&m, &[0.0, 0.0], &[0.5, 0.0], &[0.0, 0.5], 1.0, &OdeOptions::default()).unwrap();
        for ((t, x), j) in jf.trace.t.iter().zip(&jf.trace.x).zip(&jf.j) {
            let conformal = 2.0 / (1.0 - x[0] * x[0] - x[1] * x[1]);
            let len = conformal * (j[0] * j[0] + j[1] * j[1]).sqrt();
            assert!((len - t.sinh()).abs() < 1e-8, "{t}: {len}");
        }
        assert!(jf.residual(&m).unwrap() < 1e-5);
    }

    #[test]
    fn ode_and_variation_agree() {
        for m in fixtures::all() {
            let n = m.dim();
            let x0 = m.region().center();
            let v0: Vec<f64> = (0..n).map(|i| 0.35 - 0.15 * i as f64).collect();
            let w: Vec<f64> = (0..n).map(|i| if i == 1 { 1.0 } else { 0.2 }).collect();
            let opts = OdeOptions::default();
            let a = jacobi_by_variation(&m, &x0, &v0, &w, 1.0, &opts).unwrap();
            let b = jacobi_by_ode(&m, &a.trace, &vec![0.0; n], &w).unwrap();
            for k in 0..a.trace.len() {
                for i in 0..n {
                    assert!((a.j[k][i] - b.j[k][i]).abs() < 1e-7, "{}", m.spec().family);
                    assert!((a.dj[k][i] - b.dj[k][i]).abs() < 1e-7);
                }
            }
            assert!(b.residual(&m).unwrap() < 1e-5, "{}", m.spec().family);
        }
    }

    #[test]
    fn trivial_ode_data() {
        let m = fixtures::randers_sine();
        let tr = trace(&m, &[0.0, 0.0], &[0.4, 0.3], 1.0);
        let zero = jacobi_by_ode(&m, &tr, &[0.0, 0.0], &[0.0, 0.0]).unwrap();
        assert!(zero.j.iter().all(|j| j == &vec![0.0, 0.0]));
        let pole = jacobi_by_ode(&m, &tr, &[0.0, 0.0], &[0.4, 0.3]).unwrap();
        for k in 0..tr.len() {
            for i in 0..2 {
                assert!((pole.j[k][i] - tr.t[k] * tr.v[k][i]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn curvature_is_recovered_from_jacobi_fields() {
        for m in fixtures::all() {
            let n = m.dim();
            let x0 = m.region().center();
            let v0: Vec<f64> = (0..n).map(|i| 0.3 + 0.1 * i as f64).collect();
            let err = curvature_reconstruction_error(&m, &x0, &v0, 1.0, &OdeOptions::default()).unwrap();
            assert!(err < 1e-6, "{}: {err}", m.spec().family);
        }
    }

    #[test]
    fn expansion_is_cubic() {
        let m = fixtures::poincare();
        let fit = small_time_expansion_check(&m, &[0.1, 0.2], &[0.4, -0.2], &[0.3, 0.5]).unwrap();
        let slope = fit.slope.unwrap();
        assert!((2.8..3.2).contains(&slope), "{slope}");
        let flat = small_time_expansion_check(&fixtures::minkowski_quartic(1.0), &[0.1, 0.2], &[0.4, -0.2], &[0.3, 0.5]).unwrap();
        assert!(flat.exact && flat.slope.is_none());
    }

    #[test]
    fn osculating_derivative_matches_connection() {
        let cases = [
            (fixtures::poincare(), vec![0.1, -0.1], 1e-9),
            (fixtures::sphere_chart(), vec![0.2, 0.1], 1e-9),
            (fixtures::minkowski_quartic(1.0), vec![0.1, 0.3], 1e-9),
            (fixtures::randers_sine(), vec![0.0, 0.2], 1e-5),
            (fixtures::berwald_product(), vec![0.0, 0.1, 0.0], 1e-5),
        ];
        for (m, x0, tol) in cases {
            let v0: Vec<f64> = (0..m.dim()).map(|i| 0.3 - 0.1 * i as f64).collect();
            let tr = trace(&m, &x0, &v0, 1.0);
            let c = osculating_cross_check(&m, &tr, 8).unwrap();
            assert!(c.max_discrepancy < tol, "{}: {}", m.spec().family, c.max_discrepancy);
        }
    }

    #[test]
    fn osculating_extension_needs_margin() {
        let m = fixtures::poincare();
        let tr = trace(&m, &[0.0, 0.6995], &[0.3, 0.0], 0.5);
        match osculating_cross_check(&m, &tr, 3) {
            Err(Error::Margin { .. }) => {}
            other => panic!("{other:?}"),
        }
    }
}
