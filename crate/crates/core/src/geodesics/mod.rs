//! Geodesic flow `x'' = -2 G(x, x')`, the exponential map and the local
//! (forward) distance by Newton shooting.

mod dopri;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

pub use dopri::{integrate, replay, OdeOptions, OdeSolution};

use crate::error::{Error, Result};
use crate::metric::Metric;
use crate::spray::{spray, spray_with_tangents};

/// Right-hand side of the geodesic equation with tangent blocks attached.
///
/// State layout: `x`, `v`, then `variations` blocks `(dx, dv)` of length
/// `2n` solving `dx' = dv`, `dv' = -2 DG[(dx; dv)]`, then `transports`
/// blocks `W` of length `n` solving `W' = -N W`.
pub(crate) fn augmented_rhs(
    metric: &Metric,
    variations: usize,
    transports: usize,
) -> impl FnMut(f64, &[f64], &mut [f64]) -> Result<()> + '_ {
    let n = metric.dim();
    let zero = vec![0.0; n];
    let w_off = 2 * n + 2 * n * variations;
    move |_t: f64, y: &[f64], dy: &mut [f64]| {
        let (x, v) = (&y[..n], &y[n..2 * n]);
        dy[..n].copy_from_slice(v);
        let (g, tangents) = if variations + transports == 0 {
            (spray(metric, x, v)?, Vec::new())
        } else {
            let mut dirs: Vec<(&[f64], &[f64])> = Vec::with_capacity(variations + transports);
            for j in 0..variations {
                let off = 2 * n + 2 * n * j;
                dirs.push((&y[off..off + n], &y[off + n..off + 2 * n]));
            }
            for j in 0..transports {
                let off = w_off + n * j;
                dirs.push((zero.as_slice(), &y[off..off + n]));
            }
            spray_with_tangents(metric, x, v, &dirs)?
        };
        for i in 0..n {
            dy[n + i] = -2.0 * g[i];
        }
        for (j, dg) in tangents.iter().enumerate() {
            if j < variations {
                let off = 2 * n + 2 * n * j;
                for i in 0..n {
                    dy[off + i] = y[off + n + i];
                    dy[off + n + i] = -2.0 * dg[i];
                }
            } else {
                let off = w_off + n * (j - variations);
                for i in 0..n {
                    dy[off + i] = -dg[i];
                }
            }
        }
        Ok(())
    }
}

fn augmented_state(n: usize, x0: &[f64], v0: &[f64], variations: &[Vec<f64>], transports: &[Vec<f64>]) -> Result<Vec<f64>> {
    let mut y0: Vec<f64> = x0.iter().chain(v0).copied().collect();
    for blk in variations {
        if blk.len() != 2 * n {
            return Err(Error::Input(format!("variation block must have {} entries", 2 * n)));
        }
        y0.extend_from_slice(blk);
    }
    for blk in transports {
        if blk.len() != n {
            return Err(Error::Input(format!("transported vector must have {n} entries")));
        }
        y0.extend_from_slice(blk);
    }
    Ok(y0)
}

/// Integrates the geodesic from `(x0, v0)` with tangent blocks attached (see
/// [`augmented_rhs`] for the layout). Step control sees only `(x, v)`, so the
/// nodes coincide with the bare geodesic's. Stops (without error) when `x`
/// leaves the chart.
#[allow(clippy::too_many_arguments)]
pub fn flow_with_tangents(
    metric: &Metric,
    x0: &[f64],
    v0: &[f64],
    t_end: f64,
    variations: &[Vec<f64>],
    transports: &[Vec<f64>],
    opts: &OdeOptions,
    tstops: &[f64],
) -> Result<OdeSolution> {
    let n = metric.dim();
    let y0 = augmented_state(n, x0, v0, variations, transports)?;
    let rhs = augmented_rhs(metric, variations.len(), transports.len());
    integrate(rhs, 0.0, &y0, t_end, opts, 2 * n, tstops, |_, y| metric.in_domain(&y[..n]))
}

/// Like [`flow_with_tangents`] but stepping exactly through `nodes`, e.g.
/// the nodes of an existing trace.
pub fn replay_with_tangents(
    metric: &Metric,
    nodes: &[f64],
    x0: &[f64],
    v0: &[f64],
    variations: &[Vec<f64>],
    transports: &[Vec<f64>],
) -> Result<OdeSolution> {
    let n = metric.dim();
    let y0 = augmented_state(n, x0, v0, variations, transports)?;
    replay(augmented_rhs(metric, variations.len(), transports.len()), nodes, &y0)
}

/// Adaptive solution of the geodesic equation sampled at its accepted nodes.
#[derive(Clone, Debug)]
pub struct GeodesicTrace {
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    /// `F(x(t), x'(t))` at each node.
    pub speed: Vec<f64>,
    pub requested_end: f64,
    /// Time of the first node found outside the chart, if the trace was cut.
    pub exit_time: Option<f64>,
    solution: OdeSolution,
}

impl GeodesicTrace {
    pub(crate) fn from_solution(metric: &Metric, solution: OdeSolution, requested_end: f64) -> Result<Self> {
        let n = metric.dim();
        let x: Vec<Vec<f64>> = solution.y.iter().map(|y| y[..n].to_vec()).collect();
        let v: Vec<Vec<f64>> = solution.y.iter().map(|y| y[n..2 * n].to_vec()).collect();
        let speed = x.iter().zip(&v).map(|(x, v)| metric.norm(x, v)).collect::<Result<Vec<_>>>()?;
        Ok(GeodesicTrace {
            t: solution.t.clone(),
            x,
            v,
            speed,
            requested_end,
            exit_time: solution.stopped_at,
            solution,
        })
    }

    pub fn exited(&self) -> bool {
        self.exit_time.is_some()
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn end_point(&self) -> &[f64] {
        self.x.last().expect("trace has an initial node")
    }

    pub fn end_velocity(&self) -> &[f64] {
        self.v.last().expect("trace has an initial node")
    }

    /// Dense-output `(x(t), x'(t))`; `None` outside the integrated range.
    pub fn at(&self, t: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let n = self.x[0].len();
        self.solution.eval(t).map(|y| (y[..n].to_vec(), y[n..2 * n].to_vec()))
    }

    /// `max_t |F(x') - F(x'(0))| / F(x'(0))` over the nodes.
    pub fn max_speed_drift(&self) -> f64 {
        let f0 = self.speed[0];
        self.speed.iter().map(|f| (f - f0).abs() / f0).fold(0.0, f64::max)
    }

    pub fn rhs_evaluations(&self) -> usize {
        self.solution.rhs_evaluations
    }

    /// CSV with columns `t, x1..xn, v1..vn, F`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let n = self.x[0].len();
        let mut out = String::from("t");
        for i in 1..=n {
            write!(out, ",x{i}").unwrap();
        }
        for i in 1..=n {
            write!(out, ",v{i}").unwrap();
        }
        out.push_str(",F\n");
        for k in 0..self.t.len() {
            write!(out, "{:.16e}", self.t[k]).unwrap();
            for a in self.x[k].iter().chain(&self.v[k]) {
                write!(out, ",{a:.16e}").unwrap();
            }
            writeln!(out, ",{:.16e}", self.speed[k]).unwrap();
        }
        out
    }
}

pub(crate) fn check_initial(metric: &Metric, x0: &[f64], v0: &[f64]) -> Result<()> {
    let n = metric.dim();
    if x0.len() != n || v0.len() != n {
        return Err(Error::Input(format!("expected {n}-dimensional point and vector")));
    }
    if x0.iter().chain(v0).any(|a| !a.is_finite()) {
        return Err(Error::Input("non-finite initial condition".into()));
    }
    if !metric.in_domain(x0) {
        return Err(Error::Domain { x: x0.to_vec() });
    }
    if v0.iter().all(|&a| a == 0.0) {
        return Err(Error::Input("initial velocity must be nonzero".into()));
    }
    Ok(())
}

/// Geodesic on `[0, t_end]` (`t_end` may be negative). A chart exit returns
/// a truncated trace with [`GeodesicTrace::exit_time`] set.
pub fn integrate_geodesic(metric: &Metric, x0: &[f64], v0: &[f64], t_end: f64, opts: &OdeOptions) -> Result<GeodesicTrace> {
    check_initial(metric, x0, v0)?;
    if !t_end.is_finite() {
        return Err(Error::Input("integration time must be finite".into()));
    }
    let sol = flow_with_tangents(metric, x0, v0, t_end, &[], &[], opts, &[])?;
    GeodesicTrace::from_solution(metric, sol, t_end)
}

/// `exp_{x0}(v0)`, the geodesic endpoint at `t = 1`.
pub fn exp_map(metric: &Metric, x0: &[f64], v0: &[f64], opts: &OdeOptions) -> Result<Vec<f64>> {
    let trace = integrate_geodesic(metric, x0, v0, 1.0, opts)?;
    match trace.exit_time {
        Some(t) => Err(Error::ChartExit { t }),
        None => Ok(trace.end_point().to_vec()),
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BvpOptions {
    pub ode: OdeOptions,
    /// Converged when `|exp_p(v) - q|_inf <= tol * (1 + |q|_inf)`.
    pub tol: f64,
    pub max_iterations: usize,
}

impl Default for BvpOptions {
    fn default() -> Self {
        BvpOptions { ode: OdeOptions::default(), tol: 1e-11, max_iterations: 40 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DistanceResult {
    /// Forward distance `d(p, q) = F(p, v)`.
    pub distance: f64,
    /// Initial velocity of the connecting geodesic on `[0, 1]`.
    pub velocity: Vec<f64>,
    /// Velocity of the connecting geodesic on arrival at `q`.
    pub arrival_velocity: Vec<f64>,
    pub iterations: usize,
    pub residual: f64,
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0, |m, x| m.max(x.abs()))
}

struct Shot {
    residual: Vec<f64>,
    jacobian: Option<DMatrix<f64>>,
    arrival: Vec<f64>,
}

/// `exp_p(v) - q`, optionally with its `v`-Jacobian from variational fields.
/// `None` when the geodesic leaves the chart before `t = 1`.
fn shoot(metric: &Metric, p: &[f64], v: &[f64], q: &[f64], opts: &OdeOptions, jacobian: bool) -> Result<Option<Shot>> {
    let n = metric.dim();
    let init: Vec<Vec<f64>> = if jacobian {
        (0..n)
            .map(|k| {
                let mut b = vec![0.0; 2 * n];
                b[n + k] = 1.0;
                b
            })
            .collect()
    } else {
        Vec::new()
    };
    let sol = flow_with_tangents(metric, p, v, 1.0, &init, &[], opts, &[])?;
    if sol.stopped_at.is_some() {
        return Ok(None);
    }
    let y = sol.last();
    let residual: Vec<f64> = (0..n).map(|i| y[i] - q[i]).collect();
    let jacobian = jacobian.then(|| DMatrix::from_fn(n, n, |i, k| y[2 * n + k * 2 * n + i]));
    Ok(Some(Shot { residual, jacobian, arrival: y[n..2 * n].to_vec() }))
}

fn norm_sq(r: &[f64]) -> f64 {
    r.iter().map(|a| a * a).sum()
}

/// Forward distance `d(p, q)` inside the metric's convex-neighbourhood box,
/// by damped Newton shooting on `exp_p(v) = q`.
///
/// The first guess points along `q - p` with length estimated by the
/// midpoint rule, `v = (q - p) F(m, q - p) / F(p, q - p)`.
pub fn local_distance(metric: &Metric, p: &[f64], q: &[f64], opts: &BvpOptions) -> Result<DistanceResult> {
    let chord: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
    let mid: Vec<f64> = q.iter().zip(p).map(|(a, b)| 0.5 * (a + b)).collect();
    let guess = match (metric.norm(&mid, &chord), metric.norm(p, &chord)) {
        (Ok(fm), Ok(fp)) if fm > 0.0 && fp > 0.0 => chord.iter().map(|c| c * fm / fp).collect(),
        _ => chord,
    };
    local_distance_from(metric, p, q, &guess, opts)
}

/// [`local_distance`] with an explicit initial velocity guess.
///
/// The Jacobian (from variational fields) is refreshed only when the
/// residual stops contracting fast; in between it is updated by Broyden's
/// rank-one formula, so well-warmed solves cost a few plain integrations.
pub fn local_distance_from(
    metric: &Metric,
    p: &[f64],
    q: &[f64],
    guess: &[f64],
    opts: &BvpOptions,
) -> Result<DistanceResult> {
    let n = metric.dim();
    if p.len() != n || q.len() != n || guess.len() != n {
        return Err(Error::Input(format!("expected {n}-dimensional points")));
    }
    if p.iter().chain(q).chain(guess).any(|a| !a.is_finite()) {
        return Err(Error::Input("non-finite point".into()));
    }
    let region = metric.region();
    for point in [p, q] {
        if !region.contains(point) {
            return Err(Error::Boundary { point: point.to_vec(), region: region.to_string() });
        }
    }
    if p == q {
        return Ok(DistanceResult {
            distance: 0.0,
            velocity: vec![0.0; n],
            arrival_velocity: vec![0.0; n],
            iterations: 0,
            residual: 0.0,
        });
    }
    let target = opts.tol * (1.0 + inf_norm(q));
    let mut v = if guess.iter().all(|&a| a == 0.0) {
        q.iter().zip(p).map(|(a, b)| a - b).collect()
    } else {
        guess.to_vec()
    };
    // shorten a guess that leaves the chart
    let mut first = None;
    for _ in 0..30 {
        if let Some(s) = shoot(metric, p, &v, q, &opts.ode, false)? {
            first = Some(s);
            break;
        }
        v.iter_mut().for_each(|a| *a *= 0.5);
    }
    let mut shot = first.ok_or(Error::Bvp { residual: f64::INFINITY, iterations: 0 })?;
    let mut jac: Option<DMatrix<f64>> = None;
    let mut iteration = 0;
    loop {
        let res = inf_norm(&shot.residual);
        if res <= target {
            return Ok(DistanceResult {
                distance: metric.norm(p, &v)?,
                velocity: v,
                arrival_velocity: shot.arrival,
                iterations: iteration,
                residual: res,
            });
        }
        if iteration >= opts.max_iterations {
            return Err(Error::Bvp { residual: res, iterations: iteration });
        }
        iteration += 1;
        let fresh = jac.is_none();
        let j = match jac.take() {
            Some(j) => j,
            None => {
                let s = shoot(metric, p, &v, q, &opts.ode, true)?.ok_or(Error::Bvp { residual: res, iterations: iteration })?;
                s.jacobian.expect("requested")
            }
        };
        let r0 = DVector::from_column_slice(&shot.residual);
        let Some(delta) = j.clone().lu().solve(&-&r0) else {
            if fresh {
                return Err(Error::Bvp { residual: res, iterations: iteration });
            }
            continue;
        };
        let merit = norm_sq(&shot.residual);
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..12 {
            let trial: Vec<f64> = v.iter().zip(delta.iter()).map(|(a, d)| a + alpha * d).collect();
            if trial.iter().any(|a| *a != 0.0) {
                if let Some(s) = shoot(metric, p, &trial, q, &opts.ode, false)? {
                    if norm_sq(&s.residual) <= (1.0 - 1e-4 * alpha) * merit || inf_norm(&s.residual) <= target {
                        accepted = Some((trial, s));
                        break;
                    }
                }
            }
            if !fresh {
                break;
            }
            alpha *= 0.5;
        }
        let Some((trial, s)) = accepted else {
            if fresh {
                return Err(Error::Bvp { residual: res, iterations: iteration });
            }
            // the stale Jacobian failed; retry from the same point with a fresh one
            continue;
        };
        let contraction = inf_norm(&s.residual) / res;
        if contraction < 0.1 {
            // Broyden: J += (dr - J dv) dv^T / |dv|^2
            let dv = delta * alpha;
            let dr = DVector::from_column_slice(&s.residual) - &r0;
            let denom = dv.norm_squared();
            jac = Some(if denom > 0.0 { &j + (dr - &j * &dv) * dv.transpose() / denom } else { j });
        }
        v = trial;
        shot = s;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn quartic_geodesic_is_a_line() {
        let m = fixtures::minkowski_quartic(1.0);
        let tr = integrate_geodesic(&m, &[0.0, 0.0], &[1.0, 0.0], 1.0, &OdeOptions::default()).unwrap();
        for (t, x) in tr.t.iter().zip(&tr.x) {
            assert_relative_eq!(x[0], *t, epsilon = 1e-15);
            assert_eq!(x[1], 0.0);
        }
        let e = exp_map(&m, &[0.0, 0.0], &[0.3, 0.4], &OdeOptions::default()).unwrap();
        assert_relative_eq!(e[0], 0.3, epsilon = 1e-15);
        assert_relative_eq!(e[1], 0.4, epsilon = 1e-15);
    }

    #[test]
    fn poincare_radial_geodesic() {
        // unit-speed radial geodesic: |x(t)| = tanh(t / 2)
        let m = fixtures::poincare();
        let v0 = [0.5 * 0.6, 0.5 * 0.8];
        let tr = integrate_geodesic(&m, &[0.0, 0.0], &v0, 1.5, &OdeOptions::default()).unwrap();
        assert!(!tr.exited());
        for (t, x) in tr.t.iter().zip(&tr.x) {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            assert_relative_eq!(r, (t / 2.0).tanh(), epsilon = 1e-9);
            assert_relative_eq!(x[0] * 0.8, x[1] * 0.6, epsilon = 1e-12);
        }
        // (1/2, 0) is F-unit at the origin
        let e = exp_map(&m, &[0.0, 0.0], &[0.5, 0.0], &OdeOptions::default()).unwrap();
        assert_relative_eq!(e[0], 0.5f64.tanh(), epsilon = 1e-9);
        assert_relative_eq!(e[0], 0.462117, epsilon = 1e-6);
        assert!(e[1].abs() < 1e-15);
        // (1, 0) has speed 2 and would reach tanh(1) > 0.7
        assert!(matches!(exp_map(&m, &[0.0, 0.0], &[1.0, 0.0], &OdeOptions::default()), Err(Error::ChartExit { .. })));
    }

    #[test]
    fn speed_is_conserved() {
        for m in fixtures::all() {
            let x = m.region().center();
            let mut v = vec![0.2; m.dim()];
            v[0] = -0.3;
            let tr = integrate_geodesic(&m, &x, &v, 1.0, &OdeOptions::default()).unwrap();
            assert!(tr.max_speed_drift() < 1e-8, "{}: {}", m.spec().family, tr.max_speed_drift());
        }
    }

    #[test]
    fn chart_exit_truncates() {
        let m = fixtures::poincare();
        let tr = integrate_geodesic(&m, &[0.0, 0.0], &[1.0, 0.0], 5.0, &OdeOptions::default()).unwrap();
        assert!(tr.exited());
        assert!(m.in_domain(tr.end_point()));
        assert!(matches!(exp_map(&m, &[0.0, 0.0], &[5.0, 0.0], &OdeOptions::default()), Err(Error::ChartExit { .. })));
    }

    #[test]
    fn zero_velocity_rejected() {
        let m = fixtures::poincare();
        assert!(matches!(exp_map(&m, &[0.0, 0.0], &[0.0, 0.0], &OdeOptions::default()), Err(Error::Input(_))));
    }

    #[test]
    fn backward_flow_retraces() {
        let m = fixtures::randers_sine();
        let opts = OdeOptions::default();
        let fwd = integrate_geodesic(&m, &[0.1, 0.2], &[0.5, -0.4], 1.0, &opts).unwrap();
        let back = integrate_geodesic(&m, fwd.end_point(), fwd.end_velocity(), -1.0, &opts).unwrap();
        for (a, b) in back.end_point().iter().zip([0.1, 0.2]) {
            assert_relative_eq!(*a, b, epsilon = 1e-9);
        }
    }

    #[test]
    fn flow_is_homogeneous() {
        let m = fixtures::sphere_chart();
        let opts = OdeOptions { rtol: 1e-11, atol: 1e-13, ..Default::default() };
        let slow = integrate_geodesic(&m, &[0.1, 0.0], &[0.3, 0.2], 1.0, &opts).unwrap();
        let fast = integrate_geodesic(&m, &[0.1, 0.0], &[0.6, 0.4], 0.5, &opts).unwrap();
        for (a, b) in slow.end_point().iter().zip(fast.end_point()) {
            assert_relative_eq!(*a, *b, epsilon = 1e-10);
        }
    }

    #[test]
    fn hyperbolic_distance() {
        let m = fixtures::poincare();
        let d = local_distance(&m, &[0.0, 0.0], &[0.45, 0.0], &BvpOptions::default()).unwrap();
        assert_relative_eq!(d.distance, 2.0 * 0.45f64.atanh(), epsilon = 1e-9);
        // off-axis pair against the closed form cosh d = 1 + 2|p-q|^2 / ((1-|p|^2)(1-|q|^2))
        let (p, q) = ([0.3, -0.2], [-0.1, 0.4]);
        let d = local_distance(&m, &p, &q, &BvpOptions::default()).unwrap();
        let pq = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2);
        let den = (1.0 - p[0] * p[0] - p[1] * p[1]) * (1.0 - q[0] * q[0] - q[1] * q[1]);
        assert_relative_eq!(d.distance, (1.0 + 2.0 * pq / den).acosh(), epsilon = 1e-9);
        let back = exp_map(&m, &p, &d.velocity, &OdeOptions::default()).unwrap();
        assert!((back[0] - q[0]).abs() < 1e-8 && (back[1] - q[1]).abs() < 1e-8);
    }

    #[test]
    fn randers_distance_is_asymmetric() {
        let m = fixtures::randers_const(0.5, 0.0);
        let o = BvpOptions::default();
        assert_relative_eq!(local_distance(&m, &[0.0, 0.0], &[1.0, 0.0], &o).unwrap().distance, 1.5, epsilon = 1e-12);
        assert_relative_eq!(local_distance(&m, &[1.0, 0.0], &[0.0, 0.0], &o).unwrap().distance, 0.5, epsilon = 1e-12);
    }

    #[test]
    fn quartic_distance_is_translation_invariant() {
        let m = fixtures::minkowski_quartic(1.0);
        let d = local_distance(&m, &[0.0, 0.0], &[1.0, 0.0], &BvpOptions::default()).unwrap();
        assert_relative_eq!(d.distance, 2f64.powf(0.25), epsilon = 1e-14);
    }

    #[test]
    fn distance_outside_region_is_a_boundary_error() {
        let m = fixtures::poincare();
        let r = local_distance(&m, &[0.0, 0.0], &[0.69, 0.0], &BvpOptions::default());
        assert!(matches!(r, Err(Error::Boundary { .. })));
    }

    #[test]
    fn csv_has_header_and_rows() {
        let m = fixtures::poincare();
        let tr = integrate_geodesic(&m, &[0.0, 0.0], &[1.0, 0.0], 1.0, &OdeOptions::default()).unwrap();
        let csv = tr.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,x2,v1,v2,F");
        assert_eq!(lines.count(), tr.len());
    }
}
