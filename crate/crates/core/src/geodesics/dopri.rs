//! Dormand–Prince 5(4) with PI step control and Hairer's quartic dense output.
//!
//! The error norm can be restricted to a leading block of the state, so an
//! augmented system (geodesic plus variational or transported vectors) takes
//! exactly the steps the bare geodesic would take.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

const BETA: f64 = 0.04;
const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        OdeOptions { rtol: 1e-9, atol: 1e-11, max_steps: 100_000 }
    }
}

/// Interpolant of one accepted step.
#[derive(Clone, Debug)]
struct DenseStep {
    t0: f64,
    h: f64,
    r: [Vec<f64>; 5],
}

impl DenseStep {
    fn eval(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [r1, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            out[i] = r1[i] + th * (r2[i] + th1 * (r3[i] + th * (r4[i] + th1 * r5[i])));
        }
    }

    fn eval_derivative(&self, t: f64, out: &mut [f64]) {
        let th = (t - self.t0) / self.h;
        let th1 = 1.0 - th;
        let [_, r2, r3, r4, r5] = &self.r;
        for i in 0..out.len() {
            let a = r4[i] + th1 * r5[i];
            let b = r3[i] + th * a;
            let db = a - th * r5[i];
            let c = r2[i] + th1 * b;
            let dc = -b + th1 * db;
            out[i] = (c + th * dc) / self.h;
        }
    }
}

/// Accepted nodes plus the dense interpolant between them.
#[derive(Clone, Debug)]
pub struct OdeSolution {
    pub t: Vec<f64>,
    pub y: Vec<Vec<f64>>,
    /// Set when the `keep_going` callback rejected a state; holds the time of
    /// the first rejected node. The solution ends at the last accepted node.
    pub stopped_at: Option<f64>,
    pub rhs_evaluations: usize,
    steps: Vec<DenseStep>,
}

impl OdeSolution {
    pub fn last(&self) -> &[f64] {
        self.y.last().expect("solution has an initial node")
    }

    pub fn t_last(&self) -> f64 {
        *self.t.last().expect("solution has an initial node")
    }

    /// Interpolated state; `t` must lie within the covered interval.
    pub fn eval(&self, t: f64) -> Option<Vec<f64>> {
        if self.steps.is_empty() {
            return (t == self.t[0]).then(|| self.y[0].clone());
        }
        self.dense(t, DenseStep::eval)
    }

    /// Time derivative of the interpolant. It is independent of the
    /// right-hand side away from the nodes, which makes it usable for
    /// residual checks.
    pub fn eval_derivative(&self, t: f64) -> Option<Vec<f64>> {
        self.dense(t, DenseStep::eval_derivative)
    }

    fn dense(&self, t: f64, f: fn(&DenseStep, f64, &mut [f64])) -> Option<Vec<f64>> {
        let (a, b) = (self.t[0], self.t_last());
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let slack = 1e-12 * (1.0 + lo.abs().max(hi.abs()));
        if t < lo - slack || t > hi + slack {
            return None;
        }
        if self.steps.is_empty() {
            return None;
        }
        let mut out = vec![0.0; self.y[0].len()];
        let forward = b >= a;
        // index of the step whose interval holds t
        let k = self.t[1..].partition_point(|&s| if forward { s < t } else { s > t });
        let k = k.min(self.steps.len() - 1);
        f(&self.steps[k], t, &mut out);
        Some(out)
    }
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
    y1: Vec<f64>,
}

impl Stages {
    fn new(dim: usize) -> Stages {
        Stages {
            k: std::array::from_fn(|_| vec![0.0; dim]),
            tmp: vec![0.0; dim],
            y1: vec![0.0; dim],
        }
    }
}

/// One Dormand–Prince step from `(t, y)` with `k[0] = f(t, y)` already set.
/// Leaves the new state in `s.y1` and `f(t + h, y1)` in `s.k[6]`.
fn step<F>(rhs: &mut F, t: f64, y: &[f64], h: f64, s: &mut Stages) -> Result<()>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y.len();
    let Stages { k, tmp, y1 } = s;
    let [k1, k2, k3, k4, k5, k6, k7] = k;
    for i in 0..n {
        tmp[i] = y[i] + h * A21 * k1[i];
    }
    rhs(t + C2 * h, tmp, k2)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
    }
    rhs(t + C3 * h, tmp, k3)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
    }
    rhs(t + C4 * h, tmp, k4)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
    }
    rhs(t + C5 * h, tmp, k5)?;
    for i in 0..n {
        tmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
    }
    rhs(t + h, tmp, k6)?;
    for i in 0..n {
        y1[i] = y[i] + h * (A71 * k1[i] + A73 * k3[i] + A74 * k4[i] + A75 * k5[i] + A76 * k6[i]);
    }
    rhs(t + h, y1, k7)?;
    Ok(())
}

fn error_norm(y: &[f64], s: &Stages, h: f64, dims: usize, opts: &OdeOptions) -> f64 {
    let [k1, _, k3, k4, k5, k6, k7] = &s.k;
    let mut acc = 0.0;
    for i in 0..dims {
        let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
        let sc = opts.atol + opts.rtol * y[i].abs().max(s.y1[i].abs());
        acc += (e / sc).powi(2);
    }
    (acc / dims as f64).sqrt()
}

fn dense(y: &[f64], s: &Stages, t: f64, h: f64) -> DenseStep {
    let n = y.len();
    let [k1, _, k3, k4, k5, k6, k7] = &s.k;
    let mut r: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
    for i in 0..n {
        let dy = s.y1[i] - y[i];
        let bspl = h * k1[i] - dy;
        r[0][i] = y[i];
        r[1][i] = dy;
        r[2][i] = bspl;
        r[3][i] = dy - h * k7[i] - bspl;
        r[4][i] = h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i]);
    }
    DenseStep { t0: t, h, r }
}

fn initial_step<F>(rhs: &mut F, t: f64, y: &[f64], f0: &[f64], dir: f64, span: f64, dims: usize, opts: &OdeOptions) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let sc = |i: usize| opts.atol + opts.rtol * y[i].abs();
    let norm = |w: &dyn Fn(usize) -> f64| ((0..dims).map(|i| (w(i) / sc(i)).powi(2)).sum::<f64>() / dims as f64).sqrt();
    let d0 = norm(&|i| y[i]);
    let d1 = norm(&|i| f0[i]);
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, b)| a + dir * h0 * b).collect();
    let mut f1 = vec![0.0; y.len()];
    rhs(t + dir * h0, &y1, &mut f1)?;
    let d2 = norm(&|i| f1[i] - f0[i]) / h0;
    let dmax = d1.max(d2);
    let h1 = if dmax <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / dmax).powf(0.2) };
    Ok((100.0 * h0).min(h1).min(span))
}

/// Adaptive integration of `y' = f(t, y)` from `t0` to `t_end` (either
/// direction). Only the first `control_dims` components enter the error
/// norm. Every time in `tstops` strictly between the endpoints becomes a
/// node. After each accepted step `keep_going(t, y)` may end the
/// integration early.
pub fn integrate<F, K>(
    mut rhs: F,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    opts: &OdeOptions,
    control_dims: usize,
    tstops: &[f64],
    mut keep_going: K,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    K: FnMut(f64, &[f64]) -> bool,
{
    let n = y0.len();
    let dims = control_dims.clamp(1, n.max(1));
    let mut sol = OdeSolution { t: vec![t0], y: vec![y0.to_vec()], stopped_at: None, rhs_evaluations: 0, steps: Vec::new() };
    if t_end == t0 {
        return Ok(sol);
    }
    let dir = (t_end - t0).signum();
    let mut stops: Vec<f64> = tstops
        .iter()
        .copied()
        .filter(|&s| (s - t0) * dir > 0.0 && (t_end - s) * dir > 0.0)
        .collect();
    stops.sort_by(|a, b| (a * dir).total_cmp(&(b * dir)));
    stops.push(t_end);
    let mut next_stop = 0;

    let mut evals = 0usize;
    let mut counted = |t: f64, y: &[f64], out: &mut [f64]| {
        evals += 1;
        rhs(t, y, out)
    };
    let mut st = Stages::new(n);
    let mut t = t0;
    let mut y = y0.to_vec();
    counted(t, &y, &mut st.k[0])?;
    let f0 = st.k[0].clone();
    let mut h = initial_step(&mut counted, t, &y, &f0, dir, (t_end - t0).abs(), dims, opts)?;
    let mut fac_old = 1e-4f64;
    let mut last_rejected = false;
    let mut steps = 0usize;
    loop {
        if steps >= opts.max_steps {
            return Err(Error::TooManySteps(opts.max_steps));
        }
        let target = stops[next_stop];
        let remaining = (target - t).abs();
        let hit = h >= remaining * (1.0 - 1e-12);
        let h_try = if hit { remaining } else { h };
        if h_try < 1e-14 * (1.0 + t.abs()) {
            return Err(Error::Stiffness { t, step: h_try });
        }
        let hs = dir * h_try;
        step(&mut counted, t, &y, hs, &mut st)?;
        steps += 1;
        let err = error_norm(&y, &st, hs, dims, opts);
        if !err.is_finite() {
            h = 0.25 * h_try;
            last_rejected = true;
            continue;
        }
        let fac11 = err.powf(0.2 - 0.75 * BETA);
        if err <= 1.0 {
            let fac = (fac11 / fac_old.powf(BETA) / SAFETY).clamp(1.0 / FAC_MAX, 1.0 / FAC_MIN);
            let mut h_new = h_try / fac;
            if last_rejected {
                h_new = h_new.min(h_try);
            }
            fac_old = err.max(1e-4);
            last_rejected = false;
            let t_new = if hit { target } else { t + hs };
            if !keep_going(t_new, &st.y1) {
                sol.stopped_at = Some(t_new);
                break;
            }
            sol.steps.push(dense(&y, &st, t, hs));
            t = t_new;
            y.copy_from_slice(&st.y1);
            sol.t.push(t);
            sol.y.push(y.clone());
            st.k.swap(0, 6);
            if hit {
                next_stop += 1;
                if next_stop == stops.len() {
                    break;
                }
                // keep the controller's proposal rather than the clipped step
                h = h_new.max(h_try);
            } else {
                h = h_new;
            }
        } else {
            h = h_try / (fac11 / SAFETY).min(1.0 / FAC_MIN);
            last_rejected = true;
        }
    }
    sol.rhs_evaluations = evals;
    Ok(sol)
}

/// Steps exactly through the given nodes (no error control), e.g. to carry
/// extra components along an existing trajectory.
pub fn replay<F>(mut rhs: F, nodes: &[f64], y0: &[f64]) -> Result<OdeSolution>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let mut sol = OdeSolution { t: vec![nodes[0]], y: vec![y0.to_vec()], stopped_at: None, rhs_evaluations: 0, steps: Vec::new() };
    let mut st = Stages::new(n);
    let mut y = y0.to_vec();
    rhs(nodes[0], &y, &mut st.k[0])?;
    let mut evals = 1;
    for w in nodes.windows(2) {
        let (t, h) = (w[0], w[1] - w[0]);
        step(&mut rhs, t, &y, h, &mut st)?;
        evals += 6;
        sol.steps.push(dense(&y, &st, t, h));
        y.copy_from_slice(&st.y1);
        sol.t.push(w[1]);
        sol.y.push(y.clone());
        st.k.swap(0, 6);
    }
    sol.rhs_evaluations = evals;
    Ok(sol)
}
