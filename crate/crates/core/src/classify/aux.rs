//! Auxiliary Riemannian metrics: the Binet-Legendre metric of the norm
//! field, the covariant acceleration (kappa defect) of `F`-geodesics
//! measured in such a metric, and its behaviour under linear transport.

use std::num::NonZeroUsize;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesics::{integrate_geodesic, OdeOptions};
use crate::jets::{Dual, Scalar, Tape};
use crate::metric::{ChartBox, Metric};
use crate::sampling;
use crate::spray::{bilinear, fundamental_generic, spray};
use crate::transport::parallel_transport;

/// Default relative change between quadrature orders at which the moment
/// integral counts as converged.
pub const QUADRATURE_TOL: f64 = 1e-11;

/// A smooth Riemannian metric on the chart together with its first
/// partial derivatives.
pub trait AuxMetric: Sync {
    fn name(&self) -> &str;

    fn inner_product(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.with_derivatives(x)?.0)
    }

    /// `(g(x), [dg/dx^1, .., dg/dx^n])`.
    fn with_derivatives(&self, x: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)>;
}

/// Quadrature nodes `u` on the Euclidean unit sphere with weights.
#[derive(Clone, Debug)]
struct SphereRule {
    nodes: Vec<(Vec<f64>, f64)>,
}

impl SphereRule {
    /// Trapezoid rule in the angle for `n = 2`; Gauss-Legendre in the
    /// height times a trapezoid rule in the azimuth for `n = 3`.
    fn new(dim: usize, order: usize) -> SphereRule {
        use std::f64::consts::PI;
        let nodes = match dim {
            2 => (0..order)
                .map(|k| {
                    let (s, c) = (2.0 * PI * k as f64 / order as f64).sin_cos();
                    (vec![c, s], 2.0 * PI / order as f64)
                })
                .collect(),
            _ => {
                let gl = GaussLegendre::new(NonZeroUsize::new(order).expect("order >= 1"));
                let azimuth = 2 * order;
                let mut nodes = Vec::with_capacity(order * azimuth);
                for &(z, wz) in gl.as_node_weight_pairs() {
                    let r = (1.0 - z * z).sqrt();
                    for k in 0..azimuth {
                        let (s, c) = (2.0 * PI * k as f64 / azimuth as f64).sin_cos();
                        nodes.push((vec![r * c, r * s, z], wz * 2.0 * PI / azimuth as f64));
                    }
                }
                nodes
            }
        };
        SphereRule { nodes }
    }
}

/// `n int u u^T F^{-(n+2)} du / int F^{-n} du` over the unit sphere, which
/// equals `(n + 2)/vol(B) int_B v v^T dv` after the radial integration.
/// Evaluated for the norm `y -> F(x, L y)`; see [`unwhiten`].
fn moment_matrix<S: Scalar>(tape: &Tape, x: &[S], rule: &SphereRule, l: &DMatrix<f64>) -> Result<Vec<S>> {
    let n = x.len();
    let mut second = vec![S::zero(); n * n];
    let mut volume = S::zero();
    let mut vars: Vec<S> = x.to_vec();
    vars.resize(2 * n, S::zero());
    for (u, w) in &rule.nodes {
        for i in 0..n {
            vars[n + i] = S::cst((0..n).map(|k| l[(i, k)] * u[k]).sum());
        }
        let f2 = tape.eval(&vars)?;
        let inv_n = f2
            .powf_checked(-0.5 * n as f64)
            .ok_or_else(|| Error::Input("norm is not positive on the unit sphere".into()))?;
        let inv_n2 = inv_n / f2;
        volume += inv_n.scale(*w);
        for i in 0..n {
            for j in i..n {
                second[i * n + j] += inv_n2.scale(w * u[i] * u[j]);
            }
        }
    }
    let factor = S::cst(n as f64) / volume;
    for i in 0..n {
        for j in i..n {
            second[i * n + j] *= factor;
            second[j * n + i] = second[i * n + j];
        }
    }
    Ok(second)
}

/// The moment matrix of `F` from that of `y -> F(L y)`: substituting
/// `v = L y` gives `M_F = L M L^T`.
fn unwhiten<S: Scalar>(m: &[S], l: &DMatrix<f64>) -> Vec<S> {
    let n = l.nrows();
    let mut out = vec![S::zero(); n * n];
    for i in 0..n {
        for j in 0..n {
            for a in 0..n {
                for b in 0..n {
                    let c = l[(i, a)] * l[(j, b)];
                    if c != 0.0 {
                        out[i * n + j] += m[a * n + b].scale(c);
                    }
                }
            }
        }
    }
    out
}

fn starting_order(dim: usize) -> usize {
    if dim == 2 {
        32
    } else {
        12
    }
}

fn max_order(dim: usize) -> usize {
    if dim == 2 {
        8192
    } else {
        192
    }
}

const WHITENING_PASSES: usize = 4;

/// A linear map `L` for which the unit ball of `y -> F(x, L y)` is close
/// to round, found from coarse moment matrices. Strongly anisotropic norms
/// concentrate `F^{-(n+2)}` near a few directions, which a fixed sphere
/// rule resolves poorly; after whitening the integrand is nearly constant.
fn whitening(metric: &Metric, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = metric.dim();
    let rule = SphereRule::new(n, 2 * starting_order(n));
    let mut l = DMatrix::identity(n, n);
    for _ in 0..WHITENING_PASSES {
        let m = DMatrix::from_row_slice(n, n, &moment_matrix(metric.norm_sq_tape(), x, &rule, &l)?);
        let eig = m.clone().symmetric_eigen();
        if eig.eigenvalues.min() > 0.5 * eig.eigenvalues.max() {
            break;
        }
        let chol = m.cholesky().ok_or_else(|| Error::Consistency("moment matrix is not positive definite".into()))?;
        l *= chol.l();
    }
    Ok(l)
}

/// Raises the order until the moment matrix of the whitened norm changes
/// by less than `tol` relative; returns the converged rule, the whitening
/// map and the moment matrix of `F` itself.
fn converged_moment(metric: &Metric, x: &[f64], tol: f64) -> Result<(SphereRule, DMatrix<f64>, DMatrix<f64>)> {
    let n = metric.dim();
    if !(2..=3).contains(&n) {
        return Err(Error::Input(format!("Binet-Legendre quadrature supports dimensions 2 and 3, not {n}")));
    }
    if !metric.in_domain(x) {
        return Err(Error::Domain { x: x.to_vec() });
    }
    let l = whitening(metric, x)?;
    let tape = metric.norm_sq_tape();
    let mut order = starting_order(n);
    let mut m = DMatrix::from_row_slice(n, n, &moment_matrix(tape, x, &SphereRule::new(n, order), &l)?);
    loop {
        let next_order = order * 2;
        let next_rule = SphereRule::new(n, next_order);
        let next = DMatrix::from_row_slice(n, n, &moment_matrix(tape, x, &next_rule, &l)?);
        let change = (&next - &m).amax() / next.amax();
        if change < tol {
            let full = DMatrix::from_row_slice(n, n, &unwhiten(next.as_slice(), &l));
            return Ok((next_rule, l, full));
        }
        if next_order >= max_order(n) {
            return Err(Error::Accuracy { target: tol, change });
        }
        order = next_order;
        m = next;
    }
}

/// The Binet-Legendre inner product of `F(x, .)`: the inverse of the
/// normalized second-moment matrix of the unit ball, so that the Euclidean
/// norm yields the identity.
pub fn binet_legendre_metric(metric: &Metric, x: &[f64], tol: f64) -> Result<DMatrix<f64>> {
    let (_, _, m) = converged_moment(metric, x, tol)?;
    m.try_inverse().ok_or_else(|| Error::Consistency("moment matrix is singular".into()))
}

/// Field `x -> binet_legendre_metric(x)`. Derivatives are exact derivatives
/// of the quadrature (forward mode through the moment integral).
pub struct BinetLegendreField<'a> {
    pub metric: &'a Metric,
    pub tol: f64,
}

impl<'a> BinetLegendreField<'a> {
    pub fn new(metric: &'a Metric) -> Self {
        BinetLegendreField { metric, tol: QUADRATURE_TOL }
    }
}

impl AuxMetric for BinetLegendreField<'_> {
    fn name(&self) -> &str {
        "binet-legendre"
    }

    fn inner_product(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        binet_legendre_metric(self.metric, x, self.tol)
    }

    fn with_derivatives(&self, x: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let n = self.metric.dim();
        let (rule, l, _) = converged_moment(self.metric, x, self.tol)?;
        let xs: Vec<Dual<3>> = (0..n)
            .map(|i| {
                let mut d = [0.0; 3];
                d[i] = 1.0;
                Dual::new(x[i], d)
            })
            .collect();
        let m = unwhiten(&moment_matrix(self.metric.norm_sq_tape(), &xs, &rule, &l)?, &l);
        let value = DMatrix::from_fn(n, n, |i, j| m[i * n + j].v);
        let g = value.try_inverse().ok_or_else(|| Error::Consistency("moment matrix is singular".into()))?;
        // d(M^{-1}) = -M^{-1} dM M^{-1}
        let dg = (0..n)
            .map(|k| {
                let dm = DMatrix::from_fn(n, n, |i, j| m[i * n + j].d[k]);
                -(&g * dm * &g)
            })
            .collect();
        Ok((g, dg))
    }
}

/// `x -> g_{v}(x)` for a fixed coordinate vector `v`; this is the metric
/// itself when `F` is Riemannian.
pub struct FixedDirectionField<'a> {
    pub metric: &'a Metric,
    pub direction: Vec<f64>,
}

impl AuxMetric for FixedDirectionField<'_> {
    fn name(&self) -> &str {
        "fundamental-tensor"
    }

    fn with_derivatives(&self, x: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
        let n = self.metric.dim();
        if n > 3 {
            return Err(Error::Input("fixed-direction field supports dimension <= 3".into()));
        }
        let xs: Vec<Dual<3>> = (0..n)
            .map(|i| {
                let mut d = [0.0; 3];
                d[i] = 1.0;
                Dual::new(x[i], d)
            })
            .collect();
        let vs: Vec<Dual<3>> = self.direction.iter().map(|&a| Dual::cst(a)).collect();
        let g = fundamental_generic(self.metric.norm_sq_tape(), &xs, &vs)?;
        let value = DMatrix::from_fn(n, n, |i, j| g[i * n + j].v);
        let dg = (0..n).map(|k| DMatrix::from_fn(n, n, |i, j| g[i * n + j].d[k])).collect();
        Ok((value, dg))
    }
}

/// `Gamma^k_{ij}(x)` of an auxiliary metric, as `[k](i, j)`.
pub fn christoffel(aux: &dyn AuxMetric, x: &[f64]) -> Result<(DMatrix<f64>, Vec<DMatrix<f64>>)> {
    let (g, dg) = aux.with_derivatives(x)?;
    let n = g.nrows();
    let ginv = g
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Input(format!("auxiliary metric degenerate at {x:?}")))?;
    let gamma = (0..n)
        .map(|k| {
            DMatrix::from_fn(n, n, |i, j| {
                0.5 * (0..n).map(|l| ginv[(k, l)] * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)])).sum::<f64>()
            })
        })
        .collect();
    Ok((g, gamma))
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaDefect {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `x'' + Gamma_aux(x', x')` at `t = 0` with `x'' = -2 G(x, v)`.
    pub kappa: Vec<f64>,
    /// Part of `kappa` orthogonal to `v` in the auxiliary metric.
    pub orthogonal: Vec<f64>,
    pub kappa_norm: f64,
    pub orthogonal_norm: f64,
    /// `<kappa, v>_aux`.
    pub along_v: f64,
}

/// Covariant acceleration, measured in `aux`, of the `F`-geodesic with
/// initial velocity `v`.
pub fn kappa_defect(metric: &Metric, aux: &dyn AuxMetric, x: &[f64], v: &[f64]) -> Result<KappaDefect> {
    let n = metric.dim();
    if x.len() != n || v.len() != n || v.iter().all(|&a| a == 0.0) {
        return Err(Error::Input("kappa defect needs a point and a nonzero vector of the metric's dimension".into()));
    }
    if !metric.in_domain(x) {
        return Err(Error::Domain { x: x.to_vec() });
    }
    let (g, gamma) = christoffel(aux, x)?;
    let accel = spray(metric, x, v)?;
    let kappa: Vec<f64> = (0..n).map(|k| -2.0 * accel[k] + bilinear(&gamma[k], v, v)).collect();
    let along_v = bilinear(&g, &kappa, v);
    let c = along_v / bilinear(&g, v, v);
    let orthogonal: Vec<f64> = kappa.iter().zip(v).map(|(k, a)| k - c * a).collect();
    Ok(KappaDefect {
        x: x.to_vec(),
        v: v.to_vec(),
        kappa_norm: bilinear(&g, &kappa, &kappa).sqrt(),
        orthogonal_norm: bilinear(&g, &orthogonal, &orthogonal).sqrt(),
        kappa,
        orthogonal,
        along_v,
    })
}

/// F-unit random vector at `x`.
pub(crate) fn unit_vector(metric: &Metric, rng: &mut impl rand::Rng, x: &[f64]) -> Result<Vec<f64>> {
    let u = sampling::unit_direction(rng, metric.dim());
    let f = metric.norm(x, &u)?;
    Ok(u.into_iter().map(|a| a / f).collect())
}

#[derive(Clone, Debug, Serialize)]
pub struct KappaScan {
    pub samples: usize,
    pub seed: u64,
    pub max_orthogonal: f64,
    pub max_norm: f64,
    pub witness: Option<KappaDefect>,
}

/// Kappa defect at `samples` random `(x, v)` with `F(x, v) = 1`.
pub fn kappa_scan(metric: &Metric, aux: &dyn AuxMetric, region: &ChartBox, samples: usize, seed: u64) -> Result<KappaScan> {
    let defects = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::child_rng(seed, "kappa", i as u64);
            let x = sampling::point_in(&mut rng, region);
            let v = unit_vector(metric, &mut rng, &x)?;
            kappa_defect(metric, aux, &x, &v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut best: Option<&KappaDefect> = None;
    for d in &defects {
        if best.is_none_or(|b| d.orthogonal_norm > b.orthogonal_norm) {
            best = Some(d);
        }
    }
    Ok(KappaScan {
        samples,
        seed,
        max_orthogonal: best.map_or(0.0, |b| b.orthogonal_norm),
        max_norm: defects.iter().map(|d| d.kappa_norm).fold(0.0, f64::max),
        witness: best.cloned(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct AuxDriftWitness {
    pub sample: usize,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t: f64,
    pub drift: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct AuxTransportReport {
    pub samples: usize,
    pub seed: u64,
    /// `max |E(t)^T g_aux(x(t)) E(t) - I|` for transported aux-orthonormal
    /// frames `E`.
    pub max_drift: f64,
    /// `max |<kappa(v0), v0>_aux|` over samples whose drift stayed below
    /// [`DRIFT_FREE`].
    pub max_kappa_along_v: f64,
    pub witness: Option<AuxDriftWitness>,
}

/// Drift below which transport counts as preserving the auxiliary metric.
pub const DRIFT_FREE: f64 = 1e-6;
const DRIFT_TIMES: [f64; 4] = [0.25, 0.5, 0.75, 1.0];

/// Transports aux-orthonormal frames along random unit-speed geodesics of
/// length 1 and measures how far they drift from orthonormality.
pub fn transport_invariance_of_aux(
    metric: &Metric,
    aux: &dyn AuxMetric,
    region: &ChartBox,
    samples: usize,
    seed: u64,
) -> Result<AuxTransportReport> {
    if samples == 0 {
        return Err(Error::Input("samples must be at least 1".into()));
    }
    let n = metric.dim();
    let per_sample = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(AuxDriftWitness, Option<f64>)> {
            let mut rng = sampling::child_rng(seed, "aux-transport", i as u64);
            let x0 = sampling::point_in(&mut rng, region);
            let v0 = unit_vector(metric, &mut rng, &x0)?;
            let g0 = aux.inner_product(&x0)?;
            let chol = g0.clone().cholesky().ok_or_else(|| Error::Input("auxiliary metric not positive".into()))?;
            let frame0 = chol
                .l()
                .transpose()
                .try_inverse()
                .ok_or_else(|| Error::Consistency("singular Cholesky factor".into()))?;
            let basis: Vec<Vec<f64>> = (0..n).map(|k| frame0.column(k).iter().copied().collect()).collect();
            let trace = integrate_geodesic(metric, &x0, &v0, 1.0, &OdeOptions::default())?;
            let frame = parallel_transport(metric, &trace, &basis)?;
            let t_last = *trace.t.last().unwrap();
            let mut worst = AuxDriftWitness { sample: i, x0: x0.clone(), v0: v0.clone(), t: 0.0, drift: 0.0 };
            for t in DRIFT_TIMES.iter().map(|s| s * t_last) {
                let (x, _) = trace.at(t).expect("inside the trace");
                let ws = frame.at(t).expect("inside the trace");
                let e = DMatrix::from_fn(n, n, |i, k| ws[k][i]);
                let gram = e.transpose() * aux.inner_product(&x)? * e;
                let drift = (gram - DMatrix::identity(n, n)).amax();
                if drift > worst.drift {
                    worst.drift = drift;
                    worst.t = t;
                }
            }
            let along = if worst.drift <= DRIFT_FREE { Some(kappa_defect(metric, aux, &x0, &v0)?.along_v.abs()) } else { None };
            Ok((worst, along))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut witness: Option<AuxDriftWitness> = None;
    let mut max_kappa_along_v = 0.0f64;
    for (w, along) in per_sample {
        if let Some(a) = along {
            max_kappa_along_v = max_kappa_along_v.max(a);
        }
        if witness.as_ref().is_none_or(|b| w.drift > b.drift) {
            witness = Some(w);
        }
    }
    Ok(AuxTransportReport {
        samples,
        seed,
        max_drift: witness.as_ref().map_or(0.0, |w| w.drift),
        max_kappa_along_v,
        witness,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::metric::MetricSpec;
    use rand::Rng;
    use serde_json::json;

    fn minkowski(params: serde_json::Value, family: &str) -> Metric {
        Metric::from_spec(MetricSpec {
            family: family.into(),
            dimension: 2,
            params,
            chart_domain: ChartBox::cube(2, 2.0),
            region: Some(ChartBox::cube(2, 1.0)),
        })
        .unwrap()
    }

    #[test]
    fn euclidean_norm_gives_identity() {
        let g = binet_legendre_metric(&fixtures::euclidean(2), &[0.3, 0.1], QUADRATURE_TOL).unwrap();
        assert!((g - DMatrix::identity(2, 2)).amax() < 1e-12);
        let g3 = binet_legendre_metric(&fixtures::euclidean(3), &[0.3, 0.1, 0.0], QUADRATURE_TOL).unwrap();
        assert!((g3 - DMatrix::identity(3, 3)).amax() < 1e-10);
    }

    #[test]
    fn quartic_norm_is_isotropic() {
        let g = binet_legendre_metric(&fixtures::minkowski_quartic(1.0), &[0.0, 0.0], QUADRATURE_TOL).unwrap();
        assert!(g[(0, 1)].abs() < 1e-12 && (g[(0, 0)] - g[(1, 1)]).abs() < 1e-12);
    }

    #[test]
    fn pulls_back_under_linear_maps() {
        // F_A(v) = F(A v) for the quartic norm; expect g_A = A^T g A
        let base = binet_legendre_metric(&fixtures::minkowski_quartic(1.0), &[0.0, 0.0], QUADRATURE_TOL).unwrap();
        for i in 0..5 {
            let mut rng = sampling::child_rng(3, "linear-map", i);
            let a: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect();
            let det = a[0] * a[3] - a[1] * a[2];
            if det.abs() < 0.2 {
                continue;
            }
            let (p, q) = (
                json!(["add", ["mul", a[0], "v1"], ["mul", a[1], "v2"]]),
                json!(["add", ["mul", a[2], "v1"], ["mul", a[3], "v2"]]),
            );
            let sq = json!(["add", ["pow", p.clone(), 2], ["pow", q.clone(), 2]]);
            let f2 = json!(["pow", ["add", ["pow", p, 4], ["pow", q, 4], ["pow", sq, 2]], 0.5]);
            let m = minkowski(json!({"norm_sq": f2}), "custom_expression");
            let g = binet_legendre_metric(&m, &[0.0, 0.0], QUADRATURE_TOL).unwrap();
            let am = DMatrix::from_row_slice(2, 2, &a);
            let expect = am.transpose() * &base * am;
            assert!((g - &expect).amax() < 1e-8 * expect.amax(), "map {i}");
        }
    }

    #[test]
    fn ill_conditioned_maps_converge() {
        // condition number 400: the unwhitened integrand is a narrow spike
        let (c, s) = (0.6f64, 0.8f64);
        let a = [20.0 * c, -20.0 * s, 0.05 * s, 0.05 * c];
        let (p, q) = (
            json!(["add", ["mul", a[0], "v1"], ["mul", a[1], "v2"]]),
            json!(["add", ["mul", a[2], "v1"], ["mul", a[3], "v2"]]),
        );
        let f2 = json!(["pow", ["add", ["pow", p.clone(), 4], ["pow", q.clone(), 4]], 0.5]);
        let m = minkowski(json!({"norm_sq": f2}), "custom_expression");
        let g = binet_legendre_metric(&m, &[0.0, 0.0], QUADRATURE_TOL).unwrap();
        let base = minkowski(json!({"norm_sq": ["pow", ["add", ["pow", "v1", 4], ["pow", "v2", 4]], 0.5]}), "custom_expression");
        let g0 = binet_legendre_metric(&base, &[0.0, 0.0], QUADRATURE_TOL).unwrap();
        let am = DMatrix::from_row_slice(2, 2, &a);
        let expect = am.transpose() * g0 * am;
        assert!((g - &expect).amax() < 1e-9 * expect.amax());
    }

    #[test]
    fn derivatives_match_differences() {
        let m = fixtures::randers_sine();
        let field = BinetLegendreField::new(&m);
        let x = [0.3, -0.2];
        let (_, dg) = field.with_derivatives(&x).unwrap();
        let h = 1e-4;
        for k in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[k] += h;
            xm[k] -= h;
            let fd = (field.inner_product(&xp).unwrap() - field.inner_product(&xm).unwrap()) / (2.0 * h);
            assert!((&dg[k] - fd).amax() < 1e-7);
        }
    }

    #[test]
    fn riemannian_kappa_vanishes_for_its_own_metric() {
        let m = fixtures::poincare();
        let aux = FixedDirectionField { metric: &m, direction: vec![1.0, 0.0] };
        let d = kappa_defect(&m, &aux, &[0.2, -0.3], &[0.4, 0.7]).unwrap();
        assert!(d.kappa_norm < 1e-12);
    }

    #[test]
    fn kappa_is_quadratic_in_v() {
        let m = fixtures::randers_sine();
        let aux = BinetLegendreField::new(&m);
        let a = kappa_defect(&m, &aux, &[0.2, 0.4], &[0.3, -0.5]).unwrap();
        let b = kappa_defect(&m, &aux, &[0.2, 0.4], &[0.6, -1.0]).unwrap();
        for (p, q) in a.kappa.iter().zip(&b.kappa) {
            assert!((4.0 * p - q).abs() <= 1e-9 * q.abs().max(1e-300), "{p} {q}");
        }
    }

    #[test]
    fn berwald_vs_randers() {
        let b = fixtures::berwald_product();
        let scan = kappa_scan(&b, &BinetLegendreField::new(&b), &b.region(), 10, 1).unwrap();
        assert!(scan.max_orthogonal < 1e-5, "{}", scan.max_orthogonal);
        let r = fixtures::randers_sine();
        let scan = kappa_scan(&r, &BinetLegendreField::new(&r), &r.region(), 20, 1).unwrap();
        assert!(scan.max_orthogonal > 1e-3, "{}", scan.max_orthogonal);
    }

    #[test]
    fn transport_invariance() {
        let p = fixtures::poincare();
        let rep = transport_invariance_of_aux(&p, &FixedDirectionField { metric: &p, direction: vec![1.0, 0.0] }, &p.region(), 5, 2).unwrap();
        assert!(rep.max_drift < 1e-8);
        let b = fixtures::berwald_product();
        let rep = transport_invariance_of_aux(&b, &BinetLegendreField::new(&b), &b.region(), 3, 2).unwrap();
        assert!(rep.max_drift < 1e-6, "{}", rep.max_drift);
        assert!(rep.max_kappa_along_v < 1e-5);
        let r = fixtures::randers_sine();
        let rep = transport_invariance_of_aux(&r, &BinetLegendreField::new(&r), &r.region(), 10, 2).unwrap();
        assert!(rep.max_drift > 1e-3, "{}", rep.max_drift);
    }
}
