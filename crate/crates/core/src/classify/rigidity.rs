//! Pointwise Berwald test, norm preservation under linear transport, and the
//! second-variation witness against convexity of `F(J)`.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use super::aux::unit_vector;
use crate::curvature::{transverse_eigenpairs, NONPOSITIVITY_TOL};
use crate::error::{Error, Result};
use crate::geodesics::{check_initial, flow_with_tangents, integrate_geodesic, OdeOptions};
use crate::metric::{ChartBox, Metric};
use crate::sampling;
use crate::spray::{berwald_norm, connection, spray_hessian_norm};
use crate::transport::parallel_transport;

/// `berwald_norm <= BERWALD_TOL * scale` counts as Berwald.
pub const BERWALD_TOL: f64 = 1e-7;

#[derive(Clone, Debug, Serialize)]
pub struct BerwaldScan {
    pub samples: usize,
    pub seed: u64,
    pub max_norm: f64,
    /// Largest sampled `|d^2 G / dv dv|`.
    pub scale: f64,
    pub berwald: bool,
    /// `(x, v)` attaining `max_norm`.
    pub witness_x: Vec<f64>,
    pub witness_v: Vec<f64>,
}

/// Samples `(x, v)` with `F(x, v) = 1` and compares the largest third
/// `v`-derivative of the spray with the largest second one.
pub fn berwald_scan(metric: &Metric, region: &ChartBox, samples: usize, seed: u64) -> Result<BerwaldScan> {
    if samples == 0 {
        return Err(Error::Input("samples must be at least 1".into()));
    }
    let rows = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::child_rng(seed, "berwald", i as u64);
            let x = sampling::point_in(&mut rng, region);
            let v = unit_vector(metric, &mut rng, &x)?;
            Ok((berwald_norm(metric, &x, &v)?, spray_hessian_norm(metric, &x, &v)?, x, v))
        })
        .collect::<Result<Vec<_>>>()?;
    let scale = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let worst = rows.iter().fold(&rows[0], |a, b| if b.0 > a.0 { b } else { a });
    Ok(BerwaldScan {
        samples,
        seed,
        max_norm: worst.0,
        scale,
        berwald: worst.0 <= BERWALD_TOL * scale,
        witness_x: worst.2.clone(),
        witness_v: worst.3.clone(),
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PreservationWitness {
    pub sample: usize,
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub w0: Vec<f64>,
    pub t: f64,
    pub deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct NormPreservation {
    pub geodesics: usize,
    pub vectors: usize,
    pub t_end: f64,
    pub seed: u64,
    /// `max |F(W(t)) - F(W(0))| / F(W(0))` over samples and nodes.
    pub max_deviation: f64,
    pub witness: Option<PreservationWitness>,
}

/// Transports random vectors along random unit-speed geodesics of length
/// `t_end` (cut short at the chart boundary) and records how much `F(W)`
/// varies.
pub fn norm_preservation_test(
    metric: &Metric,
    region: &ChartBox,
    geodesics: usize,
    vectors: usize,
    t_end: f64,
    seed: u64,
) -> Result<NormPreservation> {
    if geodesics == 0 || vectors == 0 {
        return Err(Error::Input("counts must be at least 1".into()));
    }
    let n = metric.dim();
    let per_sample = (0..geodesics)
        .into_par_iter()
        .map(|i| -> Result<PreservationWitness> {
            let mut rng = sampling::child_rng(seed, "norm-preservation", i as u64);
            let x0 = sampling::point_in(&mut rng, region);
            let v0 = unit_vector(metric, &mut rng, &x0)?;
            let ws: Vec<Vec<f64>> = (0..vectors).map(|_| sampling::unit_direction(&mut rng, n)).collect();
            let trace = integrate_geodesic(metric, &x0, &v0, t_end, &OdeOptions::default())?;
            let frame = parallel_transport(metric, &trace, &ws)?;
            let mut worst = PreservationWitness { sample: i, x0, v0, w0: ws[0].clone(), t: 0.0, deviation: 0.0 };
            for (k, norms) in frame.norms.iter().enumerate() {
                for (node, f) in norms.iter().enumerate() {
                    let dev = (f - norms[0]).abs() / norms[0];
                    if dev > worst.deviation {
                        worst.deviation = dev;
                        worst.t = trace.t[node];
                        worst.w0 = ws[k].clone();
                    }
                }
            }
            Ok(worst)
        })
        .collect::<Result<Vec<_>>>()?;
    let witness = per_sample.into_iter().fold(None::<PreservationWitness>, |best, w| match best {
        Some(b) if b.deviation >= w.deviation => Some(b),
        _ => Some(w),
    });
    Ok(NormPreservation {
        geodesics,
        vectors,
        t_end,
        seed,
        max_deviation: witness.as_ref().map_or(0.0, |w| w.deviation),
        witness,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityWitness {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// `g_v`-unit eigenvector of the Jacobi operator.
    pub w: Vec<f64>,
    pub eigenvalue: f64,
    pub norm_w: f64,
    /// Second derivative at `t = 0` of `F(x, P_t^{-1} J(t))` for the Jacobi
    /// field with `J(0) = w`, `D J(0) = 0`.
    pub second_difference: f64,
    /// `-eigenvalue * F(w)`.
    pub predicted: f64,
    pub seed: u64,
}

const WITNESS_STEP: f64 = 2e-2;

/// For the largest positive eigenvalue of the Jacobi operator at `(x, v)`,
/// measures the second derivative of `F` along the corresponding Jacobi
/// field pulled back to `x` by linear transport. A negative value shows
/// that `t -> F(J(t))` is not convex. `None` when no eigenvalue is
/// positive. `seed` is only recorded, so that the witness can be
/// reproduced from a scan.
pub fn jacobi_convexity_witness(metric: &Metric, x: &[f64], v: &[f64], seed: u64) -> Result<Option<ConvexityWitness>> {
    check_initial(metric, x, v)?;
    let n = metric.dim();
    let (g, _, pairs) = transverse_eigenpairs(metric, x, v)?;
    let gvv = crate::spray::bilinear(&g, v, v);
    let Some((lambda, w)) = pairs.into_iter().max_by(|a, b| a.0.total_cmp(&b.0)) else {
        return Ok(None);
    };
    if lambda <= NONPOSITIVITY_TOL * gvv {
        return Ok(None);
    }
    let nmat = connection(metric, x, v)?;
    let mut block = w.clone();
    block.extend((0..n).map(|i| -(0..n).map(|j| nmat[(i, j)] * w[j]).sum::<f64>()));
    let basis: Vec<Vec<f64>> = (0..n).map(|k| (0..n).map(|i| if i == k { 1.0 } else { 0.0 }).collect()).collect();
    let opts = OdeOptions { rtol: 1e-13, atol: 1e-15, ..OdeOptions::default() };
    // F of the pulled-back field at +-h, +-h/2
    let pulled = |t_end: f64| -> Result<Vec<f64>> {
        let stops = [0.5 * t_end];
        let sol = flow_with_tangents(metric, x, v, t_end, &[block.clone()], &basis, &opts, &stops)?;
        if let Some(t) = sol.stopped_at {
            return Err(Error::ChartExit { t });
        }
        let mut out = Vec::with_capacity(2);
        for y in [&sol.y[sol.t.iter().position(|&s| s == stops[0]).expect("stop is a node")], sol.y.last().unwrap()] {
            let e = DMatrix::from_fn(n, n, |i, k| y[4 * n + k * n + i]);
            let j = nalgebra::DVector::from_column_slice(&y[2 * n..3 * n]);
            let jbar = e.lu().solve(&j).ok_or_else(|| Error::Consistency("transport matrix singular".into()))?;
            out.push(metric.norm(x, jbar.as_slice())?);
        }
        Ok(out)
    };
    let h = WITNESS_STEP;
    let plus = pulled(h)?;
    let minus = pulled(-h)?;
    let f0 = metric.norm(x, &w)?;
    let d_half = (plus[0] - 2.0 * f0 + minus[0]) / (0.25 * h * h);
    let d_full = (plus[1] - 2.0 * f0 + minus[1]) / (h * h);
    // Richardson: the central difference has an h^2 error term
    let second_difference = (4.0 * d_half - d_full) / 3.0;
    Ok(Some(ConvexityWitness {
        x: x.to_vec(),
        v: v.to_vec(),
        w,
        eigenvalue: lambda,
        norm_w: f0,
        second_difference,
        predicted: -lambda * f0,
        seed,
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn berwald_verdicts() {
        for m in [fixtures::poincare(), fixtures::sphere_chart(), fixtures::minkowski_quartic(1.0), fixtures::berwald_product()] {
            let s = berwald_scan(&m, &m.region(), 30, 1).unwrap();
            assert!(s.berwald, "{}: {} vs {}", m.spec().family, s.max_norm, s.scale);
        }
        let r = fixtures::randers_sine();
        let s = berwald_scan(&r, &r.region(), 30, 1).unwrap();
        assert!(!s.berwald && s.max_norm >= 1e-2 * s.scale);
    }

    #[test]
    fn preservation() {
        let q = fixtures::minkowski_quartic(1.0);
        assert!(norm_preservation_test(&q, &q.region(), 5, 3, 1.0, 1).unwrap().max_deviation <= 1e-10);
        let b = fixtures::berwald_product();
        assert!(norm_preservation_test(&b, &b.region(), 10, 5, 1.0, 1).unwrap().max_deviation <= 1e-6);
        let r = fixtures::randers_sine();
        let rep = norm_preservation_test(&r, &r.region(), 10, 5, 1.0, 1).unwrap();
        assert!(rep.max_deviation >= 1e-3, "{}", rep.max_deviation);
        assert!(rep.witness.is_some());
    }

    #[test]
    fn sphere_witness_matches_prediction() {
        let m = fixtures::sphere_chart();
        let x = [0.1, -0.2];
        let u = [0.6, 0.8];
        let f = m.norm(&x, &u).unwrap();
        let v: Vec<f64> = u.iter().map(|a| a / f).collect();
        let w = jacobi_convexity_witness(&m, &x, &v, 0).unwrap().unwrap();
        assert!((w.eigenvalue - 1.0).abs() < 1e-9);
        assert!((w.second_difference - w.predicted).abs() < 1e-4, "{} vs {}", w.second_difference, w.predicted);
    }

    #[test]
    fn no_witness_without_positive_curvature() {
        let q = fixtures::minkowski_quartic(1.0);
        assert!(jacobi_convexity_witness(&q, &[0.0, 0.0], &[1.0, 0.0], 0).unwrap().is_none());
        let p = fixtures::poincare();
        assert!(jacobi_convexity_witness(&p, &[0.1, 0.0], &[0.3, 0.2], 0).unwrap().is_none());
    }
}
