//! Flag curvature and the spectrum of the Jacobi operator.

use std::fmt::Write as _;

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metric::{ChartBox, Metric};
use crate::sampling;
use crate::spray::{berwald_curvature_operator, bilinear, fundamental_tensor};
use crate::transport::orthogonal_complement;

/// An eigenvalue counts as nonpositive when it is at most this times `F(x, v)^2`.
pub const NONPOSITIVITY_TOL: f64 = 1e-7;
/// Allowed relative asymmetry of `g_v R`.
const SYMMETRY_TOL: f64 = 1e-7;

/// A flag `(v, w)` at `x` together with the data entering its curvature.
#[derive(Clone, Debug, Serialize)]
pub struct FlagData {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
    pub g: DMatrix<f64>,
    pub jacobi_operator: DMatrix<f64>,
    /// `g(v, v) g(w, w) - g(v, w)^2` in `g = g_v`.
    pub area_sq: f64,
    pub curvature: f64,
}

/// `K(v, w) = g_v(R w, w) / |v ^ w|^2_{g_v}`.
pub fn flag(metric: &Metric, x: &[f64], v: &[f64], w: &[f64]) -> Result<FlagData> {
    let t = fundamental_tensor(metric, x, v)?;
    if w.len() != v.len() {
        return Err(Error::Input("flag vectors must have the same dimension".into()));
    }
    let (gvv, gww, gvw) = (t.inner(v, v), t.inner(w, w), t.inner(v, w));
    let area_sq = gvv * gww - gvw * gvw;
    if !(area_sq > 1e-12 * gvv * gww) {
        return Err(Error::Input("flag vectors are linearly dependent".into()));
    }
    let r = berwald_curvature_operator(metric, x, v)?;
    let rw: Vec<f64> = (0..w.len()).map(|i| (0..w.len()).map(|j| r[(i, j)] * w[j]).sum()).collect();
    let curvature = t.inner(&rw, w) / area_sq;
    Ok(FlagData { x: x.to_vec(), v: v.to_vec(), w: w.to_vec(), g: t.matrix, jacobi_operator: r, area_sq, curvature })
}

pub fn flag_curvature(metric: &Metric, x: &[f64], v: &[f64], w: &[f64]) -> Result<f64> {
    Ok(flag(metric, x, v, w)?.curvature)
}

#[derive(Clone, Debug, Serialize)]
pub struct JacobiSpectrum {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    /// All `n` eigenvalues in increasing order, the flagpole one included.
    pub eigenvalues: Vec<f64>,
    /// `g(R v, v) / g(v, v)`, zero up to rounding.
    pub flagpole_eigenvalue: f64,
    pub nonpositive: bool,
}

/// `g_v`-symmetric part of `R` at `(x, v)` on the `g_v`-orthonormal
/// complement of `v`: returns `(g_v, lowered R, transverse eigenpairs)`.
/// Eigenvectors are `g_v`-unit.
pub(crate) fn transverse_eigenpairs(
    metric: &Metric,
    x: &[f64],
    v: &[f64],
) -> Result<(DMatrix<f64>, DMatrix<f64>, Vec<(f64, Vec<f64>)>)> {
    let t = fundamental_tensor(metric, x, v)?;
    let r = berwald_curvature_operator(metric, x, v)?;
    let lowered = &t.matrix * &r;
    let asym = (&lowered - lowered.transpose()).amax();
    if asym > SYMMETRY_TOL * lowered.amax().max(1.0) {
        return Err(Error::Consistency(format!("g_v R is not symmetric (deviation {asym:e})")));
    }
    let sym = (&lowered + lowered.transpose()) * 0.5;
    let basis = orthogonal_complement(&t.matrix, v);
    let m = basis.len();
    let reduced = DMatrix::from_fn(m, m, |a, b| bilinear(&sym, &basis[a], &basis[b]));
    let eig = SymmetricEigen::new(reduced);
    let pairs = (0..m)
        .map(|k| {
            let c = eig.eigenvectors.column(k);
            let w: Vec<f64> = (0..v.len()).map(|i| (0..m).map(|a| c[a] * basis[a][i]).sum()).collect();
            (eig.eigenvalues[k], w)
        })
        .collect();
    Ok((t.matrix, sym, pairs))
}

/// Eigenvalues of `R` at `(x, v)`. `R` is self-adjoint for `g_v`, so the
/// problem is solved on the `g_v`-orthonormal complement of `v` where it
/// becomes an ordinary symmetric one.
pub fn jacobi_spectrum(metric: &Metric, x: &[f64], v: &[f64]) -> Result<JacobiSpectrum> {
    let (g, sym, pairs) = transverse_eigenpairs(metric, x, v)?;
    let gvv = bilinear(&g, v, v);
    let flagpole_eigenvalue = bilinear(&sym, v, v) / gvv;
    let mut eigenvalues: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    eigenvalues.push(flagpole_eigenvalue);
    eigenvalues.sort_by(f64::total_cmp);
    let nonpositive = eigenvalues.iter().all(|&l| l <= NONPOSITIVITY_TOL * gvv);
    Ok(JacobiSpectrum { x: x.to_vec(), v: v.to_vec(), eigenvalues, flagpole_eigenvalue, nonpositive })
}

#[derive(Clone, Debug, Serialize)]
pub struct NonpositivityReport {
    pub samples: usize,
    pub seed: u64,
    pub all_nonpositive: bool,
    /// Largest eigenvalue seen, flagpole excluded (`v` is F-unit, so this is
    /// the largest flag curvature among the samples).
    pub max_eigenvalue: f64,
    /// The sample attaining `max_eigenvalue`.
    pub witness: Option<JacobiSpectrum>,
    /// Per-sample spectra; exported through [`NonpositivityReport::to_csv`].
    #[serde(skip)]
    pub spectra: Vec<JacobiSpectrum>,
}

impl NonpositivityReport {
    /// CSV with columns `x1..xn, v1..vn, lambda1..lambdan, verdict`.
    pub fn to_csv(&self) -> String {
        let n = self.spectra.first().map_or(0, |s| s.x.len());
        let mut cols: Vec<String> = (1..=n).map(|i| format!("x{i}")).collect();
        cols.extend((1..=n).map(|i| format!("v{i}")));
        cols.extend((1..=n).map(|i| format!("lambda{i}")));
        cols.push("verdict".into());
        let mut out = cols.join(",");
        out.push('\n');
        for s in &self.spectra {
            for a in s.x.iter().chain(&s.v).chain(&s.eigenvalues) {
                write!(out, "{a:.16e},").unwrap();
            }
            out.push_str(if s.nonpositive { "nonpositive\n" } else { "positive\n" });
        }
        out
    }
}

/// Largest eigenvalue other than the flagpole's.
fn transverse_max(s: &JacobiSpectrum) -> f64 {
    let mut rest = s.eigenvalues.clone();
    if let Some(i) = rest.iter().position(|&l| l == s.flagpole_eigenvalue) {
        rest.remove(i);
    }
    rest.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

/// Samples `x` in `region` (the metric's own region by default) and F-unit
/// `v`, and collects the Jacobi spectra.
pub fn nonpositivity_scan(
    metric: &Metric,
    region: Option<&ChartBox>,
    sample_count: usize,
    seed: u64,
) -> Result<NonpositivityReport> {
    if sample_count == 0 {
        return Err(Error::Input("sample_count must be at least 1".into()));
    }
    let region = region.cloned().unwrap_or_else(|| metric.region());
    if region.dim() != metric.dim() {
        return Err(Error::Input("scan region has the wrong dimension".into()));
    }
    let spectra = (0..sample_count)
        .into_par_iter()
        .map(|i| {
            let mut rng = sampling::child_rng(seed, "curvature-scan", i as u64);
            let x = sampling::point_in(&mut rng, &region);
            let u = sampling::unit_direction(&mut rng, metric.dim());
            let f = metric.norm(&x, &u)?;
            let v: Vec<f64> = u.iter().map(|a| a / f).collect();
            jacobi_spectrum(metric, &x, &v)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut max_eigenvalue = f64::NEG_INFINITY;
    let mut worst = None;
    for (i, s) in spectra.iter().enumerate() {
        let m = transverse_max(s);
        if m > max_eigenvalue {
            max_eigenvalue = m;
            worst = Some(i);
        }
    }
    let all_nonpositive = spectra.iter().all(|s| s.nonpositive);
    let witness = worst.map(|i| spectra[i].clone());
    Ok(NonpositivityReport { samples: sample_count, seed, all_nonpositive, max_eigenvalue, witness, spectra })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use rand::Rng;

    fn random_flags(metric: &Metric, count: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        (0..count)
            .map(|i| {
                let mut rng = sampling::child_rng(seed, "test-flags", i as u64);
                let x = sampling::point_in(&mut rng, &metric.region());
                let v = sampling::unit_direction(&mut rng, metric.dim());
                let w = sampling::unit_direction(&mut rng, metric.dim());
                (x, v, w)
            })
            .collect()
    }

    #[test]
    fn constant_curvature_fixtures() {
        for (m, k) in [(fixtures::poincare(), -1.0), (fixtures::sphere_chart(), 1.0), (fixtures::minkowski_quartic(1.0), 0.0)] {
            for (x, v, w) in random_flags(&m, 50, 4) {
                let got = flag_curvature(&m, &x, &v, &w).unwrap();
                assert!((got - k).abs() < 1e-9, "{}: {got}", m.spec().family);
            }
        }
    }

    #[test]
    fn flag_scaling_invariance() {
        for m in [fixtures::randers_sine(), fixtures::berwald_product()] {
            for (i, (x, v, w)) in random_flags(&m, 20, 8).into_iter().enumerate() {
                let mut rng = sampling::child_rng(1, "lambda", i as u64);
                let (lambda, mu) = (rng.gen_range(-3.0..3.0), rng.gen_range(0.2..4.0) * if i % 2 == 0 { 1.0 } else { -1.0 });
                let k = flag_curvature(&m, &x, &v, &w).unwrap();
                let shifted: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a + lambda * b).collect();
                let scaled: Vec<f64> = w.iter().map(|a| mu * a).collect();
                for other in [shifted, scaled] {
                    let k2 = flag_curvature(&m, &x, &v, &other).unwrap();
                    assert!((k - k2).abs() <= 1e-9 * k.abs().max(1.0), "{k} vs {k2}");
                }
            }
        }
    }

    #[test]
    fn riemannian_curvature_ignores_the_flagpole() {
        let m = fixtures::poincare();
        for (x, v, w) in random_flags(&m, 20, 5) {
            let k1 = flag_curvature(&m, &x, &v, &w).unwrap();
            let v2: Vec<f64> = v.iter().zip(&w).map(|(a, b)| 0.3 * a - 1.7 * b).collect();
            let k2 = flag_curvature(&m, &x, &v2, &v).unwrap();
            assert!((k1 - k2).abs() < 1e-8);
        }
    }

    #[test]
    fn dependent_flag_rejected() {
        let m = fixtures::poincare();
        let e = flag_curvature(&m, &[0.0, 0.0], &[1.0, 2.0], &[-2.0, -4.0]).unwrap_err();
        assert!(e.is_input_error());
    }

    #[test]
    fn spectra_of_model_spaces() {
        let p = jacobi_spectrum(&fixtures::poincare(), &[0.0, 0.0], &[0.5, 0.0]).unwrap();
        assert!((p.eigenvalues[0] + 1.0).abs() < 1e-9 && p.eigenvalues[1].abs() < 1e-9);
        assert!(p.nonpositive);
        let s = jacobi_spectrum(&fixtures::sphere_chart(), &[0.1, 0.2], &[0.3, 0.1]).unwrap();
        assert!(!s.nonpositive);
        let q = jacobi_spectrum(&fixtures::minkowski_quartic(1.0), &[0.1, 0.2], &[0.3, 0.1]).unwrap();
        assert!(q.eigenvalues.iter().all(|&l| l == 0.0) && q.nonpositive);
    }

    #[test]
    fn flagpole_eigenvalue_vanishes() {
        for m in fixtures::all() {
            for (x, v, _) in random_flags(&m, 10, 2) {
                let s = jacobi_spectrum(&m, &x, &v).unwrap();
                let scale = s.eigenvalues.iter().fold(1.0f64, |a, b| a.max(b.abs()));
                assert!(s.flagpole_eigenvalue.abs() <= 1e-9 * scale, "{}", m.spec().family);
            }
        }
    }

    #[test]
    fn scans() {
        let b = nonpositivity_scan(&fixtures::berwald_product(), None, 1000, 11).unwrap();
        assert!(b.all_nonpositive && b.max_eigenvalue <= 1e-7, "{}", b.max_eigenvalue);
        let p = nonpositivity_scan(&fixtures::poincare(), None, 50, 3).unwrap();
        assert!((p.max_eigenvalue + 1.0).abs() < 1e-5);
        let s = nonpositivity_scan(&fixtures::sphere_chart(), None, 10, 3).unwrap();
        assert!(!s.all_nonpositive && s.witness.is_some());
        let csv = s.to_csv();
        assert!(csv.starts_with("x1,x2,v1,v2,lambda1,lambda2,verdict\n"));
        assert_eq!(csv.lines().count(), 11);
    }

    #[test]
    fn scan_is_deterministic() {
        let a = nonpositivity_scan(&fixtures::randers_sine(), None, 30, 6).unwrap();
        let b = nonpositivity_scan(&fixtures::randers_sine(), None, 30, 6).unwrap();
        assert_eq!(a.max_eigenvalue, b.max_eigenvalue);
    }
}
