use serde::Serialize;

use super::Metric;
use crate::error::{Error, Result};
use crate::sampling;
use crate::spray::{fundamental_tensor_unchecked, DEGENERACY_FLOOR};

/// Relative tolerance for `F(x, lambda v) = lambda F(x, v)`.
pub const HOMOGENEITY_TOL: f64 = 1e-12;
const HOMOGENEITY_SCALES: [f64; 3] = [0.5, 2.0, 10.0];

#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct ValidationWitness {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub property: String,
    pub detail: String,
    pub sample: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub samples: usize,
    pub seed: u64,
    pub min_eigenvalue_ratio: f64,
    pub max_homogeneity_error: f64,
    pub failures: Vec<ValidationWitness>,
}

/// Samples `(x, v)` in the metric's region and checks positivity,
/// homogeneity, positive definiteness of `g_v` and family-specific
/// constraints. Besides random directions every sample also probes the
/// coordinate directions `+-e_i`, where degeneracies of the built-in families
/// sit.
pub fn validate_spec(metric: &Metric, sample_count: usize, seed: u64) -> Result<ValidationReport> {
    if sample_count == 0 {
        return Err(Error::Input("sample_count must be at least 1".into()));
    }
    let n = metric.dim();
    let region = metric.region();
    let mut failures = Vec::new();
    let mut min_ratio = f64::INFINITY;
    let mut max_homog = 0.0f64;
    for sample in 0..sample_count {
        let mut rng = sampling::child_rng(seed, "validate", sample as u64);
        let x = sampling::point_in(&mut rng, &region);
        for check in metric.point_checks() {
            let value = check.value(&x)?;
            if !(value < 1.0) {
                failures.push(ValidationWitness {
                    x: x.clone(),
                    v: vec![0.0; n],
                    property: check.name.clone(),
                    detail: format!("value {value}"),
                    sample,
                });
            }
        }
        let mut directions = Vec::with_capacity(2 * n + 1);
        for i in 0..n {
            for sign in [-1.0, 1.0] {
                let mut e = vec![0.0; n];
                e[i] = sign;
                directions.push(e);
            }
        }
        directions.push(sampling::unit_direction(&mut rng, n));
        for v in directions {
            let fail = |property: &str, detail: String| ValidationWitness {
                x: x.clone(),
                v: v.clone(),
                property: property.to_string(),
                detail,
                sample,
            };
            let f = metric.norm(&x, &v)?;
            if !(f > 0.0) {
                failures.push(fail("positivity", format!("F = {f}")));
                continue;
            }
            for lambda in HOMOGENEITY_SCALES {
                let scaled: Vec<f64> = v.iter().map(|a| lambda * a).collect();
                let err = (metric.norm(&x, &scaled)? - lambda * f).abs() / (lambda * f);
                max_homog = max_homog.max(err);
                if err >= HOMOGENEITY_TOL {
                    failures.push(fail("homogeneity", format!("lambda {lambda}: relative error {err:e}")));
                }
            }
            match fundamental_tensor_unchecked(metric, &x, &v) {
                Ok(t) => min_ratio = min_ratio.min(t.min_eigenvalue / t.max_eigenvalue),
                Err(Error::Degenerate { ratio, .. }) => {
                    min_ratio = min_ratio.min(ratio);
                    failures.push(fail(
                        "positive definiteness",
                        format!("eigenvalue ratio {ratio:e} below floor {DEGENERACY_FLOOR:e}"),
                    ));
                }
                Err(e) => return Err(e),
            }
        }
    }
    Ok(ValidationReport {
        passed: failures.is_empty(),
        samples: sample_count,
        seed,
        min_eigenvalue_ratio: min_ratio,
        max_homogeneity_error: max_homog,
        failures,
    })
}
