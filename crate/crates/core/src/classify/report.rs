//! End-to-end classification of a metric from the sampled sub-tests.

use serde::{Deserialize, Serialize};

use super::aux::{kappa_scan, transport_invariance_of_aux, AuxTransportReport, BinetLegendreField, KappaScan};
use super::busemann::{busemann_convexity_sample, ConvexityReport, MidpointWitness};
use super::holonomy::{holonomy_sample, HolonomySample};
use super::rigidity::{
    berwald_scan, jacobi_convexity_witness, norm_preservation_test, BerwaldScan, ConvexityWitness, NormPreservation,
    PreservationWitness,
};
use crate::curvature::{nonpositivity_scan, JacobiSpectrum, NonpositivityReport};
use crate::error::{Error, Result};
use crate::metric::{ChartBox, Metric, MetricSpec};

/// Sample counts and tolerances for [`classify_report`]. Every stage is
/// seeded with `seed`; the stages use distinct child-seed tags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    pub seed: u64,
    /// Sampling region; the metric's region when absent.
    pub region: Option<ChartBox>,
    pub berwald_samples: usize,
    pub preservation_geodesics: usize,
    pub preservation_vectors: usize,
    pub preservation_time: f64,
    pub curvature_samples: usize,
    pub busemann_pairs: usize,
    pub busemann_grid: usize,
    pub busemann_tol: f64,
    pub holonomy_loops: usize,
    /// Coordinate size of the holonomy loops; a quarter of the region's
    /// smallest half-width when absent.
    pub holonomy_scale: Option<f64>,
    pub kappa_samples: usize,
    pub aux_transport_samples: usize,
}

impl Default for ClassifyConfig {
    fn default() -> Self {
        ClassifyConfig {
            seed: 0,
            region: None,
            berwald_samples: 200,
            preservation_geodesics: 20,
            preservation_vectors: 5,
            preservation_time: 1.0,
            curvature_samples: 200,
            busemann_pairs: 1000,
            busemann_grid: 3,
            busemann_tol: 1e-7,
            holonomy_loops: 20,
            holonomy_scale: None,
            kappa_samples: 40,
            aux_transport_samples: 5,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum YesNo {
    Yes,
    No,
}

impl From<bool> for YesNo {
    fn from(b: bool) -> Self {
        if b {
            YesNo::Yes
        } else {
            YesNo::No
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Sampled {
    Pass,
    Violated,
}

/// `None` where the deciding stage failed.
#[derive(Clone, Debug, Serialize)]
pub struct Verdicts {
    pub berwald: Option<YesNo>,
    pub flag_nonpositive: Option<YesNo>,
    pub busemann_sampled: Option<Sampled>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Evidence {
    pub berwald_norm_max: Option<f64>,
    pub berwald_scale: Option<f64>,
    pub norm_preservation_deviation: Option<f64>,
    pub max_flag_curvature: Option<f64>,
    /// Largest component of the kappa defect orthogonal to `v` in the
    /// Binet-Legendre metric.
    pub kappa_orthogonal_max: Option<f64>,
    pub kappa_max: Option<f64>,
    pub aux_transport_drift: Option<f64>,
    /// Largest relative change of `F` under a sampled holonomy element.
    pub holonomy_drift: Option<f64>,
    pub holonomy_identity_deviation: Option<f64>,
    /// Largest midpoint margin of the sampled distance profiles.
    pub convexity_margin: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BerwaldWitness {
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub berwald_norm: f64,
    pub scale: f64,
    pub seed: u64,
    pub norm_preservation: Option<PreservationWitness>,
}

#[derive(Clone, Debug, Serialize)]
pub struct CurvatureWitness {
    pub spectrum: JacobiSpectrum,
    pub seed: u64,
    /// Second-variation check of `F(J)` along the positive eigenvector.
    pub jacobi: Option<ConvexityWitness>,
}

#[derive(Clone, Debug, Serialize)]
pub struct BusemannWitness {
    pub seed: u64,
    pub tol: f64,
    #[serde(flatten)]
    pub midpoint: MidpointWitness,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Witnesses {
    pub berwald: Option<BerwaldWitness>,
    pub flag_curvature: Option<CurvatureWitness>,
    pub busemann: Option<BusemannWitness>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct Stages {
    pub berwald: Option<BerwaldScan>,
    pub norm_preservation: Option<NormPreservation>,
    pub curvature: Option<NonpositivityReport>,
    pub busemann: Option<ConvexityReport>,
    pub holonomy: Option<HolonomySample>,
    pub kappa: Option<KappaScan>,
    pub aux_transport: Option<AuxTransportReport>,
}

#[derive(Clone, Debug, Serialize)]
pub struct StageFailure {
    pub stage: String,
    pub error: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct ClassificationReport {
    pub spec: MetricSpec,
    pub config: ClassifyConfig,
    pub verdicts: Verdicts,
    pub evidence: Evidence,
    pub witnesses: Witnesses,
    /// `(berwald && flag_nonpositive) == busemann pass`; `None` if a verdict
    /// is missing.
    pub theorem_consistent: Option<bool>,
    pub incomplete: bool,
    pub failures: Vec<StageFailure>,
    pub disclaimer: String,
    pub stages: Stages,
}

impl ClassificationReport {
    /// Some verdict is negative.
    pub fn has_negative_verdict(&self) -> bool {
        let v = &self.verdicts;
        v.berwald == Some(YesNo::No) || v.flag_nonpositive == Some(YesNo::No) || v.busemann_sampled == Some(Sampled::Violated)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Runs a stage, turning numerical failures into a recorded failure.
/// Input errors propagate.
fn stage<T>(name: &str, failures: &mut Vec<StageFailure>, run: impl FnOnce() -> Result<T>) -> Result<Option<T>> {
    match run() {
        Ok(t) => Ok(Some(t)),
        Err(e) if e.is_input_error() => Err(e),
        Err(e) => {
            failures.push(StageFailure { stage: name.into(), error: e.to_string() });
            Ok(None)
        }
    }
}

pub fn classify_report(metric: &Metric, config: &ClassifyConfig) -> Result<ClassificationReport> {
    let region = config.region.clone().unwrap_or_else(|| metric.region());
    if region.dim() != metric.dim() {
        return Err(Error::Input("classification region has the wrong dimension".into()));
    }
    let seed = config.seed;
    let mut failures = Vec::new();
    let mut stages = Stages {
        berwald: stage("berwald", &mut failures, || berwald_scan(metric, &region, config.berwald_samples, seed))?,
        norm_preservation: stage("norm_preservation", &mut failures, || {
            norm_preservation_test(
                metric,
                &region,
                config.preservation_geodesics,
                config.preservation_vectors,
                config.preservation_time,
                seed,
            )
        })?,
        curvature: stage("curvature", &mut failures, || {
            nonpositivity_scan(metric, Some(&region), config.curvature_samples, seed)
        })?,
        ..Stages::default()
    };
    stages.busemann = stage("busemann", &mut failures, || {
        busemann_convexity_sample(metric, Some(&region), config.busemann_pairs, config.busemann_grid, config.busemann_tol, seed)
    })?;
    let half = region.lower.iter().zip(&region.upper).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);
    stages.holonomy = stage("holonomy", &mut failures, || {
        let scale = config.holonomy_scale.unwrap_or(0.25 * half);
        holonomy_sample(metric, &region.center(), config.holonomy_loops, scale, seed)
    })?;
    let aux = BinetLegendreField::new(metric);
    stages.kappa = stage("kappa", &mut failures, || kappa_scan(metric, &aux, &region, config.kappa_samples, seed))?;
    stages.aux_transport = stage("aux_transport", &mut failures, || {
        transport_invariance_of_aux(metric, &aux, &region, config.aux_transport_samples, seed)
    })?;

    let mut witnesses = Witnesses::default();
    let berwald = stages.berwald.as_ref().map(|s| s.berwald);
    if let Some(s) = stages.berwald.as_ref().filter(|s| !s.berwald) {
        witnesses.berwald = Some(BerwaldWitness {
            x: s.witness_x.clone(),
            v: s.witness_v.clone(),
            berwald_norm: s.max_norm,
            scale: s.scale,
            seed,
            norm_preservation: stages.norm_preservation.as_ref().and_then(|p| p.witness.clone()),
        });
    }
    let flag_nonpositive = stages.curvature.as_ref().map(|s| s.all_nonpositive);
    if let Some(spectrum) = stages.curvature.as_ref().filter(|s| !s.all_nonpositive).and_then(|s| s.witness.clone()) {
        let jacobi = stage("jacobi_witness", &mut failures, || {
            jacobi_convexity_witness(metric, &spectrum.x, &spectrum.v, seed)
        })?
        .flatten();
        witnesses.flag_curvature = Some(CurvatureWitness { spectrum, seed, jacobi });
    }
    let busemann = stages.busemann.as_ref().map(|r| r.passed);
    if let Some(w) = stages.busemann.as_ref().and_then(|r| r.witness.clone()) {
        witnesses.busemann = Some(BusemannWitness { seed, tol: config.busemann_tol, midpoint: w });
    }

    let theorem_consistent = match (berwald, flag_nonpositive, busemann) {
        (Some(b), Some(f), Some(p)) => Some((b && f) == p),
        _ => None,
    };
    let evidence = Evidence {
        berwald_norm_max: stages.berwald.as_ref().map(|s| s.max_norm),
        berwald_scale: stages.berwald.as_ref().map(|s| s.scale),
        norm_preservation_deviation: stages.norm_preservation.as_ref().map(|p| p.max_deviation),
        max_flag_curvature: stages.curvature.as_ref().map(|s| s.max_eigenvalue),
        kappa_orthogonal_max: stages.kappa.as_ref().map(|k| k.max_orthogonal),
        kappa_max: stages.kappa.as_ref().map(|k| k.max_norm),
        aux_transport_drift: stages.aux_transport.as_ref().map(|a| a.max_drift),
        holonomy_drift: stages.holonomy.as_ref().map(|h| h.max_norm_deviation),
        holonomy_identity_deviation: stages.holonomy.as_ref().map(|h| h.max_identity_deviation),
        convexity_margin: stages.busemann.as_ref().map(|r| r.worst_margin),
    };
    let disclaimer = match &stages.busemann {
        Some(r) if r.passed => format!(
            "no convexity violation found at tolerance {:e} over {} sampled geodesic pairs; this is not a proof of Busemann convexity",
            r.tol, r.evaluated
        ),
        _ => super::busemann::DISCLAIMER.to_string(),
    };
    Ok(ClassificationReport {
        spec: metric.spec().clone(),
        config: config.clone(),
        verdicts: Verdicts {
            berwald: berwald.map(YesNo::from),
            flag_nonpositive: flag_nonpositive.map(YesNo::from),
            busemann_sampled: busemann.map(|p| if p { Sampled::Pass } else { Sampled::Violated }),
        },
        evidence,
        witnesses,
        theorem_consistent,
        incomplete: !failures.is_empty(),
        failures,
        disclaimer,
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    fn quick(seed: u64) -> ClassifyConfig {
        ClassifyConfig {
            seed,
            berwald_samples: 30,
            preservation_geodesics: 4,
            curvature_samples: 30,
            busemann_pairs: 100,
            holonomy_loops: 4,
            kappa_samples: 5,
            aux_transport_samples: 2,
            ..ClassifyConfig::default()
        }
    }

    #[test]
    fn sphere_is_berwald_but_not_convex() {
        let r = classify_report(&fixtures::sphere_chart(), &quick(3)).unwrap();
        assert!(!r.incomplete, "{:?}", r.failures);
        assert_eq!(r.verdicts.berwald, Some(YesNo::Yes));
        assert_eq!(r.verdicts.flag_nonpositive, Some(YesNo::No));
        assert_eq!(r.verdicts.busemann_sampled, Some(Sampled::Violated));
        assert_eq!(r.theorem_consistent, Some(true));
        let w = r.witnesses.flag_curvature.as_ref().unwrap();
        assert!(w.jacobi.as_ref().unwrap().second_difference < 0.0);
        assert!(r.witnesses.busemann.is_some() && r.witnesses.berwald.is_none());
    }

    #[test]
    fn randers_carries_a_berwald_witness() {
        let r = classify_report(&fixtures::randers_sine(), &quick(1)).unwrap();
        assert_eq!(r.verdicts.berwald, Some(YesNo::No));
        let w = r.witnesses.berwald.as_ref().unwrap();
        assert!(w.norm_preservation.as_ref().unwrap().deviation > 0.0);
        assert!(r.has_negative_verdict());
    }

    #[test]
    fn report_json_is_deterministic() {
        let m = fixtures::minkowski_quartic(1.0);
        let a = classify_report(&m, &quick(5)).unwrap().to_json();
        let b = classify_report(&m, &quick(5)).unwrap().to_json();
        assert_eq!(a, b);
        assert!(a.contains("\"berwald\": \"yes\""));
    }

    #[test]
    fn config_round_trips() {
        let c = quick(9);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(serde_json::from_str::<ClassifyConfig>(&text).unwrap(), c);
        assert!(serde_json::from_str::<ClassifyConfig>("{\"sed\": 1}").is_err());
    }
}
