//! Rigidity tests and the classification verdict.

pub mod aux;

pub use aux::{
    binet_legendre_metric, christoffel, kappa_defect, kappa_scan, transport_invariance_of_aux, AuxMetric,
    AuxTransportReport, BinetLegendreField, FixedDirectionField, KappaDefect, KappaScan,
};
pub mod busemann;
pub mod holonomy;
pub mod report;
pub mod rigidity;

pub use busemann::{busemann_convexity_sample, ConvexityReport, PairRecord};
pub use holonomy::{holonomy_sample, loop_map, HolonomySample, LoopElement};
pub use report::{classify_report, ClassificationReport, ClassifyConfig, Sampled, YesNo};
pub use rigidity::{
    berwald_scan, jacobi_convexity_witness, norm_preservation_test, BerwaldScan, ConvexityWitness, NormPreservation,
};
