//! Finsler norms on a single coordinate chart.
//!
//! A [`MetricSpec`] is the declarative, serializable description; a [`Metric`]
//! is the compiled form, holding tapes for `F` and `F^2` over the variables
//! `(x1..xn, v1..vn)`.

mod families;
mod validate;

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;

pub use families::{FamilyModel, FamilyRegistry, MetricFamily, PointCheck};
pub use validate::{validate_spec, ValidationReport, ValidationWitness};

use crate::error::{Error, Result};
use crate::jets::Tape;

/// Axis-aligned box. For the chart domain, `margin` is the inset used for
/// sampling and tubular margins.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChartBox {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub margin: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl ChartBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> ChartBox {
        ChartBox { lower, upper, margin: 0.0 }
    }

    pub fn cube(dim: usize, half_width: f64) -> ChartBox {
        ChartBox::new(vec![-half_width; dim], vec![half_width; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&xi, (&lo, &hi))| xi >= lo && xi <= hi)
    }

    /// The box shrunk by `margin` on every side.
    pub fn inset(&self, margin: f64) -> ChartBox {
        ChartBox::new(
            self.lower.iter().map(|l| l + margin).collect(),
            self.upper.iter().map(|u| u - margin).collect(),
        )
    }

    pub fn center(&self) -> Vec<f64> {
        self.lower.iter().zip(&self.upper).map(|(l, u)| 0.5 * (l + u)).collect()
    }

    fn check(&self, dim: usize, path: &str) -> Result<()> {
        let schema = |message: String| Error::Schema { path: path.to_string(), message };
        if self.lower.len() != dim || self.upper.len() != dim {
            return Err(schema(format!("bounds must have {dim} entries")));
        }
        if self.margin < 0.0 || !self.margin.is_finite() {
            return Err(schema("margin must be finite and non-negative".into()));
        }
        for (i, (l, u)) in self.lower.iter().zip(&self.upper).enumerate() {
            if !(l.is_finite() && u.is_finite()) || l + 2.0 * self.margin >= *u {
                return Err(schema(format!("axis {}: empty box after margin", i + 1)));
            }
        }
        Ok(())
    }
}

impl fmt::Display for ChartBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?}..{:?}", self.lower, self.upper)
    }
}

/// Declarative description of a Finsler norm family on a chart.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricSpec {
    /// Registered family name, e.g. `riemannian`, `randers`.
    pub family: String,
    pub dimension: usize,
    #[serde(default)]
    pub params: Value,
    pub chart_domain: ChartBox,
    /// Convex-neighbourhood box used by samplers and the distance solver.
    /// Defaults to the chart domain inset by its margin.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<ChartBox>,
}

impl MetricSpec {
    /// Parses and schema-checks a spec. Type errors name the offending field
    /// path, syntax errors the line and column.
    pub fn from_json_str(text: &str) -> Result<MetricSpec> {
        let mut de = serde_json::Deserializer::from_str(text);
        let spec: MetricSpec = serde_path_to_error::deserialize(&mut de).map_err(|e| {
            let inner = e.inner();
            let at = format!("line {} column {}", inner.line(), inner.column());
            let path = e.path().to_string();
            Error::Schema {
                path: if path == "." { at } else { format!("{path} ({at})") },
                message: inner.to_string(),
            }
        })?;
        spec.check_schema()?;
        Ok(spec)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    /// Structural checks; every offending field is listed in the error.
    pub fn check_schema(&self) -> Result<()> {
        let mut issues: Vec<(String, String)> = Vec::new();
        let mut push = |r: Result<()>| {
            if let Err(Error::Schema { path, message }) = r {
                issues.push((path, message));
            }
        };
        if self.dimension == 0 {
            push(Err(Error::Schema { path: "dimension".into(), message: "must be a positive integer".into() }));
        } else {
            push(self.chart_domain.check(self.dimension, "chart_domain"));
            if let Some(region) = &self.region {
                push(region.check(self.dimension, "region"));
                if !(self.chart_domain.contains(&region.lower) && self.chart_domain.contains(&region.upper)) {
                    push(Err(Error::Schema { path: "region".into(), message: "must lie inside chart_domain".into() }));
                }
            }
        }
        if !self.params.is_null() && !self.params.is_object() {
            push(Err(Error::Schema { path: "params".into(), message: "must be an object".into() }));
        }
        if issues.is_empty() {
            return Ok(());
        }
        let (paths, messages): (Vec<_>, Vec<_>) = issues.into_iter().unzip();
        Err(Error::Schema { path: paths.join(", "), message: messages.join("; ") })
    }

    pub fn region(&self) -> ChartBox {
        self.region
            .clone()
            .unwrap_or_else(|| self.chart_domain.inset(self.chart_domain.margin))
    }
}

/// A compiled, immutable Finsler norm.
#[derive(Clone)]
pub struct Metric {
    spec: MetricSpec,
    norm: Tape,
    norm_sq: Tape,
    x_dependent: bool,
    checks: Arc<Vec<PointCheck>>,
}

impl fmt::Debug for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Metric").field("spec", &self.spec).finish_non_exhaustive()
    }
}

impl Metric {
    pub fn from_spec(spec: MetricSpec) -> Result<Metric> {
        Metric::from_spec_with(spec, FamilyRegistry::builtin())
    }

    pub fn from_spec_with(spec: MetricSpec, registry: &FamilyRegistry) -> Result<Metric> {
        spec.check_schema()?;
        let family = registry.get(&spec.family).ok_or_else(|| Error::Schema {
            path: "family".into(),
            message: format!(
                "unknown family {:?}; registered: {}",
                spec.family,
                registry.names().join(", ")
            ),
        })?;
        let model = family.build(spec.dimension, &spec.params)?;
        let n = spec.dimension;
        if model.norm.max_index() > n || model.norm_sq.max_index() > n {
            return Err(Error::Schema {
                path: "params".into(),
                message: format!("expression references a coordinate beyond dimension {n}"),
            });
        }
        Ok(Metric {
            norm: Tape::compile(&model.norm, n),
            norm_sq: Tape::compile(&model.norm_sq, n),
            x_dependent: model.norm_sq.depends_on_x(),
            checks: Arc::new(model.checks),
            spec,
        })
    }

    pub fn spec(&self) -> &MetricSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.spec.dimension
    }

    pub fn domain(&self) -> &ChartBox {
        &self.spec.chart_domain
    }

    pub fn region(&self) -> ChartBox {
        self.spec.region()
    }

    pub fn in_domain(&self, x: &[f64]) -> bool {
        self.spec.chart_domain.contains(x)
    }

    /// `false` for Minkowski norms (no dependence on the base point).
    pub fn is_x_dependent(&self) -> bool {
        self.x_dependent
    }

    pub fn norm_sq_tape(&self) -> &Tape {
        &self.norm_sq
    }

    pub fn point_checks(&self) -> &[PointCheck] {
        &self.checks
    }

    fn vars(&self, x: &[f64], v: &[f64]) -> Vec<f64> {
        x.iter().chain(v).copied().collect()
    }

    /// `F(x, v)` without the domain check. May be negative for specs that
    /// violate positivity (e.g. Randers with a drift of norm above one).
    pub fn norm(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.norm.eval(&self.vars(x, v))?)
    }

    pub fn norm_sq(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        Ok(self.norm_sq.eval(&self.vars(x, v))?)
    }

    /// Checked evaluation of `F(x, v)`.
    pub fn eval_norm(&self, x: &[f64], v: &[f64]) -> Result<f64> {
        let n = self.dim();
        if x.len() != n || v.len() != n {
            return Err(Error::Input(format!("expected {n}-dimensional point and vector")));
        }
        if x.iter().chain(v).any(|a| !a.is_finite()) {
            return Err(Error::Input("non-finite coordinates".into()));
        }
        if !self.in_domain(x) {
            return Err(Error::Domain { x: x.to_vec() });
        }
        if v.iter().all(|&a| a == 0.0) {
            return Ok(0.0);
        }
        self.norm(x, v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use approx::assert_relative_eq;

    #[test]
    fn euclidean_pythagoras() {
        let m = fixtures::euclidean(2);
        assert_relative_eq!(m.eval_norm(&[0.3, -0.1], &[3.0, 4.0]).unwrap(), 5.0, epsilon = 1e-15);
    }

    #[test]
    fn quartic_axis_value() {
        let m = fixtures::minkowski_quartic(1.0);
        let f = m.eval_norm(&[0.0, 0.0], &[1.0, 0.0]).unwrap();
        assert_relative_eq!(f, 2f64.powf(0.25), epsilon = 1e-15);
        assert_relative_eq!(f, 1.189207, epsilon = 1e-6);
    }

    #[test]
    fn randers_is_not_reversible() {
        let m = fixtures::randers_const(0.5, 0.0);
        assert_relative_eq!(m.eval_norm(&[0.0, 0.0], &[1.0, 0.0]).unwrap(), 1.5, epsilon = 1e-15);
        assert_relative_eq!(m.eval_norm(&[0.0, 0.0], &[-1.0, 0.0]).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn zero_vector_has_zero_norm() {
        for m in fixtures::all() {
            let x = m.region().center();
            assert_eq!(m.eval_norm(&x, &vec![0.0; m.dim()]).unwrap(), 0.0);
        }
    }

    #[test]
    fn domain_and_input_errors() {
        let m = fixtures::poincare();
        assert!(matches!(m.eval_norm(&[0.99, 0.0], &[1.0, 0.0]), Err(Error::Domain { .. })));
        assert!(matches!(m.eval_norm(&[f64::NAN, 0.0], &[1.0, 0.0]), Err(Error::Input(_))));
    }

    #[test]
    fn dimension_zero_is_a_schema_error() {
        let text = r#"{"family": "riemannian", "dimension": 0, "params": {},
                       "chart_domain": {"lower": [], "upper": []}}"#;
        match MetricSpec::from_json_str(text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "dimension"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn type_errors_name_the_field() {
        let text = r#"{"family": "riemannian", "dimension": 2,
                       "chart_domain": {"lower": [-1, "a"], "upper": [1, 1]}}"#;
        match MetricSpec::from_json_str(text) {
            Err(Error::Schema { path, .. }) => assert!(path.starts_with("chart_domain.lower[1] (line 2"), "{path}"),
            other => panic!("expected schema error, got {other:?}"),
        }
        match MetricSpec::from_json_str("{\"family\": \"riemannian\",\n  \"dimension\" 2}") {
            Err(Error::Schema { path, .. }) => assert!(path.contains("line 2 column"), "{path}"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn every_offending_field_is_listed() {
        let text = r#"{"family": "riemannian", "dimension": 2, "params": [1],
                       "chart_domain": {"lower": [-1], "upper": [1]}}"#;
        match MetricSpec::from_json_str(text) {
            Err(Error::Schema { path, .. }) => assert_eq!(path, "chart_domain, params"),
            other => panic!("expected schema error, got {other:?}"),
        }
    }

    #[test]
    fn unknown_family_lists_registered_names() {
        let mut spec = fixtures::euclidean(2).spec().clone();
        spec.family = "polyhedral".into();
        let err = Metric::from_spec(spec).unwrap_err().to_string();
        assert!(err.contains("randers"), "{err}");
    }
}
