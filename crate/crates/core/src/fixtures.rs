//! Built-in example metrics with their sampling regions.
//!
//! The same specs ship as JSON files under `fixtures/` at the workspace root.

use serde_json::json;

use crate::metric::{ChartBox, Metric, MetricSpec};

/// Names of the fixtures returned by [`all`], in order.
pub const FIXTURE_NAMES: [&str; 7] = [
    "euclidean",
    "poincare",
    "sphere_chart",
    "minkowski_quartic",
    "randers_sine",
    "randers_const",
    "berwald_product",
];

fn spec(family: &str, dimension: usize, params: serde_json::Value, chart: ChartBox, region: ChartBox) -> MetricSpec {
    MetricSpec { family: family.into(), dimension, params, chart_domain: chart, region: Some(region) }
}

pub fn euclidean_spec(n: usize) -> MetricSpec {
    spec("riemannian", n, json!({"preset": "euclidean"}), ChartBox::cube(n, 2.0), ChartBox::cube(n, 1.0))
}

/// Poincaré disk `4 |v|^2 / (1 - |x|^2)^2`. The sampling box lies inside `|x| <= 0.7`.
pub fn poincare_spec() -> MetricSpec {
    spec("riemannian", 2, json!({"preset": "poincare"}), ChartBox::cube(2, 0.7), ChartBox::cube(2, 0.49))
}

/// Stereographic chart of the unit sphere. The sampling box stays inside an
/// open hemisphere, where minimizing geodesics are unique.
pub fn sphere_chart_spec() -> MetricSpec {
    spec("riemannian", 2, json!({"preset": "sphere"}), ChartBox::cube(2, 0.9), ChartBox::cube(2, 0.6))
}

pub fn minkowski_quartic_spec(c: f64) -> MetricSpec {
    spec("minkowski_quartic", 2, json!({"c": c}), ChartBox::cube(2, 2.0), ChartBox::cube(2, 1.0))
}

/// Euclidean Randers metric with constant drift `b`.
pub fn randers_const_spec(b1: f64, b2: f64) -> MetricSpec {
    spec(
        "randers",
        2,
        json!({"a": "euclidean", "b": [b1, b2]}),
        ChartBox::cube(2, 2.0),
        ChartBox::cube(2, 1.0),
    )
}

/// Euclidean Randers metric with drift `b = (0, 0.3 sin x1)`; not Berwald.
pub fn randers_sine_spec() -> MetricSpec {
    spec(
        "randers",
        2,
        json!({"a": "euclidean", "b": [0.0, ["mul", 0.3, ["sin", "x1"]]]}),
        ChartBox::cube(2, 2.0),
        ChartBox::cube(2, 1.0),
    )
}

/// Poincaré disk times a line, in quartic combination.
pub fn berwald_product_spec() -> MetricSpec {
    spec(
        "berwald_product",
        3,
        json!({"c": 1.0, "flat_dim": 1}),
        ChartBox::new(vec![-0.7, -0.7, -1.0], vec![0.7, 0.7, 1.0]),
        ChartBox::new(vec![-0.49, -0.49, -0.5], vec![0.49, 0.49, 0.5]),
    )
}

pub fn spec_by_name(name: &str) -> Option<MetricSpec> {
    Some(match name {
        "euclidean" => euclidean_spec(2),
        "poincare" => poincare_spec(),
        "sphere_chart" => sphere_chart_spec(),
        "minkowski_quartic" => minkowski_quartic_spec(1.0),
        "randers_sine" => randers_sine_spec(),
        "randers_const" => randers_const_spec(0.5, 0.0),
        "berwald_product" => berwald_product_spec(),
        _ => return None,
    })
}

fn build(spec: MetricSpec) -> Metric {
    Metric::from_spec(spec).expect("built-in fixture compiles")
}

pub fn euclidean(n: usize) -> Metric {
    build(euclidean_spec(n))
}

pub fn poincare() -> Metric {
    build(poincare_spec())
}

pub fn sphere_chart() -> Metric {
    build(sphere_chart_spec())
}

pub fn minkowski_quartic(c: f64) -> Metric {
    build(minkowski_quartic_spec(c))
}

pub fn randers_const(b1: f64, b2: f64) -> Metric {
    build(randers_const_spec(b1, b2))
}

pub fn randers_sine() -> Metric {
    build(randers_sine_spec())
}

pub fn berwald_product() -> Metric {
    build(berwald_product_spec())
}

pub fn by_name(name: &str) -> Option<Metric> {
    spec_by_name(name).map(build)
}

/// Every named fixture, in [`FIXTURE_NAMES`] order.
pub fn all() -> Vec<Metric> {
    FIXTURE_NAMES.iter().map(|n| by_name(n).unwrap()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_resolve() {
        for name in FIXTURE_NAMES {
            assert!(by_name(name).is_some(), "{name}");
        }
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn regions_lie_in_charts() {
        for name in FIXTURE_NAMES {
            spec_by_name(name).unwrap().check_schema().unwrap();
        }
    }
}
