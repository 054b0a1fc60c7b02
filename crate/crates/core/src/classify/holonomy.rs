//! Sampled elements of the linear holonomy group at a point.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesics::{integrate_geodesic, local_distance, BvpOptions};
use crate::metric::Metric;
use crate::sampling;
use crate::spray::fundamental_matrix;
use crate::transport::parallel_frame;

/// One generator `P_{gamma_2}^{-1} P_{gamma_1}`: `gamma_1` runs through the
/// vertices in order, `gamma_2` goes straight from the base point to the
/// last vertex.
#[derive(Clone, Debug, Serialize)]
pub struct LoopElement {
    pub index: usize,
    /// Base point first.
    pub vertices: Vec<Vec<f64>>,
    pub map: DMatrix<f64>,
    pub operator_norm: f64,
    pub min_singular_value: f64,
    /// `max |H - I|`.
    pub identity_deviation: f64,
    /// `max_w |F(p, H w) - F(p, w)| / F(p, w)` over test vectors.
    pub norm_deviation: f64,
    /// `max |H^T g H - g| / max |g|` with `g = g_{e_1}(p)`; a meaningful
    /// isometry test when `F` is Riemannian.
    pub metric_deviation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HolonomySample {
    pub base: Vec<f64>,
    pub loop_scale: f64,
    pub seed: u64,
    pub elements: Vec<LoopElement>,
    /// Loops dropped because a leg's boundary-value solve failed.
    pub skipped: usize,
    pub max_identity_deviation: f64,
    pub max_norm_deviation: f64,
    pub max_metric_deviation: f64,
    pub min_singular_value: f64,
    /// `max |H_{abc} - H_{bc} H_{ab}|` for two triangles sharing an edge and
    /// the quadrilateral they form; `None` if those loops could not be built.
    pub composition_error: Option<f64>,
}

/// Transport map along the geodesic from `a` to `b`.
fn leg(metric: &Metric, a: &[f64], b: &[f64]) -> Result<DMatrix<f64>> {
    let d = local_distance(metric, a, b, &BvpOptions::default())?;
    let trace = integrate_geodesic(metric, a, &d.velocity, 1.0, &BvpOptions::default().ode)?;
    if let Some(t) = trace.exit_time {
        return Err(Error::ChartExit { t });
    }
    let frame = parallel_frame(metric, &trace)?;
    Ok(frame.matrix(trace.len() - 1))
}

fn path(metric: &Metric, vertices: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let n = metric.dim();
    let mut m = DMatrix::identity(n, n);
    for w in vertices.windows(2) {
        m = leg(metric, &w[0], &w[1])? * m;
    }
    Ok(m)
}

/// `P_{p -> last}^{-1} P_{p -> q_1 -> ... -> last}`.
pub fn loop_map(metric: &Metric, vertices: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if vertices.len() < 3 {
        return Err(Error::Input("a loop needs the base point and at least two more vertices".into()));
    }
    let first = path(metric, vertices)?;
    let direct = path(metric, &[vertices[0].clone(), vertices.last().unwrap().clone()])?;
    direct
        .lu()
        .solve(&first)
        .ok_or_else(|| Error::Consistency("transport along a leg is singular".into()))
}

fn is_skippable(e: &Error) -> bool {
    matches!(e, Error::Bvp { .. } | Error::Boundary { .. } | Error::ChartExit { .. })
}

fn random_vertex(metric: &Metric, rng: &mut impl rand::Rng, p: &[f64], scale: f64) -> Option<Vec<f64>> {
    let region = metric.region();
    (0..100).find_map(|_| {
        let u = sampling::unit_direction(rng, p.len());
        let r = scale * rng.gen_range(0.5..=1.0);
        let q: Vec<f64> = p.iter().zip(&u).map(|(a, b)| a + r * b).collect();
        region.contains(&q).then_some(q)
    })
}

fn element(metric: &Metric, index: usize, vertices: Vec<Vec<f64>>, seed: u64) -> Result<LoopElement> {
    let n = metric.dim();
    let p = &vertices[0];
    let map = loop_map(metric, &vertices)?;
    let svd = map.clone().svd(false, false);
    let mut rng = sampling::child_rng(seed, "holonomy-test-vectors", index as u64);
    let mut tests: Vec<Vec<f64>> = Vec::new();
    for i in 0..n {
        for s in [-1.0, 1.0] {
            tests.push((0..n).map(|k| if k == i { s } else { 0.0 }).collect());
        }
    }
    tests.extend((0..4).map(|_| sampling::unit_direction(&mut rng, n)));
    let mut norm_deviation = 0.0f64;
    for w in &tests {
        let hw: Vec<f64> = (0..n).map(|i| (0..n).map(|j| map[(i, j)] * w[j]).sum()).collect();
        let f = metric.norm(p, w)?;
        norm_deviation = norm_deviation.max((metric.norm(p, &hw)? - f).abs() / f);
    }
    let e1: Vec<f64> = (0..n).map(|i| if i == 0 { 1.0 } else { 0.0 }).collect();
    let g = fundamental_matrix(metric, p, &e1)?;
    let metric_deviation = (map.transpose() * &g * &map - &g).amax() / g.amax();
    Ok(LoopElement {
        index,
        identity_deviation: (&map - DMatrix::identity(n, n)).amax(),
        operator_norm: svd.singular_values.max(),
        min_singular_value: svd.singular_values.min(),
        norm_deviation,
        metric_deviation,
        map,
        vertices,
    })
}

/// Random geodesic triangles and quadrilaterals of coordinate size about
/// `loop_scale` based at `p`, kept inside the metric's region.
pub fn holonomy_sample(metric: &Metric, p: &[f64], loops: usize, loop_scale: f64, seed: u64) -> Result<HolonomySample> {
    let n = metric.dim();
    if p.len() != n || !metric.region().contains(p) {
        return Err(Error::Boundary { point: p.to_vec(), region: metric.region().to_string() });
    }
    if loops == 0 || !(loop_scale > 0.0) {
        return Err(Error::Input("need at least one loop and a positive loop scale".into()));
    }
    let results = (0..loops)
        .into_par_iter()
        .map(|i| -> Result<Option<LoopElement>> {
            let mut rng = sampling::child_rng(seed, "holonomy", i as u64);
            let corners = 2 + i % 2;
            let mut vertices = vec![p.to_vec()];
            for _ in 0..corners {
                match random_vertex(metric, &mut rng, p, loop_scale) {
                    Some(q) => vertices.push(q),
                    None => return Err(Error::Sampling("no loop vertex inside the region".into())),
                }
            }
            match element(metric, i, vertices, seed) {
                Ok(e) => Ok(Some(e)),
                Err(e) if is_skippable(&e) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    let elements: Vec<LoopElement> = results.into_iter().flatten().collect();
    let composition_error = composition_check(metric, p, loop_scale, seed)?;
    let fold = |f: fn(&LoopElement) -> f64| elements.iter().map(f).fold(0.0, f64::max);
    Ok(HolonomySample {
        base: p.to_vec(),
        loop_scale,
        seed,
        skipped,
        max_identity_deviation: fold(|e| e.identity_deviation),
        max_norm_deviation: fold(|e| e.norm_deviation),
        max_metric_deviation: fold(|e| e.metric_deviation),
        min_singular_value: elements.iter().map(|e| e.min_singular_value).fold(f64::INFINITY, f64::min),
        composition_error,
        elements,
    })
}

/// Triangles `(p, a, b)` and `(p, b, c)` against the quadrilateral
/// `(p, a, b, c)`: the generator of the latter is the product of the two.
fn composition_check(metric: &Metric, p: &[f64], scale: f64, seed: u64) -> Result<Option<f64>> {
    let mut rng = sampling::child_rng(seed, "holonomy-composition", 0);
    let mut corners = Vec::new();
    for _ in 0..3 {
        match random_vertex(metric, &mut rng, p, scale) {
            Some(q) => corners.push(q),
            None => return Ok(None),
        }
    }
    let [a, b, c] = [corners[0].clone(), corners[1].clone(), corners[2].clone()];
    let maps = (|| -> Result<_> {
        Ok((
            loop_map(metric, &[p.to_vec(), a.clone(), b.clone()])?,
            loop_map(metric, &[p.to_vec(), b.clone(), c.clone()])?,
            loop_map(metric, &[p.to_vec(), a.clone(), b.clone(), c.clone()])?,
        ))
    })();
    match maps {
        Ok((h1, h2, h12)) => Ok(Some((h12 - h2 * h1).amax())),
        Err(e) if is_skippable(&e) => Ok(None),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn flat_holonomy_is_trivial() {
        let m = fixtures::minkowski_quartic(1.0);
        let h = holonomy_sample(&m, &[0.0, 0.0], 10, 0.4, 1).unwrap();
        assert_eq!(h.skipped, 0);
        assert!(h.max_identity_deviation <= 1e-8);
    }

    #[test]
    fn riemannian_holonomy_is_orthogonal() {
        let m = fixtures::poincare();
        let h = holonomy_sample(&m, &[0.0, 0.1], 10, 0.3, 2).unwrap();
        assert!(h.max_metric_deviation <= 1e-6, "{}", h.max_metric_deviation);
        assert!(h.max_identity_deviation > 1e-3);
        assert!((h.min_singular_value - 1.0).abs() < 0.5);
        assert!(h.composition_error.unwrap() <= 1e-8);
    }

    #[test]
    fn randers_holonomy_changes_norms() {
        let m = fixtures::randers_sine();
        let h = holonomy_sample(&m, &[0.0, 0.0], 10, 0.5, 3).unwrap();
        assert!(h.max_norm_deviation >= 1e-3, "{}", h.max_norm_deviation);
        assert!(h.composition_error.unwrap() <= 1e-8);
    }
}
