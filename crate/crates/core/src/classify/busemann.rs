//! Sampled midpoint convexity of `t -> d(gamma_1(t), gamma_2(t))`.
//!
//! `d` is the forward distance, so the test runs on both orderings
//! `d(gamma_1, gamma_2)` and `d(gamma_2, gamma_1)`. A pass only means that
//! no violation was found among the sampled pairs at the given tolerance.

use std::fmt::Write as _;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geodesics::{flow_with_tangents, local_distance_from, BvpOptions, DistanceResult, OdeOptions};
use crate::metric::{ChartBox, Metric};
use crate::sampling;

/// Largest tolerated fraction of pairs whose distance solves failed.
pub const MAX_SKIP_RATE: f64 = 0.1;
const MAX_ATTEMPTS: usize = 200;

pub const DISCLAIMER: &str = "sampled test: a pass means no convexity violation was found among the sampled \
geodesic pairs at the stated tolerance; it does not prove Busemann convexity";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Ordering {
    /// `h(t) = d(gamma_1(t), gamma_2(t))`.
    Forward,
    /// `h(t) = d(gamma_2(t), gamma_1(t))`.
    Reverse,
}

/// Everything needed to rebuild one sampled pair and its distance profile.
#[derive(Clone, Debug, Serialize)]
pub struct PairRecord {
    pub pair: usize,
    pub x1: Vec<f64>,
    pub u1: Vec<f64>,
    pub x2: Vec<f64>,
    pub u2: Vec<f64>,
    pub times: Vec<f64>,
    pub forward: Vec<f64>,
    pub reverse: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MidpointWitness {
    pub pair: PairRecord,
    pub ordering: Ordering,
    /// Grid index of the midpoint.
    pub index: usize,
    /// `h(t_k) - (h(t_{k-1}) + h(t_{k+1})) / 2`.
    pub margin: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvexityReport {
    pub pairs: usize,
    pub grid: usize,
    pub tol: f64,
    pub seed: u64,
    pub evaluated: usize,
    pub skipped: usize,
    /// Largest midpoint margin over pairs, grid points and orderings.
    pub worst_margin: f64,
    /// Midpoint tests with `margin > tol`.
    pub violations: usize,
    pub passed: bool,
    pub witness: Option<MidpointWitness>,
    pub disclaimer: String,
    #[serde(skip)]
    pub records: Vec<PairRecord>,
}

impl ConvexityReport {
    /// One row per pair and ordering: `pair, ordering, h(t_0), .., h(t_m)`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("pair,ordering");
        for k in 0..self.grid {
            write!(out, ",h{k}").unwrap();
        }
        out.push('\n');
        for r in &self.records {
            for (name, h) in [("forward", &r.forward), ("reverse", &r.reverse)] {
                write!(out, "{},{name}", r.pair).unwrap();
                for a in h {
                    write!(out, ",{a:.16e}").unwrap();
                }
                out.push('\n');
            }
        }
        out
    }
}

fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

fn scaled_direction(rng: &mut impl Rng, n: usize, len: f64) -> Vec<f64> {
    sampling::unit_direction(rng, n).into_iter().map(|a| a * len).collect()
}

/// Positions of the geodesic from `(x, u)` at `times` (last entry 1), or
/// `None` if it leaves `region` at one of them.
fn positions(metric: &Metric, x: &[f64], u: &[f64], times: &[f64], region: &ChartBox) -> Result<Option<Vec<Vec<f64>>>> {
    let n = metric.dim();
    let stops: Vec<f64> = times.iter().copied().filter(|&t| t > 0.0 && t < 1.0).collect();
    let sol = flow_with_tangents(metric, x, u, 1.0, &[], &[], &OdeOptions::default(), &stops)?;
    if sol.stopped_at.is_some() {
        return Ok(None);
    }
    let mut out = Vec::with_capacity(times.len());
    for &t in times {
        let y = if t == 0.0 {
            &sol.y[0]
        } else {
            &sol.y[sol.t.iter().position(|&s| s == t).expect("grid times are nodes")]
        };
        if !region.contains(&y[..n]) {
            return Ok(None);
        }
        out.push(y[..n].to_vec());
    }
    Ok(Some(out))
}

struct Pair {
    x1: Vec<f64>,
    u1: Vec<f64>,
    x2: Vec<f64>,
    u2: Vec<f64>,
    w: Vec<f64>,
    path1: Vec<Vec<f64>>,
    path2: Vec<Vec<f64>>,
}

/// Draws `gamma_1` from a random point and `gamma_2` from `exp_{x1}(w)`
/// with a nearby initial velocity, so that the pair starts at a known
/// distance estimate `F(x1, w)` and the profile is neither trivially
/// convex nor dominated by divergence.
fn draw_pair(metric: &Metric, region: &ChartBox, times: &[f64], seed: u64, index: usize) -> Result<Pair> {
    let n = metric.dim();
    let mut rng = sampling::child_rng(seed, "busemann", index as u64);
    let half = region.lower.iter().zip(&region.upper).map(|(a, b)| 0.5 * (b - a)).fold(f64::INFINITY, f64::min);
    for _ in 0..MAX_ATTEMPTS {
        let x1 = sampling::point_in(&mut rng, region);
        let w_len = half * rng.gen_range(0.05..0.6);
        let w = scaled_direction(&mut rng, n, w_len);
        let u_len = half * rng.gen_range(0.2..1.2);
        let u1 = scaled_direction(&mut rng, n, u_len);
        let spread = half * rng.gen_range(0.0..0.6);
        let kick = scaled_direction(&mut rng, n, spread);
        let u2: Vec<f64> = u1.iter().zip(&kick).map(|(a, b)| a + b).collect();
        let Some(ends) = positions(metric, &x1, &w, &[1.0], region)? else { continue };
        let x2 = ends[0].clone();
        if u2.iter().all(|&a| a == 0.0) {
            continue;
        }
        let Some(path1) = positions(metric, &x1, &u1, times, region)? else { continue };
        let Some(path2) = positions(metric, &x2, &u2, times, region)? else { continue };
        return Ok(Pair { x1, u1, x2, u2, w, path1, path2 });
    }
    Err(Error::Sampling(format!("pair {index}: no geodesic pair stayed inside the region")))
}

/// `h` along the grid for one ordering. Each solve is warm-started from the
/// previous grid point, shifted by the change of the chord between the two
/// curves.
fn profile(
    metric: &Metric,
    from: &[Vec<f64>],
    to: &[Vec<f64>],
    guesses: &[Vec<f64>],
    opts: &BvpOptions,
) -> Result<Vec<DistanceResult>> {
    let mut out: Vec<DistanceResult> = Vec::with_capacity(from.len());
    for k in 0..from.len() {
        let guess = if k == 0 || guesses.len() > k {
            guesses[k].clone()
        } else {
            let chord_change = sub(&sub(&to[k], &from[k]), &sub(&to[k - 1], &from[k - 1]));
            out[k - 1].velocity.iter().zip(&chord_change).map(|(a, b)| a + b).collect()
        };
        out.push(local_distance_from(metric, &from[k], &to[k], &guess, opts)?);
    }
    Ok(out)
}

fn midpoint_margins(h: &[f64]) -> Vec<f64> {
    h.windows(3).map(|w| w[1] - 0.5 * (w[0] + w[2])).collect()
}

fn evaluate(metric: &Metric, pair: &Pair, times: &[f64], index: usize) -> Result<PairRecord> {
    let opts = BvpOptions::default();
    let fwd = profile(metric, &pair.path1, &pair.path2, std::slice::from_ref(&pair.w), &opts)?;
    // exact for reversible metrics: the reverse geodesic is the forward one backwards
    let back: Vec<Vec<f64>> = fwd.iter().map(|d| d.arrival_velocity.iter().map(|a| -a).collect()).collect();
    let rev = profile(metric, &pair.path2, &pair.path1, &back, &opts)?;
    Ok(PairRecord {
        pair: index,
        x1: pair.x1.clone(),
        u1: pair.u1.clone(),
        x2: pair.x2.clone(),
        u2: pair.u2.clone(),
        times: times.to_vec(),
        forward: fwd.iter().map(|d| d.distance).collect(),
        reverse: rev.iter().map(|d| d.distance).collect(),
    })
}

/// Samples `pairs` geodesic pairs on `[0, 1]` inside `region` (default: the
/// metric's region) and tests midpoint convexity of both distance profiles
/// on a uniform grid of `grid >= 3` points.
pub fn busemann_convexity_sample(
    metric: &Metric,
    region: Option<&ChartBox>,
    pairs: usize,
    grid: usize,
    tol: f64,
    seed: u64,
) -> Result<ConvexityReport> {
    if pairs == 0 || grid < 3 || !(tol >= 0.0) {
        return Err(Error::Input("need pairs >= 1, grid >= 3 and a non-negative tolerance".into()));
    }
    let region = region.cloned().unwrap_or_else(|| metric.region());
    if region.dim() != metric.dim() {
        return Err(Error::Input("sampling region has the wrong dimension".into()));
    }
    let times: Vec<f64> = (0..grid).map(|k| k as f64 / (grid - 1) as f64).collect();
    let results = (0..pairs)
        .into_par_iter()
        .map(|i| -> Result<Option<PairRecord>> {
            let pair = draw_pair(metric, &region, &times, seed, i)?;
            match evaluate(metric, &pair, &times, i) {
                Ok(r) => Ok(Some(r)),
                Err(Error::Bvp { .. } | Error::Boundary { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>>>()?;
    let skipped = results.iter().filter(|r| r.is_none()).count();
    if skipped as f64 > MAX_SKIP_RATE * pairs as f64 {
        return Err(Error::Sampling(format!("{skipped} of {pairs} pairs failed to solve")));
    }
    let records: Vec<PairRecord> = results.into_iter().flatten().collect();
    let mut worst: Option<(f64, usize, Ordering, usize)> = None;
    let mut violations = 0;
    for (r_idx, r) in records.iter().enumerate() {
        for (ordering, h) in [(Ordering::Forward, &r.forward), (Ordering::Reverse, &r.reverse)] {
            for (k, m) in midpoint_margins(h).into_iter().enumerate() {
                if m > tol {
                    violations += 1;
                }
                if worst.is_none_or(|w| m > w.0) {
                    worst = Some((m, r_idx, ordering, k + 1));
                }
            }
        }
    }
    let worst_margin = worst.map_or(f64::NEG_INFINITY, |w| w.0);
    let witness = worst
        .filter(|w| w.0 > tol)
        .map(|(margin, r_idx, ordering, index)| MidpointWitness { pair: records[r_idx].clone(), ordering, index, margin });
    Ok(ConvexityReport {
        pairs,
        grid,
        tol,
        seed,
        evaluated: records.len(),
        skipped,
        worst_margin,
        violations,
        passed: violations == 0,
        witness,
        disclaimer: DISCLAIMER.into(),
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn normed_space_profiles_are_convex() {
        let m = fixtures::minkowski_quartic(1.0);
        let r = busemann_convexity_sample(&m, None, 200, 5, 1e-9, 1).unwrap();
        assert!(r.passed && r.worst_margin <= 1e-9, "{}", r.worst_margin);
        assert_eq!(r.skipped, 0);
    }

    #[test]
    fn hyperbolic_profiles_are_convex() {
        let m = fixtures::poincare();
        for seed in 1..=3 {
            let r = busemann_convexity_sample(&m, None, 200, 3, 1e-7, seed).unwrap();
            assert!(r.passed, "seed {seed}: {}", r.worst_margin);
        }
    }

    #[test]
    fn sphere_violates() {
        let m = fixtures::sphere_chart();
        let r = busemann_convexity_sample(&m, None, 200, 3, 1e-7, 1).unwrap();
        assert!(!r.passed && r.worst_margin >= 1e-3, "{}", r.worst_margin);
        let w = r.witness.unwrap();
        assert_eq!(w.index, 1);
    }

    #[test]
    fn csv_has_two_rows_per_pair() {
        let m = fixtures::minkowski_quartic(1.0);
        let r = busemann_convexity_sample(&m, None, 4, 3, 1e-9, 2).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("pair,ordering,h0,h1,h2\n"));
        assert_eq!(csv.lines().count(), 9);
    }
}
