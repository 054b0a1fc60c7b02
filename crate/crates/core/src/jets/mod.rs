//! Forward-mode truncated Taylor arithmetic.
//!
//! Directional jets `f(base + t u)` give `(1/k!) d^k/dt^k` along one
//! direction; mixed partials come from polarization over sums of directions,
//! so storage stays linear in the number of variables.

mod dual;
mod expr;
mod scalar;

pub use dual::Dual;
pub use expr::{Expr, Tape, Var};
pub use scalar::{Jet, Scalar};

use crate::error::{Error, Result};

/// Highest derivative order supported by [`jet_eval`] and [`partials`].
pub const MAX_ORDER: usize = 5;

/// Taylor coefficients `(c_0, ..., c_order)` of `t -> f(base + t u)`.
pub fn directional<S: Scalar, const K: usize>(
    tape: &Tape,
    base: &[S],
    direction: &[S],
) -> Result<Jet<S, K>> {
    let vars: Vec<Jet<S, K>> = base
        .iter()
        .zip(direction)
        .map(|(&b, &d)| Jet::variable(b, d))
        .collect();
    Ok(tape.eval(&vars)?)
}

fn coefficients<const K: usize>(tape: &Tape, base: &[f64], dir: &[f64]) -> Result<Vec<f64>> {
    Ok(directional::<f64, K>(tape, base, dir)?.c.to_vec())
}

/// One coefficient vector per direction; entry `k` is `(1/k!) d^k/dt^k f(base + t u)`.
pub fn jet_eval(
    tape: &Tape,
    base: &[f64],
    directions: &[Vec<f64>],
    order: usize,
) -> Result<Vec<Vec<f64>>> {
    if order == 0 || order > MAX_ORDER {
        return Err(Error::Input(format!("jet order must be in 1..={MAX_ORDER}, got {order}")));
    }
    if base.len() != tape.arity() {
        return Err(Error::Input(format!(
            "base point has {} coordinates, expression expects {}",
            base.len(),
            tape.arity()
        )));
    }
    directions
        .iter()
        .map(|u| {
            if u.len() != base.len() {
                return Err(Error::Input("direction length differs from base point".into()));
            }
            match order {
                1 => coefficients::<2>(tape, base, u),
                2 => coefficients::<3>(tape, base, u),
                3 => coefficients::<4>(tape, base, u),
                4 => coefficients::<5>(tape, base, u),
                _ => coefficients::<6>(tape, base, u),
            }
        })
        .collect()
}

/// The symmetric multilinear derivative `D^k f [u_1, ..., u_k]` by polarization.
///
/// `coefficient(w)` must return the k-th Taylor coefficient of `t -> f(base + t w)`
/// with `k = dirs.len()`. Uses the identity
/// `D^k f[u_1..u_k] = 2^(1-k) sum_{eps} eps_2..eps_k c_k(u_1 + sum eps_i u_i)`.
pub fn polarize<S: Scalar, E>(
    dirs: &[&[S]],
    mut coefficient: impl FnMut(&[S]) -> Result<S, E>,
) -> Result<S, E> {
    let k = dirs.len();
    assert!(k >= 1, "polarization needs at least one direction");
    let m = dirs[0].len();
    let mut acc = S::zero();
    let mut w = vec![S::zero(); m];
    for mask in 0..(1usize << (k - 1)) {
        let mut sign = 1.0;
        w.copy_from_slice(dirs[0]);
        for (i, d) in dirs.iter().enumerate().skip(1) {
            let negative = mask & (1 << (i - 1)) != 0;
            if negative {
                sign = -sign;
            }
            for (wj, &dj) in w.iter_mut().zip(d.iter()) {
                if negative {
                    *wj -= dj;
                } else {
                    *wj += dj;
                }
            }
        }
        let c = coefficient(&w)?;
        acc += c.scale(sign);
    }
    Ok(acc.scale(1.0 / (1u64 << (k - 1)) as f64))
}

/// Mixed partial derivative `d^|alpha| f / dz^alpha` at `base`, `|alpha| <= 5`.
pub fn partials(tape: &Tape, base: &[f64], multi_index: &[usize]) -> Result<f64> {
    let m = tape.arity();
    if multi_index.len() != m || base.len() != m {
        return Err(Error::Input(format!("multi-index and base must have length {m}")));
    }
    let order: usize = multi_index.iter().sum();
    if order > MAX_ORDER {
        return Err(Error::Input(format!("total order {order} exceeds {MAX_ORDER}")));
    }
    if order == 0 {
        return Ok(tape.eval(base)?);
    }
    let units: Vec<Vec<f64>> = multi_index
        .iter()
        .enumerate()
        .flat_map(|(i, &count)| {
            let mut e = vec![0.0; m];
            e[i] = 1.0;
            std::iter::repeat_n(e, count)
        })
        .collect();
    let dirs: Vec<&[f64]> = units.iter().map(Vec::as_slice).collect();
    let single_axis = multi_index.iter().filter(|&&c| c > 0).count() == 1;
    let coefficient = |w: &[f64]| -> Result<f64> {
        let c = match order {
            1 => coefficients::<2>(tape, base, w)?,
            2 => coefficients::<3>(tape, base, w)?,
            3 => coefficients::<4>(tape, base, w)?,
            4 => coefficients::<5>(tape, base, w)?,
            _ => coefficients::<6>(tape, base, w)?,
        };
        Ok(c[order])
    };
    if single_axis {
        let factorial: f64 = (1..=order).map(|i| i as f64).product();
        return Ok(factorial * coefficient(dirs[0])?);
    }
    polarize(&dirs, coefficient)
}
