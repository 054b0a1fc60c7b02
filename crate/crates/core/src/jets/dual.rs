use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use super::Scalar;

/// First-order forward mode with `M` tangent directions carried at once.
///
/// Cheaper than `M` separate order-2 jets when only a Jacobian-vector
/// product is needed, e.g. for variational equations.
#[derive(Clone, Copy, PartialEq)]
pub struct Dual<const M: usize> {
    pub v: f64,
    pub d: [f64; M],
}

impl<const M: usize> fmt::Debug for Dual<M> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} + {:?}e", self.v, self.d)
    }
}

impl<const M: usize> Dual<M> {
    pub fn new(v: f64, d: [f64; M]) -> Self {
        Dual { v, d }
    }

    #[inline]
    fn chain(self, value: f64, slope: f64) -> Self {
        let mut d = self.d;
        for di in &mut d {
            *di *= slope;
        }
        Dual { v: value, d }
    }
}

impl<const M: usize> Add for Dual<M> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        self.v += rhs.v;
        for i in 0..M {
            self.d[i] += rhs.d[i];
        }
        self
    }
}

impl<const M: usize> Sub for Dual<M> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        self.v -= rhs.v;
        for i in 0..M {
            self.d[i] -= rhs.d[i];
        }
        self
    }
}

impl<const M: usize> Neg for Dual<M> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for di in &mut self.d {
            *di = -*di;
        }
        self
    }
}

impl<const M: usize> Mul for Dual<M> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut d = [0.0; M];
        for i in 0..M {
            d[i] = self.d[i] * rhs.v + self.v * rhs.d[i];
        }
        Dual { v: self.v * rhs.v, d }
    }
}

impl<const M: usize> Div for Dual<M> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let q = self.v / rhs.v;
        let inv = 1.0 / rhs.v;
        let mut d = [0.0; M];
        for i in 0..M {
            d[i] = (self.d[i] - q * rhs.d[i]) * inv;
        }
        Dual { v: q, d }
    }
}

impl<const M: usize> AddAssign for Dual<M> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<const M: usize> SubAssign for Dual<M> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<const M: usize> MulAssign for Dual<M> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<const M: usize> Scalar for Dual<M> {
    fn cst(value: f64) -> Self {
        Dual { v: value, d: [0.0; M] }
    }

    #[inline]
    fn value(&self) -> f64 {
        self.v
    }

    #[inline]
    fn scale(self, factor: f64) -> Self {
        self.chain(self.v * factor, factor)
    }

    fn sqrt_checked(self) -> Option<Self> {
        (self.v > 0.0).then(|| {
            let s = self.v.sqrt();
            self.chain(s, 0.5 / s)
        })
    }

    fn ln_checked(self) -> Option<Self> {
        (self.v > 0.0).then(|| self.chain(self.v.ln(), 1.0 / self.v))
    }

    fn powf_checked(self, exponent: f64) -> Option<Self> {
        (self.v > 0.0).then(|| {
            let p = self.v.powf(exponent);
            self.chain(p, exponent * p / self.v)
        })
    }

    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }

    fn sin_cos(self) -> (Self, Self) {
        let (s, c) = self.v.sin_cos();
        (self.chain(s, c), self.chain(c, -s))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jets::{Expr, Tape};

    #[test]
    fn gradient_of_polynomial() {
        // f = x^2 y + sin(x) at (1, 2)
        let e = Expr::x(0).pow(2.0) * Expr::x(1) + Expr::x(0).sin();
        let t = Tape::compile(&e, 2);
        let vars = [
            Dual::new(1.0, [1.0, 0.0]),
            Dual::new(2.0, [0.0, 1.0]),
            Dual::cst(0.0),
            Dual::cst(0.0),
        ];
        let f = t.eval(&vars).unwrap();
        assert!((f.v - (2.0 + 1f64.sin())).abs() < 1e-15);
        assert!((f.d[0] - (4.0 + 1f64.cos())).abs() < 1e-15);
        assert!((f.d[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quotient_and_roots() {
        let x = Dual::new(4.0, [1.0]);
        assert_eq!(x.sqrt_checked().unwrap().d[0], 0.25);
        assert_eq!((Dual::cst(1.0) / x).d[0], -1.0 / 16.0);
        assert!((x.powf_checked(1.5).unwrap().d[0] - 3.0).abs() < 1e-15);
        assert!(Dual::<1>::cst(0.0).sqrt_checked().is_none());
    }
}
