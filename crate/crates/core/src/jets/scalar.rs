use std::fmt;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Number type the expression engine and the spray computations are generic
/// over. Implemented by `f64` and by truncated Taylor jets of any `Scalar`,
/// so jets nest (`Jet<Jet<f64, 3>, 2>` differentiates a Hessian once more).
///
/// The `*_checked` functions return `None` where the operation has no
/// derivative (or no real value) at the base point.
pub trait Scalar:
    Copy
    + fmt::Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + Send
    + Sync
{
    fn cst(value: f64) -> Self;

    /// The innermost constant term.
    fn value(&self) -> f64;

    fn scale(self, factor: f64) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }

    fn one() -> Self {
        Self::cst(1.0)
    }

    fn sqrt_checked(self) -> Option<Self>;
    fn ln_checked(self) -> Option<Self>;
    fn powf_checked(self, exponent: f64) -> Option<Self>;
    fn exp(self) -> Self;
    fn sin_cos(self) -> (Self, Self);

    fn recip_checked(self) -> Option<Self> {
        if self.value() == 0.0 {
            None
        } else {
            Some(Self::one() / self)
        }
    }

    fn powi(self, exponent: i32) -> Self {
        let mut base = if exponent < 0 { Self::one() / self } else { self };
        let mut e = exponent.unsigned_abs();
        let mut acc = Self::one();
        while e > 0 {
            if e & 1 == 1 {
                acc *= base;
            }
            e >>= 1;
            if e > 0 {
                base = base * base;
            }
        }
        acc
    }
}

impl Scalar for f64 {
    #[inline]
    fn cst(value: f64) -> Self {
        value
    }

    #[inline]
    fn value(&self) -> f64 {
        *self
    }

    #[inline]
    fn scale(self, factor: f64) -> Self {
        self * factor
    }

    fn sqrt_checked(self) -> Option<Self> {
        (self >= 0.0).then(|| self.sqrt())
    }

    fn ln_checked(self) -> Option<Self> {
        (self > 0.0).then(|| self.ln())
    }

    fn powf_checked(self, exponent: f64) -> Option<Self> {
        (self > 0.0 || (self == 0.0 && exponent > 0.0)).then(|| self.powf(exponent))
    }

    fn exp(self) -> Self {
        f64::exp(self)
    }

    fn sin_cos(self) -> (Self, Self) {
        f64::sin_cos(self)
    }
}

/// Truncated univariate Taylor series `c[0] + c[1] t + ... + c[K-1] t^(K-1)`.
///
/// All arithmetic is exact truncated-polynomial arithmetic: coefficients of
/// order `>= K` are dropped, never mixed back in.
#[derive(Clone, Copy, PartialEq)]
pub struct Jet<S: Scalar, const K: usize> {
    pub c: [S; K],
}

impl<S: Scalar, const K: usize> fmt::Debug for Jet<S, K> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.c.iter()).finish()
    }
}

impl<S: Scalar, const K: usize> Jet<S, K> {
    pub fn constant(value: S) -> Self {
        let mut c = [S::zero(); K];
        c[0] = value;
        Jet { c }
    }

    /// `base + t * direction`.
    pub fn variable(base: S, direction: S) -> Self {
        let mut c = [S::zero(); K];
        c[0] = base;
        if K > 1 {
            c[1] = direction;
        }
        Jet { c }
    }

    /// k-th derivative at t = 0, i.e. `k! * c[k]`.
    pub fn derivative(&self, k: usize) -> S {
        let mut factorial = 1.0;
        for i in 2..=k {
            factorial *= i as f64;
        }
        self.c[k].scale(factorial)
    }
}

impl<S: Scalar, const K: usize> Add for Jet<S, K> {
    type Output = Self;
    #[inline]
    fn add(mut self, rhs: Self) -> Self {
        for k in 0..K {
            self.c[k] += rhs.c[k];
        }
        self
    }
}

impl<S: Scalar, const K: usize> Sub for Jet<S, K> {
    type Output = Self;
    #[inline]
    fn sub(mut self, rhs: Self) -> Self {
        for k in 0..K {
            self.c[k] -= rhs.c[k];
        }
        self
    }
}

impl<S: Scalar, const K: usize> Neg for Jet<S, K> {
    type Output = Self;
    #[inline]
    fn neg(mut self) -> Self {
        for k in 0..K {
            self.c[k] = -self.c[k];
        }
        self
    }
}

impl<S: Scalar, const K: usize> Mul for Jet<S, K> {
    type Output = Self;
    #[inline]
    fn mul(self, rhs: Self) -> Self {
        let mut c = [S::zero(); K];
        for k in 0..K {
            let mut acc = self.c[0] * rhs.c[k];
            for i in 1..=k {
                acc += self.c[i] * rhs.c[k - i];
            }
            c[k] = acc;
        }
        Jet { c }
    }
}

impl<S: Scalar, const K: usize> Div for Jet<S, K> {
    type Output = Self;
    #[inline]
    fn div(self, rhs: Self) -> Self {
        let inv = S::one() / rhs.c[0];
        let mut q = [S::zero(); K];
        for k in 0..K {
            let mut acc = self.c[k];
            for i in 1..=k {
                acc -= rhs.c[i] * q[k - i];
            }
            q[k] = acc * inv;
        }
        Jet { c: q }
    }
}

impl<S: Scalar, const K: usize> AddAssign for Jet<S, K> {
    #[inline]
    fn add_assign(&mut self, rhs: Self) {
        *self = *self + rhs;
    }
}

impl<S: Scalar, const K: usize> SubAssign for Jet<S, K> {
    #[inline]
    fn sub_assign(&mut self, rhs: Self) {
        *self = *self - rhs;
    }
}

impl<S: Scalar, const K: usize> MulAssign for Jet<S, K> {
    #[inline]
    fn mul_assign(&mut self, rhs: Self) {
        *self = *self * rhs;
    }
}

impl<S: Scalar, const K: usize> Scalar for Jet<S, K> {
    fn cst(value: f64) -> Self {
        Jet::constant(S::cst(value))
    }

    #[inline]
    fn value(&self) -> f64 {
        self.c[0].value()
    }

    #[inline]
    fn scale(mut self, factor: f64) -> Self {
        for k in 0..K {
            self.c[k] = self.c[k].scale(factor);
        }
        self
    }

    fn sqrt_checked(self) -> Option<Self> {
        if self.value() <= 0.0 {
            return None;
        }
        let mut s = [S::zero(); K];
        s[0] = self.c[0].sqrt_checked()?;
        let inv = S::one() / s[0].scale(2.0);
        for k in 1..K {
            let mut acc = self.c[k];
            for i in 1..k {
                acc -= s[i] * s[k - i];
            }
            s[k] = acc * inv;
        }
        Some(Jet { c: s })
    }

    fn ln_checked(self) -> Option<Self> {
        if self.value() <= 0.0 {
            return None;
        }
        let mut l = [S::zero(); K];
        l[0] = self.c[0].ln_checked()?;
        let inv = S::one() / self.c[0];
        for k in 1..K {
            let mut acc = S::zero();
            for i in 1..k {
                acc += (l[i] * self.c[k - i]).scale(i as f64);
            }
            l[k] = (self.c[k] - acc.scale(1.0 / k as f64)) * inv;
        }
        Some(Jet { c: l })
    }

    fn powf_checked(self, exponent: f64) -> Option<Self> {
        if self.value() <= 0.0 {
            return None;
        }
        let mut y = [S::zero(); K];
        y[0] = self.c[0].powf_checked(exponent)?;
        let inv = S::one() / self.c[0];
        for k in 1..K {
            let mut acc = S::zero();
            for j in 1..=k {
                let w = (exponent + 1.0) * j as f64 - k as f64;
                acc += (self.c[j] * y[k - j]).scale(w);
            }
            y[k] = (acc * inv).scale(1.0 / k as f64);
        }
        Some(Jet { c: y })
    }

    fn exp(self) -> Self {
        let mut e = [S::zero(); K];
        e[0] = self.c[0].exp();
        for k in 1..K {
            let mut acc = S::zero();
            for i in 1..=k {
                acc += (self.c[i] * e[k - i]).scale(i as f64);
            }
            e[k] = acc.scale(1.0 / k as f64);
        }
        Jet { c: e }
    }

    fn sin_cos(self) -> (Self, Self) {
        let mut s = [S::zero(); K];
        let mut c = [S::zero(); K];
        let (s0, c0) = self.c[0].sin_cos();
        s[0] = s0;
        c[0] = c0;
        for k in 1..K {
            let mut acc_s = S::zero();
            let mut acc_c = S::zero();
            for j in 1..=k {
                acc_s += (self.c[j] * c[k - j]).scale(j as f64);
                acc_c += (self.c[j] * s[k - j]).scale(j as f64);
            }
            s[k] = acc_s.scale(1.0 / k as f64);
            c[k] = acc_c.scale(-1.0 / k as f64);
        }
        (Jet { c: s }, Jet { c })
    }
}
