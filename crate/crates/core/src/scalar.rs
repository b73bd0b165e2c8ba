//! Scalar abstraction and forward-mode dual numbers.
//!
//! Metric providers are written once against [`Scalar`] and evaluated either on
//! plain `f64` or on nested [`Dual4`] values, which yields exact first, second
//! and third partial derivatives without finite differences.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + Send
    + Sync
    + 'static
{
    fn from_f64(x: f64) -> Self;
    /// Real part with all infinitesimal parts dropped.
    fn re(&self) -> f64;
    fn exp(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn sqrt(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }

    fn one() -> Self {
        Self::from_f64(1.0)
    }

    fn powi(self, n: i32) -> Self {
        if n < 0 {
            return Self::one() / self.powi(-n);
        }
        let mut acc = Self::one();
        for _ in 0..n {
            acc = acc * self;
        }
        acc
    }

    fn scale(self, c: f64) -> Self {
        self * Self::from_f64(c)
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn re(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn scale(self, c: f64) -> Self {
        self * c
    }
}

/// Value plus gradient with respect to four seeded directions.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Dual4<S> {
    pub v: S,
    pub d: [S; 4],
}

impl<S: Scalar> Dual4<S> {
    pub fn constant(v: S) -> Self {
        Dual4 { v, d: [S::zero(); 4] }
    }

    /// The `i`-th coordinate variable with value `v`.
    pub fn variable(v: S, i: usize) -> Self {
        let mut d = [S::zero(); 4];
        d[i] = S::one();
        Dual4 { v, d }
    }

    fn chain(self, f: S, df: S) -> Self {
        Dual4 {
            v: f,
            d: [self.d[0] * df, self.d[1] * df, self.d[2] * df, self.d[3] * df],
        }
    }
}

/// Seeds a point so that every coordinate carries its own derivative slot.
pub fn seed<S: Scalar>(x: [S; 4]) -> [Dual4<S>; 4] {
    [
        Dual4::variable(x[0], 0),
        Dual4::variable(x[1], 1),
        Dual4::variable(x[2], 2),
        Dual4::variable(x[3], 3),
    ]
}

impl<S: Scalar> Add for Dual4<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual4 {
            v: self.v + o.v,
            d: [
                self.d[0] + o.d[0],
                self.d[1] + o.d[1],
                self.d[2] + o.d[2],
                self.d[3] + o.d[3],
            ],
        }
    }
}

impl<S: Scalar> AddAssign for Dual4<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> Sub for Dual4<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual4 {
            v: self.v - o.v,
            d: [
                self.d[0] - o.d[0],
                self.d[1] - o.d[1],
                self.d[2] - o.d[2],
                self.d[3] - o.d[3],
            ],
        }
    }
}

impl<S: Scalar> Mul for Dual4<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual4 {
            v: self.v * o.v,
            d: [
                self.d[0] * o.v + self.v * o.d[0],
                self.d[1] * o.v + self.v * o.d[1],
                self.d[2] * o.v + self.v * o.d[2],
                self.d[3] * o.v + self.v * o.d[3],
            ],
        }
    }
}

impl<S: Scalar> Div for Dual4<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = S::one() / o.v;
        let q = self.v * inv;
        Dual4 {
            v: q,
            d: [
                (self.d[0] - q * o.d[0]) * inv,
                (self.d[1] - q * o.d[1]) * inv,
                (self.d[2] - q * o.d[2]) * inv,
                (self.d[3] - q * o.d[3]) * inv,
            ],
        }
    }
}

impl<S: Scalar> Neg for Dual4<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual4 {
            v: -self.v,
            d: [-self.d[0], -self.d[1], -self.d[2], -self.d[3]],
        }
    }
}

impl<S: Scalar> Scalar for Dual4<S> {
    fn from_f64(x: f64) -> Self {
        Dual4::constant(S::from_f64(x))
    }
    fn re(&self) -> f64 {
        self.v.re()
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e)
    }
    fn sin(self) -> Self {
        self.chain(self.v.sin(), self.v.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.v.cos(), -self.v.sin())
    }
    fn sqrt(self) -> Self {
        let r = self.v.sqrt();
        self.chain(r, S::from_f64(0.5) / r)
    }
    fn scale(self, c: f64) -> Self {
        Dual4 {
            v: self.v.scale(c),
            d: [
                self.d[0].scale(c),
                self.d[1].scale(c),
                self.d[2].scale(c),
                self.d[3].scale(c),
            ],
        }
    }
}

pub fn lift<S: Scalar>(x: [f64; 4]) -> [S; 4] {
    [
        S::from_f64(x[0]),
        S::from_f64(x[1]),
        S::from_f64(x[2]),
        S::from_f64(x[3]),
    ]
}

pub fn values<S: Scalar>(x: &[S; 4]) -> [f64; 4] {
    [x[0].re(), x[1].re(), x[2].re(), x[3].re()]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn f<S: Scalar>(x: [S; 4]) -> S {
        (x[0] * x[1]).sin() + x[2].exp() * x[3].sqrt() / (x[0] + S::from_f64(3.0))
    }

    #[test]
    fn gradient_matches_central_differences() {
        let x = [0.3, -0.7, 0.2, 1.4];
        let g = f(seed(x));
        let h = 1e-6;
        for i in 0..4 {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (f(xp) - f(xm)) / (2.0 * h);
            assert!((g.d[i] - fd).abs() < 1e-8, "slot {i}: {} vs {fd}", g.d[i]);
        }
        assert!((g.v - f(x)).abs() < 1e-15);
    }

    #[test]
    fn nested_duals_give_symmetric_hessian() {
        let x = [0.3, -0.7, 0.2, 1.4];
        let inner: [Dual4<f64>; 4] = seed(x);
        let y = f(seed(inner));
        for i in 0..4 {
            for j in 0..4 {
                assert!((y.d[i].d[j] - y.d[j].d[i]).abs() < 1e-12);
            }
        }
        let h = 1e-4;
        let mut xp = x;
        xp[0] += h;
        let mut xm = x;
        xm[0] -= h;
        let fd = (f(seed(xp)).d[1] - f(seed(xm)).d[1]) / (2.0 * h);
        assert!((y.d[0].d[1] - fd).abs() < 1e-6);
    }

    #[test]
    fn powi_handles_negative_exponents() {
        let x = Dual4::variable(2.0, 0);
        let y = x.powi(-2);
        assert!((y.v - 0.25).abs() < 1e-15);
        assert!((y.d[0] + 0.25).abs() < 1e-15);
    }
}
