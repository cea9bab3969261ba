//! Double-double arithmetic (~106-bit significand), used by the gradient
//! oracle to evaluate losses far below f64 rounding noise.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    pub hi: f64,
    pub lo: f64,
}

const LN2: DoubleDouble = DoubleDouble {
    hi: std::f64::consts::LN_2,
    lo: 2.319_046_813_846_299_6e-17,
};

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

#[inline]
fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    (p, a.mul_add(b, -p))
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };
    pub const ONE: DoubleDouble = DoubleDouble { hi: 1.0, lo: 0.0 };

    pub fn new(x: f64) -> Self {
        DoubleDouble { hi: x, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn mul_pow2(self, k: i32) -> Self {
        let s = 2f64.powi(k);
        DoubleDouble {
            hi: self.hi * s,
            lo: self.lo * s,
        }
    }

    pub fn exp(self) -> Self {
        if self.hi > 709.0 {
            return DoubleDouble::new(f64::INFINITY);
        }
        if self.hi < -745.0 {
            return DoubleDouble::ZERO;
        }
        let k = (self.hi / LN2.hi).round();
        // |r| <= ln2/2, then scaled down by 2^10 for a short Taylor series
        let r = (self - LN2 * DoubleDouble::new(k)).mul_pow2(-10);
        let mut term = DoubleDouble::ONE;
        let mut sum = DoubleDouble::ONE;
        for n in 1..=14 {
            term = term * r / DoubleDouble::new(n as f64);
            sum = sum + term;
        }
        for _ in 0..10 {
            sum = sum * sum;
        }
        sum.mul_pow2(k as i32)
    }

    pub fn ln(self) -> Self {
        assert!(self.hi > 0.0, "ln of non-positive double-double");
        // Newton on exp(x) = a; each step doubles the correct bits
        let mut x = DoubleDouble::new(self.hi.ln());
        for _ in 0..2 {
            x = x + self * (-x).exp() - DoubleDouble::ONE;
        }
        x
    }

    pub fn tanh(self) -> Self {
        let e = (self + self).exp();
        DoubleDouble::ONE - DoubleDouble::new(2.0) / (e + DoubleDouble::ONE)
    }

    pub fn sigmoid(self) -> Self {
        DoubleDouble::ONE / (DoubleDouble::ONE + (-self).exp())
    }
}

impl Add for DoubleDouble {
    type Output = DoubleDouble;
    fn add(self, b: DoubleDouble) -> DoubleDouble {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        let (hi, lo) = quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }
}

impl Neg for DoubleDouble {
    type Output = DoubleDouble;
    fn neg(self) -> DoubleDouble {
        DoubleDouble {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Sub for DoubleDouble {
    type Output = DoubleDouble;
    fn sub(self, b: DoubleDouble) -> DoubleDouble {
        self + (-b)
    }
}

impl Mul for DoubleDouble {
    type Output = DoubleDouble;
    fn mul(self, b: DoubleDouble) -> DoubleDouble {
        let (p, e) = two_prod(self.hi, b.hi);
        let e = e + (self.hi * b.lo + self.lo * b.hi);
        let (hi, lo) = quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }
}

impl Div for DoubleDouble {
    type Output = DoubleDouble;
    fn div(self, b: DoubleDouble) -> DoubleDouble {
        let q1 = self.hi / b.hi;
        let r = self - b * DoubleDouble::new(q1);
        let q2 = r.hi / b.hi;
        let r = r - b * DoubleDouble::new(q2);
        let q3 = r.hi / b.hi;
        let (hi, lo) = quick_two_sum(q1, q2);
        DoubleDouble { hi, lo } + DoubleDouble::new(q3)
    }
}

/// The arithmetic the reference forward pass needs.
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn tanh(self) -> Self;
    fn sigmoid(self) -> Self;
    fn gt(self, other: Self) -> bool;
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn sigmoid(self) -> Self {
        crate::numerics::sigmoid(self)
    }
    fn gt(self, other: Self) -> bool {
        self > other
    }
}

impl Scalar for DoubleDouble {
    fn from_f64(x: f64) -> Self {
        DoubleDouble::new(x)
    }
    fn to_f64(self) -> f64 {
        DoubleDouble::to_f64(self)
    }
    fn exp(self) -> Self {
        DoubleDouble::exp(self)
    }
    fn ln(self) -> Self {
        DoubleDouble::ln(self)
    }
    fn tanh(self) -> Self {
        DoubleDouble::tanh(self)
    }
    fn sigmoid(self) -> Self {
        DoubleDouble::sigmoid(self)
    }
    fn gt(self, other: Self) -> bool {
        self.hi > other.hi || (self.hi == other.hi && self.lo > other.lo)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dd(x: f64) -> DoubleDouble {
        DoubleDouble::new(x)
    }

    #[test]
    fn third_times_three_is_one() {
        let third = dd(1.0) / dd(3.0);
        let back = third * dd(3.0) - dd(1.0);
        assert!(back.to_f64().abs() < 1e-31, "{back:?}");
    }

    #[test]
    fn exp_ln_inverse() {
        for x in [-20.0, -3.3, -0.7, -1e-9, 0.0, 1e-7, 0.5, 2.0, 11.25] {
            let y = dd(x).exp().ln() - dd(x);
            assert!(y.to_f64().abs() < 1e-28 * (1.0 + x.abs()), "x={x}: {y:?}");
        }
    }

    #[test]
    fn matches_f64_functions() {
        for x in [-4.0, -0.3, 0.0, 0.2, 1.7, 6.0] {
            assert!((dd(x).exp().to_f64() - x.exp()).abs() <= 2.0 * f64::EPSILON * x.exp());
            assert!((dd(x).tanh().to_f64() - x.tanh()).abs() <= 4.0 * f64::EPSILON);
            assert!((dd(x).sigmoid().to_f64() - crate::numerics::sigmoid(x)).abs() <= 4.0 * f64::EPSILON);
        }
        let e = dd(1.0).exp();
        // f64 E is below e by 1.4456468917292502e-16
        let diff = e - dd(std::f64::consts::E) - dd(1.445_646_891_729_250_2e-16);
        assert!(diff.to_f64().abs() < 1e-28, "{diff:?}");
    }

    #[test]
    fn resolves_below_f64_epsilon() {
        let a = dd(1.0) + dd(1e-20);
        assert_eq!(a.hi, 1.0);
        assert!(((a - dd(1.0)).to_f64() - 1e-20).abs() < 1e-35);
    }
}
