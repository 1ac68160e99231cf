//! Arithmetic backends for the LP core: `f64` with tolerances, and exact rationals.

use std::cmp::Ordering;
use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub trait Scalar: Clone + Debug + Send + Sync + 'static {
    const EXACT: bool;
    fn zero() -> Self;
    fn one() -> Self;
    /// Exact conversion for rationals.
    fn from_f64(v: f64) -> Self;
    fn to_f64(&self) -> f64;
    fn add(&self, o: &Self) -> Self;
    fn sub(&self, o: &Self) -> Self;
    fn mul(&self, o: &Self) -> Self;
    fn div(&self, o: &Self) -> Self;
    fn neg(&self) -> Self;
    fn abs(&self) -> Self;
    /// Sign with a dead zone of width `eps`; exact types ignore `eps`.
    fn sign(&self, eps: f64) -> i8;
    fn is_exact_zero(&self) -> bool;
    fn cmp_val(&self, o: &Self) -> Ordering;
    fn to_rational(&self) -> Rational;
}

impl Scalar for f64 {
    const EXACT: bool = false;
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn sign(&self, eps: f64) -> i8 {
        if *self > eps {
            1
        } else if *self < -eps {
            -1
        } else {
            0
        }
    }
    fn is_exact_zero(&self) -> bool {
        *self == 0.0
    }
    fn cmp_val(&self, o: &Self) -> Ordering {
        self.total_cmp(o)
    }
    fn to_rational(&self) -> Rational {
        <Rational as FromPrimitive>::from_f64(*self).expect("finite value")
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;
    fn zero() -> Self {
        <Rational as Zero>::zero()
    }
    fn one() -> Self {
        Rational::from_integer(BigInt::from(1))
    }
    fn from_f64(v: f64) -> Self {
        <Rational as FromPrimitive>::from_f64(v).expect("finite value")
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn add(&self, o: &Self) -> Self {
        self + o
    }
    fn sub(&self, o: &Self) -> Self {
        self - o
    }
    fn mul(&self, o: &Self) -> Self {
        self * o
    }
    fn div(&self, o: &Self) -> Self {
        self / o
    }
    fn neg(&self) -> Self {
        -self
    }
    fn abs(&self) -> Self {
        Signed::abs(self)
    }
    fn sign(&self, _eps: f64) -> i8 {
        if self.is_positive() {
            1
        } else if self.is_negative() {
            -1
        } else {
            0
        }
    }
    fn is_exact_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn cmp_val(&self, o: &Self) -> Ordering {
        self.cmp(o)
    }
    fn to_rational(&self) -> Rational {
        self.clone()
    }
}

pub fn convert_vec<T: Scalar>(v: &[f64]) -> Vec<T> {
    v.iter().map(|x| T::from_f64(*x)).collect()
}

pub fn to_f64_vec<T: Scalar>(v: &[T]) -> Vec<f64> {
    v.iter().map(|x| x.to_f64()).collect()
}

pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    let mut s = T::zero();
    for (x, y) in a.iter().zip(b) {
        if x.is_exact_zero() || y.is_exact_zero() {
            continue;
        }
        s = s.add(&x.mul(y));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_conversion_is_exact() {
        let r = <Rational as Scalar>::from_f64(0.1);
        assert_ne!(r, Rational::new(BigInt::from(1), BigInt::from(10)));
        assert_eq!(Scalar::to_f64(&r), 0.1);
        assert_eq!(r.sign(1.0), 1);
        assert_eq!(1e-12f64.sign(1e-9), 0);
    }
}
