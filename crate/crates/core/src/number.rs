//! Scalar arithmetic: exact rationals with automatic fall-back to `f64`.
//!
//! Every constant that enters as a rational stays rational through `+ - * /`
//! and integer powers; as soon as a float or a transcendental function shows
//! up the computation continues in `f64`. This is what lets all-rational
//! fixtures produce exactly-zero residuals while arbitrary inputs still
//! evaluate.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Debug, PartialEq)]
pub enum Number {
    Rat(BigRational),
    F64(f64),
}

impl Number {
    pub fn zero() -> Self {
        Number::Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Number::from_i64(1)
    }

    pub fn from_i64(n: i64) -> Self {
        Number::Rat(BigRational::from_integer(BigInt::from(n)))
    }

    pub fn ratio(num: i64, den: i64) -> Self {
        Number::Rat(BigRational::new(BigInt::from(num), BigInt::from(den)))
    }

    /// Exact conversion: every finite f64 is a dyadic rational.
    pub fn rat_from_f64(v: f64) -> Self {
        match BigRational::from_float(v) {
            Some(r) => Number::Rat(r),
            None => Number::F64(v),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Number::Rat(r) => r.is_zero(),
            Number::F64(v) => *v == 0.0,
        }
    }

    pub fn is_one(&self) -> bool {
        match self {
            Number::Rat(r) => r == &BigRational::from_integer(BigInt::from(1)),
            Number::F64(v) => *v == 1.0,
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self, Number::Rat(_))
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Number::Rat(r) => r.to_f64().unwrap_or(f64::NAN),
            Number::F64(v) => *v,
        }
    }

    pub fn abs_f64(&self) -> f64 {
        self.to_f64().abs()
    }

    /// Exact integer value if the number is an integer rational.
    pub fn as_integer(&self) -> Option<i64> {
        match self {
            Number::Rat(r) if r.is_integer() => r.numer().to_i64(),
            _ => None,
        }
    }

    /// Division. Callers guard the divisor against zero / near-zero first.
    pub fn div(&self, rhs: &Number) -> Number {
        match (self, rhs) {
            (Number::Rat(a), Number::Rat(b)) => {
                assert!(!b.is_zero(), "exact division by zero (unguarded)");
                Number::Rat(a / b)
            }
            _ => Number::F64(self.to_f64() / rhs.to_f64()),
        }
    }

    pub fn powi(&self, n: i64) -> Number {
        if n == 0 {
            return Number::one();
        }
        match self {
            Number::Rat(r) => {
                if n < 0 {
                    assert!(!r.is_zero(), "exact 0^negative (unguarded)");
                }
                Number::Rat(r.pow(n as i32))
            }
            Number::F64(v) => Number::F64(v.powi(n as i32)),
        }
    }

    pub fn signum_f64(&self) -> f64 {
        match self {
            Number::Rat(r) => {
                if r.is_zero() {
                    0.0
                } else if r.is_positive() {
                    1.0
                } else {
                    -1.0
                }
            }
            Number::F64(v) => {
                if *v == 0.0 {
                    0.0
                } else {
                    v.signum()
                }
            }
        }
    }
}

impl Add for Number {
    type Output = Number;
    fn add(self, rhs: Number) -> Number {
        match (self, rhs) {
            (Number::Rat(a), Number::Rat(b)) => Number::Rat(a + b),
            (a, b) => Number::F64(a.to_f64() + b.to_f64()),
        }
    }
}

impl Sub for Number {
    type Output = Number;
    fn sub(self, rhs: Number) -> Number {
        match (self, rhs) {
            (Number::Rat(a), Number::Rat(b)) => Number::Rat(a - b),
            (a, b) => Number::F64(a.to_f64() - b.to_f64()),
        }
    }
}

impl Mul for Number {
    type Output = Number;
    fn mul(self, rhs: Number) -> Number {
        match (self, rhs) {
            (Number::Rat(a), Number::Rat(b)) => Number::Rat(a * b),
            (a, b) => Number::F64(a.to_f64() * b.to_f64()),
        }
    }
}

impl Neg for Number {
    type Output = Number;
    fn neg(self) -> Number {
        match self {
            Number::Rat(a) => Number::Rat(-a),
            Number::F64(v) => Number::F64(-v),
        }
    }
}

impl fmt::Display for Number {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Number::Rat(r) => {
                if r.is_integer() {
                    write!(f, "{}", r.numer())
                } else {
                    write!(f, "{}/{}", r.numer(), r.denom())
                }
            }
            Number::F64(v) => write!(f, "{:?}", v),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_stays_exact() {
        let a = Number::ratio(1, 3);
        let b = Number::ratio(2, 3);
        let s = a + b;
        assert!(s.is_exact());
        assert!(s.is_one());
    }

    #[test]
    fn float_contaminates() {
        let a = Number::ratio(1, 3);
        let b = Number::F64(0.5);
        assert!(!(a + b).is_exact());
    }

    #[test]
    fn dyadic_roundtrip() {
        let n = Number::rat_from_f64(0.8125);
        assert!(n.is_exact());
        assert_eq!(n.to_f64(), 0.8125);
    }
}
