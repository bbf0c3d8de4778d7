//! Scalar backends.
//!
//! Every computation in this crate is generic over [`Scalar`]. Two base
//! backends exist: exact rationals ([`Rational`]) and `f64`. Truncated Taylor
//! series ([`crate::series::Series`]) implement the same trait, so any
//! function written against `Scalar` can be differentiated by evaluating it
//! on series arguments.

use std::fmt::Debug;
use std::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{FromPrimitive, One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Rational = BigRational;

/// Errors raised by scalar arithmetic outside its domain.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MathError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("logarithm of a non-positive value")]
    LogDomain,
    #[error("square root of a negative value")]
    SqrtDomain,
    #[error("square root is not differentiable at zero")]
    SqrtAtZero,
    #[error("`{0}` is not available in exact rational arithmetic")]
    NotExact(&'static str),
    #[error("transcendental function applied to an untruncated series")]
    UnboundedSeries,
    #[error("value {0} cannot be represented")]
    NotRepresentable(String),
}

/// Which scalar backend a scenario runs on. Mixing is an error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backend {
    Exact,
    Float,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::Exact => "exact",
            Backend::Float => "float",
        }
    }
}

pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Neg<Output = Self>
    + 'static
{
    /// True for exact rational arithmetic (and series over it).
    const EXACT: bool;

    fn zero() -> Self;
    fn one() -> Self;
    fn from_rational(r: &Rational) -> Self;
    /// Exact conversion for rationals (binary expansion), identity for floats.
    fn from_f64(v: f64) -> Self;
    fn try_div(&self, other: &Self) -> Result<Self, MathError>;
    fn sin(&self) -> Result<Self, MathError>;
    fn cos(&self) -> Result<Self, MathError>;
    fn exp(&self) -> Result<Self, MathError>;
    fn ln(&self) -> Result<Self, MathError>;
    fn sqrt(&self) -> Result<Self, MathError>;
    fn is_zero(&self) -> bool;
    /// Numeric value; for series this is the constant term.
    fn to_f64(&self) -> f64;

    fn from_i64(v: i64) -> Self {
        Self::from_rational(&Rational::from_integer(BigInt::from(v)))
    }

    /// Magnitude used for pivot selection.
    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }

    fn powi(&self, exp: u32) -> Self {
        let mut result = Self::one();
        let mut base = self.clone();
        let mut e = exp;
        while e > 0 {
            if e & 1 == 1 {
                result = result * base.clone();
            }
            e >>= 1;
            if e > 0 {
                base = base.clone() * base;
            }
        }
        result
    }

    fn scale_int(&self, k: i64) -> Self {
        self.clone() * Self::from_i64(k)
    }

    fn div_int(&self, k: i64) -> Self {
        self.try_div(&Self::from_i64(k))
            .expect("division by a nonzero integer")
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;

    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn from_rational(r: &Rational) -> Self {
        ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn from_i64(v: i64) -> Self {
        v as f64
    }
    fn try_div(&self, other: &Self) -> Result<Self, MathError> {
        if *other == 0.0 {
            Err(MathError::DivisionByZero)
        } else {
            Ok(self / other)
        }
    }
    fn sin(&self) -> Result<Self, MathError> {
        Ok(f64::sin(*self))
    }
    fn cos(&self) -> Result<Self, MathError> {
        Ok(f64::cos(*self))
    }
    fn exp(&self) -> Result<Self, MathError> {
        Ok(f64::exp(*self))
    }
    fn ln(&self) -> Result<Self, MathError> {
        if *self <= 0.0 {
            Err(MathError::LogDomain)
        } else {
            Ok(f64::ln(*self))
        }
    }
    fn sqrt(&self) -> Result<Self, MathError> {
        if *self < 0.0 {
            Err(MathError::SqrtDomain)
        } else {
            Ok(f64::sqrt(*self))
        }
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn from_rational(r: &Rational) -> Self {
        r.clone()
    }
    fn from_f64(v: f64) -> Self {
        <Rational as FromPrimitive>::from_f64(v).unwrap_or_else(Zero::zero)
    }
    fn try_div(&self, other: &Self) -> Result<Self, MathError> {
        if Zero::is_zero(other) {
            Err(MathError::DivisionByZero)
        } else {
            Ok(self / other)
        }
    }
    fn sin(&self) -> Result<Self, MathError> {
        Err(MathError::NotExact("sin"))
    }
    fn cos(&self) -> Result<Self, MathError> {
        Err(MathError::NotExact("cos"))
    }
    fn exp(&self) -> Result<Self, MathError> {
        Err(MathError::NotExact("exp"))
    }
    fn ln(&self) -> Result<Self, MathError> {
        Err(MathError::NotExact("log"))
    }
    fn sqrt(&self) -> Result<Self, MathError> {
        Err(MathError::NotExact("sqrt"))
    }
    fn is_zero(&self) -> bool {
        Zero::is_zero(self)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn magnitude(&self) -> f64 {
        Scalar::to_f64(&Signed::abs(self))
    }
}

/// `n!` as an exact integer.
pub fn factorial(n: usize) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * BigInt::from(k))
}

/// `n!` converted into the scalar type.
pub fn factorial_s<S: Scalar>(n: usize) -> S {
    S::from_rational(&Rational::from_integer(factorial(n)))
}

/// Parses `"3"`, `"-1/4"`, `"0.25"` or `"1e-3"` into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((p, q)) = text.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(Rational::new(p, q));
    }
    let (neg, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text.strip_prefix('+').unwrap_or(text)),
    };
    let (mantissa, exponent) = match body.find(['e', 'E']) {
        Some(pos) => (&body[..pos], body[pos + 1..].parse::<i32>().ok()?),
        None => (body, 0),
    };
    let (int_part, frac_part) = match mantissa.split_once('.') {
        Some((a, b)) => (a, b),
        None => (mantissa, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    Some(if neg { -value } else { value })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p.into(), d.into())
    }

    #[test]
    fn parses_rational_literals() {
        assert_eq!(parse_rational("3/4"), Some(q(3, 4)));
        assert_eq!(parse_rational("-1/4"), Some(q(-1, 4)));
        assert_eq!(parse_rational("0.25"), Some(q(1, 4)));
        assert_eq!(parse_rational("1e-3"), Some(q(1, 1000)));
        assert_eq!(parse_rational("2.5E1"), Some(q(25, 1)));
        assert_eq!(parse_rational(".5"), Some(q(1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
    }

    #[test]
    fn exact_backend_rejects_transcendentals() {
        assert_eq!(Scalar::sin(&q(1, 2)), Err(MathError::NotExact("sin")));
        assert_eq!(q(1, 2).try_div(&q(0, 1)), Err(MathError::DivisionByZero));
    }

    #[test]
    fn float_domain_errors() {
        assert_eq!(Scalar::ln(&-1.0f64), Err(MathError::LogDomain));
        assert_eq!(Scalar::sqrt(&-1.0f64), Err(MathError::SqrtDomain));
        assert_eq!(1.0f64.try_div(&0.0), Err(MathError::DivisionByZero));
    }

    #[test]
    fn powi_and_factorial() {
        assert_eq!(q(2, 3).powi(3), q(8, 27));
        assert_eq!(q(2, 3).powi(0), q(1, 1));
        assert_eq!(factorial(5), BigInt::from(120));
        assert_eq!(factorial_s::<f64>(4), 24.0);
    }
}
