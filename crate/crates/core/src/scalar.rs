//! Numeric abstraction shared by the exact and the floating-point paths.
//!
//! Every formula in the crate is written once against [`Scalar`]. `f64` is the
//! fast path used for simulation; [`Rational`] gives exact results whenever the
//! inputs are decimal numbers.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Send
    + Sync
    + Signed
    + num_traits::Num
    + for<'a> std::ops::Add<&'a Self, Output = Self>
    + for<'a> std::ops::Sub<&'a Self, Output = Self>
    + for<'a> std::ops::Mul<&'a Self, Output = Self>
    + for<'a> std::ops::Div<&'a Self, Output = Self>
    + 'static
{
    /// Reads a finite float through its shortest decimal representation, so
    /// `0.99` becomes exactly 99/100 in the rational path.
    fn from_decimal(x: f64) -> Self;
    fn ratio(num: i64, den: i64) -> Self;
    fn from_rational(q: &Rational) -> Self;
    fn to_f64(&self) -> f64;
    /// Slack allowed when comparing quantities that should agree.
    fn tolerance() -> Self;
    fn is_exact() -> bool;

    fn int(n: i64) -> Self {
        Self::ratio(n, 1)
    }

    fn half() -> Self {
        Self::ratio(1, 2)
    }

    /// `self^n` for a nonnegative integer exponent.
    fn pow_n(&self, n: u32) -> Self {
        let mut acc = Self::one();
        let mut base = self.clone();
        let mut e = n;
        while e > 0 {
            if e & 1 == 1 {
                acc = acc * &base;
            }
            base = base.clone() * &base;
            e >>= 1;
        }
        acc
    }

    /// True when `self` and `other` agree within [`Scalar::tolerance`].
    fn approx_eq(&self, other: &Self) -> bool {
        (self.clone() - other).abs() <= Self::tolerance()
    }
}

impl Scalar for f64 {
    fn from_decimal(x: f64) -> Self {
        x
    }

    fn ratio(num: i64, den: i64) -> Self {
        num as f64 / den as f64
    }

    fn from_rational(q: &Rational) -> Self {
        ToPrimitive::to_f64(q).unwrap_or(f64::NAN)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn tolerance() -> Self {
        1e-12
    }

    fn is_exact() -> bool {
        false
    }
}

impl Scalar for Rational {
    fn from_decimal(x: f64) -> Self {
        parse_decimal(&format!("{x}")).unwrap_or_else(|| {
            Rational::from_float(x).expect("finite value required for exact arithmetic")
        })
    }

    fn ratio(num: i64, den: i64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_rational(q: &Rational) -> Self {
        q.clone()
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn tolerance() -> Self {
        Rational::zero()
    }

    fn is_exact() -> bool {
        true
    }
}

/// Parses plain decimal notation (`-12.3400`) into an exact rational.
pub fn parse_decimal(s: &str) -> Option<Rational> {
    let s = s.trim();
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part
        .chars()
        .chain(frac_part.chars())
        .all(|c| c.is_ascii_digit())
    {
        return None;
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = if digits.is_empty() {
        BigInt::zero()
    } else {
        digits.parse().ok()?
    };
    let den = num_traits::pow(BigInt::from(10), frac_part.len());
    let r = Rational::new(num, den);
    Some(if neg { -r } else { r })
}

pub fn min_of<S: Scalar>(a: S, b: S) -> S {
    if b < a {
        b
    } else {
        a
    }
}

pub fn max_of<S: Scalar>(a: S, b: S) -> S {
    if b > a {
        b
    } else {
        a
    }
}

/// Converts a float slice to the chosen scalar type.
pub fn lift<S: Scalar>(xs: &[f64]) -> Vec<S> {
    xs.iter().map(|&x| S::from_decimal(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_parsing_is_exact() {
        assert_eq!(Rational::from_decimal(0.99), Rational::ratio(99, 100));
        assert_eq!(Rational::from_decimal(-0.125), Rational::ratio(-1, 8));
        assert_eq!(Rational::from_decimal(3.0), Rational::int(3));
        assert_eq!(parse_decimal("1e-3"), None);
    }

    #[test]
    fn integer_powers() {
        assert_eq!(Rational::ratio(1, 2).pow_n(3), Rational::ratio(1, 8));
        assert_eq!(Scalar::pow_n(&2.0f64, 0), 1.0);
    }
}
