//! Exact arithmetic helpers: float-to-rational recovery and a small scalar
//! abstraction shared by the drift oracle and the theorem predicates.

use std::fmt::Debug;
use std::ops::{Add, Div, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::attachment::AttachmentFunction;

/// Relative tolerance for recovering a rational from a decimal-looking float.
pub const RATIONALIZE_TOL: f64 = 1e-14;
const MAX_DENOMINATOR: i64 = 1_000_000;

/// Simplest fraction within [`RATIONALIZE_TOL`] (relative) of `x`, found by
/// walking the continued-fraction convergents. `0.9` becomes `9/10`, `6.0/7.0`
/// becomes `6/7`. Returns `None` for non-finite input or when no convergent
/// with a denominator up to 10^6 is close enough, which is how irrational
/// inputs such as `sqrt(2)` are told apart from short fractions.
pub fn rationalize(x: f64) -> Option<BigRational> {
    if !x.is_finite() {
        return None;
    }
    if x == 0.0 {
        return Some(<BigRational as Zero>::zero());
    }
    let tol = RATIONALIZE_TOL * x.abs().max(1.0);
    let neg = x < 0.0;
    let target = x.abs();
    if target > 1e15 {
        return None;
    }
    // Convergents h/k via the standard recurrence, in i128 to avoid overflow.
    let (mut h0, mut h1): (i128, i128) = (0, 1);
    let (mut k0, mut k1): (i128, i128) = (1, 0);
    let mut rem = target;
    for _ in 0..64 {
        let a = rem.floor();
        let ai = a as i128;
        let h2 = ai * h1 + h0;
        let k2 = ai * k1 + k0;
        if k2 > MAX_DENOMINATOR as i128 {
            return None;
        }
        (h0, h1, k0, k1) = (h1, h2, k1, k2);
        let approx = h1 as f64 / k1 as f64;
        if (approx - target).abs() <= tol {
            let r = BigRational::new(BigInt::from(h1), BigInt::from(k1));
            return Some(if neg { -r } else { r });
        }
        let frac = rem - a;
        if frac <= 0.0 {
            return None;
        }
        rem = 1.0 / frac;
    }
    None
}

/// Numeric field used by drift enumeration and predicate evaluation.
pub trait Scalar:
    Clone
    + Debug
    + PartialOrd
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn zero() -> Self;
    fn one() -> Self;
    /// Lift a float input; `None` when the representation cannot hold it exactly.
    fn lift(x: f64) -> Option<Self>;
    fn from_count(n: usize) -> Self;
    fn attach(a: &AttachmentFunction, d: usize) -> Option<Self>;
    fn to_f64(&self) -> f64;
    fn is_exact() -> bool;
}

impl Scalar for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn lift(x: f64) -> Option<Self> {
        Some(x)
    }
    fn from_count(n: usize) -> Self {
        n as f64
    }
    fn attach(a: &AttachmentFunction, d: usize) -> Option<Self> {
        Some(a.eval(d))
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn is_exact() -> bool {
        false
    }
}

impl Scalar for BigRational {
    fn zero() -> Self {
        Zero::zero()
    }
    fn one() -> Self {
        One::one()
    }
    fn lift(x: f64) -> Option<Self> {
        rationalize(x)
    }
    fn from_count(n: usize) -> Self {
        BigRational::from_integer(n.into())
    }
    fn attach(a: &AttachmentFunction, d: usize) -> Option<Self> {
        a.eval_rational(d)
    }
    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }
    fn is_exact() -> bool {
        true
    }
}

pub(crate) fn max_of<S: Scalar>(a: S, b: S) -> S {
    if a >= b {
        a
    } else {
        b
    }
}

/// Sign of a value, with an indeterminate band for float evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sign {
    Negative,
    Zero,
    Positive,
    Indeterminate,
}

pub fn exact_sign(r: &BigRational) -> Sign {
    if r.is_zero() {
        Sign::Zero
    } else if r.is_positive() {
        Sign::Positive
    } else {
        Sign::Negative
    }
}

pub fn banded_sign(x: f64, band: f64) -> Sign {
    if !x.is_finite() || x.abs() <= band {
        Sign::Indeterminate
    } else if x > 0.0 {
        Sign::Positive
    } else {
        Sign::Negative
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> BigRational {
        BigRational::new(n.into(), d.into())
    }

    #[test]
    fn recovers_short_fractions() {
        assert_eq!(rationalize(0.9), Some(q(9, 10)));
        assert_eq!(rationalize(6.0 / 7.0), Some(q(6, 7)));
        assert_eq!(rationalize(0.25), Some(q(1, 4)));
        assert_eq!(rationalize(-1.5), Some(q(-3, 2)));
        assert_eq!(rationalize(3.0), Some(q(3, 1)));
        assert_eq!(rationalize(0.0), Some(q(0, 1)));
        assert_eq!(rationalize(0.1 + 0.2), Some(q(3, 10)));
        assert_eq!(rationalize(f64::NAN), None);
    }

    #[test]
    fn irrational_inputs_fail() {
        assert_eq!(rationalize(std::f64::consts::PI), None);
        assert_eq!(rationalize(2f64.sqrt()), None);
    }

    #[test]
    fn sign_band() {
        assert_eq!(banded_sign(1e-13, 1e-12), Sign::Indeterminate);
        assert_eq!(banded_sign(-1e-3, 1e-12), Sign::Negative);
        assert_eq!(exact_sign(&q(-1, 3)), Sign::Negative);
    }
}
