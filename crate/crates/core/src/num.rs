//! Scalar backends shared by the series and guessing code.
//!
//! `Real` abstracts over `f64` and the MPFR-backed `Mp` so that kernels and
//! series are written once and evaluated in either precision.

use rug::float::Round;
use rug::ops::Pow;
use rug::Float;
use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use crate::special;

/// Bits per decimal digit.
pub const BITS_PER_DIGIT: f64 = std::f64::consts::LOG2_10;

pub fn digits_to_bits(digits: u32) -> u32 {
    (digits as f64 * BITS_PER_DIGIT).ceil() as u32
}

pub trait Real:
    Clone
    + fmt::Debug
    + PartialOrd
    + Send
    + Sync
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
{
    /// Converts `x` into the precision of `self`.
    fn lift(&self, x: f64) -> Self;
    fn lift_int(&self, n: i64) -> Self;
    fn to_f64(&self) -> f64;
    fn abs(&self) -> Self;
    fn exp(&self) -> Self;
    fn ln(&self) -> Self;
    fn sqrt(&self) -> Self;
    fn powi(&self, n: i32) -> Self;
    /// Exponential integral E1 for positive arguments.
    fn e1(&self) -> Self;
    fn is_zero(&self) -> bool;
    /// Relative rounding unit of this backend.
    fn unit_roundoff(&self) -> f64;
    /// Natural log of |self| as `f64`, finite even when `to_f64` would under/overflow.
    fn ln_abs_f64(&self) -> f64;
    /// Rounds an `Mp` into the precision of `self`.
    fn from_mp(&self, x: &Mp) -> Self;
    fn precision_bits(&self) -> u32;

    fn zero(&self) -> Self {
        self.lift(0.0)
    }
    fn one(&self) -> Self {
        self.lift(1.0)
    }
}

impl Real for f64 {
    fn lift(&self, x: f64) -> Self {
        x
    }
    fn lift_int(&self, n: i64) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
    fn abs(&self) -> Self {
        f64::abs(*self)
    }
    fn exp(&self) -> Self {
        f64::exp(*self)
    }
    fn ln(&self) -> Self {
        f64::ln(*self)
    }
    fn sqrt(&self) -> Self {
        f64::sqrt(*self)
    }
    fn powi(&self, n: i32) -> Self {
        f64::powi(*self, n)
    }
    fn e1(&self) -> Self {
        special::e1(*self)
    }
    fn is_zero(&self) -> bool {
        *self == 0.0
    }
    fn unit_roundoff(&self) -> f64 {
        f64::EPSILON / 2.0
    }
    fn ln_abs_f64(&self) -> f64 {
        f64::abs(*self).ln()
    }
    fn from_mp(&self, x: &Mp) -> Self {
        x.to_f64()
    }
    fn precision_bits(&self) -> u32 {
        53
    }
}

/// Arbitrary-precision real number (MPFR).
#[derive(Clone, PartialEq, PartialOrd)]
pub struct Mp(pub Float);

impl Mp {
    pub fn new(prec_bits: u32, x: f64) -> Mp {
        Mp(Float::with_val(prec_bits, x))
    }

    pub fn with_digits(digits: u32, x: f64) -> Mp {
        Mp::new(digits_to_bits(digits), x)
    }

    pub fn prec(&self) -> u32 {
        self.0.prec()
    }

    pub fn from_rational(prec_bits: u32, q: &rug::Rational) -> Mp {
        Mp(Float::with_val(prec_bits, q))
    }

    /// Decimal representation carrying all significant digits.
    pub fn to_decimal(&self) -> String {
        let digits = (self.prec() as f64 / BITS_PER_DIGIT).floor() as usize + 1;
        self.0.to_string_radix(10, Some(digits))
    }

    pub fn parse(prec_bits: u32, s: &str) -> Option<Mp> {
        Float::parse(s)
            .ok()
            .map(|p| Mp(Float::with_val(prec_bits, p)))
    }
}

impl fmt::Debug for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.to_string_radix(10, Some(20)))
    }
}

impl fmt::Display for Mp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_decimal())
    }
}

macro_rules! mp_binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident) => {
        impl $tr for Mp {
            type Output = Mp;
            fn $m(self, rhs: Mp) -> Mp {
                Mp($tr::$m(self.0, rhs.0))
            }
        }
        impl<'a> $tr<&'a Mp> for &'a Mp {
            type Output = Mp;
            fn $m(self, rhs: &'a Mp) -> Mp {
                Mp(Float::with_val(self.0.prec(), $tr::$m(&self.0, &rhs.0)))
            }
        }
        impl $atr for Mp {
            fn $am(&mut self, rhs: Mp) {
                $atr::$am(&mut self.0, rhs.0);
            }
        }
    };
}

mp_binop!(Add, add, AddAssign, add_assign);
mp_binop!(Sub, sub, SubAssign, sub_assign);
mp_binop!(Mul, mul, MulAssign, mul_assign);
mp_binop!(Div, div, DivAssign, div_assign);

impl Neg for Mp {
    type Output = Mp;
    fn neg(self) -> Mp {
        Mp(-self.0)
    }
}

impl Real for Mp {
    fn lift(&self, x: f64) -> Self {
        Mp(Float::with_val(self.0.prec(), x))
    }
    fn lift_int(&self, n: i64) -> Self {
        Mp(Float::with_val(self.0.prec(), n))
    }
    fn to_f64(&self) -> f64 {
        self.0.to_f64_round(Round::Nearest)
    }
    fn abs(&self) -> Self {
        Mp(self.0.clone().abs())
    }
    fn exp(&self) -> Self {
        Mp(self.0.clone().exp())
    }
    fn ln(&self) -> Self {
        Mp(self.0.clone().ln())
    }
    fn sqrt(&self) -> Self {
        Mp(self.0.clone().sqrt())
    }
    fn powi(&self, n: i32) -> Self {
        Mp(self.0.clone().pow(n))
    }
    fn e1(&self) -> Self {
        // MPFR's eint at a negative argument returns -E1(-x).
        Mp(-(-self.0.clone()).eint())
    }
    fn is_zero(&self) -> bool {
        self.0.is_zero()
    }
    fn unit_roundoff(&self) -> f64 {
        2f64.powi(-(self.0.prec() as i32))
    }
    fn ln_abs_f64(&self) -> f64 {
        if self.0.is_zero() {
            return f64::NEG_INFINITY;
        }
        let (m, e) = self.0.to_f64_exp();
        m.abs().ln() + e as f64 * std::f64::consts::LN_2
    }
    fn from_mp(&self, x: &Mp) -> Self {
        Mp(Float::with_val(self.0.prec(), &x.0))
    }
    fn precision_bits(&self) -> u32 {
        self.0.prec()
    }
}

/// Compensated (Neumaier) accumulator that also tracks the absolute mass
/// of its inputs so callers can estimate cancellation.
#[derive(Clone, Debug)]
pub struct CompensatedSum<T: Real> {
    sum: T,
    comp: T,
    mass: T,
}

impl<T: Real> CompensatedSum<T> {
    pub fn new(proto: &T) -> Self {
        CompensatedSum {
            sum: proto.zero(),
            comp: proto.zero(),
            mass: proto.zero(),
        }
    }

    pub fn add(&mut self, x: T) {
        self.add_with_mass(x.clone(), x.abs());
    }

    /// Adds `x` whose own rounding error scales with `mass` rather than `|x|`.
    pub fn add_with_mass(&mut self, x: T, mass: T) {
        self.mass += mass;
        let s = self.sum.clone() + x.clone();
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum.clone() - s.clone()) + x;
        } else {
            self.comp += (x - s.clone()) + self.sum.clone();
        }
        self.sum = s;
    }

    pub fn value(&self) -> T {
        self.sum.clone() + self.comp.clone()
    }

    pub fn mass(&self) -> T {
        self.mass.clone()
    }
}

/// Total order on `f64` for sorting finite values.
pub fn cmp_f64(a: &f64, b: &f64) -> Ordering {
    a.partial_cmp(b).unwrap_or(Ordering::Equal)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mp_e1_matches_double() {
        let x = Mp::with_digits(40, 1.0);
        assert!((x.e1().to_f64() - 0.219_383_934_395_520_27).abs() < 1e-16);
        assert!((1.0f64.e1() - 0.219_383_934_395_520_27).abs() < 1e-15);
    }

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new(&0.0);
        s.add(1.0);
        for _ in 0..10 {
            s.add(1e-16);
        }
        s.add(-1.0);
        assert!((s.value() - 1e-15).abs() < 1e-28);
        assert!((s.mass() - 2.0 - 1e-15).abs() < 1e-12);
    }

    #[test]
    fn mp_decimal_round_trip() {
        let x = Mp::with_digits(60, 1.0) / Mp::with_digits(60, 3.0);
        let s = x.to_decimal();
        let y = Mp::parse(x.prec(), &s).unwrap();
        assert!(((x - y).abs().to_f64()) < 1e-58);
    }

    #[test]
    fn ln_abs_survives_underflow() {
        let x = Mp::with_digits(30, 10.0).powi(-400);
        assert!((x.ln_abs_f64() + 400.0 * 10f64.ln()).abs() < 1e-9);
    }
}
