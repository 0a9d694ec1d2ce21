// Copyright 2026 nstab Contributors
// SPDX-License-Identifier: Apache-2.0

//! Configurable-precision real scalar.
//!
//! Precision is expressed in significant decimal digits. A process-wide
//! default applies unless the current thread has entered a scoped override
//! with [`with_digits`]. Every arithmetic result is rounded to the precision
//! active on the thread that produced it, so one analysis runs in a single
//! arithmetic as long as it stays inside one scope.

use std::cell::Cell;
use std::cmp::Ordering as CmpOrdering;
use std::fmt;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};
use std::sync::atomic::{AtomicU32, Ordering};

use rug::float::Constant;
use rug::ops::Pow;
use rug::Float;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Default working precision in significant decimal digits.
pub const DEFAULT_DIGITS: u32 = 16;

/// Smallest precision accepted anywhere in the crate.
pub const MIN_DIGITS: u32 = 4;

/// Largest precision accepted anywhere in the crate.
pub const MAX_DIGITS: u32 = 10_000;

static GLOBAL_DIGITS: AtomicU32 = AtomicU32::new(DEFAULT_DIGITS);

thread_local! {
    static LOCAL_DIGITS: Cell<Option<u32>> = const { Cell::new(None) };
}

fn check_digits(digits: u32) -> Result<u32> {
    if (MIN_DIGITS..=MAX_DIGITS).contains(&digits) {
        Ok(digits)
    } else {
        Err(Error::InvalidArgument(format!(
            "precision must be between {MIN_DIGITS} and {MAX_DIGITS} digits, got {digits}"
        )))
    }
}

/// Sets the process-wide default precision.
pub fn set_default_digits(digits: u32) -> Result<()> {
    GLOBAL_DIGITS.store(check_digits(digits)?, Ordering::SeqCst);
    Ok(())
}

/// Process-wide default precision.
pub fn default_digits() -> u32 {
    GLOBAL_DIGITS.load(Ordering::SeqCst)
}

/// Precision active on the current thread.
pub fn digits() -> u32 {
    LOCAL_DIGITS
        .with(|c| c.get())
        .unwrap_or_else(default_digits)
}

/// Mantissa bits needed to carry `digits` significant decimal digits.
pub fn digits_to_bits(digits: u32) -> u32 {
    (f64::from(digits) * std::f64::consts::LOG2_10).ceil() as u32
}

/// Mantissa bits of the precision active on the current thread.
pub fn bits() -> u32 {
    digits_to_bits(digits())
}

/// Unit roundoff `2^(1-bits)` of the active precision, as an `f64`.
pub fn unit_roundoff() -> f64 {
    2f64.powi(1 - bits() as i32)
}

struct Restore(Option<u32>);

impl Drop for Restore {
    fn drop(&mut self) {
        LOCAL_DIGITS.with(|c| c.set(self.0));
    }
}

/// Runs `f` with the current thread's precision set to `digits`.
///
/// The previous setting is restored when `f` returns or unwinds.
///
/// # Panics
///
/// Panics if `digits` is outside `MIN_DIGITS..=MAX_DIGITS`.
pub fn with_digits<R>(digits: u32, f: impl FnOnce() -> R) -> R {
    let digits = check_digits(digits).expect("precision out of range");
    let prev = LOCAL_DIGITS.with(|c| c.replace(Some(digits)));
    let _restore = Restore(prev);
    f()
}

/// Real number at the active working precision.
#[derive(Clone, PartialEq, PartialOrd)]
pub struct Real(Float);

impl Real {
    fn wrap<T>(v: T) -> Self
    where
        Float: rug::Assign<T>,
    {
        Real(Float::with_val(bits(), v))
    }

    pub fn zero() -> Self {
        Real(Float::new(bits()))
    }

    pub fn one() -> Self {
        Self::wrap(1)
    }

    pub fn from_f64(x: f64) -> Self {
        Self::wrap(x)
    }

    pub fn from_i64(x: i64) -> Self {
        Self::wrap(x)
    }

    /// Ratio `num / den` rounded once.
    pub fn ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    /// Parses a decimal literal at the active precision.
    pub fn parse(s: &str) -> Result<Self> {
        let parsed = Float::parse(s.trim())
            .map_err(|e| Error::InvalidArgument(format!("bad number {s:?}: {e}")))?;
        Ok(Self::wrap(parsed))
    }

    pub fn pi() -> Self {
        Self::wrap(Constant::Pi)
    }

    /// Re-rounds to the active precision.
    pub fn rounded(&self) -> Self {
        Self::wrap(&self.0)
    }

    pub fn as_float(&self) -> &Float {
        &self.0
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64()
    }

    pub fn is_finite(&self) -> bool {
        self.0.is_finite()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_sign_negative(&self) -> bool {
        self.0.is_sign_negative() && !self.0.is_zero()
    }

    pub fn abs(&self) -> Self {
        Self::wrap(self.0.abs_ref())
    }

    pub fn sqrt(&self) -> Self {
        Self::wrap(self.0.sqrt_ref())
    }

    pub fn exp(&self) -> Self {
        Self::wrap(self.0.exp_ref())
    }

    pub fn ln(&self) -> Self {
        Self::wrap(self.0.ln_ref())
    }

    pub fn cos(&self) -> Self {
        Self::wrap(self.0.cos_ref())
    }

    pub fn sin(&self) -> Self {
        Self::wrap(self.0.sin_ref())
    }

    /// `ln Γ(x)` for positive `x`.
    pub fn ln_gamma(&self) -> Self {
        Self::wrap(self.0.ln_gamma_ref())
    }

    pub fn powi(&self, k: i32) -> Self {
        Self::wrap((&self.0).pow(k))
    }

    pub fn square(&self) -> Self {
        Self::wrap(self.0.square_ref())
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// `(-h)^k` for a nonnegative integer power.
    pub fn neg_pow(h: &Real, k: usize) -> Self {
        let v = h.powi(k as i32);
        if k % 2 == 1 {
            -v
        } else {
            v
        }
    }

    /// Correctly rounded dot product of two equal-length sequences.
    pub fn dot<'a, I>(pairs: I) -> Self
    where
        I: Iterator<Item = (&'a Real, &'a Real)>,
    {
        Self::wrap(Float::dot(pairs.map(|(a, b)| (&a.0, &b.0))))
    }

    /// Correctly rounded sum.
    pub fn sum<'a, I>(items: I) -> Self
    where
        I: Iterator<Item = &'a Real>,
    {
        Self::wrap(Float::sum(items.map(|a| &a.0)))
    }

    /// Total order that places NaN last; values produced here are never NaN.
    pub fn total_cmp(&self, other: &Self) -> CmpOrdering {
        self.partial_cmp(other).unwrap_or(CmpOrdering::Equal)
    }

    /// Decimal string that round-trips at the value's own precision.
    pub fn to_decimal_string(&self) -> String {
        if self.0.is_zero() {
            return "0".to_string();
        }
        self.0.to_string_radix(10, None)
    }

    /// Decimal string with `sig` significant digits.
    pub fn to_sci_string(&self, sig: usize) -> String {
        if self.0.is_zero() {
            return "0".to_string();
        }
        self.0.to_string_radix(10, Some(sig.max(1)))
    }
}

impl Default for Real {
    fn default() -> Self {
        Real::zero()
    }
}

impl fmt::Display for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal_string())
    }
}

impl fmt::Debug for Real {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Real({})", self.to_decimal_string())
    }
}

impl From<f64> for Real {
    fn from(x: f64) -> Self {
        Real::from_f64(x)
    }
}

impl PartialEq<f64> for Real {
    fn eq(&self, other: &f64) -> bool {
        self.0 == *other
    }
}

impl PartialOrd<f64> for Real {
    fn partial_cmp(&self, other: &f64) -> Option<CmpOrdering> {
        self.0.partial_cmp(other)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_decimal_string())
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        Real::parse(&s).map_err(serde::de::Error::custom)
    }
}

impl Neg for Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real::wrap(-self.0)
    }
}

impl Neg for &Real {
    type Output = Real;
    fn neg(self) -> Real {
        Real::wrap(-&self.0)
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $atr:ident, $am:ident) => {
        impl $tr<&Real> for &Real {
            type Output = Real;
            fn $m(self, rhs: &Real) -> Real {
                Real::wrap((&self.0).$m(&rhs.0))
            }
        }
        impl $tr<Real> for &Real {
            type Output = Real;
            fn $m(self, rhs: Real) -> Real {
                self.$m(&rhs)
            }
        }
        impl $tr<&Real> for Real {
            type Output = Real;
            fn $m(self, rhs: &Real) -> Real {
                (&self).$m(rhs)
            }
        }
        impl $tr<Real> for Real {
            type Output = Real;
            fn $m(self, rhs: Real) -> Real {
                (&self).$m(&rhs)
            }
        }
        impl $tr<f64> for &Real {
            type Output = Real;
            fn $m(self, rhs: f64) -> Real {
                Real::wrap((&self.0).$m(rhs))
            }
        }
        impl $tr<f64> for Real {
            type Output = Real;
            fn $m(self, rhs: f64) -> Real {
                (&self).$m(rhs)
            }
        }
        impl $atr<&Real> for Real {
            fn $am(&mut self, rhs: &Real) {
                *self = (&*self).$m(rhs);
            }
        }
        impl $atr<Real> for Real {
            fn $am(&mut self, rhs: Real) {
                *self = (&*self).$m(&rhs);
            }
        }
    };
}

binop!(Add, add, AddAssign, add_assign);
binop!(Sub, sub, SubAssign, sub_assign);
binop!(Mul, mul, MulAssign, mul_assign);
binop!(Div, div, DivAssign, div_assign);

/// `ln(k!)` as an `f64`, exact summation for moderate `k`.
pub fn ln_factorial(k: usize) -> f64 {
    (2..=k).map(|i| (i as f64).ln()).sum()
}
