//! Number abstraction shared by the exact and floating-point modes.

use alloc::format;
use alloc::string::String;
use core::fmt::{Debug, Display};

use crate::radical::Radical;
use num_bigint::{BigInt, Sign};
use num_traits::{Float, FromPrimitive, NumAssignRef, NumRef, Signed, ToPrimitive, Zero};

/// Exact rational numbers.
pub type Rational = num_rational::BigRational;

/// A field element usable by every algorithm in the crate.
///
/// `EXACT` selects between decidable comparisons (rationals) and comparisons
/// up to an absolute tolerance (floats).
pub trait Scalar:
    NumRef + NumAssignRef + Signed + Clone + PartialOrd + Debug + Display + Send + Sync + 'static
{
    const EXACT: bool;
    const MODE: &'static str;

    /// Number system closed under the square roots taken during recovery.
    type Ext: Scalar;

    fn from_int(v: i64) -> Self;

    fn from_ratio(num: i64, den: i64) -> Self {
        Self::from_int(num) / Self::from_int(den)
    }

    fn to_f64(&self) -> f64;

    /// Square root when it exists in the number system: always for a
    /// non-negative float, only for perfect squares of rationals.
    fn sqrt_exact(&self) -> Option<Self>;

    /// Zero test: exact for rationals, `|x| <= tol` for floats.
    fn is_negligible(&self, tol: f64) -> bool;

    /// `self <= other`, with `tol` slack in float mode.
    fn le_tol(&self, other: &Self, tol: f64) -> bool;

    /// Sign of the value; in float mode values within `tol` of zero count as 0.
    fn sign_tol(&self, tol: f64) -> i8 {
        if self.is_negligible(tol) {
            0
        } else if self.is_positive() {
            1
        } else {
            -1
        }
    }

    fn to_ext(&self) -> Self::Ext;

    /// `√self` in the extension, `None` for negative values.
    fn sqrt_ext(&self) -> Option<Self::Ext>;

    /// Lossless textual form, when the number system has one.
    fn exact_repr(&self) -> Option<String> {
        None
    }

    fn half() -> Self {
        Self::from_ratio(1, 2)
    }

    fn quarter() -> Self {
        Self::from_ratio(1, 4)
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;
    const MODE: &'static str = "float";
    type Ext = f64;

    fn from_int(v: i64) -> Self {
        v as f64
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn sqrt_exact(&self) -> Option<Self> {
        if *self >= 0.0 {
            Some(Float::sqrt(*self))
        } else {
            None
        }
    }

    fn is_negligible(&self, tol: f64) -> bool {
        Float::abs(*self) <= tol
    }

    fn le_tol(&self, other: &Self, tol: f64) -> bool {
        *self <= *other + tol
    }

    fn to_ext(&self) -> f64 {
        *self
    }

    fn sqrt_ext(&self) -> Option<f64> {
        self.sqrt_exact()
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;
    const MODE: &'static str = "exact";
    type Ext = Radical;

    fn from_int(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn to_f64(&self) -> f64 {
        ratio_to_f64(self)
    }

    fn sqrt_exact(&self) -> Option<Self> {
        if self.is_negative() {
            return None;
        }
        let n = int_sqrt_exact(self.numer())?;
        let d = int_sqrt_exact(self.denom())?;
        Some(Rational::new(n, d))
    }

    fn is_negligible(&self, _tol: f64) -> bool {
        self.is_zero()
    }

    fn le_tol(&self, other: &Self, _tol: f64) -> bool {
        self <= other
    }

    fn to_ext(&self) -> Radical {
        Radical::from_rational(self.clone())
    }

    fn sqrt_ext(&self) -> Option<Radical> {
        Radical::sqrt_of(self)
    }

    fn exact_repr(&self) -> Option<String> {
        Some(format!("{self}"))
    }
}

fn int_sqrt_exact(v: &BigInt) -> Option<BigInt> {
    if v.sign() == Sign::Minus {
        return None;
    }
    let r = v.sqrt();
    if &(&r * &r) == v {
        Some(r)
    } else {
        None
    }
}

/// Converts a rational to the nearest-ish `f64`, robust to huge numerators and
/// denominators.
pub fn ratio_to_f64(r: &Rational) -> f64 {
    if let (Some(n), Some(d)) = (r.numer().to_f64(), r.denom().to_f64()) {
        if n.is_finite() && d.is_finite() && d != 0.0 {
            return n / d;
        }
    }
    // Scale both parts down to keep them in range.
    let nb = r.numer().bits() as i64;
    let db = r.denom().bits() as i64;
    let shift_n = (nb - 60).max(0) as usize;
    let shift_d = (db - 60).max(0) as usize;
    let n = (r.numer() >> shift_n).to_f64().unwrap_or(0.0);
    let d = (r.denom() >> shift_d).to_f64().unwrap_or(1.0);
    let exp = shift_n as i32 - shift_d as i32;
    n / d * Float::powi(2.0f64, exp)
}

/// Exact conversion of a finite float into a rational.
pub fn rational_from_f64(v: f64) -> Option<Rational> {
    Rational::from_f64(v)
}
