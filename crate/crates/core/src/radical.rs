//! Exact arithmetic in multi-quadratic extensions of the rationals.
//!
//! A [`Radical`] is a finite sum `Σ c_S √(Π_{i∈S} r_i)` with rational
//! coefficients and positive integer radicands `r_i`. Sums, products and
//! quotients stay in this form, and the sign of any element is decided exactly
//! by splitting off the largest radicand, `x = a + b√r`, and comparing `a²`
//! with `b² r` one level down. No independence of the radicands is assumed.
//!
//! Square roots of non-square rationals met during parameter recovery live
//! here, so feasibility questions about them stay decidable.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Rem, RemAssign, Sub, SubAssign};

use num_bigint::BigInt;
use num_traits::{Num, One, Signed, Zero};

use crate::scalar::{ratio_to_f64, Rational, Scalar};

type Mask = u64;

#[derive(Clone)]
pub struct Radical {
    /// Sorted, distinct, each > 1 and not a perfect square.
    radicands: Vec<BigInt>,
    /// Nonzero coefficients keyed by radicand subsets.
    terms: BTreeMap<Mask, Rational>,
}

impl Radical {
    pub fn from_rational(q: Rational) -> Self {
        let mut terms = BTreeMap::new();
        if !q.is_zero() {
            terms.insert(0, q);
        }
        Radical { radicands: Vec::new(), terms }
    }

    /// `√q` for `q ≥ 0`.
    pub fn sqrt_of(q: &Rational) -> Option<Self> {
        if q.is_negative() {
            return None;
        }
        if let Some(r) = q.sqrt_exact() {
            return Some(Self::from_rational(r));
        }
        // √(a/b) = √(ab) / b
        let ab = q.numer() * q.denom();
        let (outer, inner) = split_square(&ab);
        let coef = Rational::new(outer, q.denom().clone());
        if inner == BigInt::one() {
            return Some(Self::from_rational(coef));
        }
        let mut terms = BTreeMap::new();
        terms.insert(1, coef);
        Some(Radical { radicands: alloc::vec![inner], terms })
    }

    pub fn is_rational(&self) -> bool {
        self.terms.keys().all(|&m| m == 0)
    }

    pub fn to_rational(&self) -> Option<Rational> {
        if self.is_rational() {
            Some(self.terms.get(&0).cloned().unwrap_or_else(Rational::zero))
        } else {
            None
        }
    }

    pub fn approx(&self) -> f64 {
        let roots: Vec<f64> = self
            .radicands
            .iter()
            .map(|r| num_traits::Float::sqrt(ratio_to_f64(&Rational::from_integer(r.clone()))))
            .collect();
        self.terms
            .iter()
            .map(|(&m, c)| {
                let mut v = ratio_to_f64(c);
                for (i, r) in roots.iter().enumerate() {
                    if m >> i & 1 == 1 {
                        v *= r;
                    }
                }
                v
            })
            .sum()
    }

    pub fn signum_exact(&self) -> Ordering {
        sign_of(&self.terms, &self.radicands)
    }

    /// Rewrites both operands over the union of their radicands.
    fn aligned(&self, other: &Radical) -> (Vec<BigInt>, BTreeMap<Mask, Rational>, BTreeMap<Mask, Rational>) {
        if self.radicands == other.radicands {
            return (self.radicands.clone(), self.terms.clone(), other.terms.clone());
        }
        let mut merged: Vec<BigInt> = self.radicands.iter().chain(other.radicands.iter()).cloned().collect();
        merged.sort();
        merged.dedup();
        assert!(merged.len() <= Mask::BITS as usize, "too many distinct radicands");
        let remap = |src: &Radical| -> BTreeMap<Mask, Rational> {
            let pos: Vec<usize> =
                src.radicands.iter().map(|r| merged.binary_search(r).expect("radicand present")).collect();
            src.terms
                .iter()
                .map(|(&m, c)| {
                    let mut nm = 0;
                    for (i, &p) in pos.iter().enumerate() {
                        if m >> i & 1 == 1 {
                            nm |= 1 << p;
                        }
                    }
                    (nm, c.clone())
                })
                .collect()
        };
        let a = remap(self);
        let b = remap(other);
        (merged, a, b)
    }

    fn normalized(radicands: Vec<BigInt>, mut terms: BTreeMap<Mask, Rational>) -> Self {
        terms.retain(|_, c| !c.is_zero());
        let used = terms.keys().fold(0, |acc, m| acc | m);
        if used.count_ones() as usize == radicands.len() {
            return Radical { radicands, terms };
        }
        let keep: Vec<usize> = (0..radicands.len()).filter(|&i| used >> i & 1 == 1).collect();
        let new_radicands = keep.iter().map(|&i| radicands[i].clone()).collect();
        let terms = terms
            .into_iter()
            .map(|(m, c)| {
                let mut nm = 0;
                for (k, &i) in keep.iter().enumerate() {
                    if m >> i & 1 == 1 {
                        nm |= 1 << k;
                    }
                }
                (nm, c)
            })
            .collect();
        Radical { radicands: new_radicands, terms }
    }

    fn add_ref(&self, other: &Radical) -> Radical {
        let (rads, mut a, b) = self.aligned(other);
        for (m, c) in b {
            *a.entry(m).or_insert_with(Rational::zero) += c;
        }
        Radical::normalized(rads, a)
    }

    fn mul_ref(&self, other: &Radical) -> Radical {
        let (rads, a, b) = self.aligned(other);
        Radical::normalized(rads.clone(), mul_terms(&a, &b, &rads))
    }

    fn recip(&self) -> Radical {
        let top = match top_bit(&self.terms) {
            None => {
                let c = self.terms.get(&0).expect("division by zero");
                return Radical::from_rational(c.recip());
            }
            Some(k) => k,
        };
        let (lo, hi) = split_at(&self.terms, top);
        let lo = Radical::normalized(self.radicands.clone(), lo);
        let hi = Radical::normalized(self.radicands.clone(), hi);
        let r = Radical::from_rational(Rational::from_integer(self.radicands[top].clone()));
        // (a + b√r)(a − b√r) = a² − b² r
        let norm = &lo.mul_ref(&lo) - &hi.mul_ref(&hi).mul_ref(&r);
        if norm.is_zero() {
            // a = ±b√r, so the element is 2a or zero.
            assert!(lo.signum_exact() == hi.signum_exact() && !lo.is_zero(), "division by zero");
            return (&lo + &lo).recip();
        }
        let conj = &(&lo + &lo) - self;
        conj.mul_ref(&norm.recip())
    }
}

fn split_square(v: &BigInt) -> (BigInt, BigInt) {
    // Pull out small square factors; large ones are left inside the radical.
    let mut outer = BigInt::one();
    let mut inner = v.clone();
    let mut p = BigInt::from(2u32);
    let limit = BigInt::from(1000u32);
    while p <= limit {
        let sq = &p * &p;
        while (&inner % &sq).is_zero() {
            inner /= &sq;
            outer *= &p;
        }
        p += 1u32;
    }
    let s = inner.sqrt();
    if &s * &s == inner {
        outer *= s;
        inner = BigInt::one();
    }
    (outer, inner)
}

fn top_bit(terms: &BTreeMap<Mask, Rational>) -> Option<usize> {
    let used = terms.keys().fold(0, |acc, m| acc | m);
    if used == 0 {
        None
    } else {
        Some((Mask::BITS - 1 - used.leading_zeros()) as usize)
    }
}

fn split_at(terms: &BTreeMap<Mask, Rational>, k: usize) -> (BTreeMap<Mask, Rational>, BTreeMap<Mask, Rational>) {
    let mut lo = BTreeMap::new();
    let mut hi = BTreeMap::new();
    for (&m, c) in terms {
        if m >> k & 1 == 1 {
            hi.insert(m & !(1 << k), c.clone());
        } else {
            lo.insert(m, c.clone());
        }
    }
    (lo, hi)
}

fn mul_terms(a: &BTreeMap<Mask, Rational>, b: &BTreeMap<Mask, Rational>, rads: &[BigInt]) -> BTreeMap<Mask, Rational> {
    let mut out: BTreeMap<Mask, Rational> = BTreeMap::new();
    for (&s, c) in a {
        for (&t, d) in b {
            let mut coef = c * d;
            let common = s & t;
            for (i, r) in rads.iter().enumerate() {
                if common >> i & 1 == 1 {
                    coef *= Rational::from_integer(r.clone());
                }
            }
            *out.entry(s ^ t).or_insert_with(Rational::zero) += coef;
        }
    }
    out.retain(|_, c| !c.is_zero());
    out
}

fn sign_of(terms: &BTreeMap<Mask, Rational>, rads: &[BigInt]) -> Ordering {
    let Some(k) = top_bit(terms) else {
        return match terms.get(&0) {
            Some(c) if c.is_positive() => Ordering::Greater,
            Some(c) if c.is_negative() => Ordering::Less,
            _ => Ordering::Equal,
        };
    };
    let (lo, hi) = split_at(terms, k);
    let sa = sign_of(&lo, rads);
    let sb = sign_of(&hi, rads);
    if sb == Ordering::Equal {
        return sa;
    }
    if sa == Ordering::Equal || sa == sb {
        return sb;
    }
    // Opposite signs: compare a² with b² r.
    let mut diff = mul_terms(&lo, &lo, rads);
    let r = Rational::from_integer(rads[k].clone());
    for (m, c) in mul_terms(&hi, &hi, rads) {
        *diff.entry(m).or_insert_with(Rational::zero) -= c * &r;
    }
    diff.retain(|_, c| !c.is_zero());
    match sign_of(&diff, rads) {
        Ordering::Equal => Ordering::Equal,
        Ordering::Greater => sa,
        Ordering::Less => sb,
    }
}

impl PartialEq for Radical {
    fn eq(&self, other: &Self) -> bool {
        (self - other).is_zero()
    }
}

impl PartialOrd for Radical {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some((self - other).signum_exact())
    }
}

impl fmt::Debug for Radical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Radical {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (&m, c)) in self.terms.iter().enumerate() {
            if k > 0 {
                write!(f, " + ")?;
            }
            write!(f, "{c}")?;
            if m != 0 {
                write!(f, "*sqrt(")?;
                let mut first = true;
                for (i, r) in self.radicands.iter().enumerate() {
                    if m >> i & 1 == 1 {
                        if !first {
                            write!(f, "*")?;
                        }
                        write!(f, "{r}")?;
                        first = false;
                    }
                }
                write!(f, ")")?;
            }
        }
        Ok(())
    }
}

impl From<Rational> for Radical {
    fn from(q: Rational) -> Self {
        Radical::from_rational(q)
    }
}

impl Zero for Radical {
    fn zero() -> Self {
        Radical::from_rational(Rational::zero())
    }
    fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }
}

impl One for Radical {
    fn one() -> Self {
        Radical::from_rational(Rational::one())
    }
}

impl Neg for Radical {
    type Output = Radical;
    fn neg(mut self) -> Radical {
        for c in self.terms.values_mut() {
            *c = -c.clone();
        }
        self
    }
}

impl Neg for &Radical {
    type Output = Radical;
    fn neg(self) -> Radical {
        -self.clone()
    }
}

macro_rules! binop {
    ($tr:ident, $m:ident, $body:expr) => {
        impl $tr<&Radical> for &Radical {
            type Output = Radical;
            fn $m(self, rhs: &Radical) -> Radical {
                let f: fn(&Radical, &Radical) -> Radical = $body;
                f(self, rhs)
            }
        }
        impl $tr<Radical> for Radical {
            type Output = Radical;
            fn $m(self, rhs: Radical) -> Radical {
                (&self).$m(&rhs)
            }
        }
        impl $tr<&Radical> for Radical {
            type Output = Radical;
            fn $m(self, rhs: &Radical) -> Radical {
                (&self).$m(rhs)
            }
        }
        impl $tr<Radical> for &Radical {
            type Output = Radical;
            fn $m(self, rhs: Radical) -> Radical {
                self.$m(&rhs)
            }
        }
    };
}

binop!(Add, add, |a, b| a.add_ref(b));
binop!(Sub, sub, |a, b| a.add_ref(&-b));
binop!(Mul, mul, |a, b| a.mul_ref(b));
binop!(Div, div, |a, b| a.mul_ref(&b.recip()));
binop!(Rem, rem, |_, _| Radical::zero());

macro_rules! assignop {
    ($tr:ident, $m:ident, $op:ident) => {
        impl $tr<Radical> for Radical {
            fn $m(&mut self, rhs: Radical) {
                *self = (&*self).$op(&rhs);
            }
        }
        impl $tr<&Radical> for Radical {
            fn $m(&mut self, rhs: &Radical) {
                *self = (&*self).$op(rhs);
            }
        }
    };
}

assignop!(AddAssign, add_assign, add);
assignop!(SubAssign, sub_assign, sub);
assignop!(MulAssign, mul_assign, mul);
assignop!(DivAssign, div_assign, div);
assignop!(RemAssign, rem_assign, rem);

impl Num for Radical {
    type FromStrRadixErr = <Rational as Num>::FromStrRadixErr;
    fn from_str_radix(s: &str, radix: u32) -> Result<Self, Self::FromStrRadixErr> {
        Rational::from_str_radix(s, radix).map(Radical::from_rational)
    }
}

impl Signed for Radical {
    fn abs(&self) -> Self {
        if self.is_negative() {
            -self
        } else {
            self.clone()
        }
    }
    fn abs_sub(&self, other: &Self) -> Self {
        if self <= other {
            Radical::zero()
        } else {
            self - other
        }
    }
    fn signum(&self) -> Self {
        match self.signum_exact() {
            Ordering::Greater => Radical::one(),
            Ordering::Less => -Radical::one(),
            Ordering::Equal => Radical::zero(),
        }
    }
    fn is_positive(&self) -> bool {
        self.signum_exact() == Ordering::Greater
    }
    fn is_negative(&self) -> bool {
        self.signum_exact() == Ordering::Less
    }
}

impl Scalar for Radical {
    const EXACT: bool = true;
    const MODE: &'static str = "exact";
    type Ext = Radical;

    fn from_int(v: i64) -> Self {
        Radical::from_rational(Rational::from_int(v))
    }

    fn from_ratio(num: i64, den: i64) -> Self {
        Radical::from_rational(Rational::from_ratio(num, den))
    }

    fn to_f64(&self) -> f64 {
        self.approx()
    }

    fn sqrt_exact(&self) -> Option<Self> {
        self.to_rational()?.sqrt_exact().map(Radical::from_rational)
    }

    fn is_negligible(&self, _tol: f64) -> bool {
        self.is_zero()
    }

    fn le_tol(&self, other: &Self, _tol: f64) -> bool {
        self <= other
    }

    fn to_ext(&self) -> Radical {
        self.clone()
    }

    fn sqrt_ext(&self) -> Option<Radical> {
        Radical::sqrt_of(&self.to_rational()?)
    }

    fn exact_repr(&self) -> Option<alloc::string::String> {
        Some(alloc::format!("{self}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::from_ratio(n, d)
    }

    fn rt(n: i64, d: i64) -> Radical {
        Radical::sqrt_of(&q(n, d)).unwrap()
    }

    #[test]
    fn perfect_squares_collapse() {
        assert_eq!(rt(121, 100).to_rational(), Some(q(11, 10)));
        let r = rt(8, 1);
        assert!(!r.is_rational());
        assert_eq!(r.radicands, alloc::vec![BigInt::from(2)]);
        assert_eq!(&r * &r, Radical::from(q(8, 1)));
    }

    #[test]
    fn signs_of_nested_differences() {
        // √2 + √3 vs √10: 5 + 2√6 < 10
        let lhs = &rt(2, 1) + &rt(3, 1);
        assert!(lhs < rt(10, 1));
        assert!(lhs > rt(9, 1));
        // 2√2 − √8 = 0 even though √8 is a separate input
        let z = Radical::from(q(2, 1)) * rt(2, 1) - rt(8, 1);
        assert!(z.is_zero() || z.signum_exact() == Ordering::Equal);
        let x = &rt(5, 1) - &Radical::from(q(2236, 1000));
        assert!(x.is_positive());
        let y = &rt(5, 1) - &Radical::from(q(2237, 1000));
        assert!(y.is_negative());
    }

    #[test]
    fn division_round_trips() {
        let a = &rt(2, 1) + &rt(3, 1) + Radical::one();
        let b = &rt(7, 3) - &rt(5, 1);
        let c = &a / &b;
        assert_eq!(&c * &b, a);
        assert!((c.approx() - a.approx() / b.approx()).abs() < 1e-12);
    }

    #[test]
    fn approximation_matches_f64() {
        let a = &rt(2, 9) * &rt(3, 1) - Radical::from(q(1, 7));
        let expect = (2.0f64 / 9.0).sqrt() * 3.0f64.sqrt() - 1.0 / 7.0;
        assert!((a.approx() - expect).abs() < 1e-14);
    }
}
