//! Exact rational scalars.
//!
//! Every weight, density, mass and bound in the crate is a [`Rat`]. The
//! string form is always `num/den` in lowest terms (integers print as
//! `n/1`); parsing also accepts a bare integer.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::Error;

#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Rat(BigRational);

impl Rat {
    pub fn new(numer: impl Into<BigInt>, denom: impl Into<BigInt>) -> Self {
        let denom = denom.into();
        assert!(!denom.is_zero(), "zero denominator");
        Rat(BigRational::new(numer.into(), denom))
    }

    pub fn zero() -> Self {
        Rat(BigRational::zero())
    }

    pub fn one() -> Self {
        Rat(BigRational::one())
    }

    pub fn from_int(n: impl Into<BigInt>) -> Self {
        Rat(BigRational::from_integer(n.into()))
    }

    /// `4^{-k}`.
    pub fn inv_pow4(k: u64) -> Self {
        Rat(BigRational::new(BigInt::one(), BigInt::one() << (2 * k)))
    }

    /// `2^{-k}`.
    pub fn inv_pow2(k: u64) -> Self {
        Rat(BigRational::new(BigInt::one(), BigInt::one() << k))
    }

    pub fn numer(&self) -> &BigInt {
        self.0.numer()
    }

    pub fn denom(&self) -> &BigInt {
        self.0.denom()
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_positive(&self) -> bool {
        self.0.is_positive()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    pub fn is_integer(&self) -> bool {
        self.0.is_integer()
    }

    pub fn abs(&self) -> Self {
        Rat(self.0.abs())
    }

    pub fn recip(&self) -> Self {
        Rat(self.0.recip())
    }

    pub fn pow(&self, e: i32) -> Self {
        Rat(num_traits::Pow::pow(&self.0, e))
    }

    pub fn powu(&self, e: u64) -> Self {
        Rat(BigRational::new(
            num_traits::Pow::pow(self.0.numer(), e),
            num_traits::Pow::pow(self.0.denom(), e),
        ))
    }

    pub fn floor(&self) -> BigInt {
        self.0.floor().to_integer()
    }

    pub fn min(self, other: Rat) -> Rat {
        std::cmp::min(self, other)
    }

    pub fn max(self, other: Rat) -> Rat {
        std::cmp::max(self, other)
    }

    /// Lossy conversion for presentation only (tone mapping, decimal summaries).
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or_else(|| {
            // Huge numerators and denominators: scale both down together.
            let shift = self.0.numer().bits().max(self.0.denom().bits()).saturating_sub(1000);
            let n = (self.0.numer() >> shift).to_f64().unwrap_or(0.0);
            let d = (self.0.denom() >> shift).to_f64().unwrap_or(f64::INFINITY);
            n / d
        })
    }

    /// `self * 4^level` if that is a nonnegative integer that fits in `u64`.
    pub fn to_grid_index(&self, level: u32) -> Option<u64> {
        let scaled = &self.0 * BigRational::from_integer(BigInt::one() << (2 * level as u64));
        if !scaled.is_integer() || scaled.is_negative() {
            return None;
        }
        scaled.to_integer().to_u64()
    }

    /// The smallest level `i` such that `self` is an integer multiple of `4^{-i}`,
    /// or `None` if the denominator is not a power of four.
    pub fn four_adic_level(&self) -> Option<u64> {
        let d = self.0.denom().magnitude();
        if d.is_zero() {
            return None;
        }
        let tz = d.trailing_zeros().unwrap_or(0);
        if (d >> tz) != BigUint::one() {
            return None;
        }
        Some(tz.div_ceil(2))
    }

    pub fn inner(&self) -> &BigRational {
        &self.0
    }
}

impl From<i64> for Rat {
    fn from(n: i64) -> Self {
        Rat::from_int(n)
    }
}

impl From<u64> for Rat {
    fn from(n: u64) -> Self {
        Rat::from_int(n)
    }
}

impl From<BigRational> for Rat {
    fn from(r: BigRational) -> Self {
        Rat(r)
    }
}

impl fmt::Display for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.0.numer(), self.0.denom())
    }
}

impl fmt::Debug for Rat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl FromStr for Rat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || Error::ParseRat(s.to_string());
        let s = s.trim();
        match s.split_once('/') {
            Some((n, d)) => {
                let n: BigInt = n.trim().parse().map_err(|_| bad())?;
                let d: BigInt = d.trim().parse().map_err(|_| bad())?;
                if d.is_zero() {
                    return Err(bad());
                }
                Ok(Rat::new(n, d))
            }
            None => {
                let n: BigInt = s.parse().map_err(|_| bad())?;
                Ok(Rat::from_int(n))
            }
        }
    }
}

impl Serialize for Rat {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Rat {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

macro_rules! forward_binop {
    ($trait:ident, $method:ident) => {
        impl $trait<Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat($trait::$method(self.0, rhs.0))
            }
        }
        impl<'a> $trait<&'a Rat> for Rat {
            type Output = Rat;
            fn $method(self, rhs: &'a Rat) -> Rat {
                Rat($trait::$method(self.0, &rhs.0))
            }
        }
        impl<'a> $trait<Rat> for &'a Rat {
            type Output = Rat;
            fn $method(self, rhs: Rat) -> Rat {
                Rat($trait::$method(&self.0, rhs.0))
            }
        }
        impl<'a, 'b> $trait<&'b Rat> for &'a Rat {
            type Output = Rat;
            fn $method(self, rhs: &'b Rat) -> Rat {
                Rat($trait::$method(&self.0, &rhs.0))
            }
        }
    };
}

forward_binop!(Add, add);
forward_binop!(Sub, sub);
forward_binop!(Mul, mul);
forward_binop!(Div, div);

impl Neg for Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-self.0)
    }
}

impl Neg for &Rat {
    type Output = Rat;
    fn neg(self) -> Rat {
        Rat(-&self.0)
    }
}

impl Sum for Rat {
    fn sum<I: Iterator<Item = Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |acc, x| acc + x)
    }
}

impl<'a> Sum<&'a Rat> for Rat {
    fn sum<I: Iterator<Item = &'a Rat>>(iter: I) -> Rat {
        iter.fold(Rat::zero(), |acc, x| acc + x)
    }
}
