//! Exact currency arithmetic.
//!
//! Amounts are held as integer pico-dollars (1e-12 USD). A per-token price
//! quoted in dollars per million tokens with up to six decimals maps onto a
//! whole number of pico-dollars per token, so every ledger charge is exact
//! and sums are reproducible regardless of summation order.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const PICOS_PER_DOLLAR: f64 = 1e12;

/// An amount of money in integer pico-dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i128);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_picos(picos: i128) -> Self {
        Money(picos)
    }

    pub const fn picos(self) -> i128 {
        self.0
    }

    /// Rounds a dollar amount to the nearest pico-dollar.
    pub fn from_dollars(dollars: f64) -> Self {
        Money((dollars * PICOS_PER_DOLLAR).round() as i128)
    }

    pub fn dollars(self) -> f64 {
        self.0 as f64 / PICOS_PER_DOLLAR
    }

    /// Scales by a real factor, rounding to the nearest pico-dollar.
    pub fn scale(self, factor: f64) -> Self {
        Money((self.0 as f64 * factor).round() as i128)
    }

    pub fn ratio(self, other: Money) -> Option<f64> {
        (other.0 != 0).then(|| self.0 as f64 / other.0 as f64)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl Mul<u64> for Money {
    type Output = Money;
    fn mul(self, rhs: u64) -> Money {
        Money(self.0 * rhs as i128)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "${:.6}", self.dollars())
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.dollars())
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(Money::from_dollars)
    }
}

/// Price of one token, quoted in configuration as dollars per million tokens.
///
/// Internally one pico-dollar per token equals one micro-dollar per million
/// tokens, so a quote like `0.04` becomes exactly 40 000 pico-dollars.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TokenPrice(Money);

impl TokenPrice {
    pub fn per_million(dollars: f64) -> Self {
        TokenPrice(Money::from_picos((dollars * 1e6).round() as i128))
    }

    pub fn per_token(self) -> Money {
        self.0
    }

    pub fn dollars_per_million(self) -> f64 {
        self.0.picos() as f64 / 1e6
    }

    pub fn cost(self, tokens: u64) -> Money {
        self.0 * tokens
    }
}

impl Serialize for TokenPrice {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.dollars_per_million())
    }
}

impl<'de> Deserialize<'de> for TokenPrice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        f64::deserialize(d).map(TokenPrice::per_million)
    }
}
