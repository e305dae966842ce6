//! Exact currency amounts and rational probabilities.

use std::fmt;
use std::ops::{Add, AddAssign, Sub, SubAssign};
use std::str::FromStr;

use num_integer::Integer;
use serde::{de, Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Minor units per coin.
pub const MICROS_PER_COIN: u64 = 1_000_000;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum UnitError {
    #[error("cannot parse amount {0:?}")]
    Amount(String),
    #[error("cannot parse probability {0:?}")]
    Probability(String),
    #[error("probability must lie in [0, 1], got {0}")]
    ProbabilityRange(String),
}

/// A non-negative coin amount held as an integer count of 10⁻⁶ coins.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Coins(u64);

impl Coins {
    pub const ZERO: Coins = Coins(0);

    pub const fn from_micros(m: u64) -> Coins {
        Coins(m)
    }

    pub const fn from_coins(c: u64) -> Coins {
        Coins(c * MICROS_PER_COIN)
    }

    /// Rounds to the nearest micro-coin.
    pub fn from_f64(c: f64) -> Coins {
        Coins((c * MICROS_PER_COIN as f64).round().max(0.0) as u64)
    }

    pub const fn micros(self) -> u64 {
        self.0
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_COIN as f64
    }

    pub fn checked_sub(self, o: Coins) -> Option<Coins> {
        self.0.checked_sub(o.0).map(Coins)
    }

    pub fn saturating_sub(self, o: Coins) -> Coins {
        Coins(self.0.saturating_sub(o.0))
    }

    pub fn times(self, n: u64) -> Coins {
        Coins(self.0 * n)
    }
}

impl Add for Coins {
    type Output = Coins;
    fn add(self, o: Coins) -> Coins {
        Coins(self.0 + o.0)
    }
}

impl AddAssign for Coins {
    fn add_assign(&mut self, o: Coins) {
        self.0 += o.0;
    }
}

impl Sub for Coins {
    type Output = Coins;
    fn sub(self, o: Coins) -> Coins {
        Coins(self.0 - o.0)
    }
}

impl SubAssign for Coins {
    fn sub_assign(&mut self, o: Coins) {
        self.0 -= o.0;
    }
}

impl std::iter::Sum for Coins {
    fn sum<I: Iterator<Item = Coins>>(iter: I) -> Coins {
        iter.fold(Coins::ZERO, Add::add)
    }
}

impl fmt::Display for Coins {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / MICROS_PER_COIN, self.0 % MICROS_PER_COIN)
    }
}

impl FromStr for Coins {
    type Err = UnitError;

    fn from_str(s: &str) -> Result<Coins, UnitError> {
        let err = || UnitError::Amount(s.to_string());
        let s = s.trim();
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        if whole.is_empty() && frac.is_empty() || frac.len() > 6 {
            return Err(err());
        }
        let w: u64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| err())? };
        let mut f: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        for _ in frac.len()..6 {
            f *= 10;
        }
        w.checked_mul(MICROS_PER_COIN).and_then(|x| x.checked_add(f)).map(Coins).ok_or_else(err)
    }
}

impl Serialize for Coins {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Coins {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Coins, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            S(String),
            U(u64),
            F(f64),
        }
        match Raw::deserialize(d)? {
            Raw::S(s) => s.parse().map_err(de::Error::custom),
            Raw::U(u) => Ok(Coins::from_coins(u)),
            Raw::F(x) if x >= 0.0 => Ok(Coins::from_f64(x)),
            Raw::F(x) => Err(de::Error::custom(format!("negative amount {x}"))),
        }
    }
}

/// A probability held as a reduced fraction so integrality checks are exact.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Probability {
    num: u64,
    den: u64,
}

impl Probability {
    pub fn new(num: u64, den: u64) -> Result<Probability, UnitError> {
        if den == 0 || num > den {
            return Err(UnitError::ProbabilityRange(format!("{num}/{den}")));
        }
        let g = num.gcd(&den);
        Ok(Probability { num: num / g, den: den / g })
    }

    pub fn numer(&self) -> u64 {
        self.num
    }

    pub fn denom(&self) -> u64 {
        self.den
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// `p * n` when it is an integer.
    pub fn times_exact(&self, n: u64) -> Option<u64> {
        let prod = self.num as u128 * n as u128;
        prod.is_multiple_of(self.den as u128).then(|| (prod / self.den as u128) as u64)
    }
}

impl fmt::Display for Probability {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

impl FromStr for Probability {
    type Err = UnitError;

    /// Accepts `a/b` or a decimal such as `0.01`.
    fn from_str(s: &str) -> Result<Probability, UnitError> {
        let s = s.trim();
        let err = || UnitError::Probability(s.to_string());
        if let Some((a, b)) = s.split_once('/') {
            let a = a.trim().parse().map_err(|_| err())?;
            let b = b.trim().parse().map_err(|_| err())?;
            return Probability::new(a, b);
        }
        let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
        if frac.len() > 18 || (whole.is_empty() && frac.is_empty()) {
            return Err(err());
        }
        let den = 10u64.pow(frac.len() as u32);
        let w: u64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| err())? };
        let f: u64 = if frac.is_empty() { 0 } else { frac.parse().map_err(|_| err())? };
        let num = w.checked_mul(den).and_then(|x| x.checked_add(f)).ok_or_else(err)?;
        Probability::new(num, den)
    }
}

impl Serialize for Probability {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for Probability {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Probability, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            S(String),
            F(f64),
        }
        match Raw::deserialize(d)? {
            Raw::S(s) => s.parse().map_err(de::Error::custom),
            // Floats go through their shortest decimal representation.
            Raw::F(x) => format!("{x}").parse().map_err(de::Error::custom),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coins_parse_and_display() {
        assert_eq!("478".parse::<Coins>().unwrap(), Coins::from_coins(478));
        assert_eq!("0.068".parse::<Coins>().unwrap().micros(), 68_000);
        assert_eq!(Coins::from_micros(1_500_000).to_string(), "1.500000");
        assert!("1.0000001".parse::<Coins>().is_err());
        assert!("-1".parse::<Coins>().is_err());
        assert!("".parse::<Coins>().is_err());
    }

    #[test]
    fn probability_forms() {
        let p: Probability = "0.01".parse().unwrap();
        assert_eq!((p.numer(), p.denom()), (1, 100));
        let q: Probability = "1/300".parse().unwrap();
        assert_eq!(q.times_exact(3000), Some(10));
        assert_eq!(q.times_exact(1000), None);
        assert!("1.5".parse::<Probability>().is_err());
        assert!("3/2".parse::<Probability>().is_err());
        let f: Probability = serde_json::from_str("0.25").unwrap();
        assert_eq!(f, Probability::new(1, 4).unwrap());
    }
}
