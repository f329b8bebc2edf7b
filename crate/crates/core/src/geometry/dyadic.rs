use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// An exact dyadic rational `num / 2^exp`.
///
/// Values are kept normalised (`num` odd unless `exp == 0`), so structural
/// equality is numeric equality.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Dyadic {
    num: i64,
    exp: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, exp: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, exp: 0 };

    pub fn new(num: i64, exp: u32) -> Self {
        let mut d = Dyadic { num, exp };
        d.normalise();
        d
    }

    pub fn int(v: i64) -> Self {
        Dyadic { num: v, exp: 0 }
    }

    /// `2^e` for any signed exponent.
    pub fn pow2(e: i32) -> Self {
        if e >= 0 {
            Dyadic { num: 1i64 << e, exp: 0 }
        } else {
            Dyadic { num: 1, exp: (-e) as u32 }
        }
    }

    fn normalise(&mut self) {
        if self.num == 0 {
            self.exp = 0;
            return;
        }
        let tz = self.num.trailing_zeros().min(self.exp);
        self.num >>= tz;
        self.exp -= tz;
    }

    pub fn num(self) -> i64 {
        self.num
    }

    pub fn exp(self) -> u32 {
        self.exp
    }

    pub fn to_f64(self) -> f64 {
        self.num as f64 / 2f64.powi(self.exp as i32)
    }

    pub fn is_zero(self) -> bool {
        self.num == 0
    }

    pub fn is_positive(self) -> bool {
        self.num > 0
    }

    /// True when the value is an integer multiple of `2^-n`.
    pub fn is_snapped(self, n: u8) -> bool {
        self.exp <= n as u32
    }

    /// The value in units of `2^-n`, if that is an integer.
    pub fn lattice_units(self, n: u8) -> Option<i64> {
        if !self.is_snapped(n) {
            return None;
        }
        self.num.checked_mul(1i64 << (n as u32 - self.exp))
    }

    /// As [`Dyadic::lattice_units`] but reporting which quantity failed.
    pub fn snapped_units(self, n: u8, what: &str) -> Result<i64> {
        self.lattice_units(n).ok_or_else(|| Error::NotSnapped {
            what: format!("{what} = {self}"),
            n,
        })
    }

    /// The value in units of `2^-bits`; caller guarantees `bits >= exp`.
    pub(crate) fn scaled(self, bits: u32) -> i128 {
        debug_assert!(bits >= self.exp);
        (self.num as i128) << (bits - self.exp)
    }

    fn align(self, other: Dyadic) -> (i128, i128, u32) {
        let e = self.exp.max(other.exp);
        (self.scaled(e), other.scaled(e), e)
    }

    fn from_wide(v: i128, exp: u32) -> Self {
        let mut v = v;
        let mut exp = exp;
        while exp > 0 && v % 2 == 0 && v != 0 {
            v /= 2;
            exp -= 1;
        }
        if v == 0 {
            return Dyadic::ZERO;
        }
        let num = i64::try_from(v).expect("dyadic numerator overflow");
        Dyadic { num, exp }
    }

    pub fn add(self, other: Dyadic) -> Dyadic {
        let (a, b, e) = self.align(other);
        Dyadic::from_wide(a + b, e)
    }

    pub fn sub(self, other: Dyadic) -> Dyadic {
        let (a, b, e) = self.align(other);
        Dyadic::from_wide(a - b, e)
    }

    pub fn mul(self, other: Dyadic) -> Dyadic {
        Dyadic::from_wide(self.num as i128 * other.num as i128, self.exp + other.exp)
    }

    pub fn mul_int(self, k: i64) -> Dyadic {
        Dyadic::from_wide(self.num as i128 * k as i128, self.exp)
    }

    pub fn half(self) -> Dyadic {
        Dyadic::new(self.num, self.exp + 1)
    }

    pub fn neg(self) -> Dyadic {
        Dyadic { num: -self.num, exp: self.exp }
    }

    pub fn abs(self) -> Dyadic {
        Dyadic { num: self.num.abs(), exp: self.exp }
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = self.align(*other);
        a.cmp(&b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exp == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, 1u128 << self.exp)
        }
    }
}

impl From<Dyadic> for String {
    fn from(d: Dyadic) -> String {
        d.to_string()
    }
}

impl TryFrom<String> for Dyadic {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for Dyadic {
    type Err = Error;

    /// Accepts `p`, `p/q` with `q` a power of two, `2^k`, and finite
    /// decimals whose value is dyadic (`0.375`).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || Error::InvalidParameter(format!("not a dyadic rational: {s:?}"));
        if let Some(e) = s.strip_prefix("2^") {
            let e: i32 = e.trim_matches(|c| c == '(' || c == ')').parse().map_err(|_| bad())?;
            if e.abs() > 62 {
                return Err(bad());
            }
            return Ok(Dyadic::pow2(e));
        }
        if let Some((p, q)) = s.split_once('/') {
            let p: i64 = p.trim().parse().map_err(|_| bad())?;
            let q: u64 = q.trim().parse().map_err(|_| bad())?;
            if q == 0 || !q.is_power_of_two() {
                return Err(bad());
            }
            return Ok(Dyadic::new(p, q.trailing_zeros()));
        }
        if let Some((ip, fp)) = s.split_once('.') {
            if fp.is_empty() || fp.len() > 18 || !fp.bytes().all(|b| b.is_ascii_digit()) {
                return Err(bad());
            }
            let neg = ip.starts_with('-');
            let ip_abs: i128 = ip.trim_start_matches(['-', '+']).parse::<i128>().or_else(|e| {
                if ip.trim_start_matches(['-', '+']).is_empty() {
                    Ok(0)
                } else {
                    Err(e)
                }
            })
            .map_err(|_| bad())?;
            let d = fp.len() as u32;
            let frac: i128 = fp.parse().map_err(|_| bad())?;
            let scale = 10i128.pow(d);
            let mut total = ip_abs * scale + frac;
            // value = total / (2^d 5^d); dyadic iff 5^d divides total
            let five = 5i128.pow(d);
            if total % five != 0 {
                return Err(bad());
            }
            total /= five;
            if neg {
                total = -total;
            }
            return Ok(Dyadic::from_wide(total, d));
        }
        let p: i64 = s.parse().map_err(|_| bad())?;
        Ok(Dyadic::int(p))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_forms() {
        assert_eq!("3/8".parse::<Dyadic>().unwrap(), Dyadic::new(3, 3));
        assert_eq!("0.375".parse::<Dyadic>().unwrap(), Dyadic::new(3, 3));
        assert_eq!("-0.5".parse::<Dyadic>().unwrap(), Dyadic::new(-1, 1));
        assert_eq!("2^-4".parse::<Dyadic>().unwrap(), Dyadic::new(1, 4));
        assert_eq!("12".parse::<Dyadic>().unwrap(), Dyadic::int(12));
        assert!("0.1".parse::<Dyadic>().is_err());
        assert!("1/3".parse::<Dyadic>().is_err());
    }

    #[test]
    fn normalisation_and_order() {
        assert_eq!(Dyadic::new(4, 3), Dyadic::new(1, 1));
        assert!(Dyadic::new(3, 3) < Dyadic::new(1, 1));
        assert_eq!(Dyadic::new(1, 2).add(Dyadic::new(1, 2)), Dyadic::new(1, 1));
        assert_eq!(Dyadic::new(3, 2).lattice_units(4), Some(12));
        assert_eq!(Dyadic::new(1, 5).lattice_units(4), None);
    }
}
