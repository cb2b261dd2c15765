//! Exact rational numbers used for every score, aggregate and share.
//!
//! Values serialize as strings: integers as `"3"`, everything else as a
//! reduced fraction `"2/5"`. Deserialization additionally accepts decimal
//! strings (`"0.4"`) and JSON numbers, which are read through their shortest
//! decimal form so `0.2` means exactly one fifth.

use std::fmt;
use std::str::FromStr;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserializer, Serializer};

pub type Rational = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("not a rational number: {0:?}")]
pub struct ParseRationalError(pub String);

pub fn int(n: i64) -> Rational {
    Rational::from_integer(n)
}

pub fn frac(numer: i64, denom: i64) -> Rational {
    Rational::new(numer, denom)
}

/// Parses `"p/q"`, `"-3"`, or a finite decimal such as `"0.25"`.
pub fn parse(text: &str) -> Result<Rational, ParseRationalError> {
    let err = || ParseRationalError(text.to_string());
    let t = text.trim();
    if t.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = i64::from_str(n.trim()).map_err(|_| err())?;
        let d = i64::from_str(d.trim()).map_err(|_| err())?;
        if d == 0 {
            return Err(err());
        }
        return Ok(Rational::new(n, d));
    }
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (whole, fractional) = match body.split_once('.') {
        Some((w, f)) => (w, f),
        None => (body, ""),
    };
    if whole.is_empty() && fractional.is_empty() {
        return Err(err());
    }
    if !whole.chars().all(|c| c.is_ascii_digit()) || !fractional.chars().all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    if fractional.len() > 15 {
        return Err(err());
    }
    let scale = 10i64.checked_pow(fractional.len() as u32).ok_or_else(err)?;
    let whole: i64 = if whole.is_empty() { 0 } else { whole.parse().map_err(|_| err())? };
    let fractional: i64 = if fractional.is_empty() { 0 } else { fractional.parse().map_err(|_| err())? };
    let numer = whole
        .checked_mul(scale)
        .and_then(|w| w.checked_add(fractional))
        .ok_or_else(err)?;
    let value = Rational::new(numer, scale);
    Ok(if neg { -value } else { value })
}

/// Canonical text: `"3"` or `"2/5"`.
pub fn to_fraction_string(value: &Rational) -> String {
    if value.is_integer() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// Decimal rendering rounded half away from zero to `places` digits.
pub fn to_decimal_string(value: &Rational, places: u32) -> String {
    let scale = 10i128.pow(places);
    let numer = *value.numer() as i128 * scale;
    let denom = *value.denom() as i128;
    let (q, r) = numer.div_rem(&denom);
    let rounded = if (r.abs() * 2) >= denom {
        q + numer.signum()
    } else {
        q
    };
    let negative = rounded < 0;
    let magnitude = rounded.unsigned_abs();
    let scale = scale as u128;
    let mut out = String::new();
    if negative {
        out.push('-');
    }
    out.push_str(&(magnitude / scale).to_string());
    if places > 0 {
        out.push('.');
        out.push_str(&format!("{:0width$}", magnitude % scale, width = places as usize));
    }
    out
}

pub fn to_f64(value: &Rational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn is_nonnegative(value: &Rational) -> bool {
    !value.is_negative()
}

pub fn mean(values: &[Rational]) -> Rational {
    if values.is_empty() {
        return Rational::zero();
    }
    values.iter().copied().sum::<Rational>() / int(values.len() as i64)
}

struct RationalVisitor;

impl<'de> Visitor<'de> for RationalVisitor {
    type Value = Rational;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a rational as \"p/q\", a decimal string, or a number")
    }

    fn visit_str<E: de::Error>(self, v: &str) -> Result<Rational, E> {
        parse(v).map_err(E::custom)
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> Result<Rational, E> {
        Ok(int(v))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> Result<Rational, E> {
        i64::try_from(v).map(int).map_err(E::custom)
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> Result<Rational, E> {
        if !v.is_finite() {
            return Err(E::custom("non-finite number"));
        }
        // `Display` for f64 yields the shortest string that round-trips.
        parse(&v.to_string()).map_err(E::custom)
    }
}

/// `#[serde(with = "rational::serde_str")]` for a single value.
pub mod serde_str {
    use super::*;

    pub fn serialize<S: Serializer>(value: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&to_fraction_string(value))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        d.deserialize_any(RationalVisitor)
    }
}

/// Wrapper so collections of rationals can reuse the string codec.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Exact(pub Rational);

impl serde::Serialize for Exact {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        serde_str::serialize(&self.0, s)
    }
}

impl<'de> serde::Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        serde_str::deserialize(d).map(Exact)
    }
}

pub mod serde_vec {
    use super::*;
    use serde::{Deserialize, Serialize};

    pub fn serialize<S: Serializer>(values: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let wrapped: Vec<Exact> = values.iter().copied().map(Exact).collect();
        wrapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        Vec::<Exact>::deserialize(d).map(|v| v.into_iter().map(|e| e.0).collect())
    }
}

pub mod serde_opt_vec {
    use super::*;
    use serde::{Deserialize, Serialize};

    pub fn serialize<S: Serializer>(values: &Option<Vec<Rational>>, s: S) -> Result<S::Ok, S::Error> {
        let wrapped: Option<Vec<Exact>> = values
            .as_ref()
            .map(|v| v.iter().copied().map(Exact).collect());
        wrapped.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Vec<Rational>>, D::Error> {
        Option::<Vec<Exact>>::deserialize(d)
            .map(|v| v.map(|v| v.into_iter().map(|e| e.0).collect()))
    }
}

pub mod serde_map {
    use std::collections::BTreeMap;

    use super::*;
    use serde::{Deserialize, Serialize};

    pub fn serialize<K, S>(values: &BTreeMap<K, Rational>, s: S) -> Result<S::Ok, S::Error>
    where
        K: Serialize + Ord + Clone,
        S: Serializer,
    {
        let wrapped: BTreeMap<K, Exact> = values.iter().map(|(k, v)| (k.clone(), Exact(*v))).collect();
        wrapped.serialize(s)
    }

    pub fn deserialize<'de, K, D>(d: D) -> Result<BTreeMap<K, Rational>, D::Error>
    where
        K: Deserialize<'de> + Ord,
        D: Deserializer<'de>,
    {
        BTreeMap::<K, Exact>::deserialize(d).map(|m| m.into_iter().map(|(k, v)| (k, v.0)).collect())
    }
}
