//! Exact rational scalars used by the abstract model.

use std::fmt;

use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number. All abstract positions, speeds and accelerations
/// are kept in this type so that witness traces replay bit-for-bit.
pub type Q = Ratio<i64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid rational literal `{0}`")]
pub struct ParseQError(pub String);

/// Shorthand constructor for integer-valued rationals.
pub fn q(n: i64) -> Q {
    Q::from_integer(n)
}

/// Shorthand constructor for `num / den`.
pub fn qr(num: i64, den: i64) -> Q {
    Q::new(num, den)
}

/// Parses `p/q`, an integer, or a finite decimal literal such as `-4.6`.
/// Decimals are converted exactly (`5.6` becomes `28/5`).
pub fn parse_q(text: &str) -> Result<Q, ParseQError> {
    let s = text.trim();
    let err = || ParseQError(text.to_string());
    if s.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: i64 = n.trim().parse().map_err(|_| err())?;
        let d: i64 = d.trim().parse().map_err(|_| err())?;
        if d == 0 {
            return Err(err());
        }
        return Ok(Q::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = body.split_once('.').unwrap_or((body, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    if frac_part.len() > 12 {
        return Err(err());
    }
    let digits = format!("{int_part}{frac_part}");
    let numer: i64 = if digits.is_empty() { 0 } else { digits.parse().map_err(|_| err())? };
    let denom = 10i64.pow(frac_part.len() as u32);
    let v = Q::new(numer, denom);
    Ok(if neg { -v } else { v })
}

/// Converts a finite `f64` to the rational denoted by its shortest decimal
/// representation, so `5.6_f64` becomes exactly `28/5`.
pub fn q_from_f64(x: f64) -> Result<Q, ParseQError> {
    if !x.is_finite() {
        return Err(ParseQError(x.to_string()));
    }
    parse_q(&format!("{x}"))
}

/// Renders as `p/q`, always with an explicit denominator.
pub fn fmt_pq(v: &Q) -> String {
    format!("{}/{}", v.numer(), v.denom())
}

/// Fixed-point decimal with at least two fractional digits. Terminating
/// values are printed exactly (`2.6` -> `2.60`, `1.995` -> `1.995`); others
/// are rounded half away from zero to nine digits.
pub fn fmt_decimal(v: &Q) -> String {
    let (mut d, mut twos, mut fives) = (*v.denom(), 0u32, 0u32);
    while d % 2 == 0 {
        d /= 2;
        twos += 1;
    }
    while d % 5 == 0 {
        d /= 5;
        fives += 1;
    }
    let digits = if d == 1 { twos.max(fives).max(2) } else { 9 };
    let scale = 10i128.pow(digits);
    let n = *v.numer() as i128 * scale;
    let den = *v.denom() as i128;
    let mut scaled = n / den;
    let rem = n % den;
    if rem.abs() * 2 >= den {
        scaled += n.signum();
    }
    let neg = scaled < 0;
    let mag = scaled.unsigned_abs();
    let int = mag / scale as u128;
    let frac = mag % scale as u128;
    format!("{}{int}.{frac:0width$}", if neg { "-" } else { "" }, width = digits as usize)
}

pub fn to_f64(v: &Q) -> f64 {
    v.to_f64().unwrap_or(f64::NAN)
}

/// `floor(v * scale)` as an integer; used for integer priority keys.
pub fn floor_scaled(v: &Q, scale: i64) -> i64 {
    (*v * scale).floor().to_integer()
}

pub fn abs(v: Q) -> Q {
    if v < Q::zero() {
        -v
    } else {
        v
    }
}

/// Serde adapter writing a [`Q`] as a `"p/q"` string.
pub mod pq_string {
    use super::{fmt_pq, parse_q, Q};
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Q, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&fmt_pq(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Q, D::Error> {
        let s = String::deserialize(d)?;
        parse_q(&s).map_err(D::Error::custom)
    }
}

/// Wrapper that displays a rational in decimal when it terminates, `p/q`
/// otherwise. Only used for human-facing messages.
pub struct Decimal<'a>(pub &'a Q);

impl fmt::Display for Decimal<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut d = *self.0.denom();
        while d % 2 == 0 {
            d /= 2;
        }
        while d % 5 == 0 {
            d /= 5;
        }
        if d == 1 {
            write!(f, "{}", to_f64(self.0))
        } else {
            write!(f, "{}", fmt_pq(self.0))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!(parse_q("5.6").unwrap(), qr(28, 5));
        assert_eq!(parse_q("-4.6").unwrap(), qr(-23, 5));
        assert_eq!(parse_q("0.95").unwrap(), qr(19, 20));
        assert_eq!(parse_q("12").unwrap(), q(12));
        assert_eq!(parse_q(".5").unwrap(), qr(1, 2));
        assert_eq!(parse_q("7/3").unwrap(), qr(7, 3));
    }

    #[test]
    fn rejects_garbage() {
        for bad in ["", "abc", "1/0", "1.2.3", "--1", "1e5", "."] {
            assert!(parse_q(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn pq_always_has_denominator() {
        assert_eq!(fmt_pq(&q(5)), "5/1");
        assert_eq!(fmt_pq(&qr(-23, 5)), "-23/5");
    }

    #[test]
    fn f64_conversion_uses_shortest_decimal() {
        assert_eq!(q_from_f64(5.6).unwrap(), qr(28, 5));
        assert_eq!(q_from_f64(-3.5).unwrap(), qr(-7, 2));
    }

    #[test]
    fn fixed_decimals() {
        assert_eq!(fmt_decimal(&qr(13, 5)), "2.60");
        assert_eq!(fmt_decimal(&q(12)), "12.00");
        assert_eq!(fmt_decimal(&qr(-7, 2)), "-3.50");
        assert_eq!(fmt_decimal(&qr(399, 200)), "1.995");
        assert_eq!(fmt_decimal(&qr(1, 3)), "0.333333333");
        assert_eq!(fmt_decimal(&qr(-2, 3)), "-0.666666667");
        assert_eq!(fmt_decimal(&qr(-1, 200)), "-0.005");
        for v in [qr(13, 5), qr(-7, 2), qr(399, 200), qr(1, 64)] {
            assert_eq!(parse_q(&fmt_decimal(&v)).unwrap(), v);
        }
    }

    #[test]
    fn floor_scaled_rounds_down() {
        assert_eq!(floor_scaled(&qr(19, 20), 1000), 950);
        assert_eq!(floor_scaled(&qr(-1, 3), 1000), -334);
    }
}
