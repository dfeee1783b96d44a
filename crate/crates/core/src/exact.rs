//! Exact-arithmetic helpers: rational parsing, floors, and comparisons of
//! rationals against irrational powers `b^(p/q)` decided without rounding.

use std::cmp::Ordering;

use num_bigint::{BigInt, BigUint, Sign};
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{DimError, Result};
use crate::Rational;

/// Parses `"p/q"` or an integer. Decimal notation is rejected because the
/// floors in the construction recurrences are discontinuous.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    if s.contains(['.', 'e', 'E']) {
        return Err(DimError::domain(format!(
            "'{s}': decimals are not accepted, write the value as p/q"
        )));
    }
    let parse_int = |t: &str| {
        t.trim()
            .parse::<BigInt>()
            .map_err(|_| DimError::domain(format!("'{s}' is not a rational p/q")))
    };
    match s.split_once('/') {
        Some((p, q)) => {
            let q = parse_int(q)?;
            if q.is_zero() {
                return Err(DimError::domain(format!("'{s}' has a zero denominator")));
            }
            Ok(Rational::new(parse_int(p)?, q))
        }
        None => Ok(Rational::from_integer(parse_int(s)?)),
    }
}

pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn rational(p: i64, q: i64) -> Rational {
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Exact value of a finite float.
pub fn from_f64(x: f64) -> Result<Rational> {
    Rational::from_float(x).ok_or_else(|| DimError::domain(format!("{x} is not finite")))
}

pub fn to_f64(r: &Rational) -> f64 {
    match r.to_f64() {
        Some(v) if v.is_finite() && (v != 0.0 || r.is_zero()) => v,
        _ => {
            let sign = if r.is_negative() { -1.0 } else { 1.0 };
            sign * log2_rational(&r.abs()).exp2()
        }
    }
}

pub fn floor(r: &Rational) -> BigInt {
    r.floor().to_integer()
}

pub fn ceil(r: &Rational) -> BigInt {
    r.ceil().to_integer()
}

/// `log2` of a positive integer, accurate to about 1e-15 relative.
pub fn log2_biguint(n: &BigUint) -> f64 {
    let bits = n.bits();
    if bits <= 64 {
        return n.to_u64().map(|v| (v as f64).log2()).unwrap_or(f64::NEG_INFINITY);
    }
    let shift = bits - 64;
    let top = (n >> shift).to_u64().unwrap_or(u64::MAX);
    (top as f64).log2() + shift as f64
}

fn log2_bigint(n: &BigInt) -> f64 {
    log2_biguint(n.magnitude())
}

/// `log2` of a positive rational.
pub fn log2_rational(r: &Rational) -> f64 {
    log2_bigint(r.numer()) - log2_bigint(r.denom())
}

/// `r^e` for a non-negative integer exponent.
pub fn pow(r: &Rational, e: u32) -> Rational {
    num_traits::pow(r.clone(), e as usize)
}

pub fn pow2(e: i64) -> Rational {
    if e >= 0 {
        Rational::from_integer(BigInt::one() << e as usize)
    } else {
        Rational::new(BigInt::one(), BigInt::one() << (-e) as usize)
    }
}

/// Compares the positive rational `x` with `base^exp` exactly, where `base`
/// is a positive rational and `exp` a rational. Decided from logarithms when
/// they are clearly separated, otherwise by the integer identity
/// `x^q <=> base^p` with `exp = p/q`.
pub fn cmp_pow(x: &Rational, base: &Rational, exp: &Rational) -> Ordering {
    assert!(x.is_positive() && base.is_positive(), "cmp_pow needs positive operands");
    let lx = log2_rational(x);
    let rhs = log2_rational(base) * to_f64(exp);
    let margin = 1e-9 * (1.0 + lx.abs().max(rhs.abs()));
    if lx < rhs - margin {
        return Ordering::Less;
    }
    if lx > rhs + margin {
        return Ordering::Greater;
    }
    let q = exp.denom().to_u32().expect("exponent denominator too large");
    let p = exp.numer();
    let lhs = pow(x, q);
    let p_abs = p.magnitude().to_u32().expect("exponent numerator too large");
    let mut right = pow(base, p_abs);
    if p.sign() == Sign::Minus {
        right = right.recip();
    }
    lhs.cmp(&right)
}

/// Compares `x` with `2^exp`.
pub fn cmp_pow2(x: &Rational, exp: &Rational) -> Ordering {
    cmp_pow(x, &Rational::from_integer(BigInt::from(2)), exp)
}

pub fn is_pow2_bounded_above(x: &Rational, exp: &Rational) -> bool {
    cmp_pow2(x, exp) != Ordering::Greater
}

/// Least common multiple of the denominators, used to sum many rationals
/// over a shared denominator.
pub fn common_denominator<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

/// Serde adapter writing rationals as `"p/q"` strings.
pub mod as_string {
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    use crate::Rational;

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&super::format_rational(r))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        super::parse_rational(&text).map_err(D::Error::custom)
    }
}

/// Serde adapter for lists of rationals as `"p/q"` strings.
pub mod vec_as_string {
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    use crate::Rational;

    pub fn serialize<S: Serializer>(v: &[Rational], s: S) -> Result<S::Ok, S::Error> {
        let text: Vec<String> = v.iter().map(super::format_rational).collect();
        text.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
        let text = Vec::<String>::deserialize(d)?;
        text.iter()
            .map(|t| super::parse_rational(t).map_err(D::Error::custom))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rational("2/5").unwrap(), rational(2, 5));
        assert_eq!(parse_rational(" 7 / 10 ").unwrap(), rational(7, 10));
        assert_eq!(parse_rational("3").unwrap(), rational(3, 1));
        assert_eq!(parse_rational("-1/2").unwrap(), rational(-1, 2));
        assert!(parse_rational("0.4").is_err());
        assert!(parse_rational("1/0").is_err());
        assert!(parse_rational("abc").is_err());
        assert_eq!(format_rational(&rational(4, 10)), "2/5");
    }

    #[test]
    fn float_conversion_is_exact() {
        assert_eq!(from_f64(0.375).unwrap(), rational(3, 8));
        assert!(from_f64(f64::INFINITY).is_err());
    }

    #[test]
    fn power_comparisons() {
        let two = rational(2, 1);
        // 2^(7/10 * 10) = 2^7
        assert_eq!(cmp_pow2(&rational(128, 1), &rational(7, 1)), Ordering::Equal);
        assert_eq!(cmp_pow2(&rational(127, 1), &rational(7, 1)), Ordering::Less);
        // 2^(1/2) ~ 1.41421
        assert_eq!(cmp_pow(&rational(141421, 100000), &two, &rational(1, 2)), Ordering::Less);
        assert_eq!(cmp_pow(&rational(141422, 100000), &two, &rational(1, 2)), Ordering::Greater);
        // (1/4)^(1/2) = 1/2 exactly, decided by the integer identity
        assert_eq!(cmp_pow(&rational(1, 2), &rational(1, 4), &rational(1, 2)), Ordering::Equal);
        assert_eq!(cmp_pow2(&rational(1, 8), &rational(-3, 1)), Ordering::Equal);
    }

    #[test]
    fn huge_logs() {
        let n = BigUint::one() << 100_000usize;
        assert!((log2_biguint(&n) - 100_000.0).abs() < 1e-9);
        let r = Rational::new(BigInt::one(), BigInt::one() << 5000usize);
        assert!((log2_rational(&r) + 5000.0).abs() < 1e-9);
        assert_eq!(to_f64(&r), 0.0f64.max((-5000.0f64).exp2()));
    }
}
