//! Exact rational arithmetic helpers.
//!
//! Traces, term matrices, and extracted formulas all use arbitrary-precision
//! rationals; floating point appears only at the training boundary.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = BigRational;

pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

pub fn ratio(p: i64, q: i64) -> Rat {
    Rat::new(BigInt::from(p), BigInt::from(q))
}

pub fn to_f64(r: &Rat) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Exact rational from an `f64` (every finite float is a binary rational).
pub fn from_f64(x: f64) -> Option<Rat> {
    Rat::from_float(x)
}

pub fn is_integer(r: &Rat) -> bool {
    r.denom().is_one()
}

/// Prints `p/q`, omitting the denominator when it is 1.
pub fn fmt_rat(r: &Rat) -> String {
    if is_integer(r) {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

/// Parses an integer (`7`, `-3`), a fraction (`5/4`), or an exact decimal
/// (`0.25`) literal.
pub fn parse_rat(s: &str) -> Option<Rat> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().ok()?;
        let q: BigInt = q.trim().parse().ok()?;
        if q.is_zero() {
            return None;
        }
        return Some(Rat::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let neg = int.trim_start().starts_with('-');
        let int: BigInt = if int.is_empty() || int == "-" {
            BigInt::zero()
        } else {
            int.parse().ok()?
        };
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let num: BigInt = frac.parse().ok()?;
        let den = BigInt::from(10u32).pow(frac.len() as u32);
        let frac_part = Rat::new(num, den);
        let int_part = Rat::from_integer(int);
        return Some(if neg {
            int_part - frac_part
        } else {
            int_part + frac_part
        });
    }
    let p: BigInt = s.parse().ok()?;
    Some(Rat::from_integer(p))
}

/// Non-negative gcd; `gcd(0, 0) = 0`. Defined on integers only.
pub fn int_gcd(a: &BigInt, b: &BigInt) -> BigInt {
    num_integer::Integer::gcd(a, b)
}

/// Euclidean remainder matching SMT-LIB `mod`: the result is in `[0, |b|)`.
pub fn int_mod(a: &BigInt, b: &BigInt) -> Option<BigInt> {
    if b.is_zero() {
        return None;
    }
    let r = a % b;
    Some(if r.is_negative() { r + b.abs() } else { r })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_literal_forms() {
        assert_eq!(parse_rat("7").unwrap(), rat(7));
        assert_eq!(parse_rat("-3").unwrap(), rat(-3));
        assert_eq!(parse_rat("5/4").unwrap(), ratio(5, 4));
        assert_eq!(parse_rat("0.25").unwrap(), ratio(1, 4));
        assert_eq!(parse_rat("-0.6").unwrap(), ratio(-3, 5));
        assert_eq!(parse_rat("1.50").unwrap(), ratio(3, 2));
        assert!(parse_rat("1/0").is_none());
        assert!(parse_rat("abc").is_none());
    }

    #[test]
    fn formats_integers_without_denominator() {
        assert_eq!(fmt_rat(&rat(12)), "12");
        assert_eq!(fmt_rat(&ratio(-3, 4)), "-3/4");
    }

    #[test]
    fn euclidean_mod_is_nonnegative() {
        let m = |a: i64, b: i64| int_mod(&BigInt::from(a), &BigInt::from(b)).unwrap();
        assert_eq!(m(7, 3), BigInt::from(1));
        assert_eq!(m(-7, 3), BigInt::from(2));
        assert_eq!(m(7, -3), BigInt::from(1));
        assert!(int_mod(&BigInt::from(1), &BigInt::from(0)).is_none());
    }
}
