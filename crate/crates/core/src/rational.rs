//! Exact rational parsing and formatting helpers.
//!
//! Every measure, width and tolerance in the crate is a `BigRational`. The
//! textual form is always `num/den`; decimal notation is rejected so that no
//! value ever passes through a binary float.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Parses `"num/den"` (optional leading `-` on the numerator) into a reduced
/// rational. The denominator must be a positive integer.
pub fn parse_ratio(text: &str) -> Result<BigRational> {
    let text = text.trim();
    let (num, den) = text
        .split_once('/')
        .ok_or_else(|| Error::Parse(format!("expected num/den, got {text:?}")))?;
    let num = parse_int(num.trim())?;
    let den = parse_int(den.trim())?;
    if !den.is_positive() {
        return Err(Error::Parse(format!("denominator must be positive in {text:?}")));
    }
    Ok(BigRational::new(num, den))
}

fn parse_int(digits: &str) -> Result<BigInt> {
    let body = digits.strip_prefix('-').unwrap_or(digits);
    if body.is_empty() || !body.bytes().all(|b| b.is_ascii_digit()) {
        return Err(Error::Parse(format!("not an integer: {digits:?}")));
    }
    digits
        .parse::<BigInt>()
        .map_err(|e| Error::Parse(format!("{digits:?}: {e}")))
}

/// `num/den` in lowest terms.
pub fn format_ratio(value: &BigRational) -> String {
    format!("{}/{}", value.numer(), value.denom())
}

/// Fixed-point decimal rendering for display columns. Computed from the exact
/// value by integer division, so the digits are deterministic.
pub fn to_decimal(value: &BigRational, digits: usize) -> String {
    let negative = value.is_negative();
    let abs = value.abs();
    let scale = num_traits::pow(BigInt::from(10u32), digits);
    let scaled: BigInt = (abs.numer() * &scale * 2 + abs.denom()) / (abs.denom() * 2);
    let int_part = &scaled / &scale;
    let frac_part = &scaled % &scale;
    let mut out = String::new();
    if negative && !scaled.is_zero() {
        out.push('-');
    }
    out.push_str(&int_part.to_string());
    if digits > 0 {
        out.push('.');
        out.push_str(&format!("{:0>width$}", frac_part.to_string(), width = digits));
    }
    out
}

/// Lossy conversion for human-facing summaries only.
pub fn approx_f64(value: &BigRational) -> f64 {
    value.to_f64().unwrap_or(f64::NAN)
}

pub fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_reduced() {
        assert_eq!(parse_ratio("2/100").unwrap(), ratio(1, 50));
        assert_eq!(parse_ratio(" -3/9 ").unwrap(), ratio(-1, 3));
    }

    #[test]
    fn rejects_decimal_and_garbage() {
        for bad in ["0.02", "1/0", "1/-2", "/3", "3/", "a/b", "1/2/3", "", "+1/2"] {
            assert!(parse_ratio(bad).is_err(), "{bad:?} accepted");
        }
    }

    #[test]
    fn decimal_rendering_rounds_half_up() {
        assert_eq!(to_decimal(&ratio(2, 3), 12), "0.666666666667");
        assert_eq!(to_decimal(&ratio(1, 8), 2), "0.13");
        assert_eq!(to_decimal(&ratio(-1, 3), 3), "-0.333");
        assert_eq!(to_decimal(&ratio(7, 1), 0), "7");
    }
}
