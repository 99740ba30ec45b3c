//! Exact-rational normalization and equivalence for math answers.
//!
//! Candidates and gold answers are compared as exact rationals; there is
//! no floating-point tolerance anywhere in this module. Normalization
//! applies, in order:
//!
//!   N1  strip surrounding whitespace, `<answer>` tags, `\boxed{}`, `$`,
//!       and a trailing period, repeating until a fixed point
//!   N2  remove commas sitting between two digits
//!   N3  strip a leading `+` and leading zeros (keeping a lone `0`)
//!   N4  parse as integer, finite decimal, or `a/b` fraction
//!   N5  a trailing `%` divides the parsed value by 100
//!
//! Symbolic forms (`2\sqrt{2}`, `\frac{1}{2}`) do not normalize and are
//! reported as format errors.

use num::bigint::BigInt;
use num::rational::BigRational;
use num::{One, Signed, Zero};

/// Failure to interpret a payload as an exact rational.
///
/// Carries the residue after rules N1-N3, which is what grading reports
/// as the verdict detail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NormalizeError {
    pub residue: String,
}

impl std::fmt::Display for NormalizeError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "not a numeric answer: {:?}", self.residue)
    }
}

impl std::error::Error for NormalizeError {}

/// Normalizes a raw math payload into an exact rational.
pub fn normalize_math_answer(raw: &str) -> Result<BigRational, NormalizeError> {
    let mut s = raw.to_string();
    // N1: unwrap decorations until stable.
    loop {
        let before = s.clone();
        s = s.trim().to_string();
        if let Some(inner) = s
            .strip_prefix("<answer>")
            .and_then(|rest| rest.strip_suffix("</answer>"))
        {
            s = inner.to_string();
        }
        if let Some(inner) = s
            .strip_prefix("\\boxed{")
            .and_then(|rest| rest.strip_suffix('}'))
        {
            if braces_balanced(inner) {
                s = inner.to_string();
            }
        }
        if let Some(rest) = s.strip_prefix('$') {
            s = rest.to_string();
        }
        if let Some(rest) = s.strip_suffix('$') {
            s = rest.to_string();
        }
        if let Some(rest) = s.strip_suffix('.') {
            s = rest.to_string();
        }
        if s == before {
            break;
        }
    }
    // N2: thousands separators.
    let chars: Vec<char> = s.chars().collect();
    let mut cleaned = String::with_capacity(s.len());
    for (i, &c) in chars.iter().enumerate() {
        let between_digits = c == ','
            && i > 0
            && i + 1 < chars.len()
            && chars[i - 1].is_ascii_digit()
            && chars[i + 1].is_ascii_digit();
        if !between_digits {
            cleaned.push(c);
        }
    }
    s = cleaned;
    // N3: leading + and leading zeros.
    if let Some(rest) = s.strip_prefix('+') {
        s = rest.to_string();
    }
    let negative = s.starts_with('-');
    let mut body = if negative { s[1..].to_string() } else { s };
    while body.len() > 1
        && body.starts_with('0')
        && body.as_bytes().get(1).is_some_and(|b| b.is_ascii_digit())
    {
        body.remove(0);
    }
    let residue = if negative {
        format!("-{body}")
    } else {
        body.clone()
    };
    // N4/N5: parse, with % meaning a division by 100.
    let (to_parse, percent) = match residue.strip_suffix('%') {
        Some(rest) => (rest, true),
        None => (residue.as_str(), false),
    };
    let value = parse_number(to_parse).ok_or(NormalizeError {
        residue: residue.clone(),
    })?;
    if percent {
        Ok(value / BigRational::from_integer(BigInt::from(100)))
    } else {
        Ok(value)
    }
}

fn braces_balanced(text: &str) -> bool {
    let mut depth: i64 = 0;
    for c in text.chars() {
        match c {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth < 0 {
                    return false;
                }
            }
            _ => {}
        }
    }
    depth == 0
}

fn parse_number(s: &str) -> Option<BigRational> {
    if s.is_empty() {
        return None;
    }
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => match s.strip_prefix('+') {
            Some(rest) => (false, rest),
            None => (false, s),
        },
    };
    let unsigned = parse_unsigned(digits)?;
    Some(if negative { -unsigned } else { unsigned })
}

fn parse_unsigned(s: &str) -> Option<BigRational> {
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        // Numerator sign was already consumed; the denominator may carry one.
        if num.is_empty() || !num.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let (den_neg, den_digits) = match den.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, den.strip_prefix('+').unwrap_or(den)),
        };
        if den_digits.is_empty() || !den_digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let n: BigInt = num.parse().ok()?;
        let d: BigInt = den_digits.parse().ok()?;
        if d.is_zero() {
            return None;
        }
        let value = BigRational::new(n, d);
        return Some(if den_neg { -value } else { value });
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        if !int_part.is_empty() && !int_part.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let int_value: BigInt = if int_part.is_empty() {
            BigInt::zero()
        } else {
            int_part.parse().ok()?
        };
        let frac_value: BigInt = frac_part.parse().ok()?;
        let scale = BigInt::from(10u32).pow(frac_part.len() as u32);
        return Some(BigRational::new(int_value * &scale + frac_value, scale));
    }
    if s.bytes().all(|b| b.is_ascii_digit()) {
        let n: BigInt = s.parse().ok()?;
        return Some(BigRational::from_integer(n));
    }
    None
}

/// Exact equality of two normalized rationals.
pub fn math_equivalent(a: &BigRational, b: &BigRational) -> bool {
    a == b
}

/// Canonical rendering: `p` for integers, `p/q` otherwise (reduced form,
/// positive denominator).
pub fn render_rational(value: &BigRational) -> String {
    if value.denom().is_one() {
        value.numer().to_string()
    } else {
        format!("{}/{}", value.numer(), value.denom())
    }
}

/// True when the value is an integer inside `[0, 999]`.
pub fn in_aime_range(value: &BigRational) -> bool {
    value.denom().is_one() && !value.is_negative() && value.numer() <= &BigInt::from(999)
}
