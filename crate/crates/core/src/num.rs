//! Exact rationals for probabilities and costs, plus time units.

use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{ToPrimitive, Zero};
use serde::Serialize;

/// Exact rational used for probabilities, costs and thresholds.
pub type Rational = Ratio<i64>;

/// Parses `12`, `0.25`, `.5` or `1/3` into an exact rational.
pub fn parse_rational(text: &str) -> Option<Rational> {
    let text = text.trim();
    if let Some((num, den)) = text.split_once('/') {
        let num: i64 = num.trim().parse().ok()?;
        let den: i64 = den.trim().parse().ok()?;
        if den == 0 {
            return None;
        }
        return Some(Rational::new(num, den));
    }
    let (negative, body) = match text.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, text),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    if frac_part.len() > 17 {
        return None;
    }
    let int: i64 = if int_part.is_empty() { 0 } else { int_part.parse().ok()? };
    let scale = 10i64.checked_pow(frac_part.len() as u32)?;
    let frac: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().ok()? };
    let num = int.checked_mul(scale)?.checked_add(frac)?;
    let r = Rational::new(num, scale);
    Some(if negative { -r } else { r })
}

/// Prints a rational as a terminating decimal when one exists, `n/d`
/// otherwise. Round-trips through [`parse_rational`].
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        return r.numer().to_string();
    }
    let mut den = *r.denom();
    let (mut twos, mut fives) = (0u32, 0u32);
    while den % 2 == 0 {
        den /= 2;
        twos += 1;
    }
    while den % 5 == 0 {
        den /= 5;
        fives += 1;
    }
    if den != 1 {
        return format!("{}/{}", r.numer(), r.denom());
    }
    let digits = twos.max(fives);
    let Some(scale) = 10i64.checked_pow(digits) else {
        return format!("{}/{}", r.numer(), r.denom());
    };
    let Some(scaled) = r.numer().checked_mul(scale / r.denom()) else {
        return format!("{}/{}", r.numer(), r.denom());
    };
    let sign = if scaled < 0 { "-" } else { "" };
    let scaled = scaled.unsigned_abs();
    let scale = scale as u64;
    let frac = format!("{:0width$}", scaled % scale, width = digits as usize);
    format!("{sign}{}.{}", scaled / scale, frac.trim_end_matches('0'))
}

pub fn to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

pub fn is_probability(r: &Rational) -> bool {
    *r > Rational::zero() && *r <= Rational::from_integer(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum TimeUnit {
    #[serde(rename = "d")]
    Day,
    #[serde(rename = "h")]
    Hour,
    #[serde(rename = "s")]
    Second,
    #[serde(rename = "ms")]
    Millisecond,
    #[serde(rename = "us")]
    Microsecond,
}

impl TimeUnit {
    /// Largest first.
    pub const ALL: [TimeUnit; 5] =
        [TimeUnit::Day, TimeUnit::Hour, TimeUnit::Second, TimeUnit::Millisecond, TimeUnit::Microsecond];

    pub fn micros(self) -> u128 {
        match self {
            TimeUnit::Day => 86_400_000_000,
            TimeUnit::Hour => 3_600_000_000,
            TimeUnit::Second => 1_000_000,
            TimeUnit::Millisecond => 1_000,
            TimeUnit::Microsecond => 1,
        }
    }

    pub fn suffix(self) -> &'static str {
        match self {
            TimeUnit::Day => "d",
            TimeUnit::Hour => "h",
            TimeUnit::Second => "s",
            TimeUnit::Millisecond => "ms",
            TimeUnit::Microsecond => "us",
        }
    }

    pub fn from_suffix(s: &str) -> Option<TimeUnit> {
        Some(match s {
            "d" => TimeUnit::Day,
            "h" => TimeUnit::Hour,
            "s" => TimeUnit::Second,
            "ms" => TimeUnit::Millisecond,
            "us" | "µs" | "μs" => TimeUnit::Microsecond,
            _ => return None,
        })
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.suffix())
    }
}

/// A positive duration such as `365d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Duration {
    pub value: u64,
    pub unit: TimeUnit,
}

impl Duration {
    pub fn new(value: u64, unit: TimeUnit) -> Self {
        Duration { value, unit }
    }

    pub fn micros(&self) -> u128 {
        self.value as u128 * self.unit.micros()
    }

    /// Number of `base` ticks, if the duration is a whole multiple of it.
    pub fn ticks(&self, base: TimeUnit) -> Option<u64> {
        let (q, r) = self.micros().div_rem(&base.micros());
        if r == 0 {
            u64::try_from(q).ok()
        } else {
            None
        }
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", self.value, self.unit)
    }
}

/// The largest unit that divides every duration.
pub fn common_base(durations: &[Duration]) -> TimeUnit {
    TimeUnit::ALL
        .into_iter()
        .find(|unit| durations.iter().all(|d| d.micros() % unit.micros() == 0))
        .unwrap_or(TimeUnit::Microsecond)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(parse_rational("0.6"), Some(Rational::new(3, 5)));
        assert_eq!(parse_rational("2"), Some(Rational::from_integer(2)));
        assert_eq!(parse_rational(".5"), Some(Rational::new(1, 2)));
        assert_eq!(parse_rational("1/3"), Some(Rational::new(1, 3)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("x"), None);
        assert_eq!(parse_rational("."), None);
    }

    #[test]
    fn formats_terminating_decimals() {
        assert_eq!(format_rational(&Rational::new(11, 10)), "1.1");
        assert_eq!(format_rational(&Rational::new(1, 8)), "0.125");
        assert_eq!(format_rational(&Rational::new(-3, 4)), "-0.75");
        assert_eq!(format_rational(&Rational::new(1, 3)), "1/3");
        assert_eq!(format_rational(&Rational::new(998, 1000)), "0.998");
    }

    #[test]
    fn base_unit_is_largest_divisor() {
        let d = |v, u| Duration::new(v, u);
        assert_eq!(common_base(&[d(365, TimeUnit::Day), d(3, TimeUnit::Day)]), TimeUnit::Day);
        assert_eq!(common_base(&[d(2, TimeUnit::Second)]), TimeUnit::Second);
        assert_eq!(common_base(&[d(1, TimeUnit::Day), d(90, TimeUnit::Second)]), TimeUnit::Second);
        assert_eq!(d(3650, TimeUnit::Day).ticks(TimeUnit::Day), Some(3650));
        assert_eq!(d(1, TimeUnit::Hour).ticks(TimeUnit::Day), None);
    }

    proptest! {
        #[test]
        fn rational_text_round_trips(n in -100_000i64..100_000, d in 1i64..5_000) {
            let r = Rational::new(n, d);
            prop_assert_eq!(parse_rational(&format_rational(&r)), Some(r));
        }
    }
}
