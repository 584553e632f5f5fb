//! Microsecond-resolution capture timestamps.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub const MICROS_PER_SEC: i64 = 1_000_000;

/// Capture time as microseconds since the Unix epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Timestamp(i64);

impl Timestamp {
    pub const ZERO: Timestamp = Timestamp(0);

    pub const fn from_micros(micros: i64) -> Self {
        Timestamp(micros)
    }

    pub fn from_parts(secs: i64, micros: u32) -> Self {
        Timestamp(secs * MICROS_PER_SEC + i64::from(micros))
    }

    pub fn from_secs_f64(secs: f64) -> Self {
        Timestamp((secs * MICROS_PER_SEC as f64).round() as i64)
    }

    pub const fn as_micros(self) -> i64 {
        self.0
    }

    pub fn secs(self) -> i64 {
        self.0.div_euclid(MICROS_PER_SEC)
    }

    pub fn subsec_micros(self) -> u32 {
        self.0.rem_euclid(MICROS_PER_SEC) as u32
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    pub fn add_micros(self, micros: i64) -> Self {
        Timestamp(self.0 + micros)
    }

    pub fn add_secs_f64(self, secs: f64) -> Self {
        Timestamp(self.0 + (secs * MICROS_PER_SEC as f64).round() as i64)
    }

    /// Signed distance `self - earlier` in microseconds.
    pub fn micros_since(self, earlier: Timestamp) -> i64 {
        self.0 - earlier.0
    }

    pub fn secs_since(self, earlier: Timestamp) -> f64 {
        self.micros_since(earlier) as f64 / MICROS_PER_SEC as f64
    }
}

/// Renders as `secs.micros` with exactly six fractional digits.
impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.secs(), self.subsec_micros())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid timestamp {0:?}")]
pub struct ParseTimestampError(String);

/// Parses decimal seconds without going through floating point, so
/// `Display` output round-trips exactly.
impl FromStr for Timestamp {
    type Err = ParseTimestampError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseTimestampError(s.to_string());
        let s = s.trim();
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (int_part, frac_part) = match body.split_once('.') {
            Some((i, f)) => (i, f),
            None => (body, ""),
        };
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        let secs: i64 = if int_part.is_empty() {
            0
        } else {
            int_part.parse().map_err(|_| err())?
        };
        if !frac_part.chars().all(|c| c.is_ascii_digit()) || frac_part.len() > 9 {
            return Err(err());
        }
        let mut digits = frac_part.to_string();
        while digits.len() < 6 {
            digits.push('0');
        }
        let micros: i64 = digits[..6].parse().unwrap_or(0);
        let total = secs * MICROS_PER_SEC + micros;
        Ok(Timestamp(if neg { -total } else { total }))
    }
}
