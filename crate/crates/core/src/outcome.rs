//! Real-valued outcome labels.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// A finite real measurement outcome with a total order.
///
/// Labels are compared by exact value after mapping `-0.0` to `0.0`. Textual
/// form is Rust's shortest round-trip float formatting, so `1.0` prints as
/// `1` and parses back to the same double.
#[derive(Clone, Copy, Debug)]
pub struct Outcome(f64);

impl Outcome {
    pub fn new(value: f64) -> Result<Self> {
        if !value.is_finite() {
            return Err(Error::InvalidLabel(value.to_string()));
        }
        Ok(Outcome(if value == 0.0 { 0.0 } else { value }))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

impl From<Outcome> for f64 {
    fn from(o: Outcome) -> f64 {
        o.0
    }
}

impl PartialEq for Outcome {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Outcome {}

impl PartialOrd for Outcome {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Outcome {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl std::hash::Hash for Outcome {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.0.to_bits().hash(state);
    }
}

impl fmt::Display for Outcome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for Outcome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let v: f64 = s
            .trim()
            .parse()
            .map_err(|_| Error::InvalidLabel(s.to_string()))?;
        Outcome::new(v)
    }
}

/// Shorthand for building labels in code where the value is known finite.
///
/// # Panics
/// Panics on NaN or infinite input.
pub fn label(value: f64) -> Outcome {
    Outcome::new(value).expect("outcome label must be finite")
}
