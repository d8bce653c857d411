//! Extended reals: finite doubles plus the two infinities.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A value in ℝ ∪ {−∞, +∞}. Never NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtScalar {
    NegInf,
    Finite(f64),
    PosInf,
}

impl ExtScalar {
    /// Converts a double, mapping `±inf` to the matching infinity.
    pub fn new(x: f64) -> Result<Self> {
        if x.is_nan() {
            Err(Error::NotANumber)
        } else if x == f64::INFINITY {
            Ok(ExtScalar::PosInf)
        } else if x == f64::NEG_INFINITY {
            Ok(ExtScalar::NegInf)
        } else {
            Ok(ExtScalar::Finite(x))
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, ExtScalar::Finite(_))
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            ExtScalar::Finite(x) => Some(x),
            _ => None,
        }
    }

    /// The value as an IEEE double (infinities preserved).
    pub fn to_f64(self) -> f64 {
        match self {
            ExtScalar::NegInf => f64::NEG_INFINITY,
            ExtScalar::Finite(x) => x,
            ExtScalar::PosInf => f64::INFINITY,
        }
    }

    /// Sum; `∞ + (−∞)` is rejected.
    pub fn checked_add(self, other: Self) -> Result<Self> {
        use ExtScalar::*;
        match (self, other) {
            (NegInf, PosInf) | (PosInf, NegInf) => Err(Error::Indeterminate("inf - inf")),
            (NegInf, _) | (_, NegInf) => Ok(NegInf),
            (PosInf, _) | (_, PosInf) => Ok(PosInf),
            (Finite(a), Finite(b)) => ExtScalar::new(a + b),
        }
    }

    pub fn checked_sub(self, other: Self) -> Result<Self> {
        self.checked_add(-other)
    }

    /// Scaling by a finite factor with the convention `0 · ±∞ = 0`.
    pub fn scale(self, k: f64) -> Self {
        use ExtScalar::*;
        match self {
            Finite(x) => Finite(k * x),
            _ if k == 0.0 => Finite(0.0),
            NegInf if k > 0.0 => NegInf,
            NegInf => PosInf,
            PosInf if k > 0.0 => PosInf,
            PosInf => NegInf,
        }
    }

    /// Product with the convention `0 · ±∞ = 0`.
    pub fn mul(self, other: Self) -> Self {
        match (self, other) {
            (ExtScalar::Finite(k), x) | (x, ExtScalar::Finite(k)) => x.scale(k),
            (a, b) => {
                if (a == ExtScalar::PosInf) == (b == ExtScalar::PosInf) {
                    ExtScalar::PosInf
                } else {
                    ExtScalar::NegInf
                }
            }
        }
    }

    pub fn min(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    pub fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl std::ops::Neg for ExtScalar {
    type Output = ExtScalar;
    fn neg(self) -> ExtScalar {
        match self {
            ExtScalar::NegInf => ExtScalar::PosInf,
            ExtScalar::Finite(x) => ExtScalar::Finite(-x),
            ExtScalar::PosInf => ExtScalar::NegInf,
        }
    }
}

impl From<f64> for ExtScalar {
    /// Panics on NaN; use [`ExtScalar::new`] for fallible conversion.
    fn from(x: f64) -> Self {
        ExtScalar::new(x).expect("NaN passed to ExtScalar::from")
    }
}

impl PartialOrd for ExtScalar {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.total_cmp(other))
    }
}

impl ExtScalar {
    fn rank(self) -> u8 {
        match self {
            ExtScalar::NegInf => 0,
            ExtScalar::Finite(_) => 1,
            ExtScalar::PosInf => 2,
        }
    }

    /// Total order (finite values compared numerically, `-0 == +0`).
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (ExtScalar::Finite(a), ExtScalar::Finite(b)) => {
                a.partial_cmp(b).expect("ExtScalar never holds NaN")
            }
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for ExtScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtScalar::NegInf => write!(f, "-inf"),
            ExtScalar::Finite(x) => write!(f, "{x}"),
            ExtScalar::PosInf => write!(f, "inf"),
        }
    }
}

impl Serialize for ExtScalar {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            ExtScalar::Finite(x) => s.serialize_f64(*x),
            ExtScalar::NegInf => s.serialize_str("-inf"),
            ExtScalar::PosInf => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for ExtScalar {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(x) => ExtScalar::new(x).map_err(serde::de::Error::custom),
            Repr::Str(s) => match s.as_str() {
                "-inf" => Ok(ExtScalar::NegInf),
                "inf" | "+inf" => Ok(ExtScalar::PosInf),
                other => other
                    .parse::<f64>()
                    .map_err(serde::de::Error::custom)
                    .and_then(|x| ExtScalar::new(x).map_err(serde::de::Error::custom)),
            },
        }
    }
}
