//! UK unified shoe sizes and size differences, both stored as integer
//! half-points so that arithmetic on the 0.5 grid is exact.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::SizeError;

/// Smallest admissible size in half-points (UK 1).
pub const MIN_HALF_POINTS: u8 = 2;
/// Largest admissible size in half-points (UK 15).
pub const MAX_HALF_POINTS: u8 = 30;

/// A UK unified shoe size on the 0.5 grid in `[1, 15]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct UkSize(u8);

impl UkSize {
    pub fn new(value: f64) -> Result<Self, SizeError> {
        if !value.is_finite() {
            return Err(SizeError::OffGrid(value));
        }
        let doubled = value * 2.0;
        if doubled.fract() != 0.0 {
            return Err(SizeError::OffGrid(value));
        }
        if !(f64::from(MIN_HALF_POINTS)..=f64::from(MAX_HALF_POINTS)).contains(&doubled) {
            return Err(SizeError::OutOfRange(value));
        }
        Ok(Self(doubled as u8))
    }

    pub fn from_half_points(half_points: i32) -> Result<Self, SizeError> {
        let value = f64::from(half_points) / 2.0;
        if !(i32::from(MIN_HALF_POINTS)..=i32::from(MAX_HALF_POINTS)).contains(&half_points) {
            return Err(SizeError::OutOfRange(value));
        }
        Ok(Self(half_points as u8))
    }

    /// Like [`UkSize::from_half_points`] but saturating at the grid bounds.
    /// The flag is true when the input had to be clamped.
    pub fn clamped_from_half_points(half_points: i32) -> (Self, bool) {
        let lo = i32::from(MIN_HALF_POINTS);
        let hi = i32::from(MAX_HALF_POINTS);
        let c = half_points.clamp(lo, hi);
        (Self(c as u8), c != half_points)
    }

    pub fn half_points(self) -> i32 {
        i32::from(self.0)
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    /// Every size on the grid, ascending.
    pub fn all() -> impl Iterator<Item = UkSize> {
        (MIN_HALF_POINTS..=MAX_HALF_POINTS).map(UkSize)
    }

    /// `self - delta`, the size arithmetic used when transferring a size
    /// across brands.
    pub fn shifted_down(self, delta: SizeDelta) -> (UkSize, bool) {
        Self::clamped_from_half_points(self.half_points() - delta.half_points())
    }
}

impl TryFrom<f64> for UkSize {
    type Error = SizeError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        UkSize::new(value)
    }
}

impl From<UkSize> for f64 {
    fn from(s: UkSize) -> f64 {
        s.value()
    }
}

impl fmt::Display for UkSize {
    /// Integral sizes print without a decimal point, half sizes with `.5`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_multiple_of(2) {
            write!(f, "{}", self.0 / 2)
        } else {
            write!(f, "{}.5", self.0 / 2)
        }
    }
}

impl std::ops::Sub for UkSize {
    type Output = SizeDelta;

    fn sub(self, rhs: UkSize) -> SizeDelta {
        SizeDelta(self.half_points() - rhs.half_points())
    }
}

/// A signed difference between two sizes, in half-points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct SizeDelta(i32);

impl SizeDelta {
    pub const ZERO: SizeDelta = SizeDelta(0);

    pub const fn from_half_points(half_points: i32) -> Self {
        Self(half_points)
    }

    pub fn half_points(self) -> i32 {
        self.0
    }

    pub fn value(self) -> f64 {
        f64::from(self.0) / 2.0
    }

    /// Tie-break order: smaller magnitude first, then negative before positive.
    pub fn tie_break_key(self) -> (i32, i32) {
        (self.0.abs(), self.0.signum())
    }
}

impl TryFrom<f64> for SizeDelta {
    type Error = SizeError;

    fn try_from(value: f64) -> Result<Self, Self::Error> {
        let doubled = value * 2.0;
        if !doubled.is_finite() || doubled.fract() != 0.0 || doubled.abs() > 64.0 {
            return Err(SizeError::OffGrid(value));
        }
        Ok(Self(doubled as i32))
    }
}

impl From<SizeDelta> for f64 {
    fn from(d: SizeDelta) -> f64 {
        d.value()
    }
}

impl std::ops::Neg for SizeDelta {
    type Output = SizeDelta;

    fn neg(self) -> SizeDelta {
        SizeDelta(-self.0)
    }
}

impl std::ops::Add for SizeDelta {
    type Output = SizeDelta;

    fn add(self, rhs: SizeDelta) -> SizeDelta {
        SizeDelta(self.0 + rhs.0)
    }
}

impl fmt::Display for SizeDelta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.value())
    }
}
