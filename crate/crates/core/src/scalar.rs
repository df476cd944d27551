//! Floating point abstraction shared by the prototype, metrics and search code.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Real scalar usable for probabilities and fitness values.
///
/// Implemented for `f32` and `f64`. Tolerances scale with the precision of
/// the type: row sums are checked against [`Scalar::row_sum_tolerance`], which
/// is `1e-9` for `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + FromStr + Default + Send + Sync + 'static
{
    /// Maximum allowed deviation of a row sum from one.
    fn row_sum_tolerance() -> Self;

    /// Slack used when comparing an entry against the lower probability cap
    /// or against exact 0/1 values.
    fn entry_tolerance() -> Self;

    /// Converts from `f64`, panicking only for non-finite inputs that cannot be
    /// represented (never the case for the constants used in this crate).
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 value representable in scalar type")
    }

    /// Converts a count to the scalar type.
    fn of_count(value: usize) -> Self {
        Self::from_usize(value).expect("count representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn row_sum_tolerance() -> Self {
        1e-9
    }

    fn entry_tolerance() -> Self {
        1e-12
    }
}

impl Scalar for f32 {
    fn row_sum_tolerance() -> Self {
        1e-5
    }

    fn entry_tolerance() -> Self {
        1e-6
    }
}
