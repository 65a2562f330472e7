//! Floating-point abstraction shared by every numeric module.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};
use serde::de::DeserializeOwned;
use serde::Serialize;

/// Real scalar used for features, probabilities, scores and utilization.
///
/// Implemented for `f32` and `f64`. Everything numeric in the crate is
/// generic over this trait; the crate root exposes `f64` aliases.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + Serialize
    + DeserializeOwned
    + 'static
{
    /// Lossy conversion from `f64`; panics only on NaN-incompatible types, which neither impl is.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 representable in scalar")
    }

    fn of_usize(v: usize) -> Self {
        Self::from_usize(v).expect("usize representable in scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
