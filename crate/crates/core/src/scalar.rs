//! Scalar abstraction for the numeric core.
//!
//! The model, scaler, and threshold math are generic over [`Scalar`] so they
//! can run in `f32` or `f64`. The pipeline itself uses the `f64` aliases
//! exported from the crate root; gradient checks rely on that precision.

use std::fmt::{Debug, Display};

pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
    + std::ops::DivAssign
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from `f64`, used when seeding generic state from
    /// configuration values or RNG draws (which are always produced in `f64`).
    fn from_f64_lossy(value: f64) -> Self {
        <Self as num_traits::FromPrimitive>::from_f64(value).expect("f64 conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        <Self as num_traits::ToPrimitive>::to_f64(&self).expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
