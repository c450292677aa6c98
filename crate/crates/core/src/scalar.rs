use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Scalar type the numeric core is generic over.
///
/// The tensor/tape/optimizer layer works for any float satisfying this bound;
/// the rest of the crate instantiates it at [`crate::Real`] (`f64`).
pub trait Scalar:
    Float + NumAssignOps + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossless-enough conversion from `f64` literals and RNG output.
    fn from_f64_lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal not representable in scalar type")
    }
}

impl<T> Scalar for T where
    T: Float
        + NumAssignOps
        + FromPrimitive
        + ToPrimitive
        + Sum
        + Debug
        + Display
        + Send
        + Sync
        + 'static
{
}
