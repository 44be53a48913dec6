//! Floating-point abstraction used throughout the crate.
//!
//! Two precisions are supported: `f64` (wide, used for gradient checking
//! and the unit oracles) and `f32` (narrow, permitted for training
//! throughput). Finite differences are unreliable in narrow precision,
//! so verification paths pin `f64`.

use core::fmt;
use core::iter::Sum;
use core::ops::{AddAssign, DivAssign, MulAssign, SubAssign};
use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar element type of all tensors.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum<Self>
    + fmt::Debug
    + fmt::Display
    + 'static
{
    /// Converts an `f64` literal; panics only on non-finite input.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("finite literal converts to Real")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Real converts to f64")
    }
}

impl Real for f32 {}
impl Real for f64 {}
