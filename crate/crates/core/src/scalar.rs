//! Storage-scalar abstraction for the numeric core.

use std::fmt::{Debug, Display};

use num_traits::Float;

/// Floating-point scalar the tensor engine stores values in.
///
/// Reductions (log-sum-exp, sums, matmul inner products) always accumulate in
/// `f64` regardless of the storage type; [`Scalar::of_f64`] is the single
/// rounding point back to storage precision.
pub trait Scalar: Float + Debug + Display + Default + Send + Sync + 'static {
    /// Round an `f64` accumulator to storage precision.
    fn of_f64(x: f64) -> Self;

    /// Widen to `f64` for accumulation.
    fn as_f64(self) -> f64;

    /// Next representable value toward negative infinity.
    fn next_down(self) -> Self;
}

impl Scalar for f32 {
    #[inline]
    fn of_f64(x: f64) -> f32 {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        f64::from(self)
    }

    #[inline]
    fn next_down(self) -> f32 {
        f32::next_down(self)
    }
}

impl Scalar for f64 {
    #[inline]
    fn of_f64(x: f64) -> f64 {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[inline]
    fn next_down(self) -> f64 {
        f64::next_down(self)
    }
}
