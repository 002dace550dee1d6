//! Scalar abstraction over `f32` and `f64`.

use std::fmt;
use std::iter::Sum;
use std::ops::AddAssign;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar used for counters, parameters and gradients.
///
/// Counters need at least single precision; oracle and shadow paths
/// instantiate everything with `f64` for headroom. The bound collects the
/// `num_traits` capabilities the numeric kernels rely on plus the usual
/// utility traits.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + AddAssign + Sum + fmt::Debug + fmt::Display + Default + Send + Sync + 'static
{
    /// Lossless widening to `f64` for accumulation and reporting.
    fn to_f64_lossy(self) -> f64;
    /// Narrowing conversion from `f64`, rounding to nearest.
    fn from_f64_lossy(x: f64) -> Self;
}

macro_rules! impl_real {
    ($($t:ty)*) => {$(
        impl Real for $t {
            #[inline]
            fn to_f64_lossy(self) -> f64 {
                self as f64
            }
            #[inline]
            fn from_f64_lossy(x: f64) -> Self {
                x as $t
            }
        }
    )*};
}

impl_real!(f32 f64);
