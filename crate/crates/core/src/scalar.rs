//! Element types usable in tensors.

use core::fmt::{Debug, Display};
use core::iter::Sum;
use num_traits::Float;

/// Floating point element type. Training runs in `f32`; oracle tests use
/// `f64`.
pub trait Scalar: Float + Default + Debug + Display + Sum + Send + Sync + 'static {
    /// Size of one element in bytes.
    const BYTES: usize;
    /// Short name used in diagnostics and file headers.
    const NAME: &'static str;

    fn from_f64(value: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const BYTES: usize = 4;
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64(value: f64) -> Self {
        value as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const BYTES: usize = 8;
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64(value: f64) -> Self {
        value
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}
