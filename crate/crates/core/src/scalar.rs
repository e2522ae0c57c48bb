//! Floating-point abstraction shared by every numerical module.
//!
//! All math in this crate is written against [`Scalar`], which is implemented
//! for `f32` and `f64`. Training and evaluation default to `f64`; see the
//! aliases at the crate root.

use std::fmt::LowerExp;

use ndarray::NdFloat;
use num_traits::{FloatConst, FromPrimitive, ToPrimitive};

pub trait Scalar: NdFloat + FloatConst + FromPrimitive + ToPrimitive + Default + LowerExp {
    /// Converts an `f64` literal or configuration value.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 is representable in every Scalar")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).expect("usize converts to float")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    /// Name written into file headers.
    const DTYPE: &'static str;
}

impl Scalar for f32 {
    const DTYPE: &'static str = "f32";
}

impl Scalar for f64 {
    const DTYPE: &'static str = "f64";
}

/// Sum in a fixed left-to-right order so results never depend on chunking.
pub fn ordered_sum<T: Scalar, I: IntoIterator<Item = T>>(it: I) -> T {
    it.into_iter().fold(T::zero(), |acc, x| acc + x)
}

pub fn norm2<T: Scalar>(v: &[T]) -> T {
    ordered_sum(v.iter().map(|&x| x * x)).sqrt()
}

