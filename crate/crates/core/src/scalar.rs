//! Scalar abstractions.
//!
//! All numerical code is generic over a real floating-point type `T: Real`
//! (`f64` and `f32` are supported). Matrix entries may additionally be complex:
//! the Loewner pencil and the unprojected Loewner realization live over
//! `Complex<T>`, everything that is simulated in time lives over `T`.

use std::fmt::{Debug, Display, LowerExp};

use nalgebra::{ComplexField, RealField};
use num_complex::Complex;
use num_traits::{FromPrimitive, ToPrimitive};

/// Real floating-point scalar used throughout the crate.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Debug + Send + Sync
{
}

impl<T> Real for T where
    T: RealField + Copy + FromPrimitive + ToPrimitive + Display + LowerExp + Debug + Send + Sync
{
}

/// Matrix entry type over the real field `T`: either `T` itself or `Complex<T>`.
pub trait Entry<T: Real>: ComplexField<RealField = T> + Copy {
    fn to_complex(self) -> Complex<T>;
    fn from_real(x: T) -> Self;
}

impl<T: Real> Entry<T> for T {
    #[inline]
    fn to_complex(self) -> Complex<T> {
        Complex::new(self, T::zero())
    }
    #[inline]
    fn from_real(x: T) -> Self {
        x
    }
}

impl<T: Real> Entry<T> for Complex<T> {
    #[inline]
    fn to_complex(self) -> Complex<T> {
        self
    }
    #[inline]
    fn from_real(x: T) -> Self {
        Complex::new(x, T::zero())
    }
}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    nalgebra::convert(x)
}

/// Converts `T` into `f64` (lossless for `f32`/`f64`).
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

