//! Scalar abstraction for the numerical core.
//!
//! Kernel evaluation, GP algebra, and the spherical geometry helpers are
//! generic over [`Scalar`] so they can run at `f32` or `f64`. Everything
//! downstream of the simulator uses the crate-level `f64` aliases.

use nalgebra::RealField;
use num_traits::FromPrimitive;

/// Floating-point scalar usable by the GP and geometry code.
///
/// Blanket-implemented for any type with real-field arithmetic and
/// `FromPrimitive` conversions, which in practice means `f32` and `f64`.
pub trait Scalar: RealField + FromPrimitive + Copy {}

impl<T: RealField + FromPrimitive + Copy> Scalar for T {}

/// Shorthand for lifting an `f64` constant into a generic scalar.
#[inline]
pub fn c<S: Scalar>(v: f64) -> S {
    S::from_f64(v).expect("constant representable in scalar type")
}

/// Finiteness test spelled as a free function for use in iterator chains.
#[inline]
pub fn is_finite<S: Scalar>(x: S) -> bool {
    nalgebra::ComplexField::is_finite(&x)
}
