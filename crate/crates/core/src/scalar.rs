use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Scalar type of the numeric core: `f32` or `f64`.
///
/// The device model, waveforms and the shared-node solver are generic over
/// this trait; everything above them (gates, crossbar, compiler, CLI) runs
/// on `f64` through the default type parameters.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Shorthand for pulling an `f64` constant into the scalar type.
#[inline]
pub(crate) fn lit<F: Scalar>(x: f64) -> F {
    F::from_f64(x).expect("constant representable in scalar type")
}
