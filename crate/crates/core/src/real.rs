//! Scalar precision abstraction.

use core::fmt::{Debug, Display};
use core::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Storage precision tag, also used as the tensor file dtype byte.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DType {
    F32 = 0,
    F64 = 1,
}

/// Floating point scalar the tensors are generic over.
///
/// Training runs use `f32`; every gradient check runs in `f64`.
pub trait Real:
    Float + FromPrimitive + ToPrimitive + NumAssign + Sum + Default + Debug + Display + Send + Sync + 'static
{
    const DTYPE: DType;

    fn erf(self) -> Self;

    #[inline]
    fn of(x: f64) -> Self {
        Self::from_f64(x).unwrap()
    }

    #[inline]
    fn f64(self) -> f64 {
        self.to_f64().unwrap()
    }
}

impl Real for f32 {
    const DTYPE: DType = DType::F32;

    #[inline]
    fn erf(self) -> Self {
        libm::erff(self)
    }
}

impl Real for f64 {
    const DTYPE: DType = DType::F64;

    #[inline]
    fn erf(self) -> Self {
        libm::erf(self)
    }
}
