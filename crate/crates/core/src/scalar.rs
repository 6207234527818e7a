use std::fmt::{Debug, Display, LowerExp};
use std::iter::Sum;
use std::ops::Neg;

use num_traits::{Float, FloatConst, FromPrimitive, Num, ToPrimitive};

/// Coefficient ring for the polynomial and series algebra.
///
/// Everything that only adds, multiplies and divides by integer counts
/// (contraction of rotation tensors, the planar self-energy recursion) is
/// written against this trait, so exact rationals work as well as floats.
pub trait Scalar:
    Clone
    + Debug
    + PartialEq
    + Num
    + Neg<Output = Self>
    + FromPrimitive
    + ToPrimitive
    + Send
    + Sync
    + 'static
{
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }

    /// Magnitude as `f64`, used for pivoting and thresholds only.
    fn magnitude(&self) -> f64 {
        self.to_f64().map(f64::abs).unwrap_or(f64::INFINITY)
    }
}

impl<S> Scalar for S where
    S: Clone
        + Debug
        + PartialEq
        + Num
        + Neg<Output = S>
        + FromPrimitive
        + ToPrimitive
        + Send
        + Sync
        + 'static
{
}

/// Floating-point scalar for numerical evaluation.
pub trait Real: Scalar + Float + FloatConst + Sum + Display + LowerExp + Copy {
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable")
    }
}

impl<T> Real for T where T: Scalar + Float + FloatConst + Sum + Display + LowerExp + Copy {}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::BigRational;

    fn inverse_count<S: Scalar>(n: usize) -> S {
        S::one() / S::from_count(n)
    }

    #[test]
    fn rationals_are_exact_scalars() {
        let third: BigRational = inverse_count(3);
        let sum = third.clone() + third.clone() + third;
        assert_eq!(sum, BigRational::from_integer(1.into()));
        assert!((inverse_count::<f64>(4) - 0.25).abs() < 1e-15);
        assert_eq!(<f32 as Real>::lit(0.5), 0.5f32);
    }
}
