//! Floating-point scalar abstraction shared by every numerical routine.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive, NumCast, ToPrimitive};

/// Real scalar the analysis is generic over: `f32` or `f64`.
///
/// Cosine similarity needs a square root, so exact rational types are not
/// supported; the binary file format is always binary32 regardless of `T`.
pub trait Scalar:
    Float
    + FromPrimitive
    + ToPrimitive
    + NumCast
    + Sum
    + FromStr
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from a count or small integer.
    fn of_usize(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("usize always converts to a float")
    }

    fn of_f64(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 always converts to a float")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).expect("float always converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Compensated (Neumaier) summation.
///
/// Every operation is sign-symmetric, so `sum(-x) == -sum(x)` bit-for-bit,
/// which the antisymmetry laws of the association tests rely on.
pub fn compensated_sum<T: Scalar>(values: impl IntoIterator<Item = T>) -> T {
    let mut sum = T::zero();
    let mut carry = T::zero();
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            carry = carry + ((sum - t) + v);
        } else {
            carry = carry + ((v - t) + sum);
        }
        sum = t;
    }
    sum + carry
}

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    Some(compensated_sum(values.iter().copied()) / T::of_usize(values.len()))
}

/// Population standard deviation (divides by `n`).
pub fn population_std<T: Scalar>(values: &[T], mean: T) -> T {
    if values.is_empty() {
        return T::zero();
    }
    let ss = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean)));
    (ss / T::of_usize(values.len())).sqrt()
}

/// Sample standard deviation (divides by `n - 1`); `None` when `n < 2`.
pub fn sample_std<T: Scalar>(values: &[T], mean: T) -> Option<T> {
    if values.len() < 2 {
        return None;
    }
    let ss = compensated_sum(values.iter().map(|&v| (v - mean) * (v - mean)));
    Some((ss / T::of_usize(values.len() - 1)).sqrt())
}
