//! Scalar abstraction shared by the numeric kernels.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + NumAssign + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from `f64`, used for literals and external data.
    fn of(value: f64) -> Self {
        Self::from_f64(value).expect("f64 converts to every Scalar")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("Scalar converts to f64")
    }

    fn as_f32(self) -> f32 {
        self.to_f32().expect("Scalar converts to f32")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Dot product accumulated left to right.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

/// Euclidean norm accumulated left to right.
pub fn l2_norm<S: Scalar>(v: &[S]) -> S {
    v.iter().fold(S::zero(), |acc, &x| acc + x * x).sqrt()
}

pub fn squared_distance<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| {
        let d = x - y;
        acc + d * d
    })
}

/// Cosine similarity; zero when either side has zero norm.
pub fn cosine<S: Scalar>(a: &[S], b: &[S]) -> S {
    let denom = l2_norm(a) * l2_norm(b);
    if denom == S::zero() {
        return S::zero();
    }
    dot(a, b) / denom
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_of_parallel_vectors_is_one() {
        let a = [1.0f64, 2.0, 3.0];
        let b = [2.0f64, 4.0, 6.0];
        assert!((cosine(&a, &b) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cosine_with_zero_vector_is_zero() {
        assert_eq!(cosine(&[0.0f32, 0.0], &[1.0, 1.0]), 0.0);
    }

    #[test]
    fn conversions_round_trip_for_f32() {
        assert_eq!(f32::of(0.5).as_f64(), 0.5);
    }
}
