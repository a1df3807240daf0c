//! Scalar abstraction and the small numeric kernels built on it.
//!
//! Everything here is plain math with no knowledge of items, subjects, or
//! files, so it is generic over the floating-point type. The pipeline
//! instantiates these at [`crate::Scalar`]; the generic form keeps the
//! kernels usable at f32 where callers can afford the precision loss.

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating-point scalar the numeric kernels operate on.
pub trait Real: Float + FromPrimitive + ToPrimitive + Send + Sync + 'static {
    /// Lossy conversion from a count. Exact for every count this crate
    /// produces (< 2^52).
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable")
    }
}

impl<T> Real for T where T: Float + FromPrimitive + ToPrimitive + Send + Sync + 'static {}

/// Logistic function, stable at large |x|: the exponential is always taken
/// of a non-positive argument, so it cannot overflow.
pub fn sigmoid<F: Real>(x: F) -> F {
    if x >= F::zero() {
        let e = (-x).exp();
        F::one() / (F::one() + e)
    } else {
        let e = x.exp();
        e / (F::one() + e)
    }
}

/// Inverse of [`sigmoid`]. `p` must lie strictly inside (0, 1).
pub fn logit<F: Real>(p: F) -> F {
    (p / (F::one() - p)).ln()
}

pub fn mean<F: Real>(values: &[F]) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().fold(F::zero(), |acc, &v| acc + v);
    Some(sum / F::from_count(values.len()))
}

/// Median with the even-length convention used throughout this crate: the
/// mean of the two central order statistics. Values must not contain NaN.
pub fn median<F: Real>(values: &[F]) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_unstable_by(|a, b| a.partial_cmp(b).expect("median input must not be NaN"));
    let n = sorted.len();
    let mid = n / 2;
    if n % 2 == 1 {
        Some(sorted[mid])
    } else {
        Some((sorted[mid - 1] + sorted[mid]) / F::from_count(2))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_symmetry() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        let p = sigmoid(1.7f64);
        assert!((p + sigmoid(-1.7f64) - 1.0).abs() < 1e-15);
        assert!((logit(p) - 1.7).abs() < 1e-12);
    }

    #[test]
    fn sigmoid_saturates_without_overflow() {
        let hi = sigmoid(800.0f64);
        let lo = sigmoid(-800.0f64);
        assert!(hi.is_finite() && lo.is_finite());
        assert!(hi <= 1.0 && lo >= 0.0);
        assert!(lo < 1e-300);
    }

    #[test]
    fn sigmoid_works_at_f32() {
        let p: f32 = sigmoid(2.0f32);
        assert!((p - 0.880_797).abs() < 1e-5);
    }

    #[test]
    fn median_conventions() {
        assert_eq!(median::<f64>(&[]), None);
        assert_eq!(median(&[3.0]), Some(3.0));
        assert_eq!(median(&[1.0, 2.0, 3.0, 10.0]), Some(2.5));
        assert_eq!(median(&[5.0, 1.0, 3.0]), Some(3.0));
    }

    #[test]
    fn mean_basics() {
        assert_eq!(mean::<f64>(&[]), None);
        assert_eq!(mean(&[1.0, 2.0, 3.0]), Some(2.0));
    }
}
