//! One-parameter logistic (1PL) measurement model.
//!
//! P(correct) = sigmoid(theta - b) for respondent ability theta and item
//! difficulty b, both in logits. Difficulties are identified by the
//! constraint that they sum to zero. Calibration is joint maximum likelihood
//! ([`jmle`]); [`loo`] refits the model once per subject with that subject's
//! row held out, which is what makes the downstream difficulty feature free
//! of self-information.

mod jmle;
mod loo;

pub use jmle::{calibrate, CalibrationConfig, RaschCalibration, ResponseTable};
pub use loo::{loo_difficulties, read_loo_csv, write_loo_csv, HoldoutMode, LooDifficultyTable};

pub(crate) use jmle::EXTREME_ADJUSTMENT;

use crate::error::{Error, Result};
use crate::num::{sigmoid, Real};

/// Probability of a correct response under the model.
///
/// The result is clipped to [eps, 1-eps] for the scalar's epsilon, so it is
/// strictly inside (0, 1) even where the unclipped value would round to 0 or
/// 1; log-likelihoods and information built on it stay finite.
pub fn response_probability<F: Real>(theta: F, difficulty: F) -> Result<F> {
    if !theta.is_finite() || !difficulty.is_finite() {
        return Err(Error::Argument(
            "response_probability requires finite ability and difficulty".into(),
        ));
    }
    Ok(clipped_probability(theta - difficulty))
}

/// Fisher information p(1-p) of one response at the given parameters.
pub fn item_information<F: Real>(theta: F, difficulty: F) -> Result<F> {
    let p = response_probability(theta, difficulty)?;
    Ok(p * (F::one() - p))
}

/// Unchecked fast path used by the fitting loops: probability of the
/// centered logit `x = theta - difficulty`, clipped away from {0, 1}.
pub(crate) fn clipped_probability<F: Real>(x: F) -> F {
    let eps = F::epsilon();
    sigmoid(x).max(eps).min(F::one() - eps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn probability_midpoint() {
        assert_eq!(response_probability(0.0f64, 0.0).unwrap(), 0.5);
        assert_eq!(response_probability(1.0f64, 1.0).unwrap(), 0.5);
    }

    #[test]
    fn probability_saturates_strictly_inside_unit_interval() {
        let hi: f64 = response_probability(40.0, 0.0).unwrap();
        assert!(hi < 1.0);
        assert!(hi > 0.999999);
        let lo: f64 = response_probability(-40.0, 0.0).unwrap();
        assert!(lo > 0.0);
        assert!(lo < 1e-6);
    }

    #[test]
    fn non_finite_arguments_are_rejected() {
        assert!(response_probability(f64::NAN, 0.0).is_err());
        assert!(response_probability(0.0, f64::INFINITY).is_err());
        assert!(item_information(f64::NEG_INFINITY, 0.0).is_err());
    }

    #[test]
    fn information_is_stable_and_peaks_at_the_difficulty() {
        let peak: f64 = item_information(1.3, 1.3).unwrap();
        assert!((peak - 0.25).abs() < 1e-15);
        let tail: f64 = item_information(50.0, -50.0).unwrap();
        assert!(tail.is_finite());
        assert!(tail > 0.0);
        assert!(tail < 1e-12);
    }

    #[test]
    fn kernels_instantiate_at_f32() {
        let p: f32 = response_probability(2.0f32, 0.5).unwrap();
        assert!((p - 0.817_574).abs() < 1e-5);
    }
}
