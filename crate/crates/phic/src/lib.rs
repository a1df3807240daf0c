//! Predicts, before a question is shown, whether a respondent will answer it
//! correctly.
//!
//! The pipeline works on a fixed study design: 32 chart-comprehension items
//! (8 data visualizations, 4 questions each) administered in randomized
//! visualization order, so every respondent has one response per position
//! 1..=32. From the response matrix the library:
//!
//! 1. calibrates item difficulty with a one-parameter logistic model fitted
//!    by joint maximum likelihood ([`rasch`]), using leave-one-subject-out
//!    refits so no respondent's feature is informed by their own answers;
//! 2. assembles one feature table per administration position ([`features`]):
//!    expert-rated and calibrated difficulty, 18 profile attributes, and two
//!    running-performance features;
//! 3. trains logistic regression, random forest, and multilayer perceptron
//!    classifiers, optionally behind correlation-based feature selection
//!    embedded per training fold ([`modeling`]);
//! 4. scores configurations with repeated stratified cross-validation
//!    ([`eval`]) and reports ranked feature importance, feature-group
//!    ablations, and correctness drift across sessions ([`analysis`]);
//! 5. simulates adaptive item selection over the calibrated bank
//!    ([`adaptive`]).
//!
//! The `phic` binary exposes each stage as a subcommand; see [`cli`].
//!
//! Positive class throughout is an *incorrect* answer: the scores returned by
//! every classifier are probabilities of failure, which is what an item
//! selector needs to avoid overwhelming a respondent.
//!
//! Numeric kernels (logistic curve, entropies, rank statistics) are generic
//! over the scalar type via [`num::Real`]; the pipeline instantiates them at
//! [`Scalar`].

pub mod adaptive;
pub mod analysis;
pub mod cli;
pub mod domain;
pub mod error;
pub mod eval;
pub mod features;
pub mod ingest;
pub mod modeling;
pub mod num;
pub mod rasch;
pub mod seed;

/// Scalar type the pipeline runs at.
pub type Scalar = f64;
/// Log-odds value (ability or difficulty) in [`Scalar`] precision.
pub type Logit = Scalar;
/// Probability value in [`Scalar`] precision.
pub type Prob = Scalar;

pub use error::{Error, Result};
