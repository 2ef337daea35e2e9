//! Covariate-aware adaptation of a frozen univariate forecaster.
//!
//! A small patch forecaster is pretrained and frozen; covariates of any
//! modality are embedded by frozen extractors, aligned into one hidden space,
//! mixed by a trainable softmax gate and injected around the frozen head
//! through zero-initialized shift/scale/gate modulation. A Granger–Geweke
//! estimator provides the statistical reference the learned gate is checked
//! against.

pub mod adapter;
pub mod backbone;
pub mod datagen;
pub mod granger;
pub mod harness;
pub mod numerics;
