//! Two-stage (TS) likelihood-free parameter estimation.
//!
//! Simulated data is compressed to a handful of sample quantiles (first
//! stage) and the unknown parameter is regressed on nonlinear features of
//! those quantiles (second stage). Sampling training parameters from a prior
//! and minimising the mean squared error gives an approximate Bayes rule;
//! minimising the worst-case squared error over the training rows gives an
//! approximate minimax rule.
//!
//! The crate is organised bottom-up:
//!
//! * [`sim`]: Weibull simulator, priors and seeded streams.
//! * [`compression`]: order statistics, sample quantiles and feature maps.
//! * [`second_stage`]: ridge and certified minimax fitters.
//! * [`estimator`]: training-set generation, model fitting and prediction.
//! * [`crlb`]: Fisher information and Cramér-Rao bounds for the Weibull model.
//! * [`experiment`]: Monte-Carlo risk evaluation and CSV reports.

// `!(x > 0.0)` is used deliberately so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod compression;
pub mod crlb;
pub mod error;
pub mod estimator;
pub mod experiment;
pub mod second_stage;
pub mod sim;

pub use compression::{
    compress, feature_scale, feature_shape, order_statistics, sample_quantile, CompressedVector, FeatureKind,
    FeatureVector,
};
pub use crlb::{crlb, fisher_oracle, fisher_per_sample, FisherMatrix};
pub use error::{Result, TsError};
pub use estimator::{
    estimate, fit_bayes, fit_minimax as fit_minimax_model, generate_training_set, Method, ParamEstimator,
    TrainingConfig, TrainingSet, TsModel,
};
pub use experiment::{emit_scatter, reproduce_table, run_mse_experiment, ExperimentConfig, RiskReport, RiskRow};
pub use second_stage::{
    evaluate_max_quadratic, fit_minimax, fit_ridge, Coefficients, MinimaxSolver, RegressionProblem,
};
pub use sim::{
    sample_prior, sample_weibull, weibull_cdf, weibull_pdf, weibull_quantile, PriorKind, PriorSpec, SeedSpec,
    WeibullParams,
};
