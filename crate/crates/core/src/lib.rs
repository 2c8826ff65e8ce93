//! Forgetting bounds for continual learning with PAC-Bayesian posteriors.
//!
//! The crate evaluates data-dependent upper bounds on backward transfer and
//! forgetting for learners that update a distribution over hypotheses task by
//! task. It contains exact computations on finite hypothesis spaces, Monte
//! Carlo estimators for neural networks with Gaussian posteriors, a
//! variational learner and an EWC baseline, synthetic task environments, and
//! an experiment harness.
//!
//! Everything numeric is generic over [`Real`] (`f32` or `f64`); the aliases
//! at the crate root fix the scalar to `f64`.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod learner;
pub mod matrix;
pub mod metrics;
pub mod numerics;
pub mod oracle;
pub mod rng;
pub mod scalar;
pub mod tasks;

pub use bounds::{
    disagreement_from_draws, disagreement_from_weighted_draws, disagreement_mc, disagreement_mixture,
    forgetting_bound_assemble, kl_gaussian_diag, kl_isotropic_shift, loss_draws_with_ratio, mixture_log_weights,
    structural_terms, AssembledBound, BoundConfig, BoundReport, DisagreementEstimator, PosteriorFamily,
};
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use metrics::{
    bwt_and_forgetting, empirical_loss, empirical_loss_estimate, loss_draws, CheckpointRecord, Hypothesis,
    HypothesisSource, LossDraws, LossFunction, LossKind, McEstimate, MetricsLog, MetricsRow, PointMass, TaskDataset,
    TransferMetrics,
};
pub use scalar::Real;

pub type BoundConfigF64 = bounds::BoundConfig<f64>;
pub type BoundReportF64 = bounds::BoundReport<f64>;
pub type TaskDatasetF64 = metrics::TaskDataset<f64>;
pub type TaskDatasetF32 = metrics::TaskDataset<f32>;
pub type LossFunctionF64 = metrics::LossFunction<f64>;
pub type DiscreteDistributionF64 = oracle::DiscreteDistribution<f64>;
pub type DiscreteHypothesisSpaceF64 = oracle::DiscreteHypothesisSpace<f64>;
pub type GaussianMeanFieldF64 = learner::GaussianMeanField<f64>;
pub type GaussianMeanFieldF32 = learner::GaussianMeanField<f32>;
pub type MetricsLogF64 = metrics::MetricsLog<f64>;
