//! Exact computation on finite hypothesis spaces.

pub mod checks;
pub mod distribution;
pub mod space;
pub mod sweeps;

pub use checks::{
    change_of_measure_check, disagreement_exact, forgetting_bound_exact, hoeffding_mgf_check,
    loss_covariance, oracle_bound_check, task_covariance, BoundCheckResult, OracleCheckConfig,
    OracleCheckReport, OracleMode,
};
pub use distribution::{gibbs_objective, gibbs_posterior, kl_discrete, sequential_gibbs, DiscreteDistribution};
pub use space::{DiscreteHypothesisSpace, DiscreteTask, SpaceDocument};
pub use sweeps::SweepSummary;
