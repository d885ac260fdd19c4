//! Discretized HMM likelihood: matrix builders, the forward recursion and
//! reference oracles.

mod forward;
mod matrices;
mod oracle;

pub use forward::{
    forward_log_likelihood, log_likelihood_dataset, log_likelihood_individual, AliveVector, ForwardError, ForwardState,
    LikelihoodProblem, VanishedAt, IMPOSSIBLE_MASS,
};
pub use matrices::{
    build_observation_matrix, build_system_matrix, AliveBlock, DeathColumn, DenseBlock, ObservationMatrix, Pattern,
    SystemMatrix,
};
pub use oracle::{brute_force_likelihood, no_covariate_likelihood, MAX_TERMS};
