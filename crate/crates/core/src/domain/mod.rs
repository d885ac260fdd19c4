//! Domain types shared by every module.

mod grid;
mod history;
mod params;
mod spec;
mod survival;

pub use grid::CovariateGrid;
pub use history::{CaptureCode, CaptureHistory, Dataset, DatasetSummary};
pub use params::{
    all_initial_covariates_observed, Constraint, ModelParams, OccasionProbs, ParamRole, Parameter, ParameterVector,
    SurvivalCoefficients,
};
pub use spec::{age_group, AgeGroups, GroupId, InitialMode, KernelFamily, ModelSpec, TimeStructure};
pub use survival::{logistic, logit, observation_prob, survival_prob, survival_transition, SurvivalState};
