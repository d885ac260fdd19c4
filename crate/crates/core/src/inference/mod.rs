//! Likelihood maximization, Hessian-based intervals, AIC and survival curves.

mod curves;
mod fit;
mod hessian;
mod optimizer;
mod selection;

pub use curves::{survival_curve, CurvePoint};
pub use fit::{aic, fit, hessian_ci, FitOptions, FitResult, ParameterSummary, BOUNDARY_THETA};
pub use hessian::{hessian, invert_information, InvertedInformation};
pub use optimizer::{gradient, minimize, Convergence, OptimOptions, OptimResult};
pub use selection::{delta_aic, AicRow};
