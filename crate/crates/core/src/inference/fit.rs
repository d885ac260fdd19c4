//! Maximum likelihood fitting with Wald intervals from the observed information.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::hessian::{hessian, invert_information};
use super::optimizer::{minimize, Convergence, OptimOptions, OptimResult};
use crate::domain::{Constraint, CovariateGrid, Dataset, ModelSpec, ParameterVector};
use crate::error::{Error, Result};
use crate::kernels::normal_quantile;
use crate::likelihood::LikelihoodProblem;

/// Transformed estimates beyond this magnitude count as on the boundary.
pub const BOUNDARY_THETA: f64 = 12.0;

const THETA_CAP: f64 = 30.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FitOptions {
    pub optimizer: OptimOptions,
    /// Number of starts; starts after the first jitter the transformed initial values.
    pub starts: usize,
    /// Standard deviation of the jitter, in transformed units.
    pub jitter: f64,
    pub seed: u64,
    pub compute_hessian: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { optimizer: OptimOptions::default(), starts: 1, jitter: 0.5, seed: 1, compute_hessian: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub estimate: f64,
    /// Estimate on the unconstrained scale.
    pub theta: f64,
    pub se_theta: Option<f64>,
    /// Delta-method standard error on the natural scale.
    pub se: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub at_boundary: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub label: String,
    pub spec: ModelSpec,
    pub grid: CovariateGrid,
    pub estimates: ParameterVector,
    pub max_loglik: f64,
    pub aic: f64,
    pub q: usize,
    pub parameters: Vec<ParameterSummary>,
    /// Covariance of the unconstrained estimates; `None` where not estimable.
    pub covariance: Option<Vec<Vec<Option<f64>>>>,
    pub hessian_diagnostic: Option<String>,
    pub convergence: Convergence,
    pub iterations: usize,
    pub evaluations: usize,
    pub data_checksum: String,
    pub runtime_seconds: f64,
}

impl FitResult {
    pub fn parameter(&self, name: &str) -> Option<&ParameterSummary> {
        self.parameters.iter().find(|p| p.name == name)
    }
}

pub fn aic(q: usize, loglik: f64) -> f64 {
    2.0 * q as f64 - 2.0 * loglik
}

/// Negative log-likelihood over the unconstrained parameters; infinite where
/// the model cannot be evaluated.
pub(crate) fn objective<'a>(
    problem: &'a LikelihoodProblem,
    layout: &'a ParameterVector,
) -> impl Fn(&[f64]) -> f64 + Sync + 'a {
    move |theta: &[f64]| {
        let ll =
            layout.with_unconstrained(theta).decode(problem.spec()).and_then(|params| problem.log_likelihood(&params));
        match ll {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    }
}

/// Maximizes the log-likelihood of `data` under `spec` from `init`.
pub fn fit(
    data: &Dataset,
    spec: &ModelSpec,
    grid: &CovariateGrid,
    init: &ParameterVector,
    opts: &FitOptions,
) -> Result<FitResult> {
    let started = Instant::now();
    init.validate()?;
    let problem = LikelihoodProblem::new(data, spec, grid)?;
    let spec = problem.spec().clone();
    if init.len() != ParameterVector::template(&spec).len() {
        return Err(Error::validation("initial values do not match the model's parameter layout"));
    }
    init.decode(&spec)?;
    let f = objective(&problem, init);
    let theta0 = init.to_unconstrained();

    let mut best: Option<OptimResult> = None;
    let mut evaluations = 0;
    let mut first_error = None;
    let jitter = Normal::new(0.0, opts.jitter.max(0.0)).map_err(|e| Error::validation(e.to_string()))?;
    for k in 0..opts.starts.max(1) {
        let start: Vec<f64> = if k == 0 {
            theta0.clone()
        } else {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(k as u64);
            theta0.iter().map(|v| v + jitter.sample(&mut rng)).collect()
        };
        match minimize(&f, &start, &opts.optimizer) {
            Ok(r) => {
                evaluations += r.evaluations;
                if best.as_ref().is_none_or(|b| r.f < b.f) {
                    best = Some(r);
                }
            }
            Err(e) => {
                first_error.get_or_insert(e);
            }
        }
    }
    let best = match (best, first_error) {
        (Some(b), _) => b,
        (None, Some(e)) => return Err(e),
        (None, None) => unreachable!("at least one start runs"),
    };

    // keep boundary probabilities invertible so the estimate can be re-transformed
    let theta: Vec<f64> = best
        .x
        .iter()
        .zip(init.entries())
        .map(|(&v, p)| if p.constraint == Constraint::Probability { v.clamp(-THETA_CAP, THETA_CAP) } else { v })
        .collect();
    let estimates = init.with_unconstrained(&theta);
    let q = estimates.len();
    let at_estimate = f(&theta);
    let max_loglik = -if at_estimate.is_finite() { at_estimate } else { best.f };
    let mut result = FitResult {
        label: String::new(),
        spec: spec.clone(),
        grid: *grid,
        parameters: plain_summaries(&estimates),
        estimates,
        max_loglik,
        aic: aic(q, max_loglik),
        q,
        covariance: None,
        hessian_diagnostic: None,
        convergence: best.status,
        iterations: best.iterations,
        evaluations,
        data_checksum: data.checksum(),
        runtime_seconds: 0.0,
    };
    if opts.compute_hessian {
        attach_intervals(&mut result, &problem, 0.95);
    }
    result.runtime_seconds = started.elapsed().as_secs_f64();
    Ok(result)
}

fn plain_summaries(pv: &ParameterVector) -> Vec<ParameterSummary> {
    pv.entries()
        .iter()
        .map(|p| {
            let theta = p.constraint.to_unconstrained(p.value);
            ParameterSummary {
                name: p.name.clone(),
                estimate: p.value,
                theta,
                se_theta: None,
                se: None,
                lower: None,
                upper: None,
                at_boundary: p.constraint == Constraint::Probability && theta.abs() > BOUNDARY_THETA,
            }
        })
        .collect()
}

fn attach_intervals(result: &mut FitResult, problem: &LikelihoodProblem, level: f64) {
    let f = objective(problem, &result.estimates);
    let theta = result.estimates.to_unconstrained();
    let fx = f(&theta);
    let n = theta.len();
    let info = hessian(&f, &theta, fx);
    let summaries = plain_summaries(&result.estimates);
    let include: Vec<bool> = summaries.iter().map(|s| !s.at_boundary).collect();
    let inv = invert_information(&info, n, &include);
    let z = normal_quantile(0.5 + level / 2.0);
    let mut diagnostic = inv.diagnostic.clone();
    if result.convergence != Convergence::Converged {
        let note = format!("optimizer stopped with {:?}", result.convergence);
        diagnostic = Some(match diagnostic {
            Some(d) => format!("{note}; {d}"),
            None => note,
        });
    }
    result.parameters = summaries
        .into_iter()
        .zip(result.estimates.entries())
        .enumerate()
        .map(|(i, (mut s, p))| {
            if let Some(var) = inv.covariance[i][i].filter(|v| *v > 0.0) {
                let se_theta = var.sqrt();
                s.se_theta = Some(se_theta);
                s.se = Some(se_theta * p.constraint.jacobian(s.theta));
                s.lower = Some(p.constraint.to_natural(s.theta - z * se_theta));
                s.upper = Some(p.constraint.to_natural(s.theta + z * se_theta));
            }
            s
        })
        .collect();
    result.covariance = Some(inv.covariance);
    result.hessian_diagnostic = diagnostic;
}

/// Wald intervals at `level` for an existing fit, recomputing the Hessian on `data`.
pub fn hessian_ci(fit: &FitResult, data: &Dataset, level: f64) -> Result<Vec<ParameterSummary>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::validation(format!("confidence level must lie in (0, 1), got {level}")));
    }
    if data.checksum() != fit.data_checksum {
        return Err(Error::MixedDatasets(fit.data_checksum.clone(), data.checksum()));
    }
    let problem = LikelihoodProblem::new(data, &fit.spec, &fit.grid)?;
    let mut copy = fit.clone();
    attach_intervals(&mut copy, &problem, level);
    Ok(copy.parameters)
}
