//! The four-scenario simulation study: data-generating settings, the three
//! fitted covariate models and the bias/coverage summaries.

use serde::{Deserialize, Serialize};

use crate::domain::{
    AgeGroups, CovariateGrid, Dataset, InitialMode, KernelFamily, ModelSpec, OccasionProbs, ParameterVector,
    SurvivalCoefficients, TimeStructure,
};
use crate::error::{Error, Result};
use crate::inference::{fit, FitOptions, FitResult};
use crate::kernels::{InitialDistribution, KernelParams};
use crate::simulation::{simulate_dataset, SimConfig};

pub const TRUE_BETA0: f64 = -3.0;
pub const TRUE_BETA1: f64 = 0.2;

/// Recapture and recovery probabilities of scenarios 1 to 4.
pub const SCENARIOS: [(f64, f64); 4] = [(0.95, 0.95), (0.90, 0.30), (0.30, 0.90), (0.30, 0.30)];

/// Generating model of `scenario` (1-based) with `individuals` histories over
/// `occasions` occasions.
pub fn scenario_config(scenario: usize, individuals: usize, occasions: usize, seed: u64) -> Result<SimConfig> {
    let &(p, lambda) = scenario
        .checked_sub(1)
        .and_then(|k| SCENARIOS.get(k))
        .ok_or_else(|| Error::validation(format!("scenario must be 1 to 4, got {scenario}")))?;
    Ok(SimConfig {
        individuals,
        occasions,
        age_groups: AgeGroups::single(),
        survival: vec![SurvivalCoefficients { intercept: TRUE_BETA0, slope: TRUE_BETA1 }],
        kernel: KernelParams::SineTrendAr {
            eta: 0.6,
            level: 25.0,
            amplitude: 2.0,
            sigma: 1.2,
            period: occasions as f64,
        },
        initial: InitialDistribution::Normal { mean: 15.0, sd: 2.0 },
        recapture: OccasionProbs::Constant(p),
        recovery: OccasionProbs::Constant(lambda),
        missingness: 0.0,
        initial_missingness: 0.0,
        seed,
    })
}

/// Covariate models fitted in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StudyModel {
    /// The generating sine-trend autoregression.
    HmmC,
    /// Autoregression without the trend.
    HmmM1,
    /// Independent normal values at every occasion.
    HmmM2,
}

impl StudyModel {
    pub const ALL: [StudyModel; 3] = [StudyModel::HmmC, StudyModel::HmmM1, StudyModel::HmmM2];

    pub fn label(self) -> &'static str {
        match self {
            StudyModel::HmmC => "HMM-C",
            StudyModel::HmmM1 => "HMM-M1",
            StudyModel::HmmM2 => "HMM-M2",
        }
    }

    /// Model structure; every model conditions on the observed first covariate.
    pub fn spec(self, occasions: usize) -> ModelSpec {
        let kernel = match self {
            StudyModel::HmmC => KernelFamily::SineTrendAr { period: occasions as f64 },
            StudyModel::HmmM1 => KernelFamily::MeanRevertingAr { by_group: false },
            StudyModel::HmmM2 => KernelFamily::IidNormal,
        };
        ModelSpec {
            age_groups: AgeGroups::single(),
            survival_by_group: false,
            kernel,
            recapture: TimeStructure::Constant,
            recovery: TimeStructure::Constant,
            initial: InitialMode::ConditionOnObserved,
            occasions,
        }
    }
}

/// Grid from the observed covariate range with the 0.8 / 1.2 widening rule.
pub fn data_grid(data: &Dataset, m: usize) -> Result<CovariateGrid> {
    let (lo, hi) = data.covariate_range().ok_or_else(|| Error::validation("dataset records no covariate values"))?;
    CovariateGrid::from_observed_range(lo, hi, m)
}

/// Fits `model` to `data` from the default starting values.
pub fn fit_model(data: &Dataset, model: StudyModel, m: usize, opts: &FitOptions) -> Result<FitResult> {
    let spec = model.spec(data.occasions());
    let grid = data_grid(data, m)?;
    let init = ParameterVector::defaults(&spec, data);
    let mut result = fit(data, &spec, &grid, &init, opts)?;
    result.label = model.label().to_string();
    Ok(result)
}

/// Survival-coefficient estimates of one fitted replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientEstimate {
    pub estimate: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateFit {
    pub model: StudyModel,
    pub beta0: CoefficientEstimate,
    pub beta1: CoefficientEstimate,
    pub max_loglik: f64,
    pub aic: f64,
    pub converged: bool,
}

impl ReplicateFit {
    pub fn from_fit(model: StudyModel, fit: &FitResult) -> Result<Self> {
        let coef = |name: &str| {
            fit.parameter(name)
                .map(|p| CoefficientEstimate { estimate: p.estimate, lower: p.lower, upper: p.upper })
                .ok_or_else(|| Error::validation(format!("fit has no `{name}`")))
        };
        Ok(Self {
            model,
            beta0: coef("beta0")?,
            beta1: coef("beta1")?,
            max_loglik: fit.max_loglik,
            aic: fit.aic,
            converged: fit.convergence == crate::inference::Convergence::Converged,
        })
    }
}

/// Simulates replicate `seed` of `scenario` and fits each of `models`.
pub fn run_replicate(
    scenario: usize,
    individuals: usize,
    occasions: usize,
    seed: u64,
    models: &[StudyModel],
    m: usize,
    opts: &FitOptions,
) -> Result<Vec<ReplicateFit>> {
    let cfg = scenario_config(scenario, individuals, occasions, seed)?;
    let data = simulate_dataset(&cfg)?.dataset;
    models.iter().map(|&model| ReplicateFit::from_fit(model, &fit_model(&data, model, m, opts)?)).collect()
}

/// Individuals, occasions and covariate missingness of the Soay-like dataset.
pub const SOAY_LIKE: (usize, usize, f64) = (1344, 25, 0.38);

/// Soay-like generating model: four age groups with their own logistic
/// survival and mean-reverting body-mass process, time-varying recapture and
/// recovery, and 38% of live captures without a recorded covariate.
pub fn soay_like_config(seed: u64) -> SimConfig {
    let (individuals, occasions, missing) = SOAY_LIKE;
    let wave = |base: f64, amp: f64| {
        OccasionProbs::PerOccasion((2..=occasions).map(|t| base + amp * (t as f64 * 1.3).sin()).collect())
    };
    SimConfig {
        individuals,
        occasions,
        age_groups: AgeGroups::lamb_yearling_adult_senior(),
        survival: vec![
            SurvivalCoefficients { intercept: -5.0, slope: 0.45 },
            SurvivalCoefficients { intercept: -4.0, slope: 0.25 },
            SurvivalCoefficients { intercept: -2.0, slope: 0.17 },
            SurvivalCoefficients { intercept: -5.0, slope: 0.25 },
        ],
        kernel: KernelParams::MeanRevertingAr {
            eta: vec![0.6, 0.5, 0.4, 0.4],
            mu: vec![20.0, 24.0, 26.0, 24.0],
            sigma: vec![2.0, 1.8, 1.5, 1.8],
        },
        initial: InitialDistribution::Normal { mean: 14.0, sd: 2.5 },
        recapture: wave(0.8, 0.12),
        recovery: wave(0.45, 0.2),
        missingness: missing,
        initial_missingness: missing,
        seed,
    }
}

/// Age-structured survival and body-mass process, time-dependent recapture
/// and recovery, and an estimated normal initial distribution.
pub fn soay_model_spec(occasions: usize) -> ModelSpec {
    ModelSpec {
        age_groups: AgeGroups::lamb_yearling_adult_senior(),
        survival_by_group: true,
        kernel: KernelFamily::MeanRevertingAr { by_group: true },
        recapture: TimeStructure::TimeDependent,
        recovery: TimeStructure::TimeDependent,
        initial: InitialMode::EstimatedNormal,
        occasions,
    }
}

/// Relative bias, interval width and coverage over replicates for one coefficient.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSummary {
    pub replicates: usize,
    pub mean_relative_bias: f64,
    pub bias_q025: f64,
    pub bias_q975: f64,
    /// Mean interval width over replicates with an interval.
    pub mean_ci_width: f64,
    /// Fraction of replicates whose interval covers the truth; replicates
    /// without an interval count as not covering.
    pub coverage: f64,
    pub with_interval: usize,
}

pub fn summarize(estimates: &[CoefficientEstimate], truth: f64) -> CoefficientSummary {
    let n = estimates.len();
    let mut rb: Vec<f64> = estimates.iter().map(|e| (e.estimate - truth) / truth).collect();
    let mean = rb.iter().sum::<f64>() / n as f64;
    rb.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let h = p * (n - 1) as f64;
        let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
        rb[lo] + (h - lo as f64) * (rb[hi] - rb[lo])
    };
    let intervals: Vec<(f64, f64)> = estimates.iter().filter_map(|e| Some((e.lower?, e.upper?))).collect();
    let width = intervals.iter().map(|(l, u)| u - l).sum::<f64>() / intervals.len().max(1) as f64;
    let covered = intervals.iter().filter(|(l, u)| *l <= truth && truth <= *u).count();
    CoefficientSummary {
        replicates: n,
        mean_relative_bias: mean,
        bias_q025: q(0.025),
        bias_q975: q(0.975),
        mean_ci_width: width,
        coverage: covered as f64 / n as f64,
        with_interval: intervals.len(),
    }
}
