//! Synthetic capture histories from the generative model, and simulated
//! covariate quantiles among survivors.

mod quantiles;

pub use quantiles::{covariate_quantiles, QuantileRow};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{
    logistic, AgeGroups, CaptureCode, CaptureHistory, Dataset, GroupId, OccasionProbs, SurvivalCoefficients,
};
use crate::error::{Error, Result};
use crate::kernels::{conditional_mean, InitialDistribution, KernelParams};

fn zero() -> f64 {
    0.0
}

fn single_groups() -> AgeGroups {
    AgeGroups::single()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub individuals: usize,
    pub occasions: usize,
    #[serde(default = "single_groups")]
    pub age_groups: AgeGroups,
    /// One entry shared by every age group, or one per group.
    pub survival: Vec<SurvivalCoefficients>,
    pub kernel: KernelParams,
    pub initial: InitialDistribution,
    pub recapture: OccasionProbs,
    pub recovery: OccasionProbs,
    /// Probability that a live recapture records no covariate.
    #[serde(default = "zero")]
    pub missingness: f64,
    /// Probability that the first capture records no covariate.
    #[serde(default = "zero")]
    pub initial_missingness: f64,
    pub seed: u64,
}

/// Latent path of one simulated individual.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualTruth {
    pub id: String,
    pub first: usize,
    /// Covariate at occasions `first..=T` while alive.
    pub covariate: Vec<Option<f64>>,
    pub alive: Vec<bool>,
    /// Occasion by which the individual had died, if within the study.
    pub death: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedData {
    pub dataset: Dataset,
    pub truth: Vec<IndividualTruth>,
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.individuals == 0 {
            return Err(Error::validation("simulation needs at least one individual"));
        }
        if self.occasions < 2 {
            return Err(Error::validation("simulation needs at least 2 occasions"));
        }
        self.age_groups.validate()?;
        if self.survival.is_empty() || (self.survival.len() != 1 && self.survival.len() != self.age_groups.len()) {
            return Err(Error::validation(format!(
                "expected 1 or {} survival coefficient sets, got {}",
                self.age_groups.len(),
                self.survival.len()
            )));
        }
        for (what, probs) in [("recapture", &self.recapture), ("recovery", &self.recovery)] {
            probs.validate(what)?;
            if let OccasionProbs::PerOccasion(v) = probs {
                if v.len() != self.occasions - 1 {
                    return Err(Error::validation(format!(
                        "{what} needs {} per-occasion values, got {}",
                        self.occasions - 1,
                        v.len()
                    )));
                }
            }
        }
        for (what, v) in [("missingness", self.missingness), ("initial_missingness", self.initial_missingness)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::validation(format!("{what} must lie in [0, 1], got {v}")));
            }
        }
        let InitialDistribution::Normal { sd, .. } = self.initial else {
            return Err(Error::validation("simulation needs a normal initial covariate distribution"));
        };
        if !(sd >= 0.0) {
            return Err(Error::validation("initial sd must be non-negative"));
        }
        self.kernel_sd_check()
    }

    fn kernel_sd_check(&self) -> Result<()> {
        for g in 0..self.age_groups.len() {
            let sd = self.kernel.sd(GroupId(g))?;
            if !(sd >= 0.0 && sd.is_finite()) {
                return Err(Error::validation(format!("kernel sd must be non-negative, got {sd}")));
            }
        }
        Ok(())
    }

    pub(crate) fn survival_for(&self, group: GroupId) -> SurvivalCoefficients {
        match self.survival.as_slice() {
            [only] => *only,
            all => all[group.0],
        }
    }
}

/// Generator for individual `index`: independent of every other individual and
/// of scheduling.
pub fn individual_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

pub(crate) fn draw_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64) -> f64 {
    if sd == 0.0 {
        return mean;
    }
    Normal::new(mean, sd).expect("validated sd").sample(rng)
}

/// Next covariate value given the value at `t`, for a transition into occasion `t + 1`.
pub(crate) fn kernel_step(
    kernel: &KernelParams,
    rng: &mut ChaCha8Rng,
    y: f64,
    t: usize,
    group: GroupId,
) -> Result<f64> {
    let mean = conditional_mean(kernel, y, t + 1, group)?;
    Ok(draw_normal(rng, mean, kernel.sd(group)?))
}

/// Simulates one history. The first capture occasion is uniform on `1..T`.
pub fn simulate_individual(
    cfg: &SimConfig,
    id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<(CaptureHistory, IndividualTruth)> {
    let big_t = cfg.occasions;
    let first = rng.random_range(1..big_t);
    let InitialDistribution::Normal { mean, sd } = cfg.initial else {
        return Err(Error::validation("simulation needs a normal initial covariate distribution"));
    };
    let n = big_t - first + 1;
    let mut codes = Vec::with_capacity(n);
    let mut observed = Vec::with_capacity(n);
    let mut latent = Vec::with_capacity(n);
    let mut alive = Vec::with_capacity(n);

    let mut y = draw_normal(rng, mean, sd);
    codes.push(CaptureCode::Seen);
    observed.push((rng.random::<f64>() >= cfg.initial_missingness).then_some(y));
    latent.push(Some(y));
    alive.push(true);

    let mut death = None;
    for t in first..big_t {
        let next = t + 1;
        if death.is_some() {
            codes.push(CaptureCode::Unseen);
            observed.push(None);
            latent.push(None);
            alive.push(false);
            continue;
        }
        let group = cfg.age_groups.group_of_age(t - first);
        let coef = cfg.survival_for(group);
        let survives = rng.random::<f64>() < logistic(coef.intercept + coef.slope * y);
        if survives {
            y = kernel_step(&cfg.kernel, rng, y, t, group)?;
            let seen = rng.random::<f64>() < cfg.recapture.at(next);
            let recorded = rng.random::<f64>() >= cfg.missingness;
            codes.push(if seen { CaptureCode::Seen } else { CaptureCode::Unseen });
            observed.push((seen && recorded).then_some(y));
            latent.push(Some(y));
            alive.push(true);
        } else {
            death = Some(next);
            let found = rng.random::<f64>() < cfg.recovery.at(next);
            codes.push(if found { CaptureCode::Recovered } else { CaptureCode::Unseen });
            observed.push(None);
            latent.push(None);
            alive.push(false);
        }
    }
    let hist = CaptureHistory::new(id, first, codes, observed)?;
    let truth = IndividualTruth { id: id.to_string(), first, covariate: latent, alive, death };
    Ok((hist, truth))
}

/// Zero-padded identifiers so that lexical and numeric order agree.
pub fn individual_ids(n: usize) -> Vec<String> {
    let width = n.to_string().len();
    (1..=n).map(|k| format!("ind{k:0width$}")).collect()
}

/// Simulates `cfg.individuals` histories in parallel; output is ordered by id
/// and identical for a given seed regardless of thread count.
pub fn simulate_dataset(cfg: &SimConfig) -> Result<SimulatedData> {
    cfg.validate()?;
    let ids = individual_ids(cfg.individuals);
    let pairs: Vec<(CaptureHistory, IndividualTruth)> = ids
        .par_iter()
        .enumerate()
        .map(|(k, id)| simulate_individual(cfg, id, &mut individual_rng(cfg.seed, k as u64)))
        .collect::<Result<_>>()?;
    let (histories, truth): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(SimulatedData { dataset: Dataset::new(histories)?, truth })
}
