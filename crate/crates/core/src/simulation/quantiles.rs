use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{draw_normal, individual_rng, kernel_step};
use crate::domain::{logistic, ModelParams, ModelSpec};
use crate::error::{Error, Result};
use crate::kernels::InitialDistribution;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileRow {
    pub age: usize,
    /// Paths still alive at this age.
    pub alive: usize,
    pub q05: Option<f64>,
    pub q50: Option<f64>,
    pub q95: Option<f64>,
}

/// Linear interpolation between order statistics of sorted `v`.
fn quantile(v: &[f64], p: f64) -> f64 {
    let h = p * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// 5%, 50% and 95% quantiles of the covariate among individuals alive at each
/// of `ages`, from `n_paths` simulated paths starting at age 0 (occasion 1)
/// with the initial covariate distribution.
pub fn covariate_quantiles(
    spec: &ModelSpec,
    params: &ModelParams,
    ages: &[usize],
    n_paths: usize,
    seed: u64,
) -> Result<Vec<QuantileRow>> {
    let InitialDistribution::Normal { mean, sd } = params.initial else {
        return Err(Error::validation("covariate quantiles need a normal initial distribution"));
    };
    if n_paths == 0 {
        return Err(Error::validation("need at least one simulated path"));
    }
    let max_age = ages.iter().copied().max().unwrap_or(0);
    let paths: Vec<Vec<Option<f64>>> = (0..n_paths)
        .into_par_iter()
        .map(|k| {
            let mut rng = individual_rng(seed, k as u64);
            let mut y = draw_normal(&mut rng, mean, sd);
            let mut path = Vec::with_capacity(max_age + 1);
            path.push(Some(y));
            for age in 0..max_age {
                let group = spec.age_groups.group_of_age(age);
                let coef = params.survival_for(group);
                if rng.random::<f64>() >= logistic(coef.intercept + coef.slope * y) {
                    path.resize(max_age + 1, None);
                    break;
                }
                y = kernel_step(&params.kernel, &mut rng, y, age + 1, group)?;
                path.push(Some(y));
            }
            Ok(path)
        })
        .collect::<Result<_>>()?;
    Ok(ages
        .iter()
        .map(|&age| {
            let mut alive: Vec<f64> = paths.iter().filter_map(|p| p[age]).collect();
            alive.sort_by(f64::total_cmp);
            let q = |p| (!alive.is_empty()).then(|| quantile(&alive, p));
            QuantileRow { age, alive: alive.len(), q05: q(0.05), q50: q(0.5), q95: q(0.95) }
        })
        .collect())
}
