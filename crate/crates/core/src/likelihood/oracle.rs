//! Reference evaluators used to check the forward recursion: direct summation
//! over every latent path, and the three-state likelihood without a covariate.

use crate::domain::{
    observation_prob, survival_prob, survival_transition, CaptureHistory, CovariateGrid, ModelParams, ModelSpec,
    OccasionProbs, SurvivalState,
};
use crate::error::{Error, Result};
use crate::kernels::{interval_prob, normal_cdf, normal_pdf, transition_density, InitialDistribution};

/// Largest number of latent paths [`brute_force_likelihood`] will enumerate.
pub const MAX_TERMS: f64 = 1e7;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Latent {
    /// Alive with covariate in cell `j`.
    Alive(usize),
    Recent,
    Long,
}

impl Latent {
    fn state(self) -> SurvivalState {
        match self {
            Latent::Alive(_) => SurvivalState::Alive,
            Latent::Recent => SurvivalState::RecentDead,
            Latent::Long => SurvivalState::LongDead,
        }
    }
}

fn candidates(hist: &CaptureHistory, t: usize, grid: &CovariateGrid) -> Result<Vec<Latent>> {
    if let Some(y) = hist.covariate(t) {
        return Ok(vec![Latent::Alive(grid.checked_index_of(y)?)]);
    }
    let mut out = Vec::with_capacity(grid.m() + 2);
    if !hist.known_dead(t) {
        out.extend((0..grid.m()).map(Latent::Alive));
    }
    out.extend([Latent::Recent, Latent::Long]);
    Ok(out)
}

/// Likelihood (not log) of one history by summing the product of indicator-
/// selected factors over every combination of unknown survival states and
/// covariate cells.
pub fn brute_force_likelihood(
    hist: &CaptureHistory,
    params: &ModelParams,
    spec: &ModelSpec,
    grid: &CovariateGrid,
) -> Result<f64> {
    let (g, last) = (hist.first(), hist.last());
    let sets = (g..=last).map(|t| candidates(hist, t, grid)).collect::<Result<Vec<_>>>()?;
    let terms: f64 = sets.iter().map(|s| s.len() as f64).product();
    if terms > MAX_TERMS {
        return Err(Error::InstanceTooLarge { terms, limit: MAX_TERMS });
    }

    let initial = |s: Latent| -> f64 {
        let Latent::Alive(j) = s else { return 0.0 };
        match (params.initial, hist.covariate(g)) {
            (InitialDistribution::Condition, Some(_)) => 1.0,
            (InitialDistribution::Normal { mean, sd }, Some(y)) => normal_pdf((y - mean) / sd) / sd,
            (InitialDistribution::Normal { mean, sd }, None) => {
                normal_cdf((grid.boundary(j + 1) - mean) / sd) - normal_cdf((grid.boundary(j) - mean) / sd)
            }
            (InitialDistribution::Condition, None) => f64::NAN,
        }
    };

    // factor for the move from `a` at t to `b` at t + 1, including the observation at t + 1
    let step = |t: usize, a: Latent, b: Latent| -> Result<f64> {
        let group = spec.age_groups.group_of_age(hist.age(t)?);
        let coef = params.survival_for(group);
        let phi = match (a, hist.covariate(t)) {
            (Latent::Alive(_), Some(y)) => survival_prob(coef.intercept, coef.slope, y),
            (Latent::Alive(i), None) => survival_prob(coef.intercept, coef.slope, grid.midpoint(i)),
            _ => 0.0,
        };
        let mut f = survival_transition(a.state(), b.state(), phi);
        if let (Latent::Alive(i), Latent::Alive(j)) = (a, b) {
            let from = hist.covariate(t).unwrap_or_else(|| grid.midpoint(i));
            f *= match hist.covariate(t + 1) {
                Some(y) => transition_density(&params.kernel, y, from, t + 1, group)?,
                None => interval_prob(&params.kernel, j, grid, from, t + 1, group)?,
            };
        }
        let p = params.recapture.at(t + 1);
        let lambda = params.recovery.at(t + 1);
        Ok(f * observation_prob(hist.capture(t + 1), b.state(), p, lambda))
    };

    let mut total = 0.0;
    let mut idx = vec![0usize; sets.len()];
    loop {
        let path: Vec<Latent> = idx.iter().zip(&sets).map(|(&k, s)| s[k]).collect();
        let mut term = initial(path[0]);
        for (k, w) in path.windows(2).enumerate() {
            if term == 0.0 {
                break;
            }
            term *= step(g + k, w[0], w[1])?;
        }
        total += term;

        // odometer increment, last position fastest
        let mut pos = sets.len();
        loop {
            if pos == 0 {
                return Ok(total);
            }
            pos -= 1;
            idx[pos] += 1;
            if idx[pos] < sets[pos].len() {
                break;
            }
            idx[pos] = 0;
        }
    }
}

/// Likelihood of a history under the covariate-free three-state model, with
/// `phi(t)` the survival probability from `t` to `t + 1`.
pub fn no_covariate_likelihood(
    hist: &CaptureHistory,
    phi: impl Fn(usize) -> f64,
    recapture: &OccasionProbs,
    recovery: &OccasionProbs,
) -> f64 {
    let states = SurvivalState::ALL;
    let mut alpha = [1.0, 0.0, 0.0];
    for t in hist.first()..hist.last() {
        let mut next = [0.0; 3];
        for (b, slot) in states.iter().zip(next.iter_mut()) {
            let reach: f64 = states.iter().zip(&alpha).map(|(&a, &w)| w * survival_transition(a, *b, phi(t))).sum();
            *slot = reach * observation_prob(hist.capture(t + 1), *b, recapture.at(t + 1), recovery.at(t + 1));
        }
        alpha = next;
    }
    alpha.iter().sum()
}
