//! Covariate process kernels: conditional means, transition densities, interval
//! transition probabilities and the initial covariate vector.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use serde::{Deserialize, Serialize};

use crate::domain::{CovariateGrid, GroupId};
use crate::error::{Error, Result};

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Standard normal CDF.
pub fn normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * FRAC_1_SQRT_2)
}

/// Standard normal upper tail `1 - Phi(z)`, accurate far into the right tail.
pub fn normal_sf(z: f64) -> f64 {
    0.5 * libm::erfc(z * FRAC_1_SQRT_2)
}

/// `Phi(hi) - Phi(lo)` for `lo <= hi`, computed on whichever tail avoids cancellation.
pub fn normal_interval(lo: f64, hi: f64) -> f64 {
    if lo >= 0.0 {
        normal_sf(lo) - normal_sf(hi)
    } else if hi <= 0.0 {
        normal_cdf(hi) - normal_cdf(lo)
    } else {
        1.0 - normal_cdf(lo) - normal_sf(hi)
    }
}

pub fn normal_pdf(z: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Standard normal quantile by bisection on [`normal_cdf`].
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile level must be in (0, 1)");
    let (mut lo, mut hi) = (-40.0f64, 40.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if normal_cdf(mid) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Parameter values of a covariate process. Per-group vectors of length one
/// are shared by all age groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelParams {
    MeanRevertingAr { eta: Vec<f64>, mu: Vec<f64>, sigma: Vec<f64> },
    RandomWalkDrift { mu: Vec<f64>, sigma: Vec<f64> },
    SineTrendAr { eta: f64, level: f64, amplitude: f64, sigma: f64, period: f64 },
    IidNormal { mean: f64, sd: f64 },
}

fn pick(values: &[f64], group: GroupId) -> Result<f64> {
    match values {
        [v] => Ok(*v),
        _ => values.get(group.0).copied().ok_or(Error::IndexOutOfRange { index: group.0, limit: values.len() }),
    }
}

impl KernelParams {
    pub fn validate(&self) -> Result<()> {
        let check_sigma = |s: f64| {
            if s > 0.0 && s.is_finite() {
                Ok(())
            } else {
                Err(Error::validation(format!("kernel standard deviation must be positive, got {s}")))
            }
        };
        let check_eta = |e: f64| {
            if e > 0.0 && e < 1.0 {
                Ok(())
            } else {
                Err(Error::validation(format!("autoregressive eta must lie in (0, 1), got {e}")))
            }
        };
        match self {
            KernelParams::MeanRevertingAr { eta, mu, sigma } => {
                if eta.is_empty() || mu.len() != eta.len() || sigma.len() != eta.len() {
                    return Err(Error::validation("mean-reverting kernel needs equal-length eta, mu, sigma"));
                }
                eta.iter().try_for_each(|&e| check_eta(e))?;
                sigma.iter().try_for_each(|&s| check_sigma(s))
            }
            KernelParams::RandomWalkDrift { mu, sigma } => {
                if mu.is_empty() || sigma.len() != mu.len() {
                    return Err(Error::validation("random-walk kernel needs equal-length mu, sigma"));
                }
                sigma.iter().try_for_each(|&s| check_sigma(s))
            }
            KernelParams::SineTrendAr { eta, sigma, period, .. } => {
                check_eta(*eta)?;
                check_sigma(*sigma)?;
                if *period > 0.0 {
                    Ok(())
                } else {
                    Err(Error::validation("sine trend period must be positive"))
                }
            }
            KernelParams::IidNormal { sd, .. } => check_sigma(*sd),
        }
    }

    /// Innovation standard deviation for transitions out of `group`.
    pub fn sd(&self, group: GroupId) -> Result<f64> {
        match self {
            KernelParams::MeanRevertingAr { sigma, .. } | KernelParams::RandomWalkDrift { sigma, .. } => {
                pick(sigma, group)
            }
            KernelParams::SineTrendAr { sigma, .. } => Ok(*sigma),
            KernelParams::IidNormal { sd, .. } => Ok(*sd),
        }
    }
}

/// A first-order covariate transition kernel. `t` is the occasion of the new
/// value and `group` the age group of the individual at the previous occasion.
pub trait TransitionKernel {
    fn density(&self, y_next: f64, y_prev: f64, t: usize, group: GroupId) -> Result<f64>;

    /// Exact mass on `[lo, hi)` when the kernel has a closed-form CDF.
    fn interval_mass(&self, _lo: f64, _hi: f64, _y_prev: f64, _t: usize, _group: GroupId) -> Result<Option<f64>> {
        Ok(None)
    }
}

impl TransitionKernel for KernelParams {
    fn density(&self, y_next: f64, y_prev: f64, t: usize, group: GroupId) -> Result<f64> {
        transition_density(self, y_next, y_prev, t, group)
    }

    fn interval_mass(&self, lo: f64, hi: f64, y_prev: f64, t: usize, group: GroupId) -> Result<Option<f64>> {
        let mean = conditional_mean(self, y_prev, t, group)?;
        let sd = positive_sd(self, group)?;
        Ok(Some(normal_interval((lo - mean) / sd, (hi - mean) / sd)))
    }
}

fn positive_sd(kernel: &KernelParams, group: GroupId) -> Result<f64> {
    let sd = kernel.sd(group)?;
    if sd > 0.0 {
        Ok(sd)
    } else {
        Err(Error::validation(format!("kernel standard deviation must be positive, got {sd}")))
    }
}

pub fn conditional_mean(kernel: &KernelParams, y_prev: f64, t: usize, group: GroupId) -> Result<f64> {
    Ok(match kernel {
        KernelParams::MeanRevertingAr { eta, mu, .. } => y_prev + pick(eta, group)? * (pick(mu, group)? - y_prev),
        KernelParams::RandomWalkDrift { mu, .. } => y_prev + pick(mu, group)?,
        KernelParams::SineTrendAr { eta, level, amplitude, period, .. } => {
            level + eta * (y_prev - level) + amplitude * (2.0 * PI * t as f64 / period).sin()
        }
        KernelParams::IidNormal { mean, .. } => *mean,
    })
}

pub fn transition_density(kernel: &KernelParams, y_next: f64, y_prev: f64, t: usize, group: GroupId) -> Result<f64> {
    let mean = conditional_mean(kernel, y_prev, t, group)?;
    let sd = positive_sd(kernel, group)?;
    Ok(normal_pdf((y_next - mean) / sd) / sd)
}

/// Probability that the next covariate falls in grid cell `j` (0-based).
///
/// Uses the kernel's closed form when it has one, otherwise the midpoint rule
/// `width * f(midpoint | y_prev)`.
pub fn interval_prob<K: TransitionKernel + ?Sized>(
    kernel: &K,
    j: usize,
    grid: &CovariateGrid,
    y_prev: f64,
    t: usize,
    group: GroupId,
) -> Result<f64> {
    if j >= grid.m() {
        return Err(Error::IndexOutOfRange { index: j, limit: grid.m() });
    }
    let (lo, hi) = (grid.boundary(j), grid.boundary(j + 1));
    match kernel.interval_mass(lo, hi, y_prev, t, group)? {
        Some(mass) => Ok(mass),
        None => Ok((hi - lo) * kernel.density(grid.midpoint(j), y_prev, t, group)?),
    }
}

/// Row of cell probabilities for a Gaussian kernel: `out[j] = P(y' in B_j | y_prev)`.
///
/// Evaluates each boundary CDF once; equivalent to calling [`interval_prob`] per cell.
pub fn interval_probs_into(
    kernel: &KernelParams,
    grid: &CovariateGrid,
    y_prev: f64,
    t: usize,
    group: GroupId,
    out: &mut [f64],
) -> Result<()> {
    debug_assert_eq!(out.len(), grid.m());
    let mean = conditional_mean(kernel, y_prev, t, group)?;
    let sd = positive_sd(kernel, group)?;
    let inv = 1.0 / sd;
    // Lower cells use the CDF, upper cells the survival function, so both
    // tails are differenced without cancellation.
    let mut prev_z = (grid.boundary(0) - mean) * inv;
    let mut prev_cdf = normal_cdf(prev_z);
    let mut prev_sf = normal_sf(prev_z);
    for (j, slot) in out.iter_mut().enumerate() {
        let z = (grid.boundary(j + 1) - mean) * inv;
        let cdf = if z <= 0.0 { normal_cdf(z) } else { f64::NAN };
        let sf = if z >= 0.0 { normal_sf(z) } else { f64::NAN };
        *slot = if prev_z >= 0.0 {
            prev_sf - sf
        } else if z <= 0.0 {
            cdf - prev_cdf
        } else {
            1.0 - prev_cdf - sf
        };
        prev_z = z;
        prev_cdf = cdf;
        prev_sf = sf;
    }
    Ok(())
}

/// Distribution of the covariate at first capture.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialDistribution {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Condition on the observed initial covariate.
    Condition,
}

/// Initial row vector of length `m + 2` over (covariate cells, recent dead, long dead).
pub fn initial_vector(dist: &InitialDistribution, grid: &CovariateGrid, y_first: Option<f64>) -> Result<Vec<f64>> {
    let m = grid.m();
    let mut delta = vec![0.0; m + 2];
    match (y_first, dist) {
        (Some(y), _) => {
            let j = grid.checked_index_of(y)?;
            delta[j] = match *dist {
                InitialDistribution::Normal { mean, sd } => {
                    check_initial_sd(sd)?;
                    normal_pdf((y - mean) / sd) / sd
                }
                InitialDistribution::Condition => 1.0,
            };
        }
        (None, InitialDistribution::Normal { mean, sd }) => {
            check_initial_sd(*sd)?;
            for (j, slot) in delta[..m].iter_mut().enumerate() {
                *slot = normal_interval((grid.boundary(j) - mean) / sd, (grid.boundary(j + 1) - mean) / sd);
            }
        }
        (None, InitialDistribution::Condition) => {
            return Err(Error::validation("cannot condition on the initial covariate when it is not observed"));
        }
    }
    Ok(delta)
}

fn check_initial_sd(sd: f64) -> Result<()> {
    if sd > 0.0 {
        Ok(())
    } else {
        Err(Error::validation(format!("initial standard deviation must be positive, got {sd}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const G: GroupId = GroupId(0);

    fn mr(eta: f64, mu: f64, sigma: f64) -> KernelParams {
        KernelParams::MeanRevertingAr { eta: vec![eta], mu: vec![mu], sigma: vec![sigma] }
    }

    fn sine() -> KernelParams {
        KernelParams::SineTrendAr { eta: 0.6, level: 25.0, amplitude: 2.0, sigma: 1.2, period: 10.0 }
    }

    /// Composite Simpson rule, used as an independent check of closed forms.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let n = if n % 2 == 1 { n + 1 } else { n };
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            s += f(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 };
        }
        s * h / 3.0
    }

    #[test]
    fn cdf_reference_values() {
        // Phi(1) - Phi(0) and far-tail values from standard tables.
        assert!((normal_interval(0.0, 1.0) - 0.341_344_746_068_542_9).abs() < 1e-15);
        assert!((normal_sf(8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
        assert!((normal_cdf(-8.0) - 6.220_960_574_271_785e-16).abs() < 1e-28);
        assert!((normal_interval(0.0, 8.0) - 0.5).abs() < 1e-15);
        assert!((normal_quantile(0.975) - 1.959_963_984_540_054).abs() < 1e-12);
    }

    #[test]
    fn conditional_mean_examples() {
        assert_eq!(conditional_mean(&mr(0.5, 20.0, 1.0), 10.0, 3, G).unwrap(), 15.0);
        let m = conditional_mean(&sine(), 25.0, 10, G).unwrap();
        assert!((m - 25.0).abs() < 1e-14);
        let rw = KernelParams::RandomWalkDrift { mu: vec![1.5], sigma: vec![1.0] };
        assert_eq!(conditional_mean(&rw, 10.0, 1, G).unwrap(), 11.5);
    }

    #[test]
    fn unknown_group_is_an_error() {
        let k = KernelParams::MeanRevertingAr { eta: vec![0.5; 2], mu: vec![1.0; 2], sigma: vec![1.0; 2] };
        assert!(conditional_mean(&k, 0.0, 1, GroupId(2)).is_err());
        assert!(conditional_mean(&k, 0.0, 1, GroupId(1)).is_ok());
    }

    #[test]
    fn density_examples() {
        let k = mr(0.5, 20.0, 1.0);
        let d = transition_density(&k, 15.0, 10.0, 1, G).unwrap();
        assert!((d - INV_SQRT_2PI).abs() < 1e-15);
        let k = mr(0.5, 20.0, 1.2);
        let d = transition_density(&k, 16.2, 10.0, 1, G).unwrap();
        assert!((d - INV_SQRT_2PI / 1.2 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((d - 0.20165).abs() < 1e-5);
        let iid = KernelParams::IidNormal { mean: 25.0, sd: 2.0 };
        assert_eq!(
            transition_density(&iid, 24.0, 0.0, 1, G).unwrap(),
            transition_density(&iid, 24.0, 50.0, 1, G).unwrap()
        );
        let bad = mr(0.5, 20.0, 0.0);
        assert!(transition_density(&bad, 1.0, 1.0, 1, G).is_err());
    }

    #[test]
    fn interval_prob_examples() {
        let unit = KernelParams::IidNormal { mean: 0.0, sd: 1.0 };
        let grid = CovariateGrid::new(0.0, 8.0, 8).unwrap();
        assert!((interval_prob(&unit, 0, &grid, 0.0, 1, G).unwrap() - 0.341_344_746_068_542_9).abs() < 1e-15);
        let total: f64 = (0..8).map(|j| interval_prob(&unit, j, &grid, 0.0, 1, G).unwrap()).sum();
        assert!((total - 0.5).abs() < 1e-15);
        assert!(interval_prob(&unit, 8, &grid, 0.0, 1, G).is_err());
    }

    #[test]
    fn telescoping_sum_matches_range_mass() {
        let k = sine();
        let grid = CovariateGrid::new(10.0, 30.0, 37).unwrap();
        let mean = conditional_mean(&k, 21.0, 4, G).unwrap();
        let total: f64 = (0..37).map(|j| interval_prob(&k, j, &grid, 21.0, 4, G).unwrap()).sum();
        let expect = normal_cdf((30.0 - mean) / 1.2) - normal_cdf((10.0 - mean) / 1.2);
        assert!((total - expect).abs() < 1e-14);
    }

    #[test]
    fn closed_form_matches_quadrature() {
        let k = mr(0.3, 22.0, 1.7);
        let grid = CovariateGrid::new(5.0, 40.0, 23).unwrap();
        for j in 0..23 {
            let exact = interval_prob(&k, j, &grid, 17.3, 2, G).unwrap();
            let quad = simpson(
                |y| transition_density(&k, y, 17.3, 2, G).unwrap(),
                grid.boundary(j),
                grid.boundary(j + 1),
                400,
            );
            assert!((exact - quad).abs() < 1e-10, "cell {j}: {exact} vs {quad}");
        }
    }

    #[test]
    fn density_integrates_to_one() {
        for k in [mr(0.4, 20.0, 1.3), sine(), KernelParams::IidNormal { mean: 3.0, sd: 0.7 }] {
            let mean = conditional_mean(&k, 18.0, 3, G).unwrap();
            let sd = k.sd(G).unwrap();
            let total =
                simpson(|y| transition_density(&k, y, 18.0, 3, G).unwrap(), mean - 12.0 * sd, mean + 12.0 * sd, 4000);
            assert!((total - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn row_helper_matches_cellwise() {
        let k = sine();
        let grid = CovariateGrid::new(-5.0, 60.0, 41).unwrap();
        for y in [-4.0, 10.0, 25.0, 59.0] {
            let mut row = vec![0.0; 41];
            interval_probs_into(&k, &grid, y, 7, G, &mut row).unwrap();
            for (j, &v) in row.iter().enumerate() {
                let single = interval_prob(&k, j, &grid, y, 7, G).unwrap();
                assert!((v - single).abs() <= 1e-16 + 1e-13 * single, "{y} {j}");
            }
        }
    }

    #[test]
    fn row_helper_with_boundary_at_the_mean() {
        // midpoint 15.2 reverts to exactly 17.6, which is also a cell boundary
        let k = mr(0.5, 20.0, 1.5);
        let grid = CovariateGrid::new(8.0, 32.0, 5).unwrap();
        let mut row = vec![0.0; 5];
        interval_probs_into(&k, &grid, grid.midpoint(1), 2, G, &mut row).unwrap();
        assert!(row.iter().all(|v| v.is_finite()));
        assert!((row[2] - normal_interval(0.0, 4.8 / 1.5)).abs() < 1e-15);
    }

    struct Laplace;

    impl TransitionKernel for Laplace {
        fn density(&self, y_next: f64, y_prev: f64, _t: usize, _g: GroupId) -> Result<f64> {
            Ok(0.5 * (-(y_next - y_prev).abs()).exp())
        }
    }

    #[test]
    fn midpoint_rule_fallback() {
        let grid = CovariateGrid::new(0.0, 4.0, 4).unwrap();
        let p = interval_prob(&Laplace, 1, &grid, 0.0, 1, G).unwrap();
        assert!((p - 0.5 * (-1.5f64).exp()).abs() < 1e-15);
    }

    #[test]
    fn initial_vector_examples() {
        let grid = CovariateGrid::new(0.0, 40.0, 32).unwrap();
        let d = initial_vector(&InitialDistribution::Condition, &grid, Some(15.0)).unwrap();
        assert_eq!(grid.index_of(15.0), Some(12));
        assert_eq!(d[12], 1.0);
        assert_eq!(d.iter().sum::<f64>(), 1.0);

        let f0 = InitialDistribution::Normal { mean: 15.0, sd: 2.0 };
        let d = initial_vector(&f0, &grid, None).unwrap();
        let expect = normal_cdf((40.0 - 15.0) / 2.0) - normal_cdf((0.0 - 15.0) / 2.0);
        assert!((d.iter().sum::<f64>() - expect).abs() < 1e-14);
        assert_eq!((d[32], d[33]), (0.0, 0.0));

        let d = initial_vector(&f0, &grid, Some(15.0)).unwrap();
        assert!((d[12] - INV_SQRT_2PI / 2.0).abs() < 1e-15);
        assert!(initial_vector(&f0, &grid, Some(41.0)).is_err());
        assert!(initial_vector(&InitialDistribution::Condition, &grid, None).is_err());
    }

    proptest! {
        #[test]
        fn mean_reversion_contracts(eta in 0.01f64..0.99, mu in -10.0f64..30.0, y in -50.0f64..50.0) {
            let k = mr(eta, mu, 1.0);
            let next = conditional_mean(&k, y, 2, G).unwrap();
            prop_assert!(((next - mu).abs() - (1.0 - eta) * (y - mu).abs()).abs() < 1e-10);
        }

        #[test]
        fn cell_mass_is_a_subprobability(y in 0.0f64..40.0, sd in 0.2f64..10.0, m in 2usize..60) {
            let k = mr(0.5, 20.0, sd);
            let grid = CovariateGrid::new(0.0, 40.0, m).unwrap();
            let total: f64 = (0..m).map(|j| interval_prob(&k, j, &grid, y, 1, G).unwrap()).sum();
            prop_assert!(total > 0.0 && total <= 1.0 + 1e-15);
        }
    }
}
