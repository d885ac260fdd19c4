//! BFGS minimizer with central-difference gradients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Convergence {
    Converged,
    MaxIter,
    LineSearchFail,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimOptions {
    /// Stop when `max_i |g_i| max(|x_i|, 1) / max(|f|, 1)` falls below this.
    pub gradient_tolerance: f64,
    /// Stop when the largest relative step falls below this.
    pub step_tolerance: f64,
    pub max_iterations: usize,
    /// Relative step of the central-difference gradient.
    pub gradient_step: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self { gradient_tolerance: 1e-6, step_tolerance: 1e-10, max_iterations: 500, gradient_step: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimResult {
    pub x: Vec<f64>,
    pub f: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub evaluations: usize,
    pub status: Convergence,
}

/// Central-difference gradient, falling back to a one-sided difference where
/// one side is not finite. Perturbations are evaluated in parallel.
pub fn gradient<F>(f: &F, x: &[f64], fx: f64, rel_step: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    (0..x.len())
        .into_par_iter()
        .map(|i| {
            let h = rel_step * x[i].abs().max(1.0);
            let mut xp = x.to_vec();
            xp[i] = x[i] + h;
            let fp = f(&xp);
            xp[i] = x[i] - h;
            let fm = f(&xp);
            match (fp.is_finite(), fm.is_finite()) {
                (true, true) => (fp - fm) / (2.0 * h),
                (true, false) => (fp - fx) / h,
                (false, true) => (fx - fm) / h,
                (false, false) => 0.0,
            }
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` from `x0`. Non-finite values of `f` are treated as infeasible.
pub fn minimize<F>(f: F, x0: &[f64], opts: &OptimOptions) -> Result<OptimResult>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut evals = 1;
    if !fx.is_finite() {
        return Err(Error::NonFiniteInit);
    }
    if n == 0 {
        return Ok(OptimResult {
            x,
            f: fx,
            gradient: vec![],
            iterations: 0,
            evaluations: evals,
            status: Convergence::Converged,
        });
    }
    let mut g = gradient(&f, &x, fx, opts.gradient_step);
    evals += 2 * n;

    let converged = |x: &[f64], g: &[f64], fx: f64| {
        let scale = fx.abs().max(1.0);
        g.iter().zip(x).map(|(gi, xi)| gi.abs() * xi.abs().max(1.0) / scale).fold(0.0, f64::max)
            <= opts.gradient_tolerance
    };

    // inverse Hessian approximation, row-major
    let mut h = identity(n);
    let mut fresh = true;
    let mut status = Convergence::MaxIter;
    let mut iter = 0;
    while iter < opts.max_iterations {
        if converged(&x, &g, fx) {
            status = Convergence::Converged;
            break;
        }
        iter += 1;
        let mut d: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        let mut slope = dot(&d, &g);
        if !(slope < 0.0) {
            h = identity(n);
            fresh = true;
            d = g.iter().map(|v| -v).collect();
            slope = dot(&d, &g);
        }
        if fresh {
            // first step after a reset: limit its length to 1 in the largest coordinate
            let dmax = d.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if dmax > 1.0 {
                d.iter_mut().for_each(|v| *v /= dmax);
                slope /= dmax;
            }
        }

        let Some((step, x_new, f_new, used)) = line_search(&f, &x, fx, &d, slope) else {
            evals += 40;
            if fresh {
                status = Convergence::LineSearchFail;
                break;
            }
            h = identity(n);
            fresh = true;
            continue;
        };
        evals += used;

        let g_new = gradient(&f, &x_new, f_new, opts.gradient_step);
        evals += 2 * n;
        let s: Vec<f64> = d.iter().map(|v| step * v).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let rel_step = s.iter().zip(&x).map(|(si, xi)| si.abs() / xi.abs().max(1.0)).fold(0.0, f64::max);

        x = x_new;
        fx = f_new;
        g = g_new;

        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() {
            if fresh {
                let scale = sy / dot(&y, &y);
                h.iter_mut().for_each(|v| *v *= scale);
                fresh = false;
            }
            bfgs_update(&mut h, &s, &y, sy);
        }

        if rel_step < opts.step_tolerance {
            status = if converged(&x, &g, fx) { Convergence::Converged } else { Convergence::LineSearchFail };
            break;
        }
    }
    if status == Convergence::MaxIter && converged(&x, &g, fx) {
        status = Convergence::Converged;
    }
    Ok(OptimResult { x, f: fx, gradient: g, iterations: iter, evaluations: evals, status })
}

fn identity(n: usize) -> Vec<f64> {
    let mut h = vec![0.0; n * n];
    for i in 0..n {
        h[i * n + i] = 1.0;
    }
    h
}

/// `H <- (I - rho s y') H (I - rho y s') + rho s s'`.
fn bfgs_update(h: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let c = rho * rho * yhy + rho;
    for i in 0..n {
        for j in 0..n {
            h[i * n + j] += c * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

/// Backtracking Armijo search with quadratic interpolation. Returns the
/// accepted step, point, value and the number of evaluations used.
fn line_search<F>(f: &F, x: &[f64], fx: f64, d: &[f64], slope: f64) -> Option<(f64, Vec<f64>, f64, usize)>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    const C1: f64 = 1e-4;
    let mut step = 1.0;
    for k in 1..=40 {
        let xn: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + step * b).collect();
        let fn_ = f(&xn);
        if fn_.is_finite() && fn_ <= fx + C1 * step * slope {
            return Some((step, xn, fn_, k));
        }
        let next = if fn_.is_finite() {
            // minimizer of the quadratic through f(0), f'(0) and f(step)
            -slope * step * step / (2.0 * (fn_ - fx - slope * step))
        } else {
            0.1 * step
        };
        step = next.clamp(0.1 * step, 0.5 * step);
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> f64 {
        (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2)
    }

    #[test]
    fn minimizes_rosenbrock() {
        let r = minimize(rosenbrock, &[-1.2, 1.0], &OptimOptions::default()).unwrap();
        assert_eq!(r.status, Convergence::Converged);
        assert!((r.x[0] - 1.0).abs() < 1e-4 && (r.x[1] - 1.0).abs() < 1e-4, "{:?}", r.x);
    }

    #[test]
    fn quadratic_recovers_center() {
        let c = [3.0, -2.0, 0.5, 10.0];
        let f =
            |x: &[f64]| x.iter().zip(&c).enumerate().map(|(i, (a, b))| (i as f64 + 1.0) * (a - b).powi(2)).sum::<f64>();
        let r = minimize(f, &[0.0; 4], &OptimOptions::default()).unwrap();
        assert_eq!(r.status, Convergence::Converged);
        for (a, b) in r.x.iter().zip(&c) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn infeasible_region_is_avoided() {
        // minimum of (x - 2)^2 restricted to x < 1.5 by an infinite wall
        let f = |x: &[f64]| if x[0] >= 1.5 { f64::INFINITY } else { -x[0].ln_1p() + (x[0] - 2.0).powi(2) };
        let r = minimize(f, &[0.0], &OptimOptions::default()).unwrap();
        assert!(r.x[0] < 1.5 && r.f.is_finite());
    }

    #[test]
    fn non_finite_start_is_an_error() {
        let r = minimize(|_: &[f64]| f64::NAN, &[1.0], &OptimOptions::default());
        assert!(matches!(r, Err(Error::NonFiniteInit)));
    }

    #[test]
    fn gradient_matches_analytic() {
        let f = |x: &[f64]| x[0].sin() * x[1].exp();
        let x = [0.7, -0.3];
        let g = gradient(&f, &x, f(&x), 1e-6);
        assert!((g[0] - 0.7f64.cos() * (-0.3f64).exp()).abs() < 1e-9);
        assert!((g[1] - 0.7f64.sin() * (-0.3f64).exp()).abs() < 1e-9);
    }
}
