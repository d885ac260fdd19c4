//! Finite-difference Hessians and their inversion into a covariance matrix.

use nalgebra::DMatrix;
use rayon::prelude::*;

/// Central-difference Hessian of `f` at `x` from function values only, with
/// step `cbrt(eps) * max(|x_i|, 1)`. Returned row-major.
pub fn hessian<F>(f: &F, x: &[f64], fx: f64) -> Vec<f64>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let n = x.len();
    let h: Vec<f64> = x.iter().map(|v| f64::EPSILON.cbrt() * v.abs().max(1.0)).collect();
    let eval = |moves: &[(usize, f64)]| {
        let mut xp = x.to_vec();
        for &(i, d) in moves {
            xp[i] += d;
        }
        f(&xp)
    };
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i..n).map(move |j| (i, j))).collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            if i == j {
                let fp = eval(&[(i, h[i])]);
                let fm = eval(&[(i, -h[i])]);
                (fp - 2.0 * fx + fm) / (h[i] * h[i])
            } else {
                let fpp = eval(&[(i, h[i]), (j, h[j])]);
                let fpm = eval(&[(i, h[i]), (j, -h[j])]);
                let fmp = eval(&[(i, -h[i]), (j, h[j])]);
                let fmm = eval(&[(i, -h[i]), (j, -h[j])]);
                (fpp - fpm - fmp + fmm) / (4.0 * h[i] * h[j])
            }
        })
        .collect();
    let mut out = vec![0.0; n * n];
    for (&(i, j), v) in pairs.iter().zip(values) {
        out[i * n + j] = v;
        out[j * n + i] = v;
    }
    out
}

/// Inverse of the observed information restricted to the parameters in
/// `include`. Parameters excluded or without information get `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedInformation {
    pub covariance: Vec<Vec<Option<f64>>>,
    pub diagnostic: Option<String>,
}

/// `information` is the Hessian of the negative log-likelihood, row-major.
pub fn invert_information(information: &[f64], n: usize, include: &[bool]) -> InvertedInformation {
    let none = vec![vec![None; n]; n];
    let finite = information.iter().all(|v| v.is_finite());
    if !finite {
        return InvertedInformation { covariance: none, diagnostic: Some("Hessian has non-finite entries".into()) };
    }
    let max_diag = (0..n).filter(|&i| include[i]).map(|i| information[i * n + i]).fold(0.0f64, f64::max);
    let mut notes = Vec::new();
    let idx: Vec<usize> = (0..n)
        .filter(|&i| include[i])
        .filter(|&i| {
            let ok = information[i * n + i] > 1e-10 * max_diag.max(f64::MIN_POSITIVE);
            if !ok {
                notes.push(format!("parameter {i} carries no information"));
            }
            ok
        })
        .collect();
    let k = idx.len();
    let sub = DMatrix::from_fn(k, k, |a, b| information[idx[a] * n + idx[b]]);
    let Some(chol) = sub.clone().cholesky() else {
        notes.push("Hessian of the log-likelihood is not negative definite".into());
        return InvertedInformation { covariance: none, diagnostic: Some(notes.join("; ")) };
    };
    let inv = chol.inverse();
    // reject inversions that are numerically meaningless
    let check = &sub * &inv - DMatrix::identity(k, k);
    if check.iter().any(|v| !v.is_finite() || v.abs() > 1e-6) {
        notes.push("Hessian is too ill-conditioned to invert".into());
        return InvertedInformation { covariance: none, diagnostic: Some(notes.join("; ")) };
    }
    let mut covariance = none;
    for (a, &i) in idx.iter().enumerate() {
        for (b, &j) in idx.iter().enumerate() {
            covariance[i][j] = Some(inv[(a, b)]);
        }
    }
    InvertedInformation { covariance, diagnostic: (!notes.is_empty()).then(|| notes.join("; ")) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_hessian_is_exact() {
        // f = 2 x0^2 + 3 x0 x1 + 5 x1^2
        let f = |x: &[f64]| 2.0 * x[0] * x[0] + 3.0 * x[0] * x[1] + 5.0 * x[1] * x[1];
        let x = [0.4, -1.3];
        let h = hessian(&f, &x, f(&x));
        let want = [4.0, 3.0, 3.0, 10.0];
        for (a, b) in h.iter().zip(want) {
            assert!((a - b).abs() < 1e-4, "{h:?}");
        }
    }

    #[test]
    fn inverse_of_diagonal_information() {
        let info = [4.0, 0.0, 0.0, 0.25];
        let inv = invert_information(&info, 2, &[true, true]);
        assert_eq!(inv.diagnostic, None);
        assert!((inv.covariance[0][0].unwrap() - 0.25).abs() < 1e-15);
        assert!((inv.covariance[1][1].unwrap() - 4.0).abs() < 1e-15);
    }

    #[test]
    fn indefinite_gives_no_intervals() {
        let info = [1.0, 2.0, 2.0, 1.0];
        let inv = invert_information(&info, 2, &[true, true]);
        assert!(inv.covariance.iter().flatten().all(|v| v.is_none()));
        assert!(inv.diagnostic.unwrap().contains("not negative definite"));
    }

    #[test]
    fn zero_information_parameter_is_dropped() {
        let info = [2.0, 0.0, 0.0, 0.0];
        let inv = invert_information(&info, 2, &[true, true]);
        assert!((inv.covariance[0][0].unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(inv.covariance[1][1], None);
        assert!(inv.diagnostic.is_some());
    }

    #[test]
    fn excluded_parameter_is_held_fixed() {
        let info = [2.0, 1.0, 1.0, 2.0];
        let inv = invert_information(&info, 2, &[true, false]);
        assert!((inv.covariance[0][0].unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(inv.covariance[0][1], None);
    }
}
