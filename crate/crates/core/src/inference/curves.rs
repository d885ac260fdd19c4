//! Fitted survival curves with delta-method pointwise bands.

use serde::{Deserialize, Serialize};

use super::fit::FitResult;
use crate::domain::{logistic, GroupId, ParamRole};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub y: f64,
    pub phi: f64,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
}

/// `logistic(beta0 + beta1 y)` for the survival coefficients of `group`, with
/// 95% bands from the covariance of `(beta0, beta1)`, truncated to `[0, 1]`.
pub fn survival_curve(fit: &FitResult, group: &str, ys: &[f64]) -> Result<Vec<CurvePoint>> {
    let g =
        fit.spec.age_groups.by_label(group).ok_or_else(|| Error::validation(format!("unknown age group `{group}`")))?;
    let index = if fit.spec.survival_by_group { g } else { GroupId(0) };
    let find = |role: ParamRole| {
        fit.estimates
            .entries()
            .iter()
            .position(|p| p.role == role)
            .ok_or_else(|| Error::validation(format!("fit has no {role:?} parameter")))
    };
    let (i0, i1) = (find(ParamRole::Intercept(index.0))?, find(ParamRole::Slope(index.0))?);
    let (b0, b1) = (fit.estimates.entries()[i0].value, fit.estimates.entries()[i1].value);
    let cov = fit.covariance.as_ref().and_then(|c| Some([[c[i0][i0]?, c[i0][i1]?], [c[i1][i0]?, c[i1][i1]?]]));
    Ok(ys
        .iter()
        .map(|&y| {
            let phi = logistic(b0 + b1 * y);
            let band = cov.map(|s| {
                // gradient of phi in (beta0, beta1) is phi (1 - phi) (1, y)
                let d = phi * (1.0 - phi);
                let grad = [d, d * y];
                let var = grad[0] * (s[0][0] * grad[0] + s[0][1] * grad[1])
                    + grad[1] * (s[1][0] * grad[0] + s[1][1] * grad[1]);
                let half = 1.959_963_984_540_054 * var.max(0.0).sqrt();
                ((phi - half).max(0.0), (phi + half).min(1.0))
            });
            CurvePoint { y, phi, lower: band.map(|b| b.0), upper: band.map(|b| b.1) }
        })
        .collect())
}
