//! AIC comparison of fits on one dataset.

use serde::{Deserialize, Serialize};

use super::fit::FitResult;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicRow {
    pub label: String,
    pub q: usize,
    pub max_loglik: f64,
    pub aic: f64,
    pub delta_aic: f64,
}

/// Fits ranked by AIC, ties broken by fewer parameters. All fits must share
/// a dataset.
pub fn delta_aic(fits: &[&FitResult]) -> Result<Vec<AicRow>> {
    let Some(first) = fits.first() else {
        return Ok(vec![]);
    };
    if let Some(other) = fits.iter().find(|f| f.data_checksum != first.data_checksum) {
        return Err(Error::MixedDatasets(first.data_checksum.clone(), other.data_checksum.clone()));
    }
    let best = fits.iter().map(|f| f.aic).fold(f64::INFINITY, f64::min);
    let mut rows: Vec<AicRow> = fits
        .iter()
        .map(|f| AicRow {
            label: f.label.clone(),
            q: f.q,
            max_loglik: f.max_loglik,
            aic: f.aic,
            delta_aic: f.aic - best,
        })
        .collect();
    rows.sort_by(|a, b| a.aic.total_cmp(&b.aic).then(a.q.cmp(&b.q)));
    Ok(rows)
}
