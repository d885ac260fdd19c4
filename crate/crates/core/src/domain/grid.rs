use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equal-width partition of the essential covariate range `[lower, upper]`
/// into `m` cells. Cells are indexed `0..m`; cell `j` is `[b_j, b_{j+1})`
/// and the upper bound itself belongs to the last cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CovariateGrid {
    lower: f64,
    upper: f64,
    m: usize,
}

impl CovariateGrid {
    pub fn new(lower: f64, upper: f64, m: usize) -> Result<Self> {
        if !(lower.is_finite() && upper.is_finite()) || lower >= upper {
            return Err(Error::validation(format!("grid range must satisfy lower < upper, got [{lower}, {upper}]")));
        }
        if m < 2 {
            return Err(Error::validation(format!("grid needs at least 2 intervals, got {m}")));
        }
        Ok(Self { lower, upper, m })
    }

    /// Essential range from observed extremes: `0.8 * min` to `1.2 * max` for
    /// positive covariates, generalized as a 20% widening away from zero.
    pub fn from_observed_range(min: f64, max: f64, m: usize) -> Result<Self> {
        Self::new(min - 0.2 * min.abs(), max + 0.2 * max.abs(), m)
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.m as f64
    }

    /// Boundary `b_j`, `j` in `0..=m`.
    pub fn boundary(&self, j: usize) -> f64 {
        debug_assert!(j <= self.m);
        if j == self.m {
            self.upper
        } else {
            self.lower + j as f64 * self.width()
        }
    }

    /// Representative point of cell `j`: its midpoint.
    pub fn midpoint(&self, j: usize) -> f64 {
        0.5 * (self.boundary(j) + self.boundary(j + 1))
    }

    pub fn midpoints(&self) -> Vec<f64> {
        (0..self.m).map(|j| self.midpoint(j)).collect()
    }

    /// Cell containing `y`, or `None` outside `[lower, upper]`.
    pub fn index_of(&self, y: f64) -> Option<usize> {
        if !(self.lower..=self.upper).contains(&y) {
            return None;
        }
        let mut j = (((y - self.lower) / self.width()).floor() as usize).min(self.m - 1);
        // guard against rounding in the division placing y one cell off
        if y < self.boundary(j) {
            j -= 1;
        } else if j + 1 < self.m && y >= self.boundary(j + 1) {
            j += 1;
        }
        Some(j)
    }

    pub fn checked_index_of(&self, y: f64) -> Result<usize> {
        self.index_of(y).ok_or(Error::OutsideGrid { value: y, lower: self.lower, upper: self.upper })
    }
}
