//! Structured system matrices `Gamma_t` and diagonal observation matrices `Q(x_t)`
//! over the augmented state space (m covariate cells, recent dead, long dead).

use std::sync::Arc;

use crate::domain::{logistic, CaptureCode, CaptureHistory, CovariateGrid, GroupId, ModelParams, ModelSpec};
use crate::error::{Error, Result};
use crate::kernels::{interval_probs_into, transition_density};

/// Sparsity pattern of the alive-to-alive block, set by whether the covariate
/// is observed at `t` and `t + 1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pattern {
    /// Both observed: one nonzero entry.
    Scalar,
    /// Observed then missing: one nonzero row.
    Row,
    /// Missing then observed: one nonzero column.
    Column,
    /// Both missing: full `m x m` block.
    Dense,
    /// Known dead at `t` or `t + 1`: no alive-to-alive mass.
    Absorbing,
}

/// Covariate status of an occasion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Slot {
    Observed { cell: usize, y: f64 },
    Missing,
    Dead,
}

impl Slot {
    pub(crate) fn of(hist: &CaptureHistory, t: usize, grid: &CovariateGrid) -> Result<Self> {
        match hist.covariate(t) {
            Some(y) => Ok(Slot::Observed { cell: grid.checked_index_of(y)?, y }),
            None if hist.known_dead(t) => Ok(Slot::Dead),
            None => Ok(Slot::Missing),
        }
    }
}

pub(crate) fn pattern_of(from: Slot, to: Slot) -> Pattern {
    match (from, to) {
        (Slot::Dead, _) | (_, Slot::Dead) => Pattern::Absorbing,
        (Slot::Observed { .. }, Slot::Observed { .. }) => Pattern::Scalar,
        (Slot::Observed { .. }, Slot::Missing) => Pattern::Row,
        (Slot::Missing, Slot::Observed { .. }) => Pattern::Column,
        (Slot::Missing, Slot::Missing) => Pattern::Dense,
    }
}

/// Row-major `m x m` block of `phi(i) * Psi(i, j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseBlock {
    pub m: usize,
    pub entries: Vec<f64>,
}

impl DenseBlock {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.m..(i + 1) * self.m]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum AliveBlock {
    Empty,
    Scalar { row: usize, col: usize, value: f64 },
    Row { row: usize, values: Vec<f64> },
    Column { col: usize, values: Vec<f64> },
    Dense(Arc<DenseBlock>),
}

/// Column `m + 1` of the alive rows: `1 - phi(i)`. Rows whose `phi(i)` is
/// zero by construction carry a 1.
#[derive(Debug, Clone, PartialEq)]
pub enum DeathColumn {
    Ones,
    Single { row: usize, value: f64 },
    PerRow(Arc<Vec<f64>>),
}

impl DeathColumn {
    pub fn get(&self, i: usize) -> f64 {
        match self {
            DeathColumn::Ones => 1.0,
            DeathColumn::Single { row, value } => {
                if i == *row {
                    *value
                } else {
                    1.0
                }
            }
            DeathColumn::PerRow(v) => v[i],
        }
    }
}

/// Sparse `(m + 2) x (m + 2)` system matrix. Rows `m` and `m + 1` (recent and
/// long dead) always have a single 1 in the long-dead column.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemMatrix {
    pub m: usize,
    pub pattern: Pattern,
    pub alive: AliveBlock,
    pub death: DeathColumn,
}

impl SystemMatrix {
    /// Literal dense form, row-major.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let m = self.m;
        let mut out = vec![vec![0.0; m + 2]; m + 2];
        match &self.alive {
            AliveBlock::Empty => {}
            AliveBlock::Scalar { row, col, value } => out[*row][*col] = *value,
            AliveBlock::Row { row, values } => out[*row][..m].copy_from_slice(values),
            AliveBlock::Column { col, values } => {
                for (i, v) in values.iter().enumerate() {
                    out[i][*col] = *v;
                }
            }
            AliveBlock::Dense(block) => {
                for (i, row) in out.iter_mut().take(m).enumerate() {
                    row[..m].copy_from_slice(block.row(i));
                }
            }
        }
        for (i, row) in out.iter_mut().take(m).enumerate() {
            row[m] = self.death.get(i);
        }
        out[m][m + 1] = 1.0;
        out[m + 1][m + 1] = 1.0;
        out
    }

    /// Number of stored alive-block entries.
    pub fn alive_nonzeros(&self) -> usize {
        match &self.alive {
            AliveBlock::Empty => 0,
            AliveBlock::Scalar { .. } => 1,
            AliveBlock::Row { values, .. } | AliveBlock::Column { values, .. } => values.len(),
            AliveBlock::Dense(b) => b.entries.len(),
        }
    }
}

/// Diagonal observation matrix: one value shared by the `m` alive states,
/// then recent dead and long dead.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObservationMatrix {
    pub m: usize,
    pub alive: f64,
    pub recent: f64,
    pub long: f64,
}

impl ObservationMatrix {
    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![self.alive; self.m + 2];
        d[self.m] = self.recent;
        d[self.m + 1] = self.long;
        d
    }

    pub fn scaled(self, c: f64) -> Self {
        Self { alive: self.alive * c, recent: self.recent * c, long: self.long * c, ..self }
    }
}

pub fn build_observation_matrix(x: CaptureCode, p: f64, lambda: f64, m: usize) -> ObservationMatrix {
    let (alive, recent, long) = match x {
        CaptureCode::Unseen => (1.0 - p, 1.0 - lambda, 1.0),
        CaptureCode::Seen => (p, 0.0, 0.0),
        CaptureCode::Recovered => (0.0, lambda, 0.0),
    };
    ObservationMatrix { m, alive, recent, long }
}

/// Quantities of one `(t, group)` transition that do not depend on the individual.
#[derive(Debug, Clone)]
pub(crate) struct TransitionCache {
    /// `phi(b_i*)`.
    pub phi: Vec<f64>,
    /// `1 - phi(b_i*)`, computed without cancellation.
    pub death: Arc<Vec<f64>>,
    pub dense: Option<Arc<DenseBlock>>,
}

impl TransitionCache {
    pub(crate) fn compute(
        params: &ModelParams,
        grid: &CovariateGrid,
        t: usize,
        group: GroupId,
        with_dense: bool,
    ) -> Result<Self> {
        let m = grid.m();
        let coef = params.survival_for(group);
        let mids = grid.midpoints();
        let eta: Vec<f64> = mids.iter().map(|&b| coef.intercept + coef.slope * b).collect();
        let phi: Vec<f64> = eta.iter().map(|&e| logistic(e)).collect();
        let death: Vec<f64> = eta.iter().map(|&e| logistic(-e)).collect();
        let dense = if with_dense {
            let mut entries = vec![0.0; m * m];
            for (i, row) in entries.chunks_exact_mut(m).enumerate() {
                interval_probs_into(&params.kernel, grid, mids[i], t + 1, group, row)?;
                let f = phi[i];
                row.iter_mut().for_each(|v| *v *= f);
            }
            Some(Arc::new(DenseBlock { m, entries }))
        } else {
            None
        };
        Ok(Self { phi, death: Arc::new(death), dense })
    }
}

fn survival_and_death(params: &ModelParams, group: GroupId, y: f64) -> (f64, f64) {
    let c = params.survival_for(group);
    let eta = c.intercept + c.slope * y;
    (logistic(eta), logistic(-eta))
}

/// Builds `Gamma_t` for the transition `t -> t + 1` given the covariate slots.
pub(crate) fn build_from_slots(
    params: &ModelParams,
    grid: &CovariateGrid,
    t: usize,
    group: GroupId,
    from: Slot,
    to: Slot,
    cache: Option<&TransitionCache>,
) -> Result<SystemMatrix> {
    let m = grid.m();
    let kernel = &params.kernel;
    let pattern = pattern_of(from, to);
    let owned;
    let cache = match (pattern, from, cache) {
        (_, Slot::Missing, Some(c)) if pattern != Pattern::Dense || c.dense.is_some() => Some(c),
        (_, Slot::Missing, _) => {
            owned = TransitionCache::compute(params, grid, t, group, pattern == Pattern::Dense)?;
            Some(&owned)
        }
        _ => None,
    };

    let death = match from {
        Slot::Observed { cell, y } => DeathColumn::Single { row: cell, value: survival_and_death(params, group, y).1 },
        Slot::Missing => DeathColumn::PerRow(cache.expect("missing slot has a cache").death.clone()),
        Slot::Dead => DeathColumn::Ones,
    };

    let alive = match (from, to) {
        (Slot::Dead, _) | (_, Slot::Dead) => AliveBlock::Empty,
        (Slot::Observed { cell: row, y }, Slot::Observed { cell: col, y: y_next }) => {
            let phi = survival_and_death(params, group, y).0;
            let value = phi * transition_density(kernel, y_next, y, t + 1, group)?;
            AliveBlock::Scalar { row, col, value }
        }
        (Slot::Observed { cell: row, y }, Slot::Missing) => {
            let phi = survival_and_death(params, group, y).0;
            let mut values = vec![0.0; m];
            interval_probs_into(kernel, grid, y, t + 1, group, &mut values)?;
            values.iter_mut().for_each(|v| *v *= phi);
            AliveBlock::Row { row, values }
        }
        (Slot::Missing, Slot::Observed { cell: col, y: y_next }) => {
            let c = cache.expect("missing slot has a cache");
            let values = (0..m)
                .map(|i| Ok(c.phi[i] * transition_density(kernel, y_next, grid.midpoint(i), t + 1, group)?))
                .collect::<Result<Vec<f64>>>()?;
            AliveBlock::Column { col, values }
        }
        (Slot::Missing, Slot::Missing) => {
            AliveBlock::Dense(cache.and_then(|c| c.dense.clone()).expect("dense cache computed"))
        }
    };
    Ok(SystemMatrix { m, pattern, alive, death })
}

/// `Gamma_t` for individual `hist` over the interval `t -> t + 1`.
pub fn build_system_matrix(
    hist: &CaptureHistory,
    t: usize,
    params: &ModelParams,
    spec: &ModelSpec,
    grid: &CovariateGrid,
) -> Result<SystemMatrix> {
    if t < hist.first() || t >= hist.last() {
        return Err(Error::IndexOutOfRange { index: t, limit: hist.last() });
    }
    let group = spec.age_groups.group_of_age(hist.age(t)?);
    let from = Slot::of(hist, t, grid)?;
    let to = Slot::of(hist, t + 1, grid)?;
    build_from_slots(params, grid, t, group, from, to, None)
}
