//! Forward recursion `delta * prod(Gamma_{t-1} Q(x_t)) * 1` with per-step
//! rescaling, and the dataset-level evaluator used by the optimizer.

use std::sync::Arc;

use rayon::prelude::*;

use super::matrices::{
    build_from_slots, build_observation_matrix, pattern_of, AliveBlock, ObservationMatrix, Pattern, Slot, SystemMatrix,
    TransitionCache,
};
use crate::domain::{CaptureCode, CaptureHistory, CovariateGrid, Dataset, GroupId, ModelParams, ModelSpec};
use crate::error::{Error, Result};
use crate::kernels::initial_vector;

/// Forward mass below this before rescaling marks the history as impossible.
pub const IMPOSSIBLE_MASS: f64 = 1e-300;

/// Alive part of the forward vector. Observed covariates collapse it onto one cell.
#[derive(Debug, Clone, PartialEq)]
pub enum AliveVector {
    Zero,
    Point { cell: usize, mass: f64 },
    Dense(Vec<f64>),
}

impl AliveVector {
    fn sum(&self) -> f64 {
        match self {
            AliveVector::Zero => 0.0,
            AliveVector::Point { mass, .. } => *mass,
            AliveVector::Dense(v) => v.iter().sum(),
        }
    }

    fn scale(&mut self, c: f64) {
        match self {
            AliveVector::Zero => {}
            AliveVector::Point { mass, .. } => *mass *= c,
            AliveVector::Dense(v) => v.iter_mut().for_each(|x| *x *= c),
        }
    }
}

/// Row vector over (alive cells, recent dead, long dead).
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardState {
    pub alive: AliveVector,
    pub recent: f64,
    pub long: f64,
}

impl ForwardState {
    pub fn from_initial(delta: &[f64]) -> Self {
        let m = delta.len() - 2;
        let nonzero: Vec<usize> = (0..m).filter(|&i| delta[i] != 0.0).collect();
        let alive = match nonzero.as_slice() {
            [] => AliveVector::Zero,
            [cell] => AliveVector::Point { cell: *cell, mass: delta[*cell] },
            _ => AliveVector::Dense(delta[..m].to_vec()),
        };
        Self { alive, recent: delta[m], long: delta[m + 1] }
    }

    pub fn total(&self) -> f64 {
        self.alive.sum() + self.recent + self.long
    }

    pub fn scale(&mut self, c: f64) {
        self.alive.scale(c);
        self.recent *= c;
        self.long *= c;
    }

    pub fn to_dense(&self, m: usize) -> Vec<f64> {
        let mut out = vec![0.0; m + 2];
        match &self.alive {
            AliveVector::Zero => {}
            AliveVector::Point { cell, mass } => out[*cell] = *mass,
            AliveVector::Dense(v) => out[..m].copy_from_slice(v),
        }
        out[m] = self.recent;
        out[m + 1] = self.long;
        out
    }

    /// `self * gamma * q`, exploiting the sparsity of both operands.
    pub fn step(&self, gamma: &SystemMatrix, q: &ObservationMatrix) -> Self {
        let m = gamma.m;
        let (alive, recent) = match &self.alive {
            AliveVector::Zero => (AliveVector::Zero, 0.0),
            AliveVector::Point { cell, mass } => {
                let alive = match &gamma.alive {
                    AliveBlock::Empty => AliveVector::Zero,
                    AliveBlock::Scalar { row, col, value } => {
                        if row == cell {
                            AliveVector::Point { cell: *col, mass: mass * value }
                        } else {
                            AliveVector::Zero
                        }
                    }
                    AliveBlock::Row { row, values } => {
                        if row == cell {
                            AliveVector::Dense(values.iter().map(|v| mass * v).collect())
                        } else {
                            AliveVector::Zero
                        }
                    }
                    AliveBlock::Column { col, values } => AliveVector::Point { cell: *col, mass: mass * values[*cell] },
                    AliveBlock::Dense(block) => AliveVector::Dense(block.row(*cell).iter().map(|v| mass * v).collect()),
                };
                (alive, mass * gamma.death.get(*cell))
            }
            AliveVector::Dense(v) => {
                let alive = match &gamma.alive {
                    AliveBlock::Empty => AliveVector::Zero,
                    AliveBlock::Scalar { row, col, value } => AliveVector::Point { cell: *col, mass: v[*row] * value },
                    AliveBlock::Row { row, values } => {
                        let w = v[*row];
                        AliveVector::Dense(values.iter().map(|x| w * x).collect())
                    }
                    AliveBlock::Column { col, values } => {
                        AliveVector::Point { cell: *col, mass: v.iter().zip(values).map(|(a, b)| a * b).sum() }
                    }
                    AliveBlock::Dense(block) => {
                        let mut out = vec![0.0; m];
                        for (i, &w) in v.iter().enumerate() {
                            if w != 0.0 {
                                for (o, &x) in out.iter_mut().zip(block.row(i)) {
                                    *o += w * x;
                                }
                            }
                        }
                        AliveVector::Dense(out)
                    }
                };
                let recent = v.iter().enumerate().map(|(i, &w)| w * gamma.death.get(i)).sum();
                (alive, recent)
            }
        };
        let mut alive = alive;
        alive.scale(q.alive);
        if q.alive == 0.0 {
            alive = AliveVector::Zero;
        }
        Self { alive, recent: recent * q.recent, long: (self.recent + self.long) * q.long }
    }
}

/// Result of a forward pass that failed because the mass vanished.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanishedAt(pub usize);

/// Runs the scaled recursion from `delta` over `(occasion, Gamma, Q)` steps and
/// returns the log-likelihood. `first` labels the occasion of `delta`.
pub fn forward_log_likelihood<I>(delta: &[f64], first: usize, steps: I) -> Result<f64, ForwardError>
where
    I: IntoIterator<Item = Result<(usize, SystemMatrix, ObservationMatrix)>>,
{
    let mut state = ForwardState::from_initial(delta);
    let mut loglik = rescale(&mut state, first)?;
    for step in steps {
        let (t, gamma, q) = step.map_err(ForwardError::Build)?;
        state = state.step(&gamma, &q);
        loglik += rescale(&mut state, t)?;
    }
    Ok(loglik)
}

#[derive(Debug)]
pub enum ForwardError {
    Vanished(VanishedAt),
    Build(Error),
}

fn rescale(state: &mut ForwardState, t: usize) -> Result<f64, ForwardError> {
    let total = state.total();
    if !(total >= IMPOSSIBLE_MASS) || !total.is_finite() {
        return Err(ForwardError::Vanished(VanishedAt(t)));
    }
    state.scale(1.0 / total);
    Ok(total.ln())
}

fn into_error(id: &str, e: ForwardError) -> Error {
    match e {
        ForwardError::Vanished(VanishedAt(occasion)) => Error::ImpossibleHistory { id: id.to_string(), occasion },
        ForwardError::Build(e) => e,
    }
}

fn group_at(hist: &CaptureHistory, t: usize, spec: &ModelSpec) -> Result<GroupId> {
    Ok(spec.age_groups.group_of_age(hist.age(t)?))
}

/// Log-likelihood of one history, conditional on its first capture.
pub fn log_likelihood_individual(
    hist: &CaptureHistory,
    params: &ModelParams,
    spec: &ModelSpec,
    grid: &CovariateGrid,
) -> Result<f64> {
    let delta = initial_vector(&params.initial, grid, hist.covariate(hist.first()))?;
    let steps = (hist.first()..hist.last()).map(|t| {
        let group = group_at(hist, t, spec)?;
        let from = Slot::of(hist, t, grid)?;
        let to = Slot::of(hist, t + 1, grid)?;
        let gamma = build_from_slots(params, grid, t, group, from, to, None)?;
        let q = build_observation_matrix(
            hist.capture(t + 1),
            params.recapture.at(t + 1),
            params.recovery.at(t + 1),
            grid.m(),
        );
        Ok((t + 1, gamma, q))
    });
    forward_log_likelihood(&delta, hist.first(), steps).map_err(|e| into_error(hist.id(), e))
}

#[derive(Debug, Clone)]
struct StepPlan {
    t: usize,
    group: GroupId,
    from: Slot,
    to: Slot,
    x_next: CaptureCode,
}

#[derive(Debug, Clone)]
struct IndividualPlan {
    id: String,
    first: usize,
    initial_y: Option<f64>,
    steps: Vec<StepPlan>,
}

/// Pre-validated dataset bound to a model structure and grid, for repeated
/// likelihood evaluation at different parameter values.
#[derive(Debug, Clone)]
pub struct LikelihoodProblem {
    spec: ModelSpec,
    grid: CovariateGrid,
    plans: Vec<IndividualPlan>,
    groups: usize,
    /// `(t, group, needs_dense)` transitions whose midpoint quantities are shared.
    shared: Vec<(usize, GroupId, bool)>,
}

impl LikelihoodProblem {
    pub fn new(data: &Dataset, spec: &ModelSpec, grid: &CovariateGrid) -> Result<Self> {
        let mut spec = spec.clone();
        if spec.occasions == 0 {
            spec.occasions = data.occasions();
        }
        spec.validate()?;
        if spec.occasions != data.occasions() {
            return Err(Error::validation(format!(
                "model built for {} occasions, data has {}",
                spec.occasions,
                data.occasions()
            )));
        }
        let groups = spec.age_groups.len();
        let mut need = vec![(false, false); (spec.occasions + 1) * groups];
        let mut plans = Vec::with_capacity(data.len());
        for hist in data.histories() {
            let mut steps = Vec::with_capacity(hist.last() - hist.first());
            for t in hist.first()..hist.last() {
                let group = group_at(hist, t, &spec)?;
                let from = Slot::of(hist, t, grid)?;
                let to = Slot::of(hist, t + 1, grid)?;
                if from == Slot::Missing {
                    let slot = &mut need[t * groups + group.0];
                    slot.0 = true;
                    slot.1 |= pattern_of(from, to) == Pattern::Dense;
                }
                steps.push(StepPlan { t, group, from, to, x_next: hist.capture(t + 1) });
            }
            let initial_y = hist.covariate(hist.first());
            if let Some(y) = initial_y {
                grid.checked_index_of(y)?;
            }
            plans.push(IndividualPlan { id: hist.id().to_string(), first: hist.first(), initial_y, steps });
        }
        let shared =
            need.iter().enumerate().filter(|(_, n)| n.0).map(|(k, n)| (k / groups, GroupId(k % groups), n.1)).collect();
        Ok(Self { spec, grid: *grid, plans, groups, shared })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn grid(&self) -> &CovariateGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    /// Count of steps per pattern, in the order Scalar, Row, Column, Dense, Absorbing.
    pub fn pattern_counts(&self) -> [usize; 5] {
        let mut counts = [0; 5];
        for step in self.plans.iter().flat_map(|p| &p.steps) {
            let k = match pattern_of(step.from, step.to) {
                Pattern::Scalar => 0,
                Pattern::Row => 1,
                Pattern::Column => 2,
                Pattern::Dense => 3,
                Pattern::Absorbing => 4,
            };
            counts[k] += 1;
        }
        counts
    }

    fn caches(&self, params: &ModelParams) -> Result<Vec<Option<Arc<TransitionCache>>>> {
        let computed: Vec<Result<TransitionCache>> = self
            .shared
            .par_iter()
            .map(|&(t, group, dense)| TransitionCache::compute(params, &self.grid, t, group, dense))
            .collect();
        let mut caches = vec![None; (self.spec.occasions + 1) * self.groups];
        for (&(t, group, _), cache) in self.shared.iter().zip(computed) {
            caches[t * self.groups + group.0] = Some(Arc::new(cache?));
        }
        Ok(caches)
    }

    fn individual(
        &self,
        plan: &IndividualPlan,
        params: &ModelParams,
        caches: &[Option<Arc<TransitionCache>>],
    ) -> Result<f64> {
        let delta = initial_vector(&params.initial, &self.grid, plan.initial_y)?;
        let steps = plan.steps.iter().map(|s| {
            let cache = caches[s.t * self.groups + s.group.0].as_deref();
            let gamma = build_from_slots(params, &self.grid, s.t, s.group, s.from, s.to, cache)?;
            let q = build_observation_matrix(
                s.x_next,
                params.recapture.at(s.t + 1),
                params.recovery.at(s.t + 1),
                self.grid.m(),
            );
            Ok((s.t + 1, gamma, q))
        });
        forward_log_likelihood(&delta, plan.first, steps).map_err(|e| into_error(&plan.id, e))
    }

    /// Per-individual log-likelihoods in dataset order.
    pub fn individual_log_likelihoods(&self, params: &ModelParams) -> Result<Vec<f64>> {
        params.validate()?;
        let caches = self.caches(params)?;
        self.plans.par_iter().map(|plan| self.individual(plan, params, &caches)).collect()
    }

    /// Joint log-likelihood: per-individual terms summed in dataset order.
    pub fn log_likelihood(&self, params: &ModelParams) -> Result<f64> {
        Ok(self.individual_log_likelihoods(params)?.iter().sum())
    }
}

/// Joint log-likelihood of a dataset.
pub fn log_likelihood_dataset(
    data: &Dataset,
    params: &ModelParams,
    spec: &ModelSpec,
    grid: &CovariateGrid,
) -> Result<f64> {
    LikelihoodProblem::new(data, spec, grid)?.log_likelihood(params)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{
        AgeGroups, CaptureCode::*, InitialMode, KernelFamily, OccasionProbs, SurvivalCoefficients, TimeStructure,
    };
    use crate::kernels::{InitialDistribution, KernelParams};
    use crate::likelihood::oracle::{brute_force_likelihood, no_covariate_likelihood};
    use proptest::prelude::*;

    fn spec(occasions: usize, initial: InitialMode) -> ModelSpec {
        ModelSpec {
            age_groups: AgeGroups::new(vec![1], vec!["young".into(), "old".into()]).unwrap(),
            survival_by_group: true,
            kernel: KernelFamily::MeanRevertingAr { by_group: false },
            recapture: TimeStructure::TimeDependent,
            recovery: TimeStructure::Constant,
            initial,
            occasions,
        }
    }

    fn params(occasions: usize, phi_logit: f64, slope: f64, p: f64, lambda: f64) -> ModelParams {
        ModelParams {
            survival: vec![
                SurvivalCoefficients { intercept: phi_logit, slope },
                SurvivalCoefficients { intercept: phi_logit + 0.3, slope },
            ],
            recapture: OccasionProbs::PerOccasion(vec![p; occasions - 1]),
            recovery: OccasionProbs::Constant(lambda),
            kernel: KernelParams::MeanRevertingAr { eta: vec![0.5], mu: vec![20.0], sigma: vec![1.5] },
            initial: InitialDistribution::Normal { mean: 16.0, sd: 2.0 },
        }
    }

    fn hist(first: usize, codes: Vec<CaptureCode>, covs: Vec<Option<f64>>) -> CaptureHistory {
        CaptureHistory::new("h", first, codes, covs).unwrap()
    }

    #[test]
    fn hand_computed_two_occasion_values() {
        // beta1 = 0 with a single group: constant phi = 0.8
        let s = ModelSpec {
            age_groups: AgeGroups::single(),
            survival_by_group: false,
            ..spec(2, InitialMode::ConditionOnObserved)
        };
        let mut prm = params(2, (0.8f64 / 0.2).ln(), 0.0, 0.9, 0.5);
        prm.survival.truncate(1);
        prm.initial = InitialDistribution::Condition;
        // wide grid: the kernel mass outside it is negligible
        let grid = CovariateGrid::new(-40.0, 80.0, 60).unwrap();
        let cases = [(Seen, 0.72), (Unseen, 0.18), (Recovered, 0.10)];
        for (code, want) in cases {
            let h = hist(1, vec![Seen, code], vec![Some(18.0), None]);
            let got = log_likelihood_individual(&h, &prm, &s, &grid).unwrap();
            assert!((got - f64::ln(want)).abs() < 1e-12, "{code:?}: {got} vs {}", f64::ln(want));
        }
    }

    #[test]
    fn single_occasion_history_is_initial_mass() {
        let s = spec(3, InitialMode::EstimatedNormal);
        let prm = params(3, 0.0, 0.1, 0.5, 0.5);
        let grid = CovariateGrid::new(10.0, 30.0, 8).unwrap();
        let h = hist(3, vec![Seen], vec![None]);
        let delta = initial_vector(&prm.initial, &grid, None).unwrap();
        let got = log_likelihood_individual(&h, &prm, &s, &grid).unwrap();
        assert!((got - delta.iter().sum::<f64>().ln()).abs() < 1e-15);
    }

    /// Literal `(m + 2)`-dimensional vector-matrix products with no scaling.
    fn literal(h: &CaptureHistory, prm: &ModelParams, s: &ModelSpec, grid: &CovariateGrid) -> f64 {
        let m = grid.m();
        let mut v = initial_vector(&prm.initial, grid, h.covariate(h.first())).unwrap();
        for t in h.first()..h.last() {
            let g = crate::likelihood::build_system_matrix(h, t, prm, s, grid).unwrap().to_dense();
            let q =
                build_observation_matrix(h.capture(t + 1), prm.recapture.at(t + 1), prm.recovery.at(t + 1), m).diag();
            v = (0..m + 2).map(|j| (0..m + 2).map(|i| v[i] * g[i][j]).sum::<f64>() * q[j]).collect();
        }
        v.iter().sum()
    }

    fn history_strategy(occasions: usize) -> impl Strategy<Value = CaptureHistory> {
        (1..=occasions, proptest::collection::vec((0u8..3, any::<bool>(), 12.0f64..28.0), occasions)).prop_map(
            move |(first, raw)| {
                let n = occasions - first + 1;
                let mut codes = vec![Seen];
                let mut covs = vec![if raw[0].1 { Some(raw[0].2) } else { None }];
                let mut dead = false;
                for &(c, obs, y) in &raw[1..n] {
                    let code = if dead { Unseen } else { CaptureCode::try_from(c).unwrap() };
                    dead |= code == Recovered;
                    codes.push(code);
                    covs.push(if code == Seen && obs { Some(y) } else { None });
                }
                CaptureHistory::new("r", first, codes, covs).unwrap()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn sparse_recursion_matches_literal_product(h in history_strategy(5), m in 2usize..7,
                                                    b0 in -4.0f64..2.0, b1 in -0.1f64..0.3) {
            let s = spec(5, InitialMode::EstimatedNormal);
            let prm = params(5, b0, b1, 0.6, 0.4);
            let grid = CovariateGrid::new(8.0, 32.0, m).unwrap();
            let got = log_likelihood_individual(&h, &prm, &s, &grid).unwrap();
            let want = literal(&h, &prm, &s, &grid).ln();
            prop_assert!((got - want).abs() < 1e-12 * want.abs().max(1.0), "{got} vs {want}");
        }

        #[test]
        fn recursion_matches_brute_force(h in history_strategy(4), m in 2usize..5,
                                         b0 in -4.0f64..2.0, b1 in -0.1f64..0.3, p in 0.05f64..0.95) {
            let s = spec(4, InitialMode::EstimatedNormal);
            let prm = params(4, b0, b1, p, 0.4);
            let grid = CovariateGrid::new(8.0, 32.0, m).unwrap();
            let got = log_likelihood_individual(&h, &prm, &s, &grid).unwrap().exp();
            let want = brute_force_likelihood(&h, &prm, &s, &grid).unwrap();
            // the oracle forms 1 - phi by subtraction, which loses digits when phi is near 1
            prop_assert!(((got - want) / want).abs() < 1e-10);
        }

        #[test]
        fn observation_scaling_shifts_by_log_c(h in history_strategy(5), c in 0.01f64..50.0, at in 0usize..4) {
            let s = spec(5, InitialMode::EstimatedNormal);
            let prm = params(5, -1.0, 0.1, 0.6, 0.4);
            let grid = CovariateGrid::new(8.0, 32.0, 6).unwrap();
            let base = log_likelihood_individual(&h, &prm, &s, &grid).unwrap();
            let scale_at = h.first() + 1 + at;
            prop_assume!(scale_at <= h.last());
            let delta = initial_vector(&prm.initial, &grid, h.covariate(h.first())).unwrap();
            let steps = (h.first()..h.last()).map(|t| {
                let gamma = crate::likelihood::build_system_matrix(&h, t, &prm, &s, &grid)?;
                let mut q = build_observation_matrix(h.capture(t + 1), prm.recapture.at(t + 1), prm.recovery.at(t + 1), 6);
                if t + 1 == scale_at {
                    q = q.scaled(c);
                }
                Ok((t + 1, gamma, q))
            });
            let scaled = forward_log_likelihood(&delta, h.first(), steps).unwrap();
            prop_assert!((scaled - base - c.ln()).abs() < 1e-12 * base.abs().max(1.0));
        }

        #[test]
        fn early_detection_probabilities_never_enter(h in history_strategy(5), junk in 0.0f64..=1.0) {
            let s = spec(5, InitialMode::EstimatedNormal);
            let prm = params(5, -1.0, 0.1, 0.6, 0.4);
            let grid = CovariateGrid::new(8.0, 32.0, 5).unwrap();
            let mut other = prm.clone();
            if let OccasionProbs::PerOccasion(v) = &mut other.recapture {
                for t in 2..=h.first() {
                    v[t - 2] = junk;
                }
            }
            let a = log_likelihood_individual(&h, &prm, &s, &grid).unwrap();
            let b = log_likelihood_individual(&h, &other, &s, &grid).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    fn small_dataset() -> Dataset {
        Dataset::new(vec![
            CaptureHistory::new(
                "a",
                1,
                vec![Seen, Unseen, Seen, Unseen, Unseen],
                vec![Some(15.0), None, Some(19.0), None, None],
            )
            .unwrap(),
            CaptureHistory::new("b", 2, vec![Seen, Seen, Unseen, Recovered], vec![None, Some(21.0), None, None])
                .unwrap(),
            CaptureHistory::new("c", 3, vec![Seen, Unseen, Unseen], vec![Some(12.5), None, None]).unwrap(),
            CaptureHistory::new("d", 5, vec![Seen], vec![Some(25.0)]).unwrap(),
        ])
        .unwrap()
    }

    #[test]
    fn dataset_sum_and_problem_agree() {
        let data = small_dataset();
        let s = spec(5, InitialMode::EstimatedNormal);
        let prm = params(5, -2.0, 0.15, 0.7, 0.3);
        let grid = CovariateGrid::new(8.0, 32.0, 12).unwrap();
        let direct: Vec<f64> =
            data.histories().iter().map(|h| log_likelihood_individual(h, &prm, &s, &grid).unwrap()).collect();
        let problem = LikelihoodProblem::new(&data, &s, &grid).unwrap();
        assert_eq!(problem.individual_log_likelihoods(&prm).unwrap(), direct);
        let total = log_likelihood_dataset(&data, &prm, &s, &grid).unwrap();
        assert_eq!(total, direct.iter().sum::<f64>());
    }

    #[test]
    fn duplicated_individual_doubles() {
        let h = small_dataset().histories()[1].clone();
        let mut twin = h.clone();
        twin = CaptureHistory::new("twin", twin.first(), twin.captures().to_vec(), twin.covariates().to_vec()).unwrap();
        let s = spec(5, InitialMode::EstimatedNormal);
        let prm = params(5, -2.0, 0.15, 0.7, 0.3);
        let grid = CovariateGrid::new(8.0, 32.0, 10).unwrap();
        let one = log_likelihood_dataset(&Dataset::new(vec![h.clone()]).unwrap(), &prm, &s, &grid).unwrap();
        let two = log_likelihood_dataset(&Dataset::new(vec![h, twin]).unwrap(), &prm, &s, &grid).unwrap();
        assert_eq!(two, 2.0 * one);
    }

    #[test]
    fn permutation_gives_identical_individual_terms() {
        let data = small_dataset();
        let mut rev = data.histories().to_vec();
        rev.reverse();
        let rev = Dataset::new(rev).unwrap();
        let s = spec(5, InitialMode::EstimatedNormal);
        let prm = params(5, -2.0, 0.15, 0.7, 0.3);
        let grid = CovariateGrid::new(8.0, 32.0, 10).unwrap();
        let a = LikelihoodProblem::new(&data, &s, &grid).unwrap().individual_log_likelihoods(&prm).unwrap();
        let mut b = LikelihoodProblem::new(&rev, &s, &grid).unwrap().individual_log_likelihoods(&prm).unwrap();
        b.reverse();
        assert_eq!(a, b);
    }

    #[test]
    fn impossible_history_is_reported_with_id() {
        let s = spec(3, InitialMode::ConditionOnObserved);
        let mut prm = params(3, 0.0, 0.1, 1.0, 0.5);
        prm.initial = InitialDistribution::Condition;
        let grid = CovariateGrid::new(8.0, 32.0, 5).unwrap();
        // p = 1 makes a missed live capture followed by a sighting impossible
        let h = CaptureHistory::new("ghost", 1, vec![Seen, Unseen, Seen], vec![Some(15.0), None, Some(16.0)]).unwrap();
        match log_likelihood_individual(&h, &prm, &s, &grid) {
            Err(Error::ImpossibleHistory { id, occasion }) => {
                assert_eq!(id, "ghost");
                // occasion 2 is still explained by a death; the sighting at 3 is not
                assert_eq!(occasion, 3);
            }
            other => panic!("expected impossible history, got {other:?}"),
        }
    }

    #[test]
    fn no_covariate_collapse_with_time_varying_detection() {
        let s = ModelSpec {
            age_groups: AgeGroups::single(),
            survival_by_group: false,
            ..spec(5, InitialMode::ConditionOnObserved)
        };
        let mut prm = params(5, 0.9, 0.0, 0.0, 0.35);
        prm.survival.truncate(1);
        prm.recapture = OccasionProbs::PerOccasion(vec![0.8, 0.6, 0.9, 0.5]);
        prm.initial = InitialDistribution::Condition;
        // kernel mass stays within +-10 sd of the reachable means
        let grid = CovariateGrid::new(20.0 - 15.0 * 1.5 - 10.0, 20.0 + 15.0 * 1.5, 80).unwrap();
        let phi = crate::domain::logistic(0.9);
        // later observed values would add density factors that have no counterpart
        // without a covariate, so keep only the initial one
        let initial_only = small_dataset()
            .histories()
            .iter()
            .filter(|h| h.covariate(h.first()).is_some())
            .map(|h| {
                let mut covs = vec![None; h.covariates().len()];
                covs[0] = h.covariates()[0];
                CaptureHistory::new(h.id(), h.first(), h.captures().to_vec(), covs).unwrap()
            })
            .collect::<Vec<_>>();
        for h in &initial_only {
            let got = log_likelihood_individual(h, &prm, &s, &grid).unwrap();
            let want = no_covariate_likelihood(h, |_| phi, &prm.recapture, &prm.recovery).ln();
            assert!((got - want).abs() < 1e-6, "{}: {got} vs {want}", h.id());
        }
    }

    #[test]
    fn grid_refinement_differences_shrink() {
        let data = small_dataset();
        let s = spec(5, InitialMode::EstimatedNormal);
        let prm = params(5, -2.0, 0.15, 0.7, 0.3);
        let ll: Vec<f64> = [10, 20, 40, 80, 160]
            .iter()
            .map(|&m| log_likelihood_dataset(&data, &prm, &s, &CovariateGrid::new(8.0, 32.0, m).unwrap()).unwrap())
            .collect();
        let diffs: Vec<f64> = ll.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
        assert!(diffs.windows(2).all(|w| w[1] < w[0]), "{diffs:?}");
    }
}
