use serde::{Deserialize, Serialize};

use super::history::{CaptureCode, Dataset};
use super::spec::{GroupId, InitialMode, KernelFamily, ModelSpec, TimeStructure};
use super::survival::{logistic, logit};
use crate::error::{Error, Result};
use crate::kernels::{InitialDistribution, KernelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// In (0, 1); logit transform.
    Probability,
    /// Positive; log transform.
    Positive,
    Unconstrained,
}

impl Constraint {
    pub fn to_unconstrained(self, value: f64) -> f64 {
        match self {
            Constraint::Probability => logit(value),
            Constraint::Positive => value.ln(),
            Constraint::Unconstrained => value,
        }
    }

    pub fn to_natural(self, theta: f64) -> f64 {
        match self {
            Constraint::Probability => logistic(theta),
            Constraint::Positive => theta.exp(),
            Constraint::Unconstrained => theta,
        }
    }

    /// d(natural)/d(theta) at `theta`.
    pub fn jacobian(self, theta: f64) -> f64 {
        match self {
            Constraint::Probability => {
                let p = logistic(theta);
                p * (1.0 - p)
            }
            Constraint::Positive => theta.exp(),
            Constraint::Unconstrained => 1.0,
        }
    }

    pub fn admits(self, value: f64) -> bool {
        match self {
            Constraint::Probability => value > 0.0 && value < 1.0,
            Constraint::Positive => value > 0.0 && value.is_finite(),
            Constraint::Unconstrained => value.is_finite(),
        }
    }
}

/// What a parameter means inside the likelihood.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "index", rename_all = "snake_case")]
pub enum ParamRole {
    Intercept(usize),
    Slope(usize),
    /// Recapture probability; `None` when constant over occasions.
    Recapture(Option<usize>),
    Recovery(Option<usize>),
    Eta(usize),
    Mu(usize),
    Sigma(usize),
    Level,
    Amplitude,
    Mean,
    Sd,
    InitialMean,
    InitialSd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Parameter {
    pub name: String,
    pub role: ParamRole,
    pub constraint: Constraint,
    pub value: f64,
}

/// Named, constrained model parameters in a fixed layout derived from a [`ModelSpec`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterVector {
    entries: Vec<Parameter>,
}

impl ParameterVector {
    /// Layout for `spec` with the default starting values.
    pub fn defaults(spec: &ModelSpec, data: &Dataset) -> Self {
        let starts = StartValues::from_data(data);
        Self {
            entries: layout(spec)
                .into_iter()
                .map(|(name, role, c)| {
                    let value = starts.value(role, spec);
                    Parameter { name, role, constraint: c, value }
                })
                .collect(),
        }
    }

    /// Layout for `spec` with every value set to NaN, to be filled with [`Self::set`].
    pub fn template(spec: &ModelSpec) -> Self {
        Self {
            entries: layout(spec)
                .into_iter()
                .map(|(name, role, constraint)| Parameter { name, role, constraint, value: f64::NAN })
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[Parameter] {
        &self.entries
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|p| p.name.as_str())
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|p| p.value).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.index_of(name).map(|i| self.entries[i].value)
    }

    pub fn set(&mut self, name: &str, value: f64) -> Result<()> {
        let i = self.index_of(name).ok_or_else(|| Error::validation(format!("unknown parameter `{name}`")))?;
        self.entries[i].value = value;
        Ok(())
    }

    /// Sets every parameter whose role matches `pred`.
    pub fn set_where(&mut self, pred: impl Fn(ParamRole) -> bool, value: f64) {
        for p in self.entries.iter_mut().filter(|p| pred(p.role)) {
            p.value = value;
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.entries.iter().find(|p| !p.constraint.admits(p.value)) {
            Some(p) => Err(Error::validation(format!(
                "parameter `{}` = {} violates its {:?} constraint",
                p.name, p.value, p.constraint
            ))),
            None => Ok(()),
        }
    }

    pub fn to_unconstrained(&self) -> Vec<f64> {
        self.entries.iter().map(|p| p.constraint.to_unconstrained(p.value)).collect()
    }

    /// Same layout with values taken from an unconstrained vector.
    pub fn with_unconstrained(&self, theta: &[f64]) -> Self {
        assert_eq!(theta.len(), self.entries.len());
        Self {
            entries: self
                .entries
                .iter()
                .zip(theta)
                .map(|(p, &th)| Parameter { value: p.constraint.to_natural(th), ..p.clone() })
                .collect(),
        }
    }

    pub fn with_values(&self, values: &[f64]) -> Self {
        assert_eq!(values.len(), self.entries.len());
        Self { entries: self.entries.iter().zip(values).map(|(p, &v)| Parameter { value: v, ..p.clone() }).collect() }
    }

    /// Decodes the vector into the structured form used by the likelihood.
    pub fn decode(&self, spec: &ModelSpec) -> Result<ModelParams> {
        ModelParams::decode(self, spec)
    }
}

fn layout(spec: &ModelSpec) -> Vec<(String, ParamRole, Constraint)> {
    use Constraint::*;
    let mut out = Vec::new();
    let groups = &spec.age_groups;
    let tag = |base: &str, g: usize, by_group: bool| {
        if by_group {
            format!("{base}[{}]", groups.label(GroupId(g)))
        } else {
            base.to_string()
        }
    };

    let sg = spec.survival_groups();
    for g in 0..sg {
        out.push((tag("beta0", g, sg > 1), ParamRole::Intercept(g), Unconstrained));
        out.push((tag("beta1", g, sg > 1), ParamRole::Slope(g), Unconstrained));
    }
    let occasions = 2..=spec.occasions;
    match spec.recapture {
        TimeStructure::Constant => out.push(("p".into(), ParamRole::Recapture(None), Probability)),
        TimeStructure::TimeDependent => {
            out.extend(occasions.clone().map(|t| (format!("p[{t}]"), ParamRole::Recapture(Some(t)), Probability)))
        }
    }
    match spec.recovery {
        TimeStructure::Constant => out.push(("lambda".into(), ParamRole::Recovery(None), Probability)),
        TimeStructure::TimeDependent => {
            out.extend(occasions.map(|t| (format!("lambda[{t}]"), ParamRole::Recovery(Some(t)), Probability)))
        }
    }
    let kg = spec.kernel_groups();
    match spec.kernel {
        KernelFamily::MeanRevertingAr { .. } => {
            for g in 0..kg {
                out.push((tag("eta", g, kg > 1), ParamRole::Eta(g), Probability));
                out.push((tag("mu", g, kg > 1), ParamRole::Mu(g), Unconstrained));
                out.push((tag("sigma", g, kg > 1), ParamRole::Sigma(g), Positive));
            }
        }
        KernelFamily::RandomWalkDrift { .. } => {
            for g in 0..kg {
                out.push((tag("mu", g, kg > 1), ParamRole::Mu(g), Unconstrained));
                out.push((tag("sigma", g, kg > 1), ParamRole::Sigma(g), Positive));
            }
        }
        KernelFamily::SineTrendAr { .. } => {
            out.push(("eta".into(), ParamRole::Eta(0), Probability));
            out.push(("level".into(), ParamRole::Level, Unconstrained));
            out.push(("gamma".into(), ParamRole::Amplitude, Unconstrained));
            out.push(("sigma".into(), ParamRole::Sigma(0), Positive));
        }
        KernelFamily::IidNormal => {
            out.push(("mean".into(), ParamRole::Mean, Unconstrained));
            out.push(("sd".into(), ParamRole::Sd, Positive));
        }
    }
    if spec.initial == InitialMode::EstimatedNormal {
        out.push(("init_mean".into(), ParamRole::InitialMean, Unconstrained));
        out.push(("init_sd".into(), ParamRole::InitialSd, Positive));
    }
    out
}

/// Neutral starting values scaled to the data.
struct StartValues {
    mean: f64,
    sd: f64,
    init_mean: f64,
    init_sd: f64,
}

fn mean_sd(values: &[f64]) -> Option<(f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (var > 0.0).then(|| (mean, var.sqrt()))
}

impl StartValues {
    fn from_data(data: &Dataset) -> Self {
        let all: Vec<f64> = data.histories().iter().flat_map(|h| h.covariates().iter().flatten().copied()).collect();
        let initial: Vec<f64> = data.histories().iter().filter_map(|h| h.covariates()[0]).collect();
        let (mean, sd) = mean_sd(&all).unwrap_or((0.0, 1.0));
        let (init_mean, init_sd) = mean_sd(&initial).unwrap_or((mean, sd));
        Self { mean, sd, init_mean, init_sd }
    }

    fn value(&self, role: ParamRole, spec: &ModelSpec) -> f64 {
        match role {
            ParamRole::Intercept(_) => logit(0.7),
            ParamRole::Slope(_) => 0.0,
            ParamRole::Recapture(_) | ParamRole::Recovery(_) => 0.5,
            ParamRole::Eta(_) => 0.5,
            ParamRole::Mu(_) => match spec.kernel {
                KernelFamily::RandomWalkDrift { .. } => 0.0,
                _ => self.mean,
            },
            ParamRole::Sigma(_) | ParamRole::Sd => self.sd,
            ParamRole::Level | ParamRole::Mean => self.mean,
            ParamRole::Amplitude => 0.0,
            ParamRole::InitialMean => self.init_mean,
            ParamRole::InitialSd => self.init_sd,
        }
    }
}

/// Logistic survival coefficients for one age group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalCoefficients {
    pub intercept: f64,
    pub slope: f64,
}

/// Per-occasion probability; occasions `2..=T` when time-dependent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OccasionProbs {
    Constant(f64),
    /// `values[k]` applies to occasion `k + 2`.
    PerOccasion(Vec<f64>),
}

impl OccasionProbs {
    pub fn at(&self, t: usize) -> f64 {
        match self {
            OccasionProbs::Constant(v) => *v,
            OccasionProbs::PerOccasion(values) => values[t - 2],
        }
    }

    pub fn validate(&self, what: &str) -> Result<()> {
        let ok = |v: f64| (0.0..=1.0).contains(&v);
        let fine = match self {
            OccasionProbs::Constant(v) => ok(*v),
            OccasionProbs::PerOccasion(vs) => vs.iter().all(|&v| ok(v)),
        };
        if fine {
            Ok(())
        } else {
            Err(Error::validation(format!("{what} probabilities must lie in [0, 1]")))
        }
    }
}

/// Structured parameter values consumed by the likelihood and the simulator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// One entry per age group, or a single shared entry.
    pub survival: Vec<SurvivalCoefficients>,
    pub recapture: OccasionProbs,
    pub recovery: OccasionProbs,
    pub kernel: KernelParams,
    pub initial: InitialDistribution,
}

impl ModelParams {
    pub fn survival_for(&self, group: GroupId) -> SurvivalCoefficients {
        match self.survival.as_slice() {
            [only] => *only,
            all => all[group.0],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.survival.is_empty() {
            return Err(Error::validation("no survival coefficients"));
        }
        self.recapture.validate("recapture")?;
        self.recovery.validate("recovery")?;
        self.kernel.validate()?;
        if let InitialDistribution::Normal { sd, .. } = self.initial {
            if !(sd > 0.0) {
                return Err(Error::validation("initial sd must be positive"));
            }
        }
        Ok(())
    }

    fn decode(pv: &ParameterVector, spec: &ModelSpec) -> Result<Self> {
        let sg = spec.survival_groups();
        let kg = spec.kernel_groups();
        let t_count = spec.occasions.saturating_sub(1);
        let mut survival = vec![SurvivalCoefficients { intercept: f64::NAN, slope: f64::NAN }; sg];
        let mut p = match spec.recapture {
            TimeStructure::Constant => OccasionProbs::Constant(f64::NAN),
            TimeStructure::TimeDependent => OccasionProbs::PerOccasion(vec![f64::NAN; t_count]),
        };
        let mut lambda = match spec.recovery {
            TimeStructure::Constant => OccasionProbs::Constant(f64::NAN),
            TimeStructure::TimeDependent => OccasionProbs::PerOccasion(vec![f64::NAN; t_count]),
        };
        let (mut eta, mut mu, mut sigma) = (vec![f64::NAN; kg], vec![f64::NAN; kg], vec![f64::NAN; kg]);
        let (mut level, mut amplitude, mut mean, mut sd) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN);
        let (mut init_mean, mut init_sd) = (f64::NAN, f64::NAN);

        let set_occ = |probs: &mut OccasionProbs, t: Option<usize>, v: f64| -> Result<()> {
            match (probs, t) {
                (OccasionProbs::Constant(slot), None) => *slot = v,
                (OccasionProbs::PerOccasion(vs), Some(t)) if (2..=vs.len() + 1).contains(&t) => vs[t - 2] = v,
                _ => return Err(Error::validation("parameter layout does not match the model")),
            }
            Ok(())
        };
        let mismatch = || Error::validation("parameter layout does not match the model");

        for prm in pv.entries() {
            let v = prm.value;
            match prm.role {
                ParamRole::Intercept(g) => survival.get_mut(g).ok_or_else(mismatch)?.intercept = v,
                ParamRole::Slope(g) => survival.get_mut(g).ok_or_else(mismatch)?.slope = v,
                ParamRole::Recapture(t) => set_occ(&mut p, t, v)?,
                ParamRole::Recovery(t) => set_occ(&mut lambda, t, v)?,
                ParamRole::Eta(g) => *eta.get_mut(g).ok_or_else(mismatch)? = v,
                ParamRole::Mu(g) => *mu.get_mut(g).ok_or_else(mismatch)? = v,
                ParamRole::Sigma(g) => *sigma.get_mut(g).ok_or_else(mismatch)? = v,
                ParamRole::Level => level = v,
                ParamRole::Amplitude => amplitude = v,
                ParamRole::Mean => mean = v,
                ParamRole::Sd => sd = v,
                ParamRole::InitialMean => init_mean = v,
                ParamRole::InitialSd => init_sd = v,
            }
        }

        let kernel = match spec.kernel {
            KernelFamily::MeanRevertingAr { .. } => KernelParams::MeanRevertingAr { eta, mu, sigma },
            KernelFamily::RandomWalkDrift { .. } => KernelParams::RandomWalkDrift { mu, sigma },
            KernelFamily::SineTrendAr { period } => {
                KernelParams::SineTrendAr { eta: eta[0], level, amplitude, sigma: sigma[0], period }
            }
            KernelFamily::IidNormal => KernelParams::IidNormal { mean, sd },
        };
        let initial = match spec.initial {
            InitialMode::EstimatedNormal => InitialDistribution::Normal { mean: init_mean, sd: init_sd },
            InitialMode::ConditionOnObserved => InitialDistribution::Condition,
        };
        let params = ModelParams { survival, recapture: p, recovery: lambda, kernel, initial };
        if pv.entries().iter().any(|p| p.value.is_nan()) {
            return Err(Error::validation("parameter vector contains unset (NaN) values"));
        }
        Ok(params)
    }

    /// Encodes these values into the layout for `spec`.
    pub fn encode(&self, spec: &ModelSpec) -> Result<ParameterVector> {
        let mut pv = ParameterVector::template(spec);
        let values: Vec<f64> = pv.entries().iter().map(|p| self.value_for(p.role)).collect::<Result<_>>()?;
        pv = pv.with_values(&values);
        Ok(pv)
    }

    fn value_for(&self, role: ParamRole) -> Result<f64> {
        let missing = || Error::validation(format!("model values have no entry for {role:?}"));
        let occ = |probs: &OccasionProbs, t: Option<usize>| match (probs, t) {
            (OccasionProbs::Constant(v), None) => Some(*v),
            (OccasionProbs::PerOccasion(vs), Some(t)) => vs.get(t.wrapping_sub(2)).copied(),
            _ => None,
        };
        let group = |v: &Vec<f64>, g: usize| v.get(g).copied();
        let value = match (role, &self.kernel, &self.initial) {
            (ParamRole::Intercept(g), ..) => self.survival.get(g).map(|s| s.intercept),
            (ParamRole::Slope(g), ..) => self.survival.get(g).map(|s| s.slope),
            (ParamRole::Recapture(t), ..) => occ(&self.recapture, t),
            (ParamRole::Recovery(t), ..) => occ(&self.recovery, t),
            (ParamRole::Eta(g), KernelParams::MeanRevertingAr { eta, .. }, _) => group(eta, g),
            (ParamRole::Eta(0), KernelParams::SineTrendAr { eta, .. }, _) => Some(*eta),
            (
                ParamRole::Mu(g),
                KernelParams::MeanRevertingAr { mu, .. } | KernelParams::RandomWalkDrift { mu, .. },
                _,
            ) => group(mu, g),
            (
                ParamRole::Sigma(g),
                KernelParams::MeanRevertingAr { sigma, .. } | KernelParams::RandomWalkDrift { sigma, .. },
                _,
            ) => group(sigma, g),
            (ParamRole::Sigma(0), KernelParams::SineTrendAr { sigma, .. }, _) => Some(*sigma),
            (ParamRole::Level, KernelParams::SineTrendAr { level, .. }, _) => Some(*level),
            (ParamRole::Amplitude, KernelParams::SineTrendAr { amplitude, .. }, _) => Some(*amplitude),
            (ParamRole::Mean, KernelParams::IidNormal { mean, .. }, _) => Some(*mean),
            (ParamRole::Sd, KernelParams::IidNormal { sd, .. }, _) => Some(*sd),
            (ParamRole::InitialMean, _, InitialDistribution::Normal { mean, .. }) => Some(*mean),
            (ParamRole::InitialSd, _, InitialDistribution::Normal { sd, .. }) => Some(*sd),
            _ => None,
        };
        value.ok_or_else(missing)
    }
}

/// Whether every history records the covariate at first capture, as the
/// conditioning initial mode requires.
pub fn all_initial_covariates_observed(data: &Dataset) -> bool {
    data.histories().iter().all(|h| h.capture(h.first()) == CaptureCode::Seen && h.covariates()[0].is_some())
}
