use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of an age group within [`AgeGroups`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroupId(pub usize);

/// Partition of ages into labelled groups. `boundaries` are the lower ages of
/// every group but the first, so `[1, 2, 7]` gives `[0,1) [1,2) [2,7) [7,inf)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgeGroups {
    boundaries: Vec<usize>,
    labels: Vec<String>,
}

impl AgeGroups {
    pub fn new(boundaries: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let groups = Self { boundaries, labels };
        groups.validate()?;
        Ok(groups)
    }

    /// One group covering every age.
    pub fn single() -> Self {
        Self { boundaries: vec![], labels: vec!["all".into()] }
    }

    /// Lambs, yearlings, adults (2 to 6) and seniors (7 and over).
    pub fn lamb_yearling_adult_senior() -> Self {
        Self { boundaries: vec![1, 2, 7], labels: ["lamb", "yearling", "adult", "senior"].map(String::from).to_vec() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.boundaries.len() + 1 {
            return Err(Error::validation(format!(
                "{} age boundaries need {} labels, got {}",
                self.boundaries.len(),
                self.boundaries.len() + 1,
                self.labels.len()
            )));
        }
        if self.boundaries.first() == Some(&0) || self.boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::validation("age boundaries must be positive and strictly increasing"));
        }
        let mut labels = self.labels.clone();
        labels.sort();
        labels.dedup();
        if labels.len() != self.labels.len() {
            return Err(Error::validation("age group labels must be distinct"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn group_of_age(&self, age: usize) -> GroupId {
        GroupId(self.boundaries.partition_point(|&b| b <= age))
    }

    pub fn label(&self, group: GroupId) -> &str {
        &self.labels[group.0]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn by_label(&self, label: &str) -> Option<GroupId> {
        self.labels.iter().position(|l| l == label).map(GroupId)
    }
}

/// Covariate process family. Parameters are either shared or per age group.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelFamily {
    /// `y' = y + eta (mu - y) + sigma e`
    MeanRevertingAr {
        #[serde(default)]
        by_group: bool,
    },
    /// `y' = y + mu + sigma e`
    RandomWalkDrift {
        #[serde(default)]
        by_group: bool,
    },
    /// `y' = c + eta (y - c) + gamma sin(2 pi t / period) + sigma e`, `t` the new occasion.
    SineTrendAr { period: f64 },
    /// `y' ~ N(mean, sd^2)` regardless of `y`.
    IidNormal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TimeStructure {
    Constant,
    TimeDependent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialMode {
    /// Normal density for the covariate at first capture, mean and sd estimated.
    EstimatedNormal,
    /// Condition on the observed covariate at first capture.
    ConditionOnObserved,
}

fn single_groups() -> AgeGroups {
    AgeGroups::single()
}

/// Structure of a model: which parameters exist and how they enter the likelihood.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    #[serde(default = "single_groups")]
    pub age_groups: AgeGroups,
    /// Separate logistic coefficients per age group.
    #[serde(default)]
    pub survival_by_group: bool,
    pub kernel: KernelFamily,
    pub recapture: TimeStructure,
    pub recovery: TimeStructure,
    pub initial: InitialMode,
    /// Study length `T`; zero means "take it from the data".
    #[serde(default)]
    pub occasions: usize,
}

impl ModelSpec {
    pub fn with_occasions(mut self, occasions: usize) -> Self {
        self.occasions = occasions;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.age_groups.validate()?;
        if self.occasions < 2 {
            return Err(Error::validation(format!("model needs at least 2 occasions, got {}", self.occasions)));
        }
        if let KernelFamily::SineTrendAr { period } = self.kernel {
            if !(period.is_finite() && period > 0.0) {
                return Err(Error::validation("sine trend period must be positive"));
            }
        }
        Ok(())
    }

    pub fn survival_groups(&self) -> usize {
        if self.survival_by_group {
            self.age_groups.len()
        } else {
            1
        }
    }

    pub fn kernel_groups(&self) -> usize {
        match self.kernel {
            KernelFamily::MeanRevertingAr { by_group: true } | KernelFamily::RandomWalkDrift { by_group: true } => {
                self.age_groups.len()
            }
            _ => 1,
        }
    }

    pub fn age_group(&self, t: usize, first: usize) -> Result<GroupId> {
        age_group(t, first, self)
    }
}

/// Age group at occasion `t` of an individual first captured (at age 0) at `first`.
pub fn age_group(t: usize, first: usize, spec: &ModelSpec) -> Result<GroupId> {
    if t < first {
        return Err(Error::validation(format!("occasion {t} precedes first capture {first}")));
    }
    Ok(spec.age_groups.group_of_age(t - first))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn soay_spec() -> ModelSpec {
        ModelSpec {
            age_groups: AgeGroups::lamb_yearling_adult_senior(),
            survival_by_group: true,
            kernel: KernelFamily::MeanRevertingAr { by_group: true },
            recapture: TimeStructure::TimeDependent,
            recovery: TimeStructure::TimeDependent,
            initial: InitialMode::EstimatedNormal,
            occasions: 25,
        }
    }

    #[test]
    fn age_group_examples() {
        let spec = soay_spec();
        let label = |t, g| spec.age_groups.label(age_group(t, g, &spec).unwrap()).to_string();
        assert_eq!(label(3, 3), "lamb");
        assert_eq!(label(4, 3), "yearling");
        assert_eq!(label(5, 3), "adult");
        assert_eq!(label(9, 3), "adult");
        assert_eq!(label(9, 1), "senior");
        assert!(age_group(2, 3, &spec).is_err());
    }

    #[test]
    fn rejects_bad_groups() {
        assert!(AgeGroups::new(vec![2, 1], vec!["a".into(), "b".into(), "c".into()]).is_err());
        assert!(AgeGroups::new(vec![1], vec!["a".into()]).is_err());
        assert!(AgeGroups::new(vec![0], vec!["a".into(), "b".into()]).is_err());
    }

    #[test]
    fn parses_from_json() {
        let spec: ModelSpec = serde_json::from_str(
            r#"{"kernel": {"family": "sine_trend_ar", "period": 10.0},
                "recapture": "constant", "recovery": "constant",
                "initial": "condition_on_observed"}"#,
        )
        .unwrap();
        assert_eq!(spec.age_groups.len(), 1);
        assert!(serde_json::from_str::<ModelSpec>(
            r#"{"kernel": {"family": "iid_normal"}, "recapture": "constant",
                "recovery": "constant", "initial": "estimated_normal", "bogus": 1}"#
        )
        .is_err());
    }
}
