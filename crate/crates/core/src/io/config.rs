//! JSON run configuration: model structure, grid, optimizer, starting values
//! and simulation settings. Unknown keys are rejected with their location.

use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{
    AgeGroups, CovariateGrid, Dataset, InitialMode, KernelFamily, ModelSpec, ParameterVector, TimeStructure,
};
use crate::error::{Error, Result};
use crate::inference::FitOptions;
use crate::simulation::SimConfig;

pub const DEFAULT_M: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Link {
    #[default]
    Logit,
}

fn single_groups() -> AgeGroups {
    AgeGroups::single()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default)]
    pub link: Link,
    #[serde(default = "single_groups")]
    pub age_groups: AgeGroups,
    #[serde(default)]
    pub survival_by_group: bool,
    pub kernel: KernelFamily,
    pub recapture: TimeStructure,
    pub recovery: TimeStructure,
    pub initial: InitialMode,
}

impl ModelSection {
    /// Model structure for a study of `occasions` occasions.
    pub fn spec(&self, occasions: usize) -> ModelSpec {
        ModelSpec {
            age_groups: self.age_groups.clone(),
            survival_by_group: self.survival_by_group,
            kernel: self.kernel,
            recapture: self.recapture,
            recovery: self.recovery,
            initial: self.initial,
            occasions,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum RangeRule {
    /// `0.8 * min` to `1.2 * max` of the observed covariates.
    Observed,
    Explicit {
        lower: f64,
        upper: f64,
    },
}

fn default_m() -> usize {
    DEFAULT_M
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "observed")]
    pub range: RangeRule,
}

fn observed() -> RangeRule {
    RangeRule::Observed
}

impl Default for GridSection {
    fn default() -> Self {
        Self { m: DEFAULT_M, range: RangeRule::Observed }
    }
}

impl GridSection {
    pub fn grid(&self, data: &Dataset, m: Option<usize>) -> Result<CovariateGrid> {
        let m = m.unwrap_or(self.m);
        match self.range {
            RangeRule::Observed => {
                let (lo, hi) =
                    data.covariate_range().ok_or_else(|| Error::validation("dataset records no covariate values"))?;
                CovariateGrid::from_observed_range(lo, hi, m)
            }
            RangeRule::Explicit { lower, upper } => CovariateGrid::new(lower, upper, m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Config {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<ModelSection>,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub optimizer: FitOptions,
    /// Starting values by parameter name, on the natural scale.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub start: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimConfig>,
}

impl Config {
    pub fn model(&self) -> Result<&ModelSection> {
        self.model.as_ref().ok_or_else(|| Error::validation("config has no `model` section"))
    }

    pub fn simulation(&self) -> Result<&SimConfig> {
        self.simulation.as_ref().ok_or_else(|| Error::validation("config has no `simulation` section"))
    }

    /// Default starting values for `spec` on `data`, overridden by `start`.
    pub fn initial_values(&self, spec: &ModelSpec, data: &Dataset) -> Result<ParameterVector> {
        let mut init = ParameterVector::defaults(spec, data);
        for (name, &value) in &self.start {
            init.set(name, value)?;
        }
        Ok(init)
    }
}

/// Deserializes JSON, naming the path of the first offending field.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let at = if path == "." { String::new() } else { format!("at `{path}`: ") };
        Error::parse(format!("{at}{inner}"))
    })
}

pub fn parse_config(text: &str) -> Result<Config> {
    let config: Config = from_json(text)?;
    if let Some(model) = &config.model {
        model.age_groups.validate()?;
    }
    if let Some(sim) = &config.simulation {
        sim.validate()?;
    }
    Ok(config)
}

pub fn read_config(path: impl AsRef<Path>) -> Result<Config> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MODEL: &str = r#"{
        "model": {
            "age_groups": {"boundaries": [1, 2, 7], "labels": ["lamb", "yearling", "adult", "senior"]},
            "survival_by_group": true,
            "kernel": {"family": "mean_reverting_ar", "by_group": true},
            "recapture": "time_dependent",
            "recovery": "time_dependent",
            "initial": "estimated_normal"
        },
        "grid": {"m": 30},
        "optimizer": {"starts": 2, "optimizer": {"max_iterations": 50}},
        "start": {"beta0[lamb]": 0.5}
    }"#;

    #[test]
    fn full_model_section() {
        let c = parse_config(MODEL).unwrap();
        let m = c.model().unwrap();
        assert_eq!(m.link, Link::Logit);
        assert_eq!(m.age_groups.len(), 4);
        assert_eq!(c.grid.m, 30);
        assert_eq!(c.grid.range, RangeRule::Observed);
        assert_eq!(c.optimizer.starts, 2);
        assert_eq!(c.optimizer.optimizer.max_iterations, 50);
        assert_eq!(c.optimizer.optimizer.gradient_tolerance, 1e-6);
        let spec = m.spec(25);
        // 8 survival, 24 + 24 probabilities, 12 kernel, 2 initial
        assert_eq!(ParameterVector::template(&spec).len(), 70);
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let c = parse_config("{}").unwrap();
        assert_eq!(c.grid.m, DEFAULT_M);
        assert!(c.model().is_err());
        assert!(c.simulation().is_err());
    }

    #[test]
    fn unknown_keys_name_their_location() {
        let err = parse_config(r#"{"grid": {"m": 20, "bins": 3}}"#).unwrap_err();
        assert!(matches!(err, Error::Parse(_)));
        assert!(err.to_string().contains("grid"), "{err}");
        assert!(err.to_string().contains("bins"), "{err}");

        let err = parse_config(r#"{"model": {"kernel": {"family": "brownian"}}}"#).unwrap_err();
        assert!(err.to_string().contains("model.kernel"), "{err}");
    }

    #[test]
    fn invalid_age_groups_are_validation_errors() {
        let text = r#"{"model": {"age_groups": {"boundaries": [1], "labels": ["a"]},
            "kernel": {"family": "iid_normal"}, "recapture": "constant", "recovery": "constant",
            "initial": "condition_on_observed"}}"#;
        assert!(matches!(parse_config(text).unwrap_err(), Error::Validation(_)));
    }

    #[test]
    fn explicit_range() {
        let c = parse_config(r#"{"grid": {"m": 4, "range": {"rule": "explicit", "lower": 0, "upper": 8}}}"#).unwrap();
        let h = crate::domain::CaptureHistory::new("a", 1, vec![crate::domain::CaptureCode::Seen], vec![Some(1.0)])
            .unwrap();
        let d = Dataset::new(vec![h]).unwrap();
        let g = c.grid.grid(&d, None).unwrap();
        assert_eq!((g.lower(), g.upper(), g.m()), (0.0, 8.0, 4));
        assert_eq!(c.grid.grid(&d, Some(8)).unwrap().m(), 8);
    }

    #[test]
    fn serialized_config_parses_back() {
        let c = parse_config(MODEL).unwrap();
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(parse_config(&text).unwrap(), c);
    }
}
