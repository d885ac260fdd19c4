use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Per-occasion capture code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CaptureCode {
    /// Not observed.
    Unseen = 0,
    /// Observed alive.
    Seen = 1,
    /// Recovered dead in the preceding interval.
    Recovered = 2,
}

impl CaptureCode {
    pub fn as_u8(self) -> u8 {
        self as u8
    }
}

impl TryFrom<u8> for CaptureCode {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            0 => Ok(CaptureCode::Unseen),
            1 => Ok(CaptureCode::Seen),
            2 => Ok(CaptureCode::Recovered),
            other => Err(Error::parse(format!("capture code must be 0, 1 or 2, got {other}"))),
        }
    }
}

/// Encounter history of one individual from its first capture `g` to the
/// last study occasion `T`. Occasions are 1-based.
///
/// Covariate values are `None` where not recorded; a missing value is never
/// represented by a floating-point sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaptureHistory {
    id: String,
    first: usize,
    captures: Vec<CaptureCode>,
    covariates: Vec<Option<f64>>,
    birth: Option<usize>,
}

impl CaptureHistory {
    /// `captures[k]` and `covariates[k]` belong to occasion `first + k`.
    pub fn new(
        id: impl Into<String>,
        first: usize,
        captures: Vec<CaptureCode>,
        covariates: Vec<Option<f64>>,
    ) -> Result<Self> {
        let id = id.into();
        let bad = |msg: String| Error::validation(format!("history `{id}`: {msg}"));

        if first == 0 {
            return Err(bad("first capture occasion must be >= 1".into()));
        }
        if captures.is_empty() {
            return Err(bad("empty capture sequence".into()));
        }
        if captures.len() != covariates.len() {
            return Err(bad(format!("{} capture codes but {} covariate entries", captures.len(), covariates.len())));
        }
        if captures[0] != CaptureCode::Seen {
            return Err(bad(format!("history must begin with a live capture at occasion {first}")));
        }

        let mut death: Option<usize> = None;
        for (k, (&code, &cov)) in captures.iter().zip(&covariates).enumerate() {
            let t = first + k;
            if let Some(tau) = death {
                if code != CaptureCode::Unseen {
                    return Err(bad(format!(
                        "capture code {} at occasion {t} after recovery at occasion {tau}",
                        code.as_u8()
                    )));
                }
            }
            if code == CaptureCode::Recovered {
                death = Some(t);
            }
            if let Some(y) = cov {
                if !y.is_finite() {
                    return Err(bad(format!("non-finite covariate at occasion {t}")));
                }
                if let Some(tau) = death {
                    return Err(bad(format!(
                        "covariate recorded at occasion {t}, at or after death at occasion {tau}"
                    )));
                }
                if code == CaptureCode::Unseen {
                    return Err(bad(format!(
                        "covariate recorded at occasion {t} although the individual was not seen"
                    )));
                }
            }
        }

        Ok(Self { id, first, captures, covariates, birth: None })
    }

    /// Overrides the birth occasion used for age computation (default: first capture).
    pub fn with_birth(mut self, birth: usize) -> Result<Self> {
        if birth > self.first {
            return Err(Error::validation(format!(
                "history `{}`: birth occasion {birth} after first capture {}",
                self.id, self.first
            )));
        }
        self.birth = Some(birth);
        Ok(self)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn first(&self) -> usize {
        self.first
    }

    /// Last study occasion `T`.
    pub fn last(&self) -> usize {
        self.first + self.captures.len() - 1
    }

    pub fn birth(&self) -> Option<usize> {
        self.birth
    }

    pub fn captures(&self) -> &[CaptureCode] {
        &self.captures
    }

    pub fn covariates(&self) -> &[Option<f64>] {
        &self.covariates
    }

    pub fn capture(&self, t: usize) -> CaptureCode {
        self.captures[t - self.first]
    }

    pub fn covariate(&self, t: usize) -> Option<f64> {
        self.covariates[t - self.first]
    }

    /// Occasion of the recovery, if the individual was recovered dead.
    pub fn death_occasion(&self) -> Option<usize> {
        self.captures.iter().position(|&c| c == CaptureCode::Recovered).map(|k| self.first + k)
    }

    pub fn last_seen_alive(&self) -> usize {
        let k = self
            .captures
            .iter()
            .rposition(|&c| c == CaptureCode::Seen)
            .expect("validated: first code is a live capture");
        self.first + k
    }

    /// Age at occasion `t`, counted from the birth occasion (first capture by default).
    pub fn age(&self, t: usize) -> Result<usize> {
        let origin = self.birth.unwrap_or(self.first);
        if t < self.first {
            return Err(Error::validation(format!(
                "occasion {t} precedes first capture {} of `{}`",
                self.first, self.id
            )));
        }
        Ok(t - origin)
    }

    /// Whether the individual is known to be dead at `t` (recovered at or before `t`).
    pub fn known_dead(&self, t: usize) -> bool {
        self.death_occasion().is_some_and(|tau| t >= tau)
    }

    /// Occasions with an observed covariate.
    pub fn observed_covariate_occasions(&self) -> Vec<usize> {
        (self.first..=self.last()).filter(|&t| self.covariate(t).is_some()).collect()
    }

    /// Occasions with an unobserved covariate at which the individual is not known dead.
    pub fn missing_covariate_occasions(&self) -> Vec<usize> {
        (self.first..=self.last()).filter(|&t| self.covariate(t).is_none() && !self.known_dead(t)).collect()
    }

    /// Occasions with a known survival state.
    pub fn known_state_occasions(&self) -> Vec<usize> {
        (self.first..=self.last()).filter(|&t| !self.state_unknown(t)).collect()
    }

    /// Occasions with an unknown survival state.
    pub fn unknown_state_occasions(&self) -> Vec<usize> {
        (self.first..=self.last()).filter(|&t| self.state_unknown(t)).collect()
    }

    fn state_unknown(&self, t: usize) -> bool {
        self.death_occasion().is_none() && t > self.last_seen_alive()
    }
}

/// A set of histories sharing one study length `T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    histories: Vec<CaptureHistory>,
    occasions: usize,
}

impl Dataset {
    pub fn new(histories: Vec<CaptureHistory>) -> Result<Self> {
        let Some(first) = histories.first() else {
            return Err(Error::validation("dataset contains no histories"));
        };
        let occasions = first.last();
        if let Some(h) = histories.iter().find(|h| h.last() != occasions) {
            return Err(Error::validation(format!(
                "history `{}` ends at occasion {} but the study has {occasions} occasions",
                h.id(),
                h.last()
            )));
        }
        let mut ids: Vec<&str> = histories.iter().map(|h| h.id()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::validation(format!("duplicate individual id `{}`", w[0])));
        }
        Ok(Self { histories, occasions })
    }

    pub fn histories(&self) -> &[CaptureHistory] {
        &self.histories
    }

    pub fn occasions(&self) -> usize {
        self.occasions
    }

    pub fn len(&self) -> usize {
        self.histories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.histories.is_empty()
    }

    /// Smallest and largest observed covariate value, if any covariate was recorded.
    pub fn covariate_range(&self) -> Option<(f64, f64)> {
        self.histories.iter().flat_map(|h| h.covariates().iter().flatten().copied()).fold(None, |acc, y| match acc {
            None => Some((y, y)),
            Some((lo, hi)) => Some((lo.min(y), hi.max(y))),
        })
    }

    pub fn summary(&self) -> DatasetSummary {
        let mut live = 0usize;
        let mut live_missing = 0usize;
        let mut recovered = 0usize;
        for h in &self.histories {
            for (&code, cov) in h.captures().iter().zip(h.covariates()) {
                match code {
                    CaptureCode::Seen => {
                        live += 1;
                        if cov.is_none() {
                            live_missing += 1;
                        }
                    }
                    CaptureCode::Recovered => recovered += 1,
                    CaptureCode::Unseen => {}
                }
            }
        }
        let n = self.histories.len();
        DatasetSummary {
            individuals: n,
            occasions: self.occasions,
            mean_observations: live as f64 / n as f64,
            recovered_dead: recovered,
            missing_covariate_fraction: if live == 0 { 0.0 } else { live_missing as f64 / live as f64 },
        }
    }

    /// SHA-256 over the exact contents, independent of how the data were produced.
    pub fn checksum(&self) -> String {
        let mut hasher = Sha256::new();
        hasher.update((self.occasions as u64).to_le_bytes());
        for h in &self.histories {
            hasher.update((h.id.len() as u64).to_le_bytes());
            hasher.update(h.id.as_bytes());
            hasher.update((h.first as u64).to_le_bytes());
            hasher.update((h.birth.map_or(0, |b| b as u64 + 1)).to_le_bytes());
            for (code, cov) in h.captures.iter().zip(&h.covariates) {
                hasher.update([code.as_u8()]);
                match cov {
                    Some(y) => {
                        hasher.update([1]);
                        hasher.update(y.to_bits().to_le_bytes());
                    }
                    None => hasher.update([0]),
                }
            }
        }
        hex::encode(hasher.finalize())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub individuals: usize,
    pub occasions: usize,
    /// Live captures per individual, including the first capture.
    pub mean_observations: f64,
    pub recovered_dead: usize,
    /// Fraction of live captures without a recorded covariate.
    pub missing_covariate_fraction: f64,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use CaptureCode::*;

    #[test]
    fn sets_for_a_recovered_history() {
        let h = CaptureHistory::new(
            "a",
            2,
            vec![Seen, Unseen, Seen, Recovered, Unseen],
            vec![Some(10.0), None, None, None, None],
        )
        .unwrap();
        assert_eq!(h.last(), 6);
        assert_eq!(h.death_occasion(), Some(5));
        assert_eq!(h.observed_covariate_occasions(), vec![2]);
        assert_eq!(h.missing_covariate_occasions(), vec![3, 4]);
        assert_eq!(h.known_state_occasions(), vec![2, 3, 4, 5, 6]);
        assert!(h.unknown_state_occasions().is_empty());
    }

    #[test]
    fn unknown_states_follow_last_sighting() {
        let h = CaptureHistory::new(
            "b",
            1,
            vec![Seen, Seen, Unseen, Unseen],
            vec![Some(1.0); 2].into_iter().chain([None, None]).collect(),
        )
        .unwrap();
        assert_eq!(h.unknown_state_occasions(), vec![3, 4]);
        assert_eq!(h.missing_covariate_occasions(), vec![3, 4]);
    }

    #[test]
    fn rejects_covariate_after_death() {
        let err =
            CaptureHistory::new("x7", 1, vec![Seen, Recovered, Unseen], vec![Some(1.0), None, Some(10.0)]).unwrap_err();
        assert!(err.to_string().contains("x7"));
    }

    #[test]
    fn rejects_non_capture_start_and_double_recovery() {
        assert!(CaptureHistory::new("a", 1, vec![Unseen, Seen], vec![None, None]).is_err());
        assert!(CaptureHistory::new("a", 1, vec![Seen, Recovered, Recovered], vec![None; 3]).is_err());
        assert!(CaptureHistory::new("a", 1, vec![Seen, Recovered, Seen], vec![None; 3]).is_err());
    }

    #[test]
    fn age_counts_from_birth() {
        let h = CaptureHistory::new("a", 3, vec![Seen, Unseen], vec![None, None]).unwrap();
        assert_eq!(h.age(3).unwrap(), 0);
        assert_eq!(h.age(4).unwrap(), 1);
        assert!(h.age(2).is_err());
        let h = h.with_birth(1).unwrap();
        assert_eq!(h.age(4).unwrap(), 3);
    }

    #[test]
    fn checksum_tracks_contents() {
        let a = CaptureHistory::new("a", 1, vec![Seen, Seen], vec![Some(1.0), Some(2.0)]).unwrap();
        let b = CaptureHistory::new("a", 1, vec![Seen, Seen], vec![Some(1.0), None]).unwrap();
        let da = Dataset::new(vec![a.clone()]).unwrap();
        assert_eq!(da.checksum(), Dataset::new(vec![a]).unwrap().checksum());
        assert_ne!(da.checksum(), Dataset::new(vec![b]).unwrap().checksum());
        assert_eq!(da.checksum().len(), 64);
    }

    #[test]
    fn summary_counts() {
        let a = CaptureHistory::new("a", 1, vec![Seen, Seen, Recovered], vec![Some(1.0), None, None]).unwrap();
        let b = CaptureHistory::new("b", 2, vec![Seen, Unseen], vec![Some(2.0), None]).unwrap();
        let s = Dataset::new(vec![a, b]).unwrap().summary();
        assert_eq!(s.individuals, 2);
        assert_eq!(s.recovered_dead, 1);
        assert!((s.mean_observations - 1.5).abs() < 1e-15);
        assert!((s.missing_covariate_fraction - 1.0 / 3.0).abs() < 1e-15);
    }

    fn follows_absorption(codes: &[u8]) -> bool {
        if codes[0] != 1 {
            return false;
        }
        match codes.iter().position(|&c| c == 2) {
            Some(k) => codes[k + 1..].iter().all(|&c| c == 0),
            None => true,
        }
    }

    proptest! {
        #[test]
        fn validation_matches_absorption_rule(codes in prop::collection::vec(0u8..3, 1..12)) {
            let caps: Vec<CaptureCode> = codes.iter().map(|&c| CaptureCode::try_from(c).unwrap()).collect();
            let res = CaptureHistory::new("p", 1, caps, vec![None; codes.len()]);
            prop_assert_eq!(res.is_ok(), follows_absorption(&codes));
        }
    }
}
