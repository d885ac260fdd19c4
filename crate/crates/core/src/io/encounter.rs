//! Compact encounter strings such as `0110102`, one character per occasion.

use crate::domain::{CaptureCode, CaptureHistory, Dataset};
use crate::error::{Error, Result};

/// Parses lines of `id history [y_1 ... y_T]`, whitespace separated. Blank
/// lines and lines starting with `#` are skipped. Covariates, when given,
/// cover every occasion and use `NA` for missing values; entries before the
/// first capture must be `NA`.
pub fn parse_encounter_strings(text: &str) -> Result<Dataset> {
    let mut histories = Vec::new();
    let mut occasions = None;
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let bad = |msg: String| Error::parse(format!("line {line}: {msg}"));
        let raw = raw.trim();
        if raw.is_empty() || raw.starts_with('#') {
            continue;
        }
        let mut fields = raw.split_whitespace();
        let id = fields.next().expect("non-empty line");
        let history = fields.next().ok_or_else(|| bad(format!("`{id}` has no encounter string")))?;
        let codes = history
            .chars()
            .map(|c| match c {
                '0' => Ok(CaptureCode::Unseen),
                '1' => Ok(CaptureCode::Seen),
                '2' => Ok(CaptureCode::Recovered),
                other => Err(bad(format!("encounter character must be 0, 1 or 2, got `{other}`"))),
            })
            .collect::<Result<Vec<_>>>()?;
        let t = codes.len();
        if *occasions.get_or_insert(t) != t {
            return Err(bad(format!("encounter string has {t} occasions, expected {}", occasions.unwrap())));
        }
        let rest: Vec<&str> = fields.collect();
        let covariates: Vec<Option<f64>> = match rest.len() {
            0 => vec![None; t],
            n if n == t => rest
                .iter()
                .map(|s| match *s {
                    "NA" => Ok(None),
                    s => s
                        .parse::<f64>()
                        .ok()
                        .filter(|y| y.is_finite())
                        .map(Some)
                        .ok_or_else(|| bad(format!("covariate must be a finite number or NA, got `{s}`"))),
                })
                .collect::<Result<_>>()?,
            n => return Err(bad(format!("{n} covariate values for {t} occasions"))),
        };
        let g = codes
            .iter()
            .position(|&c| c != CaptureCode::Unseen)
            .ok_or_else(|| bad(format!("`{id}` is never captured")))?;
        if covariates[..g].iter().any(Option::is_some) {
            return Err(bad(format!("`{id}` has a covariate before its first capture")));
        }
        histories.push(CaptureHistory::new(id, g + 1, codes[g..].to_vec(), covariates[g..].to_vec())?);
    }
    Dataset::new(histories)
}
