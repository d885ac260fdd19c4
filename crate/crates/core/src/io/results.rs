use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{from_json, Config};
use crate::error::{Error, Result};
use crate::inference::FitResult;

pub const FORMAT_VERSION: u32 = 1;

/// A fitted model together with the exact configuration that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultFile {
    pub format_version: u32,
    pub config: Config,
    pub data_checksum: String,
    pub fit: FitResult,
}

impl ResultFile {
    pub fn new(config: Config, fit: FitResult) -> Self {
        Self { format_version: FORMAT_VERSION, config, data_checksum: fit.data_checksum.clone(), fit }
    }
}

pub fn write_result(result: &ResultFile, path: impl AsRef<Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(result).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

pub fn read_result(path: impl AsRef<Path>) -> Result<ResultFile> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let result: ResultFile = from_json(&text)?;
    if result.format_version != FORMAT_VERSION {
        return Err(Error::parse(format!(
            "result file format {} is not supported (expected {FORMAT_VERSION})",
            result.format_version
        )));
    }
    Ok(result)
}
