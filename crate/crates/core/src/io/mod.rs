//! Dataset files, run configuration and result files.

mod config;
mod dataset;
mod encounter;
mod format;
mod results;

pub use config::{from_json, parse_config, read_config, Config, GridSection, Link, ModelSection, RangeRule, DEFAULT_M};
pub use dataset::{parse_dataset, read_dataset, save_dataset, write_dataset};
pub use encounter::parse_encounter_strings;
pub use format::{opt_sig17, opt_sig4, sig17, sig4};
pub use results::{read_result, write_result, ResultFile, FORMAT_VERSION};
