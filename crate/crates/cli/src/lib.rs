//! Configuration, orchestration and reproducible file output for the
//! `edgeworth` command.

pub mod analyze;
pub mod config;
pub mod error;
pub mod experiment;
pub mod snapshot;

use std::path::{Path, PathBuf};

pub use config::{
    parse_config, parse_config_in, ConfigErrors, ConfigIssue, ExperimentConfig, ExperimentKind,
};
pub use error::{CliError, CliResult};
pub use experiment::{run_experiment, run_sweep, Artifacts};

/// Reads and validates a configuration file. Relative paths inside it are
/// resolved against the file's directory.
pub fn load_config(path: &Path) -> CliResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    Ok(parse_config_in(&text, base)?)
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, mut cfg: ExperimentConfig) -> ExperimentConfig {
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out = out.clone();
        }
        if let Some(workers) = self.workers {
            cfg.workers = workers.max(1);
        }
        cfg
    }
}
