//! `--config run.json` support. A config file holds the same keys as the
//! subcommand's flags; explicit flags win over file values, file values
//! win over defaults.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;

use crate::errors::CliError;

/// Loads a JSON config file into a per-command struct of optional fields.
/// Unknown keys are rejected so typos fail loudly.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T, CliError> {
    let Some(path) = path else {
        return Ok(T::default());
    };
    let body = fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    serde_json::from_str(&body)
        .map_err(|e| CliError::usage(format!("malformed config {}: {e}", path.display())))
}
