//! Run manifests: every subcommand records its resolved configuration,
//! input and output checksums, and timing beside its outputs, so a run
//! can be audited and replayed exactly.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use camflow::io::sha256_hex;
use serde::Serialize;

use crate::errors::CliError;

pub const RUN_MANIFEST_NAME: &str = "run_manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub wall_time_ms: u64,
}

/// Collects checksums while a command runs and writes the manifest at the
/// end.
pub struct RunRecorder {
    command: &'static str,
    started: Instant,
    inputs: Vec<FileRecord>,
    outputs: Vec<PathBuf>,
}

impl RunRecorder {
    pub fn new(command: &'static str) -> Self {
        Self {
            command,
            started: Instant::now(),
            inputs: Vec::new(),
            outputs: Vec::new(),
        }
    }

    fn record(path: &Path, label: &str) -> Result<FileRecord, CliError> {
        let bytes = fs::read(path)
            .map_err(|e| CliError::data(format!("cannot hash {label} {}: {e}", path.display())))?;
        Ok(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_hex(&bytes),
        })
    }

    /// Checksums an input file as passed on the command line.
    pub fn input(&mut self, path: &Path) -> Result<(), CliError> {
        self.inputs.push(Self::record(path, "input")?);
        Ok(())
    }

    /// Registers an output file; it is checksummed when the manifest is
    /// written, after all outputs exist.
    pub fn output(&mut self, path: impl Into<PathBuf>) {
        self.outputs.push(path.into());
    }

    /// Registers every regular file under `dir` (sorted, recursive).
    pub fn output_tree(&mut self, dir: &Path) -> Result<(), CliError> {
        let mut stack = vec![dir.to_path_buf()];
        let mut files = Vec::new();
        while let Some(d) = stack.pop() {
            let entries = fs::read_dir(&d)
                .map_err(|e| CliError::data(format!("cannot list {}: {e}", d.display())))?;
            for entry in entries {
                let entry =
                    entry.map_err(|e| CliError::data(format!("cannot list {}: {e}", d.display())))?;
                let p = entry.path();
                if p.is_dir() {
                    stack.push(p);
                } else {
                    files.push(p);
                }
            }
        }
        files.sort();
        self.outputs.extend(files);
        Ok(())
    }

    /// Writes `run_manifest.json` into `dir` with outputs recorded
    /// relative to it.
    pub fn finish<C: Serialize>(self, config: &C, dir: &Path) -> Result<(), CliError> {
        let mut outputs = Vec::with_capacity(self.outputs.len());
        for path in &self.outputs {
            let bytes = fs::read(path).map_err(|e| {
                CliError::data(format!("cannot hash output {}: {e}", path.display()))
            })?;
            let rel = path.strip_prefix(dir).unwrap_or(path);
            outputs.push(FileRecord {
                path: rel.display().to_string(),
                sha256: sha256_hex(&bytes),
            });
        }
        let manifest = RunManifest {
            command: self.command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: serde_json::to_value(config)
                .map_err(|e| CliError::data(format!("cannot encode config: {e}")))?,
            inputs: self.inputs,
            outputs,
            wall_time_ms: self.started.elapsed().as_millis() as u64,
        };
        let mut body = serde_json::to_string_pretty(&manifest)
            .map_err(|e| CliError::data(format!("cannot encode manifest: {e}")))?;
        body.push('\n');
        let path = dir.join(RUN_MANIFEST_NAME);
        fs::write(&path, body)
            .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))
    }
}
