//! Library side of the `paoi` command: configuration, the four subcommands and
//! their CSV/JSON/SVG writers.

pub mod analytic;
pub mod config;
pub mod manifest;
pub mod simulate;
pub mod svg;
pub mod sweep;
pub mod validate;

use std::fs;
use std::path::{Path, PathBuf};

use config::Config;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error(transparent)]
    Other(#[from] anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Other(_) => 1,
        }
    }
}

impl From<paoi_core::Error> for CliError {
    fn from(e: paoi_core::Error) -> Self {
        match e {
            paoi_core::Error::Config { .. } => CliError::Config(e.to_string()),
            other => CliError::Other(other.into()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.into())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Other(e.into())
    }
}

/// One invocation: where outputs go and what produced them.
pub struct Run<'a> {
    pub command: &'static str,
    pub config: &'a Config,
    pub config_path: Option<&'a Path>,
    pub out: &'a Path,
}

impl Run<'_> {
    /// Writes a CSV plus its manifest and returns the CSV path.
    pub fn write_csv(&self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<PathBuf, CliError> {
        fs::create_dir_all(self.out)?;
        let path = self.out.join(name);
        let mut w = csv::Writer::from_path(&path)?;
        w.write_record(header)?;
        for r in rows {
            w.write_record(r)?;
        }
        w.flush()?;
        manifest::write_manifest(self.command, self.config_path, self.config, &path)?;
        Ok(path)
    }

    pub fn write_file(&self, name: &str, contents: &str) -> Result<PathBuf, CliError> {
        fs::create_dir_all(self.out)?;
        let path = self.out.join(name);
        fs::write(&path, contents)?;
        manifest::write_manifest(self.command, self.config_path, self.config, &path)?;
        Ok(path)
    }
}

/// Full-precision (round-trip) formatting.
pub fn num(v: f64) -> String {
    format!("{v}")
}

pub fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}
