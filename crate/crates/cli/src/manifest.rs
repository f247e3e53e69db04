use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Config;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest<'a> {
    pub command: &'a str,
    pub config_path: Option<String>,
    pub seed: u64,
    pub output_dir: String,
    pub output_file: String,
    pub tool_version: &'static str,
    pub timestamp: String,
    /// Effective configuration after command-line overrides.
    pub config: &'a Config,
}

/// Path of the manifest written next to `output`.
pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

pub fn write_manifest(
    command: &str,
    config_path: Option<&Path>,
    config: &Config,
    output: &Path,
) -> std::io::Result<()> {
    let m = RunManifest {
        command,
        config_path: config_path.map(|p| p.display().to_string()),
        seed: config.analysis.seed,
        output_dir: output
            .parent()
            .map(|p| p.display().to_string())
            .unwrap_or_default(),
        output_file: output
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        tool_version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339(),
        config,
    };
    fs::write(manifest_path(output), serde_json::to_string_pretty(&m)?)
}
