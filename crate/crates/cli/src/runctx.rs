//! Per-invocation context shared by every subcommand: the resolved config,
//! output directory, and the provenance sidecar writer.

use std::path::{Path, PathBuf};

use dslr_core::fsutil::atomic_write_str;

use crate::config::{config_hash, RunConfig};
use crate::errors::CliError;

pub struct RunCtx {
    pub cfg: RunConfig,
    /// Canonical TOML rendering of `cfg` (logged, hashed, written out).
    pub resolved: String,
    pub out: PathBuf,
    /// Whether --seed was given explicitly (matters where a config section
    /// carries its own seed, e.g. the simulator scene).
    pub seed_explicit: bool,
}

impl RunCtx {
    /// Creates the output directory and drops the two run records into it:
    /// the fully-resolved config and a provenance sidecar tying every file
    /// in the directory to (tool version, command, config hash, seed).
    /// Both files have deterministic bytes, so reruns leave them untouched.
    pub fn write_run_records(&self, command: &str) -> Result<(), CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::io(format!("cannot create {}: {e}", self.out.display())))?;
        atomic_write_str(&self.out.join("resolved_config.toml"), &self.resolved)
            .map_err(|e| CliError::io(format!("cannot write resolved config: {e}")))?;
        let provenance = format!(
            "tool=dslr {}\ncommand={}\nconfig_sha256={}\nseed={}\n",
            env!("CARGO_PKG_VERSION"),
            command,
            config_hash(&self.resolved),
            self.cfg.seed,
        );
        atomic_write_str(&self.out.join("provenance.txt"), &provenance)
            .map_err(|e| CliError::io(format!("cannot write provenance: {e}")))?;
        Ok(())
    }
}

/// Scan files (`.rimg` range images or `.bin` point clouds) in `dir`,
/// sorted by file name for a stable processing order.
pub fn list_scan_files(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir)
        .map_err(|e| CliError::io(format!("cannot read {}: {e}", dir.display())))?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "rimg" || x == "bin"))
        .collect();
    files.sort();
    if files.is_empty() {
        return Err(CliError::validation(format!(
            "no .rimg or .bin scans in {}",
            dir.display()
        )));
    }
    Ok(files)
}

pub fn stem_of(path: &Path) -> String {
    path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}
