//! Run configuration: one sectioned TOML file covering every stage, merged
//! with command-line overrides into a fully-resolved snapshot that each run
//! logs and writes next to its outputs.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use dslr_core::model::{DslrConfig, LqiConfig};
use dslr_core::pairing::{PairMode, PairThresholds};
use dslr_core::scan::SensorSpec;
use dslr_core::sim::SimConfig;

use crate::errors::CliError;

/// Scanner geometry section; defaults describe the desk-scale profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SensorSection {
    pub rows: usize,
    pub cols: usize,
    pub fov_min_deg: f32,
    pub fov_max_deg: f32,
    pub max_range: f32,
}

impl Default for SensorSection {
    fn default() -> Self {
        SensorSection { rows: 16, cols: 64, fov_min_deg: -15.0, fov_max_deg: 15.0, max_range: 50.0 }
    }
}

impl SensorSection {
    pub fn to_spec(&self) -> Result<SensorSpec, CliError> {
        Ok(SensorSpec::new(
            self.rows,
            self.cols,
            self.fov_min_deg,
            self.fov_max_deg,
            self.max_range,
        )?)
    }
}

/// Viewpoint-matching thresholds for pairing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PairingSection {
    /// Strict upper bound on translation offset, meters.
    pub max_trans: f64,
    /// Strict upper bound on rotation offset, degrees.
    pub max_rot_deg: f64,
    /// "all" keeps every match, "nearest" only the closest static pose.
    pub mode: MatchMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MatchMode {
    All,
    Nearest,
}

impl Default for PairingSection {
    fn default() -> Self {
        PairingSection { max_trans: 0.5, max_rot_deg: 5.0, mode: MatchMode::All }
    }
}

impl PairingSection {
    pub fn to_thresholds(&self) -> Result<PairThresholds, CliError> {
        if !(self.max_trans > 0.0) || !(self.max_rot_deg > 0.0) {
            return Err(CliError::validation(format!(
                "pairing thresholds must be positive, got max_trans={} max_rot_deg={}",
                self.max_trans, self.max_rot_deg
            )));
        }
        Ok(PairThresholds {
            delta_trans: self.max_trans,
            delta_rot_deg: self.max_rot_deg,
            mode: match self.mode {
                MatchMode::All => PairMode::AllMatches,
                MatchMode::Nearest => PairMode::NearestOnly,
            },
        })
    }
}

/// The complete run configuration. Unknown keys are rejected at every level
/// so typos fail loudly instead of silently using defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for evaluation fan-out; everything else runs serial.
    pub threads: usize,
    pub sensor: SensorSection,
    pub pairing: PairingSection,
    /// Translation-model hyperparameters. The grid shape (`rows`, `cols`)
    /// is always taken from `[sensor]`; values set here are overwritten.
    pub model: DslrConfig,
    pub lqi: LqiConfig,
    /// Optional synthetic scene; `simulate` falls back to the built-in desk
    /// scene when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sim: Option<SimConfig>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            threads: 1,
            sensor: SensorSection::default(),
            pairing: PairingSection::default(),
            model: DslrConfig::default(),
            lqi: LqiConfig::default(),
            sim: None,
        }
    }
}

impl RunConfig {
    /// Loads the file (when given), applies command-line overrides, and
    /// validates every section. Returns the config plus its canonical TOML
    /// rendering — the string that gets logged, hashed, and written beside
    /// outputs.
    pub fn resolve(
        path: Option<&Path>,
        seed_override: Option<u64>,
        threads_override: Option<usize>,
    ) -> Result<(RunConfig, String), CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| {
                    CliError::io(format!("cannot read config {}: {e}", p.display()))
                })?;
                toml::from_str::<RunConfig>(&text).map_err(|e| {
                    CliError::validation(format!("config {}: {e}", p.display()))
                })?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = seed_override {
            cfg.seed = s;
            if let Some(sim) = cfg.sim.as_mut() {
                sim.seed = s;
            }
        }
        if let Some(t) = threads_override {
            cfg.threads = t;
        }
        if cfg.threads == 0 {
            return Err(CliError::validation("threads must be at least 1"));
        }
        // One authority for grid geometry: the model trains on whatever the
        // sensor produces.
        cfg.model.rows = cfg.sensor.rows;
        cfg.model.cols = cfg.sensor.cols;
        cfg.sensor.to_spec()?;
        cfg.pairing.to_thresholds()?;
        cfg.model.validate()?;
        cfg.lqi.validate()?;
        let resolved = toml::to_string_pretty(&cfg)
            .map_err(|e| CliError::validation(format!("cannot render config: {e}")))?;
        Ok((cfg, resolved))
    }
}

/// Hex SHA-256 of the resolved config text: the fingerprint recorded in
/// every provenance sidecar.
pub fn config_hash(resolved: &str) -> String {
    let digest = Sha256::digest(resolved.as_bytes());
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_resolve_and_roundtrip() {
        let (cfg, resolved) = RunConfig::resolve(None, None, None).unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.threads, 1);
        assert_eq!(cfg.sensor.rows, 16);
        assert_eq!(cfg.model.epochs_ae, 120);
        let back: RunConfig = toml::from_str(&resolved).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(config_hash(&resolved).len(), 64);
    }

    #[test]
    fn file_values_and_overrides_merge() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(
            &path,
            "seed = 11\n[sensor]\nrows = 8\ncols = 32\n[pairing]\nmode = \"nearest\"\n[model]\nbottleneck = 8\n",
        )
        .unwrap();
        let (cfg, _) = RunConfig::resolve(Some(&path), Some(99), Some(4)).unwrap();
        assert_eq!(cfg.seed, 99, "cli seed wins over the file");
        assert_eq!(cfg.threads, 4);
        assert_eq!(cfg.sensor.rows, 8);
        assert_eq!(cfg.sensor.fov_min_deg, -15.0, "untouched fields keep defaults");
        assert_eq!(cfg.pairing.mode, MatchMode::Nearest);
        assert_eq!(cfg.model.bottleneck, 8);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.toml");
        std::fs::write(&path, "sede = 11\n").unwrap();
        let err = RunConfig::resolve(Some(&path), None, None).unwrap_err();
        assert_eq!(err.kind, crate::errors::ErrKind::Validation);
        assert!(err.to_string().contains("sede"));

        std::fs::write(&path, "[model]\nlr = -1.0\n").unwrap();
        assert!(RunConfig::resolve(Some(&path), None, None).is_err());

        let missing = dir.path().join("absent.toml");
        let err = RunConfig::resolve(Some(&missing), None, None).unwrap_err();
        assert_eq!(err.kind, crate::errors::ErrKind::Io);
    }

    #[test]
    fn resolved_rendering_is_deterministic() {
        let (_, a) = RunConfig::resolve(None, Some(3), None).unwrap();
        let (_, b) = RunConfig::resolve(None, Some(3), None).unwrap();
        assert_eq!(a, b);
        assert_eq!(config_hash(&a), config_hash(&b));
        let (_, c) = RunConfig::resolve(None, Some(4), None).unwrap();
        assert_ne!(config_hash(&a), config_hash(&c));
    }
}
