//! Loading a paired-training corpus from a pairing manifest on disk.
//!
//! The manifest references dynamic scans (point-cloud binaries or range
//! images) and rendered static targets (range images) relative to its own
//! directory. Everything is flattened to the normalized vectors the
//! translation model trains on.

use std::path::Path;

use crate::model::{ModelError, PairSample};
use crate::pairing::PairManifest;
use crate::scan::{load_cloud, load_range_image, project, RangeImage, SensorSpec};

/// A manifest's worth of training vectors.
#[derive(Debug, Clone, Default)]
pub struct PairCorpus {
    /// One (dynamic input, static target) vector pair per manifest record.
    pub pairs: Vec<PairSample>,
    /// Target vectors alone (the clean static side).
    pub statics: Vec<Vec<f64>>,
    /// Dynamic vectors alone.
    pub dynamics: Vec<Vec<f64>>,
    /// The target range images, kept for quality-regressor training and
    /// reconstruction baselines.
    pub target_images: Vec<RangeImage>,
}

/// Loads one scan referenced by a manifest: `.rimg` files directly,
/// point-cloud binaries by projecting at `spec`.
pub fn load_scan_as_image(path: &Path, spec: &SensorSpec) -> Result<RangeImage, ModelError> {
    if path.extension().is_some_and(|e| e == "rimg") {
        Ok(load_range_image(path)?.0)
    } else {
        Ok(project(&load_cloud(path)?, spec))
    }
}

/// Resolves every record of `manifest` against `base_dir` (the directory the
/// manifest was loaded from) and returns the flattened corpus.
pub fn load_pair_corpus(
    manifest: &PairManifest,
    base_dir: &Path,
    spec: &SensorSpec,
) -> Result<PairCorpus, ModelError> {
    if manifest.records.is_empty() {
        return Err(ModelError::EmptyData("pair manifest"));
    }
    let mut corpus = PairCorpus::default();
    for rec in &manifest.records {
        let dyn_img = load_scan_as_image(&base_dir.join(&rec.dyn_scan), spec)?;
        let (target, _) = load_range_image(&base_dir.join(&rec.target))?;
        let dynamic = dyn_img.to_vector(0.0);
        let tvec = target.to_vector(0.0);
        corpus.dynamics.push(dynamic.clone());
        corpus.statics.push(tvec.clone());
        corpus.pairs.push(PairSample { dynamic, target: tvec });
        corpus.target_images.push(target);
    }
    Ok(corpus)
}
