//! Cross-run scan pairing.
//!
//! Given one run recorded with movers present (the "dynamic" run) and one
//! recorded without them (the "static" run), every dynamic scan is matched
//! with static scans captured from nearly the same viewpoint. Each matched
//! static scan is carried into the dynamic scan's sensor frame via the
//! relative pose and reprojected there, producing a supervision target that
//! shows the same viewpoint without the movers.
//!
//! The resulting corpus is a directory of target range images plus a
//! `pairs.tsv` manifest with paths stored relative to the manifest, so the
//! corpus can be moved or archived as a unit.

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fsutil::{atomic_write, relative_path};
use crate::rngutil::{rng_for, stream};
use crate::scan::{
    blend, load_cloud, load_mask_pbm, project, save_range_image, Pose, ScanError, SensorSpec,
};
use crate::traj::{load_tum, TrajError};

#[derive(Debug, Error)]
pub enum PairError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error("manifest line {line}: {msg}")]
    Manifest { line: usize, msg: String },
    #[error("invalid split: {0}")]
    InvalidSplit(String),
    #[error("{0}")]
    Empty(String),
}

/// How many static matches each dynamic scan may take.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairMode {
    /// Every static pose within both thresholds.
    AllMatches,
    /// Only the static pose with the smallest translation offset
    /// (ties broken toward the lower static index).
    NearestOnly,
}

#[derive(Debug, Clone, Copy)]
pub struct PairThresholds {
    /// Strict upper bound on translation offset, meters.
    pub delta_trans: f64,
    /// Strict upper bound on rotation offset, degrees.
    pub delta_rot_deg: f64,
    pub mode: PairMode,
}

impl Default for PairThresholds {
    fn default() -> Self {
        PairThresholds {
            delta_trans: 0.5,
            delta_rot_deg: 5.0,
            mode: PairMode::AllMatches,
        }
    }
}

/// One accepted (dynamic, static) viewpoint match.
#[derive(Debug, Clone, Copy)]
pub struct PoseMatch {
    pub dyn_index: usize,
    pub stat_index: usize,
    /// Maps points from the static scan's sensor frame into the dynamic
    /// scan's sensor frame.
    pub relative: Pose,
    pub delta_trans: f64,
    pub delta_rot_deg: f64,
}

/// Matches dynamic poses against static poses under strict thresholds.
/// Output is ordered by (dynamic index, static index).
pub fn match_poses(
    dyn_poses: &[Pose],
    stat_poses: &[Pose],
    th: &PairThresholds,
) -> Vec<PoseMatch> {
    let mut out = Vec::new();
    for (i, pd) in dyn_poses.iter().enumerate() {
        let mut best: Option<PoseMatch> = None;
        for (j, ps) in stat_poses.iter().enumerate() {
            let dt = pd.translation_distance_to(ps);
            let dr = pd.rotation_angle_to(ps).to_degrees();
            if dt < th.delta_trans && dr < th.delta_rot_deg {
                let m = PoseMatch {
                    dyn_index: i,
                    stat_index: j,
                    relative: pd.relative(ps),
                    delta_trans: dt,
                    delta_rot_deg: dr,
                };
                match th.mode {
                    PairMode::AllMatches => out.push(m),
                    PairMode::NearestOnly => {
                        if best.as_ref().map_or(true, |b| dt < b.delta_trans) {
                            best = Some(m);
                        }
                    }
                }
            }
        }
        if let Some(b) = best {
            out.push(b);
        }
    }
    out
}

/// One manifest row: where the input scan, its ground-truth mask (if any),
/// and the rendered target live, plus the match geometry.
#[derive(Debug, Clone, PartialEq)]
pub struct PairRecord {
    pub pair_id: usize,
    pub dyn_index: usize,
    pub stat_index: usize,
    /// Paths relative to the manifest's directory.
    pub dyn_scan: String,
    pub dyn_mask: Option<String>,
    pub target: String,
    pub delta_trans: f64,
    pub delta_rot_deg: f64,
    pub t_dyn: f64,
    pub t_stat: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairManifest {
    pub records: Vec<PairRecord>,
}

const MANIFEST_HEADER: &str =
    "# pair_id\tdyn_index\tstat_index\tdyn_scan\tdyn_mask\ttarget\tdelta_trans\tdelta_rot_deg\tt_dyn\tt_stat";

impl PairManifest {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from(MANIFEST_HEADER);
        out.push('\n');
        for r in &self.records {
            out.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\n",
                r.pair_id,
                r.dyn_index,
                r.stat_index,
                r.dyn_scan,
                r.dyn_mask.as_deref().unwrap_or("-"),
                r.target,
                r.delta_trans,
                r.delta_rot_deg,
                r.t_dyn,
                r.t_stat
            ));
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, PairError> {
        let mut records = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim_end();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 10 {
                return Err(PairError::Manifest {
                    line: idx + 1,
                    msg: format!("expected 10 fields, got {}", f.len()),
                });
            }
            let err = |msg: String| PairError::Manifest { line: idx + 1, msg };
            let int = |s: &str| {
                s.parse::<usize>()
                    .map_err(|_| err(format!("bad integer {s:?}")))
            };
            let num = |s: &str| {
                s.parse::<f64>()
                    .map_err(|_| err(format!("bad number {s:?}")))
            };
            records.push(PairRecord {
                pair_id: int(f[0])?,
                dyn_index: int(f[1])?,
                stat_index: int(f[2])?,
                dyn_scan: f[3].to_string(),
                dyn_mask: (f[4] != "-").then(|| f[4].to_string()),
                target: f[5].to_string(),
                delta_trans: num(f[6])?,
                delta_rot_deg: num(f[7])?,
                t_dyn: num(f[8])?,
                t_stat: num(f[9])?,
            });
        }
        Ok(PairManifest { records })
    }

    pub fn save(&self, path: &Path) -> Result<(), PairError> {
        atomic_write(path, self.to_tsv().as_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, PairError> {
        Self::from_tsv(&std::fs::read_to_string(path)?)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct PairingOptions {
    pub thresholds: PairThresholds,
    /// With ground-truth masks available, replace each target's mover cells
    /// with the transformed static content and keep the dynamic scan's own
    /// cells elsewhere, tightening the supervision signal.
    pub refine_with_masks: bool,
}

/// Builds a paired-training corpus from two recorded runs.
///
/// Reads `trajectory.txt` and `scan_NNNNNN.bin` from both run directories,
/// matches viewpoints, reprojects each matched static scan into its dynamic
/// partner's frame, and writes `pair_NNNNNN.rimg` targets plus `pairs.tsv`
/// under `out_dir`.
pub fn pair_runs(
    static_dir: &Path,
    dynamic_dir: &Path,
    out_dir: &Path,
    spec: &SensorSpec,
    opts: &PairingOptions,
) -> Result<PairManifest, PairError> {
    let stat_traj = load_tum(&static_dir.join("trajectory.txt"))?;
    let dyn_traj = load_tum(&dynamic_dir.join("trajectory.txt"))?;
    let matches = match_poses(dyn_traj.poses(), stat_traj.poses(), &opts.thresholds);
    if matches.is_empty() {
        return Err(PairError::Empty(
            "no viewpoint matches under the given thresholds".into(),
        ));
    }
    std::fs::create_dir_all(out_dir)?;
    let mut manifest = PairManifest::default();
    for (pair_id, m) in matches.iter().enumerate() {
        let stat_cloud = load_cloud(&static_dir.join(format!("scan_{:06}.bin", m.stat_index)))?;
        let moved = m.relative.transform_cloud(&stat_cloud);
        let mut target = project(&moved, spec);
        let dyn_scan_path = dynamic_dir.join(format!("scan_{:06}.bin", m.dyn_index));
        let mask_path = dynamic_dir.join(format!("mask_{:06}.pbm", m.dyn_index));
        let have_mask = mask_path.is_file();
        if opts.refine_with_masks && have_mask {
            let mask = load_mask_pbm(&mask_path)?;
            let dyn_ri = project(&load_cloud(&dyn_scan_path)?, spec);
            target = blend(&mask, &target, &dyn_ri)?;
        }
        let target_name = format!("pair_{pair_id:06}.rimg");
        save_range_image(&out_dir.join(&target_name), &target, None)?;
        manifest.records.push(PairRecord {
            pair_id,
            dyn_index: m.dyn_index,
            stat_index: m.stat_index,
            dyn_scan: path_str(&relative_path(out_dir, &dyn_scan_path)),
            dyn_mask: have_mask.then(|| path_str(&relative_path(out_dir, &mask_path))),
            target: target_name,
            delta_trans: m.delta_trans,
            delta_rot_deg: m.delta_rot_deg,
            t_dyn: dyn_traj.poses()[m.dyn_index].timestamp,
            t_stat: stat_traj.poses()[m.stat_index].timestamp,
        });
    }
    manifest.save(&out_dir.join("pairs.tsv"))?;
    let summary = format!(
        "generator=dslr-core {}\npairs={}\nmode={:?}\ndelta_trans={}\ndelta_rot_deg={}\nrefined={}\n",
        env!("CARGO_PKG_VERSION"),
        manifest.records.len(),
        opts.thresholds.mode,
        opts.thresholds.delta_trans,
        opts.thresholds.delta_rot_deg,
        opts.refine_with_masks,
    );
    atomic_write(&out_dir.join("pairing_summary.txt"), summary.as_bytes())?;
    Ok(manifest)
}

fn path_str(p: &PathBuf) -> String {
    p.to_string_lossy().into_owned()
}

/// Splits a manifest into train/val/test by unique dynamic scan, so no
/// dynamic scan contributes pairs to two splits. The shuffle is seeded and
/// ratios must sum to 1.
pub fn split_manifest(
    manifest: &PairManifest,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(PairManifest, PairManifest, PairManifest), PairError> {
    let (r_train, r_val, r_test) = ratios;
    for r in [r_train, r_val, r_test] {
        if !(0.0..=1.0).contains(&r) {
            return Err(PairError::InvalidSplit(format!("ratio {r} outside [0, 1]")));
        }
    }
    if (r_train + r_val + r_test - 1.0).abs() > 1e-9 {
        return Err(PairError::InvalidSplit(format!(
            "ratios sum to {}, expected 1",
            r_train + r_val + r_test
        )));
    }
    let mut ids: Vec<usize> = manifest.records.iter().map(|r| r.dyn_index).collect();
    ids.sort_unstable();
    ids.dedup();
    let mut rng = rng_for(seed, stream::SPLIT, 0);
    crate::rngutil::shuffle(&mut ids, &mut rng);
    let n = ids.len();
    let n_train = ((n as f64) * r_train).round() as usize;
    let n_val = (((n as f64) * r_val).round() as usize).min(n - n_train.min(n));
    let cut1 = n_train.min(n);
    let cut2 = (cut1 + n_val).min(n);
    let in_set = |slice: &[usize], id: usize| slice.contains(&id);
    let pick = |slice: &[usize]| PairManifest {
        records: manifest
            .records
            .iter()
            .filter(|r| in_set(slice, r.dyn_index))
            .cloned()
            .collect(),
    };
    Ok((pick(&ids[..cut1]), pick(&ids[cut1..cut2]), pick(&ids[cut2..])))
}
