//! Trajectory file handling and error metrics.
//!
//! Trajectories use the plain-text format `timestamp tx ty tz qx qy qz qw`
//! (one pose per line, `#` comments allowed), the de-facto standard for
//! SLAM evaluation. Absolute error is computed after a closed-form rigid
//! alignment, relative error over fixed index deltas, drift without any
//! alignment at all.

use std::path::Path;

use nalgebra::{Matrix3, UnitQuaternion, Vector3};
use thiserror::Error;

use crate::fsutil::atomic_write;
use crate::scan::{Pose, ScanError};

mod metrics;
pub use metrics::{ate, ate_unaligned, drift, rpe, AteResult, RpeResult};

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error("timestamps must increase strictly (pose {index})")]
    NonMonotonic { index: usize },
    #[error("{0}")]
    NotEnoughPoses(String),
}

/// A time-ordered sequence of sensor poses.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    poses: Vec<Pose>,
}

impl Trajectory {
    /// Requires strictly increasing timestamps.
    pub fn new(poses: Vec<Pose>) -> Result<Self, TrajError> {
        for i in 1..poses.len() {
            if !(poses[i].timestamp > poses[i - 1].timestamp) {
                return Err(TrajError::NonMonotonic { index: i });
            }
        }
        Ok(Trajectory { poses })
    }

    pub fn poses(&self) -> &[Pose] {
        &self.poses
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Pose> {
        self.poses.get(i)
    }
}

/// Parses `timestamp tx ty tz qx qy qz qw` lines; `#` starts a comment line.
pub fn parse_tum(text: &str) -> Result<Trajectory, TrajError> {
    let mut poses = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 8 {
            return Err(TrajError::Parse {
                line: idx + 1,
                msg: format!("expected 8 fields, got {}", fields.len()),
            });
        }
        let mut vals = [0.0f64; 8];
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f.parse::<f64>().map_err(|_| TrajError::Parse {
                line: idx + 1,
                msg: format!("bad number {f:?}"),
            })?;
        }
        let pose = Pose::from_xyzw(
            [vals[1], vals[2], vals[3]],
            [vals[4], vals[5], vals[6], vals[7]],
            vals[0],
        )
        .map_err(|e| TrajError::Parse {
            line: idx + 1,
            msg: e.to_string(),
        })?;
        poses.push(pose);
    }
    Trajectory::new(poses)
}

/// Serializes with shortest-round-trip float formatting, so
/// `parse_tum(write_tum(t))` reproduces `t` exactly.
pub fn write_tum(traj: &Trajectory) -> String {
    let mut out = String::from("# timestamp tx ty tz qx qy qz qw\n");
    for p in &traj.poses {
        let t = p.translation;
        let q = p.quat_xyzw();
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {}\n",
            p.timestamp, t.x, t.y, t.z, q[0], q[1], q[2], q[3]
        ));
    }
    out
}

pub fn load_tum(path: &Path) -> Result<Trajectory, TrajError> {
    parse_tum(&std::fs::read_to_string(path)?)
}

pub fn save_tum(path: &Path, traj: &Trajectory) -> Result<(), TrajError> {
    atomic_write(path, write_tum(traj).as_bytes())?;
    Ok(())
}

/// Matches poses across two trajectories by timestamp: candidate pairs within
/// `max_dt` are taken greedily in order of (|dt|, index), each pose used at
/// most once. Returns (index in `a`, index in `b`) pairs sorted by `a` index.
pub fn associate(a: &Trajectory, b: &Trajectory, max_dt: f64) -> Vec<(usize, usize)> {
    let mut candidates = Vec::new();
    for (i, pa) in a.poses.iter().enumerate() {
        for (j, pb) in b.poses.iter().enumerate() {
            let dt = (pa.timestamp - pb.timestamp).abs();
            if dt <= max_dt {
                candidates.push((dt, i, j));
            }
        }
    }
    candidates.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used_a = vec![false; a.len()];
    let mut used_b = vec![false; b.len()];
    let mut pairs = Vec::new();
    for (_, i, j) in candidates {
        if !used_a[i] && !used_b[j] {
            used_a[i] = true;
            used_b[j] = true;
            pairs.push((i, j));
        }
    }
    pairs.sort_unstable();
    pairs
}

/// Closed-form least-squares rigid alignment (rotation + translation, no
/// scale) mapping points `from` onto points `to`.
pub(crate) fn align_rigid(
    from: &[Vector3<f64>],
    to: &[Vector3<f64>],
) -> (UnitQuaternion<f64>, Vector3<f64>) {
    let n = from.len() as f64;
    let c_from: Vector3<f64> = from.iter().sum::<Vector3<f64>>() / n;
    let c_to: Vector3<f64> = to.iter().sum::<Vector3<f64>>() / n;
    let mut h = Matrix3::zeros();
    for (f, t) in from.iter().zip(to) {
        h += (f - c_from) * (t - c_to).transpose();
    }
    let svd = h.svd(true, true);
    let u = svd.u.unwrap();
    let vt = svd.v_t.unwrap();
    let v = vt.transpose();
    let d = (v * u.transpose()).determinant();
    let r = v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d.signum())) * u.transpose();
    let rot = UnitQuaternion::from_matrix(&r);
    let t = c_to - rot * c_from;
    (rot, t)
}
