//! Synthetic indoor LiDAR simulator.
//!
//! A world is a set of vertical wall segments (static), an optional floor
//! plane (static), and axis-aligned boxes that move along piecewise-linear
//! waypoint tracks (dynamic). Scans are rendered by casting one ray per
//! range-image cell from a jittered polyline trajectory; points are emitted
//! in the sensor frame with every component quantized to f32 so in-memory
//! clouds equal their on-disk representation bit for bit.
//!
//! [`generate_paired_runs`] renders the same environment twice — once with
//! the movers removed, once with them active — under independently jittered
//! trajectories, which is exactly the data layout the rest of the pipeline
//! consumes.

use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fsutil::atomic_write;
use crate::rngutil::{rng_for, stream};
use crate::scan::{
    project_with_mask, save_cloud, save_mask_pbm, Label, Point3, PointCloud, Pose, ScanError,
    SensorSpec,
};
use crate::traj::{save_tum, TrajError, Trajectory};

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Scan(#[from] ScanError),
    #[error(transparent)]
    Traj(#[from] TrajError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),
}

/// Rays that start closer than this to a surface pass through it, so a
/// sensor sitting exactly on geometry does not self-intersect.
const RAY_EPS: f64 = 1e-9;

/// A vertical wall: a 2-D segment extruded over a height interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WallSpec {
    pub x1: f64,
    pub y1: f64,
    pub x2: f64,
    pub y2: f64,
    pub z_min: f64,
    pub z_max: f64,
}

/// An axis-aligned box whose center follows `[t, x, y, z]` waypoints
/// piecewise-linearly (clamped outside the time range).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxSpec {
    pub half_extents: [f64; 3],
    pub waypoints: Vec<[f64; 4]>,
}

impl BoxSpec {
    /// Center position at time `t`.
    pub fn center_at(&self, t: f64) -> Vector3<f64> {
        let wp = &self.waypoints;
        let pos = |w: &[f64; 4]| Vector3::new(w[1], w[2], w[3]);
        if t <= wp[0][0] {
            return pos(&wp[0]);
        }
        for pair in wp.windows(2) {
            let (a, b) = (&pair[0], &pair[1]);
            if t <= b[0] {
                let f = (t - a[0]) / (b[0] - a[0]);
                return pos(a) + (pos(b) - pos(a)) * f;
            }
        }
        pos(wp.last().unwrap())
    }
}

/// Sensor geometry as written in config files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensorConfig {
    pub rows: usize,
    pub cols: usize,
    pub fov_min_deg: f32,
    pub fov_max_deg: f32,
    pub max_range: f32,
}

impl SensorConfig {
    pub fn to_spec(&self) -> Result<SensorSpec, ScanError> {
        SensorSpec::new(
            self.rows,
            self.cols,
            self.fov_min_deg,
            self.fov_max_deg,
            self.max_range,
        )
    }
}

fn default_dt() -> f64 {
    0.1
}

/// The sensor's sweep: a 2-D polyline walked at fixed arc-length steps and
/// constant height, with optional per-pose Gaussian jitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PathSpec {
    pub waypoints: Vec<[f64; 2]>,
    pub height: f64,
    /// Spacing between consecutive poses, meters.
    pub step: f64,
    /// Std-dev of planar translation jitter, meters.
    #[serde(default)]
    pub jitter_trans: f64,
    /// Std-dev of yaw jitter, degrees.
    #[serde(default)]
    pub jitter_rot_deg: f64,
    /// Seconds between scans.
    #[serde(default = "default_dt")]
    pub dt: f64,
}

/// Complete description of a paired-run simulation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub sensor: SensorConfig,
    pub path: PathSpec,
    /// Height of an infinite static floor plane; omit for no floor.
    #[serde(default)]
    pub floor_z: Option<f64>,
    #[serde(default, rename = "wall")]
    pub walls: Vec<WallSpec>,
    #[serde(default, rename = "box")]
    pub boxes: Vec<BoxSpec>,
}

pub fn load_sim_config(path: &Path) -> Result<SimConfig, SimError> {
    let text = std::fs::read_to_string(path)?;
    let cfg: SimConfig = toml::from_str(&text)?;
    validate_config(&cfg)?;
    Ok(cfg)
}

fn validate_config(cfg: &SimConfig) -> Result<(), SimError> {
    let bad = |msg: String| Err(SimError::InvalidConfig(msg));
    let p = &cfg.path;
    if p.waypoints.len() < 2 {
        return bad("path needs at least two waypoints".into());
    }
    for pair in p.waypoints.windows(2) {
        let (dx, dy) = (pair[1][0] - pair[0][0], pair[1][1] - pair[0][1]);
        if (dx * dx + dy * dy).sqrt() < 1e-9 {
            return bad("path waypoints must be distinct".into());
        }
    }
    if !(p.step > 0.0 && p.step.is_finite()) {
        return bad(format!("path step must be positive, got {}", p.step));
    }
    if !(p.dt > 0.0 && p.dt.is_finite()) {
        return bad(format!("path dt must be positive, got {}", p.dt));
    }
    if !(p.jitter_trans >= 0.0 && p.jitter_trans.is_finite())
        || !(p.jitter_rot_deg >= 0.0 && p.jitter_rot_deg.is_finite())
    {
        return bad("path jitter must be finite and non-negative".into());
    }
    for (i, w) in cfg.walls.iter().enumerate() {
        let vals = [w.x1, w.y1, w.x2, w.y2, w.z_min, w.z_max];
        if vals.iter().any(|v| !v.is_finite()) {
            return bad(format!("wall {i} has non-finite coordinates"));
        }
        if w.z_min >= w.z_max {
            return bad(format!("wall {i}: z_min must be below z_max"));
        }
        let len = ((w.x2 - w.x1).powi(2) + (w.y2 - w.y1).powi(2)).sqrt();
        if len < 1e-9 {
            return bad(format!("wall {i} has zero length"));
        }
    }
    for (i, b) in cfg.boxes.iter().enumerate() {
        if b.half_extents.iter().any(|&h| !(h > 0.0 && h.is_finite())) {
            return bad(format!("box {i}: half extents must be positive"));
        }
        if b.waypoints.is_empty() {
            return bad(format!("box {i} needs at least one waypoint"));
        }
        for pair in b.waypoints.windows(2) {
            if !(pair[1][0] > pair[0][0]) {
                return bad(format!("box {i}: waypoint times must increase strictly"));
            }
        }
        if b.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return bad(format!("box {i} has non-finite waypoints"));
        }
    }
    cfg.sensor.to_spec()?;
    Ok(())
}

/// Static and dynamic geometry, ready to raycast.
#[derive(Debug, Clone)]
pub struct World {
    walls: Vec<WallSpec>,
    floor_z: Option<f64>,
    boxes: Vec<BoxSpec>,
}

impl World {
    pub fn from_config(cfg: &SimConfig) -> Result<World, SimError> {
        validate_config(cfg)?;
        Ok(World {
            walls: cfg.walls.clone(),
            floor_z: cfg.floor_z,
            boxes: cfg.boxes.clone(),
        })
    }

    /// Casts a ray from `origin` along unit direction `dir` at world time
    /// `time`. Returns the hit distance and whether the hit is a mover.
    /// Static geometry wins exact ties. Hits beyond `max_range` are misses.
    pub fn raycast(
        &self,
        origin: Vector3<f64>,
        dir: Vector3<f64>,
        time: f64,
        max_range: f64,
        include_dynamic: bool,
    ) -> Option<(f64, bool)> {
        let mut best: Option<(f64, bool)> = None;
        let mut consider = |s: f64, dynamic: bool| {
            if s > RAY_EPS && s <= max_range && best.map_or(true, |(b, _)| s < b) {
                best = Some((s, dynamic));
            }
        };
        for w in &self.walls {
            if let Some(s) = ray_wall(origin, dir, w) {
                consider(s, false);
            }
        }
        if let Some(z) = self.floor_z {
            if dir.z < -1e-12 {
                consider((z - origin.z) / dir.z, false);
            }
        }
        if include_dynamic {
            for b in &self.boxes {
                if let Some(s) = ray_box(origin, dir, b, time) {
                    consider(s, true);
                }
            }
        }
        best
    }
}

/// 2-D ray/segment intersection lifted to the wall's height interval.
/// `dir` is the unit 3-D ray direction, so the returned parameter is the
/// 3-D hit distance.
fn ray_wall(origin: Vector3<f64>, dir: Vector3<f64>, w: &WallSpec) -> Option<f64> {
    let ex = w.x2 - w.x1;
    let ey = w.y2 - w.y1;
    let denom = dir.x * ey - dir.y * ex;
    if denom.abs() < 1e-12 {
        return None;
    }
    let fx = w.x1 - origin.x;
    let fy = w.y1 - origin.y;
    let s = (fx * ey - fy * ex) / denom;
    let u = (fx * dir.y - fy * dir.x) / denom;
    if s <= RAY_EPS || !(0.0..=1.0).contains(&u) {
        return None;
    }
    let z = origin.z + s * dir.z;
    if z < w.z_min || z > w.z_max {
        return None;
    }
    Some(s)
}

/// Slab-method intersection with the box at its time-`t` position.
fn ray_box(origin: Vector3<f64>, dir: Vector3<f64>, b: &BoxSpec, t: f64) -> Option<f64> {
    let c = b.center_at(t);
    let mut tmin = f64::NEG_INFINITY;
    let mut tmax = f64::INFINITY;
    for axis in 0..3 {
        let o = origin[axis];
        let d = dir[axis];
        let lo = c[axis] - b.half_extents[axis];
        let hi = c[axis] + b.half_extents[axis];
        if d.abs() < 1e-12 {
            if o < lo || o > hi {
                return None;
            }
        } else {
            let (mut t0, mut t1) = ((lo - o) / d, (hi - o) / d);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            tmin = tmin.max(t0);
            tmax = tmax.min(t1);
            if tmin > tmax {
                return None;
            }
        }
    }
    (tmin > RAY_EPS).then_some(tmin)
}

/// Poses spaced `step` meters along the polyline, yaw along the local
/// direction of travel, timestamps `i * dt`. Jitter draws come from a
/// dedicated stream keyed by `(seed, run_index)`, so the static and dynamic
/// runs of one simulation get different but reproducible noise.
pub fn path_poses(path: &PathSpec, seed: u64, run_index: u64) -> Result<Vec<Pose>, SimError> {
    let pts: Vec<Vector3<f64>> = path
        .waypoints
        .iter()
        .map(|w| Vector3::new(w[0], w[1], path.height))
        .collect();
    let seg_lens: Vec<f64> = pts
        .windows(2)
        .map(|p| (p[1] - p[0]).xy().norm())
        .collect();
    let total: f64 = seg_lens.iter().sum();
    let mut rng = rng_for(seed, stream::PATH_JITTER, run_index);
    let mut normal = move || -> f64 { rng.sample(rand_distr::StandardNormal) };
    let mut poses = Vec::new();
    let count = (total / path.step).floor() as usize + 1;
    for i in 0..count {
        let d = i as f64 * path.step;
        // Locate the segment containing arc length d.
        let mut acc = 0.0;
        let mut seg = seg_lens.len() - 1;
        let mut local = seg_lens[seg];
        for (k, &len) in seg_lens.iter().enumerate() {
            if d <= acc + len {
                seg = k;
                local = d - acc;
                break;
            }
            acc += len;
        }
        let dirv = (pts[seg + 1] - pts[seg]) / seg_lens[seg];
        let mut pos = pts[seg] + dirv * local;
        let mut yaw = dirv.y.atan2(dirv.x);
        if path.jitter_trans > 0.0 {
            pos.x += path.jitter_trans * normal();
            pos.y += path.jitter_trans * normal();
        }
        if path.jitter_rot_deg > 0.0 {
            yaw += path.jitter_rot_deg.to_radians() * normal();
        }
        poses.push(Pose {
            rotation: nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, yaw),
            translation: pos,
            timestamp: i as f64 * path.dt,
        });
    }
    Ok(poses)
}

/// Renders one scan: a ray per range-image cell, hit points emitted in the
/// sensor frame with f32-quantized components. With `include_dynamic` the
/// movers participate (and their hits are labeled dynamic); without it only
/// static geometry exists.
pub fn render_scan(
    world: &World,
    spec: &SensorSpec,
    pose: &Pose,
    time: f64,
    include_dynamic: bool,
) -> PointCloud {
    let origin = pose.translation;
    let mut points = Vec::new();
    for r in 0..spec.rows() {
        for c in 0..spec.cols() {
            let d = spec.cell_direction(r, c);
            let dir_sensor = Vector3::new(d[0], d[1], d[2]);
            let dir_world = pose.rotation * dir_sensor;
            if let Some((s, dynamic)) =
                world.raycast(origin, dir_world, time, spec.max_range() as f64, include_dynamic)
            {
                // p_world = origin + s * R * dir, so the sensor-frame point is
                // exactly s * dir without ever applying the inverse pose.
                let p = dir_sensor * s;
                points.push(Point3::new(
                    p.x as f32 as f64,
                    p.y as f32 as f64,
                    p.z as f32 as f64,
                    if dynamic { Label::Dynamic } else { Label::Static },
                ));
            }
        }
    }
    PointCloud::new(points)
}

/// Where a generated run lives and how big it is.
#[derive(Debug, Clone)]
pub struct SimSummary {
    pub scans_per_run: usize,
    pub static_dir: PathBuf,
    pub dynamic_dir: PathBuf,
}

/// Renders the static and dynamic runs of `cfg` under `out_dir/static` and
/// `out_dir/dynamic`. Each run holds `scan_NNNNNN.bin` clouds and a
/// `trajectory.txt`; the dynamic run adds `mask_NNNNNN.pbm` ground-truth
/// segmentation masks derived from the hit labels.
pub fn generate_paired_runs(cfg: &SimConfig, out_dir: &Path) -> Result<SimSummary, SimError> {
    validate_config(cfg)?;
    let spec = cfg.sensor.to_spec()?;
    let world = World::from_config(cfg)?;
    let mut summary = SimSummary {
        scans_per_run: 0,
        static_dir: out_dir.join("static"),
        dynamic_dir: out_dir.join("dynamic"),
    };
    for (run_index, name, dynamic) in [(0u64, "static", false), (1u64, "dynamic", true)] {
        let dir = out_dir.join(name);
        let poses = path_poses(&cfg.path, cfg.seed, run_index)?;
        summary.scans_per_run = poses.len();
        for (i, pose) in poses.iter().enumerate() {
            let cloud = render_scan(&world, &spec, pose, pose.timestamp, dynamic);
            save_cloud(&dir.join(format!("scan_{i:06}.bin")), &cloud)?;
            if dynamic {
                let (_, mask) = project_with_mask(&cloud, &spec);
                save_mask_pbm(&dir.join(format!("mask_{i:06}.pbm")), &mask)?;
            }
        }
        save_tum(&dir.join("trajectory.txt"), &Trajectory::new(poses.clone())?)?;
        let provenance = format!(
            "generator=dslr-core {}\nseed={}\nrun={}\nscans={}\nrows={}\ncols={}\n",
            env!("CARGO_PKG_VERSION"),
            cfg.seed,
            name,
            poses.len(),
            spec.rows(),
            spec.cols(),
        );
        atomic_write(&dir.join("provenance.txt"), provenance.as_bytes())?;
    }
    Ok(summary)
}

/// A ready-to-run indoor scene: a 40 x 24 m room with interior partitions,
/// a pillar, a floor, and three movers crossing the sensor's sweep.
pub fn desk_sim_config(seed: u64) -> SimConfig {
    let wall = |x1: f64, y1: f64, x2: f64, y2: f64| WallSpec {
        x1,
        y1,
        x2,
        y2,
        z_min: 0.0,
        z_max: 4.0,
    };
    SimConfig {
        seed,
        sensor: SensorConfig {
            rows: 16,
            cols: 64,
            fov_min_deg: -15.0,
            fov_max_deg: 15.0,
            max_range: 50.0,
        },
        path: PathSpec {
            waypoints: vec![[4.0, 4.0], [36.0, 4.0], [36.0, 20.0], [4.0, 20.0]],
            height: 1.5,
            step: 0.5,
            jitter_trans: 0.08,
            jitter_rot_deg: 1.5,
            dt: 0.1,
        },
        floor_z: Some(0.0),
        walls: vec![
            wall(0.0, 0.0, 40.0, 0.0),
            wall(40.0, 0.0, 40.0, 24.0),
            wall(40.0, 24.0, 0.0, 24.0),
            wall(0.0, 24.0, 0.0, 0.0),
            wall(10.0, 0.0, 10.0, 14.0),
            wall(28.0, 10.0, 28.0, 24.0),
            wall(18.0, 8.0, 20.0, 8.0),
            wall(20.0, 8.0, 20.0, 10.0),
            wall(20.0, 10.0, 18.0, 10.0),
            wall(18.0, 10.0, 18.0, 8.0),
        ],
        boxes: vec![
            BoxSpec {
                half_extents: [0.5, 0.4, 1.0],
                waypoints: vec![[0.0, 8.0, 8.0, 1.0], [8.0, 30.0, 12.0, 1.0], [16.0, 30.0, 20.0, 1.0]],
            },
            BoxSpec {
                half_extents: [0.4, 0.4, 0.9],
                waypoints: vec![[0.0, 32.0, 16.0, 0.9], [16.0, 12.0, 16.0, 0.9]],
            },
            BoxSpec {
                half_extents: [0.3, 0.5, 1.1],
                waypoints: vec![[0.0, 22.0, 4.0, 1.1], [6.0, 22.0, 12.0, 1.1], [16.0, 6.0, 12.0, 1.1]],
            },
        ],
    }
}

#[cfg(test)]
mod tests;
