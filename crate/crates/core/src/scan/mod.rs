//! Sensor-frame scan types: labeled point clouds, range images, segmentation
//! masks, and the projections between them.
//!
//! Conventions are fixed so files are bit-exact across machines:
//! * azimuth bin 0 starts at angle 0 (+x axis), increasing counter-clockwise;
//! * elevation row 0 holds the maximum elevation;
//! * bins are half-open, a value on a boundary belongs to the bin that starts
//!   there; the closed lower FOV edge folds into the last row;
//! * unoccupied cells carry range 0.0 and normalization divides by
//!   `max_range`.
//!
//! Cell ranges are stored as f32 (the on-disk width) while all math runs in
//! f64. Snapping an f64 recomputation back to f32 is what makes
//! `project(deproject(ri)) == ri` hold bitwise: the recomputation lands
//! within ~1e-15 relative of the stored value, far inside the f32 half-ulp
//! rounding window.

mod io;
mod pose;

pub use io::{
    load_cloud, load_mask_pbm, load_range_image, save_cloud, save_mask_pbm, save_range_image,
};
pub use pose::Pose;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Smallest normalized range an occupied cell may carry after clamping.
/// Keeps the "occupied implies range > 0" invariant when network outputs or
/// noise would otherwise drive a cell to zero.
pub const MIN_OCCUPIED_NORM: f64 = 1e-7;

#[derive(Debug, Error)]
pub enum ScanError {
    #[error("invalid sensor spec: {0}")]
    InvalidSpec(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("invalid row range {start}..{end} for {rows} rows")]
    InvalidRowRange { start: usize, end: usize, rows: usize },
    #[error("quaternion norm {norm} too far from 1")]
    NonUnitQuaternion { norm: f64 },
    #[error("invalid point label {0}; expected 0, 1 or -1")]
    InvalidLabel(f32),
    #[error("noise sigma must be finite and >= 0, got {0}")]
    InvalidSigma(f64),
    #[error("invalid range image: {0}")]
    InvalidImage(String),
    #[error("malformed file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Point class. Dynamic marks movable objects (parked or not), not just
/// currently-moving ones.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Label {
    Static,
    Dynamic,
    Unlabeled,
}

impl Label {
    /// On-disk encoding: 0 static, 1 dynamic, -1 unlabeled.
    pub fn to_f32(self) -> f32 {
        match self {
            Label::Static => 0.0,
            Label::Dynamic => 1.0,
            Label::Unlabeled => -1.0,
        }
    }

    pub fn from_f32(v: f32) -> Result<Self, ScanError> {
        if v == 0.0 {
            Ok(Label::Static)
        } else if v == 1.0 {
            Ok(Label::Dynamic)
        } else if v == -1.0 {
            Ok(Label::Unlabeled)
        } else {
            Err(ScanError::InvalidLabel(v))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
    pub label: Label,
}

impl Point3 {
    pub fn new(x: f64, y: f64, z: f64, label: Label) -> Self {
        Point3 { x, y, z, label }
    }

    pub fn range(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct PointCloud {
    pub points: Vec<Point3>,
}

impl PointCloud {
    pub fn new(points: Vec<Point3>) -> Self {
        PointCloud { points }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Points carrying the given label.
    pub fn filter_label(&self, label: Label) -> PointCloud {
        PointCloud::new(
            self.points
                .iter()
                .copied()
                .filter(|p| p.label == label)
                .collect(),
        )
    }
}

/// Scanner geometry: grid size, elevation field of view (degrees), max range
/// (meters). FOV bounds and max range are f32, matching the file format, so
/// a spec read back from disk equals the one written.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorSpec {
    rows: usize,
    cols: usize,
    fov_min_deg: f32,
    fov_max_deg: f32,
    max_range: f32,
}

impl SensorSpec {
    pub fn new(
        rows: usize,
        cols: usize,
        fov_min_deg: f32,
        fov_max_deg: f32,
        max_range: f32,
    ) -> Result<Self, ScanError> {
        if rows == 0 || cols == 0 {
            return Err(ScanError::InvalidSpec(format!(
                "grid must be non-empty, got {rows}x{cols}"
            )));
        }
        if !fov_min_deg.is_finite() || !fov_max_deg.is_finite() || fov_min_deg >= fov_max_deg {
            return Err(ScanError::InvalidSpec(format!(
                "elevation FOV must satisfy min < max, got [{fov_min_deg}, {fov_max_deg}]"
            )));
        }
        if !max_range.is_finite() || max_range <= 0.0 {
            return Err(ScanError::InvalidSpec(format!(
                "max range must be finite and > 0, got {max_range}"
            )));
        }
        Ok(SensorSpec {
            rows,
            cols,
            fov_min_deg,
            fov_max_deg,
            max_range,
        })
    }

    /// 16x64 grid, [-15, +15] degree FOV, 50 m range.
    pub fn desk_default() -> Self {
        SensorSpec::new(16, 64, -15.0, 15.0, 50.0).expect("desk default is valid")
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn fov_min_deg(&self) -> f32 {
        self.fov_min_deg
    }

    pub fn fov_max_deg(&self) -> f32 {
        self.fov_max_deg
    }

    pub fn max_range(&self) -> f32 {
        self.max_range
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Azimuth bin width, radians.
    pub fn azimuth_step(&self) -> f64 {
        std::f64::consts::TAU / self.cols as f64
    }

    /// Elevation bin height, degrees.
    pub fn elevation_step_deg(&self) -> f64 {
        (self.fov_max_deg as f64 - self.fov_min_deg as f64) / self.rows as f64
    }

    /// Azimuth of column `c`'s bin center, radians.
    pub fn azimuth_center(&self, c: usize) -> f64 {
        (c as f64 + 0.5) * self.azimuth_step()
    }

    /// Elevation of row `r`'s bin center, radians. Row 0 is the top row.
    pub fn elevation_center(&self, r: usize) -> f64 {
        (self.fov_max_deg as f64 - (r as f64 + 0.5) * self.elevation_step_deg()).to_radians()
    }

    /// Unit direction of the cell center `(r, c)` in the sensor frame.
    pub fn cell_direction(&self, r: usize, c: usize) -> [f64; 3] {
        let az = self.azimuth_center(c);
        let el = self.elevation_center(r);
        let (sin_e, cos_e) = el.sin_cos();
        let (sin_a, cos_a) = az.sin_cos();
        [cos_e * cos_a, cos_e * sin_a, sin_e]
    }

    /// Grid cell for a sensor-frame point, or None if outside FOV / range.
    /// Returns (row, col, range_f32).
    fn bin(&self, x: f64, y: f64, z: f64) -> Option<(usize, usize, f32)> {
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return None;
        }
        let range = (x * x + y * y + z * z).sqrt();
        let r32 = range as f32;
        if !(r32 > 0.0) || r32 > self.max_range {
            return None;
        }
        let mut az = y.atan2(x);
        if az < 0.0 {
            az += std::f64::consts::TAU;
        }
        let mut col = (az / self.azimuth_step()) as usize;
        if col >= self.cols {
            // az rounded up to 2*pi; the point sits in the last bin.
            col = self.cols - 1;
        }
        let elev_deg = z.atan2(x.hypot(y)).to_degrees();
        if elev_deg < self.fov_min_deg as f64 || elev_deg > self.fov_max_deg as f64 {
            return None;
        }
        let mut row = ((self.fov_max_deg as f64 - elev_deg) / self.elevation_step_deg()) as usize;
        if row >= self.rows {
            // Exactly at (or rounded past) the closed lower FOV edge.
            row = self.rows - 1;
        }
        Some((row, col, r32))
    }
}

/// Range image: per-cell mean range (f32 meters) plus occupancy.
/// Invariants: occupied cells satisfy 0 < range <= max_range; unoccupied
/// cells carry exactly 0.0. Equality is bitwise on ranges.
#[derive(Debug, Clone)]
pub struct RangeImage {
    spec: SensorSpec,
    ranges: Vec<f32>,
    occupied: Vec<bool>,
}

impl PartialEq for RangeImage {
    fn eq(&self, other: &Self) -> bool {
        self.spec == other.spec
            && self.occupied == other.occupied
            && self.ranges.len() == other.ranges.len()
            && self
                .ranges
                .iter()
                .zip(&other.ranges)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

impl RangeImage {
    pub fn empty(spec: SensorSpec) -> Self {
        RangeImage {
            ranges: vec![0.0; spec.cells()],
            occupied: vec![false; spec.cells()],
            spec,
        }
    }

    /// Builds an image from raw planes, enforcing the cell invariants.
    pub fn from_parts(
        spec: SensorSpec,
        ranges: Vec<f32>,
        occupied: Vec<bool>,
    ) -> Result<Self, ScanError> {
        if ranges.len() != spec.cells() {
            return Err(ScanError::LengthMismatch {
                expected: spec.cells(),
                got: ranges.len(),
            });
        }
        if occupied.len() != spec.cells() {
            return Err(ScanError::LengthMismatch {
                expected: spec.cells(),
                got: occupied.len(),
            });
        }
        for (i, (&r, &occ)) in ranges.iter().zip(&occupied).enumerate() {
            if occ {
                if !(r > 0.0) || r > spec.max_range() || !r.is_finite() {
                    return Err(ScanError::InvalidImage(format!(
                        "occupied cell {i} has range {r}, outside (0, {}]",
                        spec.max_range()
                    )));
                }
            } else if r != 0.0 {
                return Err(ScanError::InvalidImage(format!(
                    "unoccupied cell {i} has nonzero range {r}"
                )));
            }
        }
        Ok(RangeImage {
            spec,
            ranges,
            occupied,
        })
    }

    pub fn spec(&self) -> &SensorSpec {
        &self.spec
    }

    pub fn rows(&self) -> usize {
        self.spec.rows()
    }

    pub fn cols(&self) -> usize {
        self.spec.cols()
    }

    pub fn ranges(&self) -> &[f32] {
        &self.ranges
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupied
    }

    pub fn idx(&self, r: usize, c: usize) -> usize {
        r * self.spec.cols() + c
    }

    pub fn range_at(&self, r: usize, c: usize) -> f32 {
        self.ranges[self.idx(r, c)]
    }

    pub fn is_occupied(&self, r: usize, c: usize) -> bool {
        self.occupied[self.idx(r, c)]
    }

    pub fn occupied_count(&self) -> usize {
        self.occupied.iter().filter(|&&o| o).count()
    }

    /// Flattens into a row-major vector of normalized ranges in [0, 1];
    /// unoccupied cells take `fill`.
    pub fn to_vector(&self, fill: f64) -> Vec<f64> {
        let max = self.spec.max_range() as f64;
        self.ranges
            .iter()
            .zip(&self.occupied)
            .map(|(&r, &occ)| if occ { r as f64 / max } else { fill })
            .collect()
    }

    /// Rebuilds an image from a normalized vector and an occupancy plane.
    /// Values are clamped into [MIN_OCCUPIED_NORM, 1] on occupied cells;
    /// entries at unoccupied cells are ignored.
    pub fn from_vector(
        values: &[f64],
        spec: SensorSpec,
        occupied: &[bool],
    ) -> Result<Self, ScanError> {
        if values.len() != spec.cells() {
            return Err(ScanError::LengthMismatch {
                expected: spec.cells(),
                got: values.len(),
            });
        }
        if occupied.len() != spec.cells() {
            return Err(ScanError::LengthMismatch {
                expected: spec.cells(),
                got: occupied.len(),
            });
        }
        let max = spec.max_range() as f64;
        let ranges = values
            .iter()
            .zip(occupied)
            .map(|(&v, &occ)| {
                if occ {
                    let v = if v.is_finite() { v } else { 0.0 };
                    (v.clamp(MIN_OCCUPIED_NORM, 1.0) * max) as f32
                } else {
                    0.0
                }
            })
            .collect();
        RangeImage::from_parts(spec, ranges, occupied.to_vec())
    }

    /// Keeps rows `rows.start..rows.end`, shrinking the elevation FOV to the
    /// retained bin boundaries.
    pub fn crop_rows(&self, rows: std::ops::Range<usize>) -> Result<Self, ScanError> {
        let spec = crop_spec(&self.spec, &rows)?;
        let w = self.spec.cols();
        let ranges = self.ranges[rows.start * w..rows.end * w].to_vec();
        let occupied = self.occupied[rows.start * w..rows.end * w].to_vec();
        RangeImage::from_parts(spec, ranges, occupied)
    }

    /// Adds zero-mean Gaussian noise (std `sigma`, normalized units) to every
    /// occupied cell, clamping back into (0, 1]. Occupancy is untouched.
    /// Deterministic under `seed`; `sigma == 0` returns a bitwise copy.
    pub fn add_noise(&self, sigma: f64, seed: u64) -> Result<Self, ScanError> {
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(ScanError::InvalidSigma(sigma));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max = self.spec.max_range() as f64;
        let mut ranges = self.ranges.clone();
        for (i, &occ) in self.occupied.iter().enumerate() {
            if !occ {
                continue;
            }
            let g: f64 = rng.sample(rand_distr::StandardNormal);
            let noisy = (self.ranges[i] as f64 / max + sigma * g).clamp(MIN_OCCUPIED_NORM, 1.0);
            ranges[i] = (noisy * max) as f32;
        }
        RangeImage::from_parts(self.spec, ranges, self.occupied.clone())
    }
}

fn crop_spec(spec: &SensorSpec, rows: &std::ops::Range<usize>) -> Result<SensorSpec, ScanError> {
    if rows.start >= rows.end || rows.end > spec.rows() {
        return Err(ScanError::InvalidRowRange {
            start: rows.start,
            end: rows.end,
            rows: spec.rows(),
        });
    }
    let step = spec.elevation_step_deg();
    let new_max = (spec.fov_max_deg() as f64 - rows.start as f64 * step) as f32;
    let new_min = (spec.fov_max_deg() as f64 - rows.end as f64 * step) as f32;
    SensorSpec::new(
        rows.end - rows.start,
        spec.cols(),
        new_min,
        new_max,
        spec.max_range(),
    )
}

/// Per-cell dynamic/static flags; true marks a dynamic cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegMask {
    rows: usize,
    cols: usize,
    cells: Vec<bool>,
}

impl SegMask {
    pub fn new(rows: usize, cols: usize) -> Self {
        SegMask {
            rows,
            cols,
            cells: vec![false; rows * cols],
        }
    }

    pub fn from_cells(rows: usize, cols: usize, cells: Vec<bool>) -> Result<Self, ScanError> {
        if cells.len() != rows * cols {
            return Err(ScanError::LengthMismatch {
                expected: rows * cols,
                got: cells.len(),
            });
        }
        Ok(SegMask { rows, cols, cells })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, dynamic: bool) {
        self.cells[r * self.cols + c] = dynamic;
    }

    pub fn dynamic_count(&self) -> usize {
        self.cells.iter().filter(|&&d| d).count()
    }

    pub fn crop_rows(&self, rows: std::ops::Range<usize>) -> Result<Self, ScanError> {
        if rows.start >= rows.end || rows.end > self.rows {
            return Err(ScanError::InvalidRowRange {
                start: rows.start,
                end: rows.end,
                rows: self.rows,
            });
        }
        SegMask::from_cells(
            rows.end - rows.start,
            self.cols,
            self.cells[rows.start * self.cols..rows.end * self.cols].to_vec(),
        )
    }
}

/// Projects a sensor-frame cloud onto the grid; each occupied cell holds the
/// mean range of its binned points. Points outside the FOV, beyond max
/// range, at the origin, or non-finite are dropped.
pub fn project(cloud: &PointCloud, spec: &SensorSpec) -> RangeImage {
    project_with_mask(cloud, spec).0
}

/// [`project`] that also marks cells receiving at least one dynamic point.
pub fn project_with_mask(cloud: &PointCloud, spec: &SensorSpec) -> (RangeImage, SegMask) {
    let cells = spec.cells();
    let mut sums = vec![0.0f64; cells];
    let mut counts = vec![0u32; cells];
    let mut mask = SegMask::new(spec.rows(), spec.cols());
    for p in &cloud.points {
        if let Some((r, c, r32)) = spec.bin(p.x, p.y, p.z) {
            let i = r * spec.cols() + c;
            sums[i] += r32 as f64;
            counts[i] += 1;
            if p.label == Label::Dynamic {
                mask.set(r, c, true);
            }
        }
    }
    let mut ranges = vec![0.0f32; cells];
    let mut occupied = vec![false; cells];
    for i in 0..cells {
        if counts[i] > 0 {
            let mean = (sums[i] / counts[i] as f64) as f32;
            ranges[i] = mean.min(spec.max_range());
            occupied[i] = true;
        }
    }
    let image = RangeImage::from_parts(*spec, ranges, occupied)
        .expect("projection preserves cell invariants");
    (image, mask)
}

/// Places one unlabeled point per occupied cell at the cell-center direction
/// and the stored range. Empty image yields an empty cloud.
pub fn deproject(image: &RangeImage) -> PointCloud {
    deproject_labeled(image, None)
}

/// [`deproject`] labeling points static/dynamic from a segmentation mask.
pub fn deproject_labeled(image: &RangeImage, mask: Option<&SegMask>) -> PointCloud {
    let spec = image.spec();
    let mut points = Vec::with_capacity(image.occupied_count());
    for r in 0..spec.rows() {
        for c in 0..spec.cols() {
            if !image.is_occupied(r, c) {
                continue;
            }
            let rho = image.range_at(r, c) as f64;
            let dir = spec.cell_direction(r, c);
            let label = match mask {
                Some(m) => {
                    if m.get(r, c) {
                        Label::Dynamic
                    } else {
                        Label::Static
                    }
                }
                None => Label::Unlabeled,
            };
            points.push(Point3::new(rho * dir[0], rho * dir[1], rho * dir[2], label));
        }
    }
    PointCloud::new(points)
}

/// Cell-wise select: dynamic-marked cells come from `static_recon`, the rest
/// from `dynamic_scan`. Range and occupancy move together.
pub fn blend(
    mask: &SegMask,
    static_recon: &RangeImage,
    dynamic_scan: &RangeImage,
) -> Result<RangeImage, ScanError> {
    if static_recon.spec() != dynamic_scan.spec() {
        return Err(ScanError::ShapeMismatch(format!(
            "blend inputs disagree: {:?} vs {:?}",
            static_recon.spec(),
            dynamic_scan.spec()
        )));
    }
    let spec = *static_recon.spec();
    if mask.rows() != spec.rows() || mask.cols() != spec.cols() {
        return Err(ScanError::ShapeMismatch(format!(
            "mask is {}x{}, image is {}x{}",
            mask.rows(),
            mask.cols(),
            spec.rows(),
            spec.cols()
        )));
    }
    let mut ranges = Vec::with_capacity(spec.cells());
    let mut occupied = Vec::with_capacity(spec.cells());
    for i in 0..spec.cells() {
        if mask.cells()[i] {
            ranges.push(static_recon.ranges()[i]);
            occupied.push(static_recon.occupancy()[i]);
        } else {
            ranges.push(dynamic_scan.ranges()[i]);
            occupied.push(dynamic_scan.occupancy()[i]);
        }
    }
    RangeImage::from_parts(spec, ranges, occupied)
}

#[cfg(test)]
mod tests;
