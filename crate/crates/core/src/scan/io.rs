//! Binary codecs for scans: point-cloud `.bin`, range-image `.rimg`, and
//! PBM (P4) segmentation masks. All multi-byte values are little-endian.
//!
//! `.bin` is a flat sequence of f32 quadruples (x, y, z, label), readable as
//! KITTI velodyne data when the label field is treated as intensity.
//!
//! `.rimg` layout: magic "RIMG", u32 version, u32 rows, u32 cols,
//! f32 fov_min_deg, f32 fov_max_deg, f32 max_range, rows*cols f32 ranges
//! (row-major), rows*cols u8 occupancy, then optionally rows*cols u8 of
//! dynamic-cell flags.

use std::path::Path;

use super::{Label, Point3, PointCloud, RangeImage, ScanError, SegMask, SensorSpec};
use crate::fsutil::atomic_write;

const RIMG_MAGIC: &[u8; 4] = b"RIMG";
const RIMG_VERSION: u32 = 1;

pub fn save_cloud(path: &Path, cloud: &PointCloud) -> Result<(), ScanError> {
    let mut bytes = Vec::with_capacity(cloud.len() * 16);
    for p in &cloud.points {
        bytes.extend_from_slice(&(p.x as f32).to_le_bytes());
        bytes.extend_from_slice(&(p.y as f32).to_le_bytes());
        bytes.extend_from_slice(&(p.z as f32).to_le_bytes());
        bytes.extend_from_slice(&p.label.to_f32().to_le_bytes());
    }
    atomic_write(path, &bytes)?;
    Ok(())
}

pub fn load_cloud(path: &Path) -> Result<PointCloud, ScanError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() % 16 != 0 {
        return Err(ScanError::Format(format!(
            "{}: length {} is not a multiple of 16",
            path.display(),
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for quad in bytes.chunks_exact(16) {
        let x = f32::from_le_bytes(quad[0..4].try_into().unwrap());
        let y = f32::from_le_bytes(quad[4..8].try_into().unwrap());
        let z = f32::from_le_bytes(quad[8..12].try_into().unwrap());
        let l = f32::from_le_bytes(quad[12..16].try_into().unwrap());
        if !(x.is_finite() && y.is_finite() && z.is_finite()) {
            return Err(ScanError::Format(format!(
                "{}: non-finite coordinate in point {}",
                path.display(),
                points.len()
            )));
        }
        points.push(Point3::new(
            x as f64,
            y as f64,
            z as f64,
            Label::from_f32(l)?,
        ));
    }
    Ok(PointCloud::new(points))
}

pub fn save_range_image(
    path: &Path,
    image: &RangeImage,
    mask: Option<&SegMask>,
) -> Result<(), ScanError> {
    if let Some(m) = mask {
        if m.rows() != image.rows() || m.cols() != image.cols() {
            return Err(ScanError::ShapeMismatch(format!(
                "mask is {}x{}, image is {}x{}",
                m.rows(),
                m.cols(),
                image.rows(),
                image.cols()
            )));
        }
    }
    let spec = image.spec();
    let mut bytes = Vec::with_capacity(24 + spec.cells() * 6);
    bytes.extend_from_slice(RIMG_MAGIC);
    bytes.extend_from_slice(&RIMG_VERSION.to_le_bytes());
    bytes.extend_from_slice(&(spec.rows() as u32).to_le_bytes());
    bytes.extend_from_slice(&(spec.cols() as u32).to_le_bytes());
    bytes.extend_from_slice(&spec.fov_min_deg().to_le_bytes());
    bytes.extend_from_slice(&spec.fov_max_deg().to_le_bytes());
    bytes.extend_from_slice(&spec.max_range().to_le_bytes());
    for &r in image.ranges() {
        bytes.extend_from_slice(&r.to_le_bytes());
    }
    for &occ in image.occupancy() {
        bytes.push(occ as u8);
    }
    if let Some(m) = mask {
        for &d in m.cells() {
            bytes.push(d as u8);
        }
    }
    atomic_write(path, &bytes)?;
    Ok(())
}

pub fn load_range_image(path: &Path) -> Result<(RangeImage, Option<SegMask>), ScanError> {
    let bytes = std::fs::read(path)?;
    let fail = |msg: &str| ScanError::Format(format!("{}: {msg}", path.display()));
    if bytes.len() < 28 {
        return Err(fail("truncated header"));
    }
    if &bytes[0..4] != RIMG_MAGIC {
        return Err(fail("bad magic"));
    }
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u32_at(4);
    if version != RIMG_VERSION {
        return Err(fail(&format!("unsupported version {version}")));
    }
    let rows = u32_at(8) as usize;
    let cols = u32_at(12) as usize;
    let spec = SensorSpec::new(rows, cols, f32_at(16), f32_at(20), f32_at(24))?;
    let cells = spec.cells();
    let ranges_off = 28;
    let occ_off = ranges_off + cells * 4;
    let mask_off = occ_off + cells;
    if bytes.len() != mask_off && bytes.len() != mask_off + cells {
        return Err(fail(&format!(
            "expected {} or {} bytes, got {}",
            mask_off,
            mask_off + cells,
            bytes.len()
        )));
    }
    let mut ranges = Vec::with_capacity(cells);
    for i in 0..cells {
        ranges.push(f32_at(ranges_off + i * 4));
    }
    let mut occupied = Vec::with_capacity(cells);
    for i in 0..cells {
        match bytes[occ_off + i] {
            0 => occupied.push(false),
            1 => occupied.push(true),
            v => return Err(fail(&format!("occupancy byte {v} at cell {i}"))),
        }
    }
    let image = RangeImage::from_parts(spec, ranges, occupied)?;
    let mask = if bytes.len() == mask_off + cells {
        let mut cells_v = Vec::with_capacity(cells);
        for i in 0..cells {
            match bytes[mask_off + i] {
                0 => cells_v.push(false),
                1 => cells_v.push(true),
                v => return Err(fail(&format!("mask byte {v} at cell {i}"))),
            }
        }
        Some(SegMask::from_cells(rows, cols, cells_v)?)
    } else {
        None
    };
    Ok((image, mask))
}

/// Binary PBM (P4); a set bit (black) marks a dynamic cell.
pub fn save_mask_pbm(path: &Path, mask: &SegMask) -> Result<(), ScanError> {
    let mut bytes = format!("P4\n{} {}\n", mask.cols(), mask.rows()).into_bytes();
    let row_bytes = mask.cols().div_ceil(8);
    for r in 0..mask.rows() {
        let mut row = vec![0u8; row_bytes];
        for c in 0..mask.cols() {
            if mask.get(r, c) {
                row[c / 8] |= 0x80 >> (c % 8);
            }
        }
        bytes.extend_from_slice(&row);
    }
    atomic_write(path, &bytes)?;
    Ok(())
}

pub fn load_mask_pbm(path: &Path) -> Result<SegMask, ScanError> {
    let bytes = std::fs::read(path)?;
    let fail = |msg: &str| ScanError::Format(format!("{}: {msg}", path.display()));
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String, ScanError> {
        // Skip whitespace and '#' comments, then take one token.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(ScanError::Format("unexpected end of PBM header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    if token(&bytes)? != "P4" {
        return Err(fail("not a binary PBM (P4)"));
    }
    let cols: usize = token(&bytes)?.parse().map_err(|_| fail("bad width"))?;
    let rows: usize = token(&bytes)?.parse().map_err(|_| fail("bad height"))?;
    if cols == 0 || rows == 0 {
        return Err(fail("empty mask"));
    }
    pos += 1; // single whitespace byte after the header
    let row_bytes = cols.div_ceil(8);
    if bytes.len() < pos + rows * row_bytes {
        return Err(fail("truncated pixel data"));
    }
    let mut cells = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        let row = &bytes[pos + r * row_bytes..pos + (r + 1) * row_bytes];
        for c in 0..cols {
            cells.push(row[c / 8] & (0x80 >> (c % 8)) != 0);
        }
    }
    SegMask::from_cells(rows, cols, cells)
}
