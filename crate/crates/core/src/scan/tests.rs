use super::*;
use approx::assert_relative_eq;
use proptest::prelude::*;

fn spec(rows: usize, cols: usize, fov: (f32, f32), max: f32) -> SensorSpec {
    SensorSpec::new(rows, cols, fov.0, fov.1, max).unwrap()
}

#[test]
fn sensor_spec_validation() {
    assert!(SensorSpec::new(0, 4, -1.0, 1.0, 10.0).is_err());
    assert!(SensorSpec::new(4, 0, -1.0, 1.0, 10.0).is_err());
    assert!(SensorSpec::new(4, 4, 1.0, 1.0, 10.0).is_err());
    assert!(SensorSpec::new(4, 4, 2.0, -2.0, 10.0).is_err());
    assert!(SensorSpec::new(4, 4, -1.0, 1.0, 0.0).is_err());
    assert!(SensorSpec::new(4, 4, -1.0, 1.0, f32::NAN).is_err());
}

#[test]
fn unit_point_on_x_axis_lands_in_cell_zero_zero() {
    // Azimuth 0 is the start of bin 0; elevation 0 sits in the single row.
    let s = spec(1, 4, (-1.0, 1.0), 10.0);
    let cloud = PointCloud::new(vec![Point3::new(1.0, 0.0, 0.0, Label::Static)]);
    let ri = project(&cloud, &s);
    assert!(ri.is_occupied(0, 0));
    assert_eq!(ri.range_at(0, 0), 1.0);
    assert_eq!(ri.occupied_count(), 1);
}

#[test]
fn azimuth_boundary_goes_to_the_bin_starting_there() {
    // (0, 1, 0) has azimuth exactly 90 degrees = start of bin 1 of 4.
    let s = spec(1, 4, (-1.0, 1.0), 10.0);
    let cloud = PointCloud::new(vec![Point3::new(0.0, 1.0, 0.0, Label::Static)]);
    let ri = project(&cloud, &s);
    assert!(ri.is_occupied(0, 1));
    assert_eq!(ri.occupied_count(), 1);
}

#[test]
fn elevation_rows_run_top_down_and_fov_edges_are_closed() {
    let s = spec(4, 4, (-20.0, 20.0), 100.0);
    let top = (20f64).to_radians().tan(); // elevation exactly +20 deg
    let bottom = (-20f64).to_radians().tan();
    let cloud = PointCloud::new(vec![
        Point3::new(1.0, 0.0, top, Label::Static),
        Point3::new(1.0, 0.0, bottom, Label::Static),
        Point3::new(1.0, 0.0, (21f64).to_radians().tan(), Label::Static),
    ]);
    let ri = project(&cloud, &s);
    assert!(ri.is_occupied(0, 0), "max elevation maps to row 0");
    assert!(ri.is_occupied(3, 0), "min elevation folds into the last row");
    assert_eq!(ri.occupied_count(), 2, "outside-FOV point is dropped");
}

#[test]
fn cell_holds_mean_range_of_binned_points() {
    let s = spec(1, 4, (-1.0, 1.0), 10.0);
    // Same direction, ranges 2 and 4: mean exactly 3.
    let cloud = PointCloud::new(vec![
        Point3::new(2.0, 0.0, 0.0, Label::Static),
        Point3::new(4.0, 0.0, 0.0, Label::Static),
    ]);
    let ri = project(&cloud, &s);
    assert_eq!(ri.range_at(0, 0), 3.0);
}

#[test]
fn out_of_range_and_origin_points_are_dropped() {
    let s = spec(1, 4, (-1.0, 1.0), 10.0);
    let cloud = PointCloud::new(vec![
        Point3::new(11.0, 0.0, 0.0, Label::Static),
        Point3::new(0.0, 0.0, 0.0, Label::Static),
        Point3::new(f64::NAN, 0.0, 0.0, Label::Static),
    ]);
    let ri = project(&cloud, &s);
    assert_eq!(ri.occupied_count(), 0);
    // Exactly max_range is kept.
    let cloud = PointCloud::new(vec![Point3::new(10.0, 0.0, 0.0, Label::Static)]);
    assert_eq!(project(&cloud, &s).occupied_count(), 1);
}

#[test]
fn deproject_places_point_at_bin_center() {
    // Cell (0, 0) of a 1x4 grid: azimuth center 45 deg, elevation center 0.
    let s = spec(1, 4, (-1.0, 1.0), 10.0);
    let ri = RangeImage::from_vector(&[0.2, 0.0, 0.0, 0.0], s, &[true, false, false, false])
        .unwrap();
    let cloud = deproject(&ri);
    assert_eq!(cloud.len(), 1);
    let p = cloud.points[0];
    let rho = ri.range_at(0, 0) as f64;
    assert_relative_eq!(p.x, rho * (0.5f64).sqrt(), epsilon = 1e-12);
    assert_relative_eq!(p.y, rho * (0.5f64).sqrt(), epsilon = 1e-12);
    assert_relative_eq!(p.z, 0.0, epsilon = 1e-12);
    assert_eq!(p.label, Label::Unlabeled);
}

#[test]
fn projection_marks_dynamic_cells_from_labels() {
    let s = spec(1, 4, (-1.0, 1.0), 10.0);
    let cloud = PointCloud::new(vec![
        Point3::new(1.0, 0.0, 0.0, Label::Static),
        Point3::new(1.1, 0.02, 0.0, Label::Dynamic), // same cell
        Point3::new(0.0, 1.0, 0.0, Label::Static),
    ]);
    let (ri, mask) = project_with_mask(&cloud, &s);
    assert!(ri.is_occupied(0, 0) && ri.is_occupied(0, 1));
    assert!(mask.get(0, 0), "any dynamic contributor marks the cell");
    assert!(!mask.get(0, 1));
    let labeled = deproject_labeled(&ri, Some(&mask));
    assert_eq!(labeled.points[0].label, Label::Dynamic);
    assert_eq!(labeled.points[1].label, Label::Static);
}

#[test]
fn to_vector_normalizes_and_fills() {
    let s = spec(1, 2, (-1.0, 1.0), 10.0);
    let ri = RangeImage::from_parts(s, vec![2.5, 0.0], vec![true, false]).unwrap();
    assert_eq!(ri.to_vector(0.0), vec![0.25, 0.0]);
    assert_eq!(ri.to_vector(0.5), vec![0.25, 0.5]);
}

#[test]
fn from_vector_round_trips_exactly_and_clamps() {
    let s = spec(2, 3, (-5.0, 5.0), 50.0);
    let ranges: Vec<f32> = vec![1.25, 0.0, 49.9, 0.0, 3.1, 0.0];
    let occ = vec![true, false, true, false, true, false];
    let ri = RangeImage::from_parts(s, ranges.clone(), occ.clone()).unwrap();
    let back = RangeImage::from_vector(&ri.to_vector(0.0), s, ri.occupancy()).unwrap();
    assert_eq!(ri, back, "occupied ranges reproduce bitwise");

    let clamped = RangeImage::from_vector(&[1.5, 0.0, -0.2, 0.0, 0.5, 0.9], s, &occ).unwrap();
    assert_eq!(clamped.range_at(0, 0), 50.0);
    assert_eq!(clamped.range_at(0, 2), (MIN_OCCUPIED_NORM * 50.0) as f32);
    assert!(!clamped.is_occupied(1, 2), "fill entries at unoccupied cells ignored");

    assert!(RangeImage::from_vector(&[0.1; 5], s, &occ).is_err());
}

#[test]
fn blend_selects_cells_by_mask() {
    let s = spec(1, 4, (-1.0, 1.0), 10.0);
    let stat = RangeImage::from_parts(s, vec![1.0, 2.0, 0.0, 4.0], vec![true, true, false, true])
        .unwrap();
    let dyn_ = RangeImage::from_parts(s, vec![5.0, 0.0, 7.0, 8.0], vec![true, false, true, true])
        .unwrap();
    let mut mask = SegMask::new(1, 4);
    mask.set(0, 1, true);
    mask.set(0, 2, true);
    let out = blend(&mask, &stat, &dyn_).unwrap();
    assert_eq!(out.ranges(), &[5.0, 2.0, 0.0, 8.0]);
    assert_eq!(out.occupancy(), &[true, true, false, true]);

    // All-dynamic mask returns the static image; all-static the dynamic one.
    let all = SegMask::from_cells(1, 4, vec![true; 4]).unwrap();
    assert_eq!(blend(&all, &stat, &dyn_).unwrap(), stat);
    let none = SegMask::new(1, 4);
    assert_eq!(blend(&none, &stat, &dyn_).unwrap(), dyn_);
}

#[test]
fn blend_rejects_shape_mismatch() {
    let a = RangeImage::empty(spec(2, 2, (-1.0, 1.0), 10.0));
    let b = RangeImage::empty(spec(2, 3, (-1.0, 1.0), 10.0));
    assert!(blend(&SegMask::new(2, 2), &a, &b).is_err());
    let c = RangeImage::empty(spec(2, 2, (-1.0, 1.0), 10.0));
    assert!(blend(&SegMask::new(3, 2), &a, &c).is_err());
}

#[test]
fn crop_rows_shrinks_fov_to_bin_boundaries() {
    let s = spec(16, 8, (-16.0, 16.0), 50.0);
    let ri = RangeImage::empty(s);
    let cropped = ri.crop_rows(2..14).unwrap();
    assert_eq!(cropped.rows(), 12);
    assert_eq!(cropped.cols(), 8);
    // 2-degree bins: rows 2..14 span [-12, +12].
    assert_relative_eq!(cropped.spec().fov_max_deg() as f64, 12.0, epsilon = 1e-6);
    assert_relative_eq!(cropped.spec().fov_min_deg() as f64, -12.0, epsilon = 1e-6);
    assert!(ri.crop_rows(5..5).is_err());
    assert!(ri.crop_rows(0..17).is_err());
}

#[test]
fn crop_rows_preserves_contents() {
    let s = spec(4, 2, (-8.0, 8.0), 50.0);
    let ranges = vec![1.0, 0.0, 2.0, 2.5, 0.0, 3.0, 4.0, 0.0];
    let occ = vec![true, false, true, true, false, true, true, false];
    let ri = RangeImage::from_parts(s, ranges, occ).unwrap();
    let cropped = ri.crop_rows(1..3).unwrap();
    assert_eq!(cropped.ranges(), &[2.0, 2.5, 0.0, 3.0]);
    assert_eq!(cropped.occupancy(), &[true, true, false, true]);
}

#[test]
fn add_noise_zero_sigma_is_identity() {
    let s = spec(4, 16, (-10.0, 10.0), 50.0);
    let cloud = grid_cloud(&s, 321);
    let ri = project(&cloud, &s);
    let noisy = ri.add_noise(0.0, 7).unwrap();
    assert_eq!(ri, noisy);
}

#[test]
fn add_noise_is_seed_deterministic_and_keeps_occupancy() {
    let s = spec(4, 16, (-10.0, 10.0), 50.0);
    let ri = project(&grid_cloud(&s, 99), &s);
    let a = ri.add_noise(0.05, 11).unwrap();
    let b = ri.add_noise(0.05, 11).unwrap();
    let c = ri.add_noise(0.05, 12).unwrap();
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(a.occupancy(), ri.occupancy());
    assert!(ri.add_noise(-0.1, 0).is_err());
    assert!(ri.add_noise(f64::NAN, 0).is_err());
}

#[test]
fn add_noise_variance_matches_sigma() {
    // >= 10^4 occupied cells at mid-range; sample variance within 5%.
    let s = spec(100, 128, (-30.0, 30.0), 50.0);
    let ranges = vec![25.0f32; s.cells()];
    let occ = vec![true; s.cells()];
    let ri = RangeImage::from_parts(s, ranges, occ).unwrap();
    let sigma = 0.05;
    let noisy = ri.add_noise(sigma, 1234).unwrap();
    let diffs: Vec<f64> = ri
        .to_vector(0.0)
        .iter()
        .zip(noisy.to_vector(0.0))
        .map(|(a, b)| b - a)
        .collect();
    let n = diffs.len() as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    assert!(n >= 10_000.0);
    assert!(
        (var - sigma * sigma).abs() < 0.05 * sigma * sigma,
        "var {var} vs sigma^2 {}",
        sigma * sigma
    );
}

/// Deterministic cloud covering a decent part of the grid.
fn grid_cloud(spec: &SensorSpec, seed: u64) -> PointCloud {
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::new();
    for r in 0..spec.rows() {
        for c in 0..spec.cols() {
            if rng.random::<f64>() < 0.7 {
                let rho = 1.0 + rng.random::<f64>() * (spec.max_range() as f64 - 2.0);
                let d = spec.cell_direction(r, c);
                points.push(Point3::new(rho * d[0], rho * d[1], rho * d[2], Label::Static));
            }
        }
    }
    PointCloud::new(points)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// project(deproject(ri)) == ri bitwise for arbitrary valid images.
    #[test]
    fn project_deproject_is_bitwise_fixed_point(
        rows in 1usize..6,
        cols in 1usize..9,
        fov_lo in -60i32..40,
        fov_span in 2i32..50,
        cells in proptest::collection::vec((any::<bool>(), 1u32..=u32::MAX), 1..54),
    ) {
        let fov_min = fov_lo as f32;
        let fov_max = (fov_lo + fov_span) as f32;
        let max_range = 50.0f32;
        let s = SensorSpec::new(rows, cols, fov_min, fov_max, max_range).unwrap();
        let mut ranges = vec![0.0f32; s.cells()];
        let mut occ = vec![false; s.cells()];
        for (i, (o, frac)) in cells.iter().enumerate() {
            if i >= s.cells() { break; }
            if *o {
                let f = *frac as f64 / u32::MAX as f64;
                ranges[i] = ((f.max(1e-6)) * max_range as f64) as f32;
                occ[i] = true;
            }
        }
        let ri = RangeImage::from_parts(s, ranges, occ).unwrap();
        let back = project(&deproject(&ri), &s);
        prop_assert_eq!(ri, back);
    }

    /// Deprojection inverts binning: every emitted point re-bins to its cell.
    #[test]
    fn deprojected_points_rebin_to_their_cells(
        rows in 1usize..8,
        cols in 1usize..12,
    ) {
        let s = SensorSpec::new(rows, cols, -25.0, 15.0, 80.0).unwrap();
        let ranges = vec![10.0f32; s.cells()];
        let occ = vec![true; s.cells()];
        let ri = RangeImage::from_parts(s, ranges, occ).unwrap();
        let back = project(&deproject(&ri), &s);
        prop_assert_eq!(back.occupied_count(), s.cells());
    }
}
