use super::*;
use crate::scan::{blend, load_cloud, project};
use crate::traj::load_tum;
use approx::assert_relative_eq;

fn empty_world_with(walls: Vec<WallSpec>, boxes: Vec<BoxSpec>) -> World {
    let mut cfg = desk_sim_config(0);
    cfg.walls = walls;
    cfg.boxes = boxes;
    cfg.floor_z = None;
    World::from_config(&cfg).unwrap()
}

fn wall(x1: f64, y1: f64, x2: f64, y2: f64, z_min: f64, z_max: f64) -> WallSpec {
    WallSpec {
        x1,
        y1,
        x2,
        y2,
        z_min,
        z_max,
    }
}

#[test]
fn ray_hits_wall_at_exact_distance() {
    let world = empty_world_with(vec![wall(5.0, -2.0, 5.0, 2.0, 0.0, 4.0)], vec![]);
    let o = Vector3::new(0.0, 0.0, 1.5);
    let hit = world.raycast(o, Vector3::new(1.0, 0.0, 0.0), 0.0, 50.0, true);
    assert_eq!(hit, Some((5.0, false)));
    // Outside the wall's height interval.
    let low = empty_world_with(vec![wall(5.0, -2.0, 5.0, 2.0, 0.0, 1.0)], vec![]);
    assert_eq!(low.raycast(o, Vector3::new(1.0, 0.0, 0.0), 0.0, 50.0, true), None);
    // Wall behind the ray.
    assert_eq!(world.raycast(o, Vector3::new(-1.0, 0.0, 0.0), 0.0, 50.0, true), None);
    // Beyond the range limit.
    assert_eq!(world.raycast(o, Vector3::new(1.0, 0.0, 0.0), 0.0, 4.0, true), None);
    // Missing the segment laterally.
    assert_eq!(
        world.raycast(o, Vector3::new(0.0, 1.0, 0.0), 0.0, 50.0, true),
        None
    );
}

#[test]
fn floor_plane_catches_downward_rays() {
    let mut cfg = desk_sim_config(0);
    cfg.walls.clear();
    cfg.boxes.clear();
    cfg.floor_z = Some(0.0);
    let world = World::from_config(&cfg).unwrap();
    let o = Vector3::new(0.0, 0.0, 2.0);
    let d = Vector3::new(0.0, 0.0, -1.0);
    assert_eq!(world.raycast(o, d, 0.0, 50.0, true), Some((2.0, false)));
    assert_eq!(world.raycast(o, -d, 0.0, 50.0, true), None);
}

#[test]
fn ray_hits_moving_box_where_it_is_now() {
    let b = BoxSpec {
        half_extents: [0.5, 0.5, 1.0],
        waypoints: vec![[0.0, 3.0, 0.0, 1.0], [10.0, 13.0, 0.0, 1.0]],
    };
    let world = empty_world_with(vec![], vec![b]);
    let o = Vector3::new(0.0, 0.0, 1.5);
    let d = Vector3::new(1.0, 0.0, 0.0);
    assert_eq!(world.raycast(o, d, 0.0, 50.0, true), Some((2.5, true)));
    assert_eq!(world.raycast(o, d, 5.0, 50.0, true), Some((7.5, true)));
    assert_eq!(world.raycast(o, d, 10.0, 50.0, true), Some((12.5, true)));
    // Waypoint times clamp at both ends.
    assert_eq!(world.raycast(o, d, -3.0, 50.0, true), Some((2.5, true)));
    assert_eq!(world.raycast(o, d, 99.0, 50.0, true), Some((12.5, true)));
    // A static-only cast ignores the mover entirely.
    assert_eq!(world.raycast(o, d, 0.0, 50.0, false), None);
}

#[test]
fn box_waypoint_interpolation_is_piecewise_linear() {
    let b = BoxSpec {
        half_extents: [0.1, 0.1, 0.1],
        waypoints: vec![[0.0, 0.0, 0.0, 1.0], [10.0, 10.0, 0.0, 1.0], [20.0, 10.0, 20.0, 1.0]],
    };
    assert_eq!(b.center_at(5.0), Vector3::new(5.0, 0.0, 1.0));
    assert_eq!(b.center_at(15.0), Vector3::new(10.0, 10.0, 1.0));
    assert_eq!(b.center_at(-1.0), Vector3::new(0.0, 0.0, 1.0));
    assert_eq!(b.center_at(99.0), Vector3::new(10.0, 20.0, 1.0));
}

#[test]
fn static_geometry_wins_exact_ties() {
    let b = BoxSpec {
        half_extents: [0.5, 0.5, 1.0],
        waypoints: vec![[0.0, 5.5, 0.0, 1.0]],
    };
    let world = empty_world_with(vec![wall(5.0, -2.0, 5.0, 2.0, 0.0, 4.0)], vec![b]);
    let hit = world.raycast(
        Vector3::new(0.0, 0.0, 1.5),
        Vector3::new(1.0, 0.0, 0.0),
        0.0,
        50.0,
        true,
    );
    // Wall front and box front are both at x = 5: the wall (static) wins.
    assert_eq!(hit, Some((5.0, false)));
}

/// The core guarantee the downstream pipeline relies on: masking out the
/// mover cells of a dynamic scan and substituting the static scan's cells
/// reproduces the static scan bit for bit (at the same pose and time).
#[test]
fn blending_masked_dynamic_scan_reproduces_static_scan() {
    let cfg = desk_sim_config(7);
    let world = World::from_config(&cfg).unwrap();
    let spec = cfg.sensor.to_spec().unwrap();
    // Face the first mover: it starts at (8, 8) and the pose looks up +x.
    let pose = Pose {
        rotation: nalgebra::UnitQuaternion::from_euler_angles(0.0, 0.0, 45f64.to_radians()),
        translation: Vector3::new(5.0, 5.0, 1.5),
        timestamp: 0.0,
    };
    let static_cloud = render_scan(&world, &spec, &pose, 0.0, false);
    let dynamic_cloud = render_scan(&world, &spec, &pose, 0.0, true);
    let static_ri = project(&static_cloud, &spec);
    let (dynamic_ri, mask) = project_with_mask(&dynamic_cloud, &spec);
    assert!(mask.dynamic_count() > 0, "mover must be visible from here");
    assert_ne!(static_ri, dynamic_ri);
    let blended = blend(&mask, &static_ri, &dynamic_ri).unwrap();
    assert_eq!(blended, static_ri);
}

#[test]
fn dynamic_hits_are_labeled_and_occlude_walls() {
    let b = BoxSpec {
        half_extents: [0.5, 2.0, 1.0],
        waypoints: vec![[0.0, 3.0, 0.0, 1.0]],
    };
    // Wall is wider than the box's angular footprint, so some rays pass by
    // the mover and still reach static geometry.
    let cfg_wall = wall(6.0, -8.0, 6.0, 8.0, 0.0, 4.0);
    let world = empty_world_with(vec![cfg_wall], vec![b]);
    let spec = SensorSpec::new(4, 32, -10.0, 10.0, 50.0).unwrap();
    let pose = Pose::identity(0.0);
    let cloud = render_scan(&world, &spec, &pose, 0.0, true);
    let dynamic: Vec<_> = cloud.points.iter().filter(|p| p.label == Label::Dynamic).collect();
    let statics: Vec<_> = cloud.points.iter().filter(|p| p.label == Label::Static).collect();
    assert!(!dynamic.is_empty() && !statics.is_empty());
    // Every mover hit is nearer than the wall plane it occludes.
    assert!(dynamic.iter().all(|p| p.range() < 6.0));
}

#[test]
fn path_poses_follow_the_polyline() {
    let path = PathSpec {
        waypoints: vec![[0.0, 0.0], [4.0, 0.0], [4.0, 3.0]],
        height: 1.5,
        step: 1.0,
        jitter_trans: 0.0,
        jitter_rot_deg: 0.0,
        dt: 0.25,
    };
    let poses = path_poses(&path, 1, 0).unwrap();
    // Arc length 7 at step 1 gives 8 poses, endpoints included.
    assert_eq!(poses.len(), 8);
    assert_eq!(poses[0].translation, Vector3::new(0.0, 0.0, 1.5));
    assert_eq!(poses[4].translation, Vector3::new(4.0, 0.0, 1.5));
    assert_eq!(poses[7].translation, Vector3::new(4.0, 3.0, 1.5));
    for (i, p) in poses.iter().enumerate() {
        assert_relative_eq!(p.timestamp, i as f64 * 0.25, epsilon = 1e-12);
    }
    // Yaw faces +x on the first leg, +y on the second.
    assert_relative_eq!(poses[1].rotation.euler_angles().2, 0.0, epsilon = 1e-12);
    assert_relative_eq!(
        poses[6].rotation.euler_angles().2,
        std::f64::consts::FRAC_PI_2,
        epsilon = 1e-12
    );
}

#[test]
fn path_jitter_is_reproducible_per_run_index() {
    let mut path = PathSpec {
        waypoints: vec![[0.0, 0.0], [10.0, 0.0]],
        height: 1.0,
        step: 0.5,
        jitter_trans: 0.1,
        jitter_rot_deg: 2.0,
        dt: 0.1,
    };
    let a = path_poses(&path, 42, 0).unwrap();
    let b = path_poses(&path, 42, 0).unwrap();
    assert_eq!(a, b);
    let other_run = path_poses(&path, 42, 1).unwrap();
    assert_ne!(a, other_run);
    let other_seed = path_poses(&path, 43, 0).unwrap();
    assert_ne!(a, other_seed);
    path.jitter_trans = 0.0;
    path.jitter_rot_deg = 0.0;
    let clean = path_poses(&path, 42, 0).unwrap();
    assert!(clean
        .iter()
        .zip(&a)
        .any(|(c, j)| (c.translation - j.translation).norm() > 1e-6));
}

#[test]
fn sim_config_survives_a_toml_round_trip() {
    let cfg = desk_sim_config(99);
    let text = toml::to_string(&cfg).unwrap();
    let back: SimConfig = toml::from_str(&text).unwrap();
    assert_eq!(cfg, back);
}

#[test]
fn config_validation_rejects_degenerate_input() {
    let mut cfg = desk_sim_config(0);
    cfg.path.step = 0.0;
    assert!(matches!(
        World::from_config(&cfg),
        Err(SimError::InvalidConfig(_))
    ));

    let mut cfg = desk_sim_config(0);
    cfg.path.waypoints.truncate(1);
    assert!(World::from_config(&cfg).is_err());

    let mut cfg = desk_sim_config(0);
    cfg.walls[0].z_min = 5.0;
    assert!(World::from_config(&cfg).is_err());

    let mut cfg = desk_sim_config(0);
    cfg.boxes[0].half_extents[1] = 0.0;
    assert!(World::from_config(&cfg).is_err());

    let mut cfg = desk_sim_config(0);
    cfg.boxes[0].waypoints = vec![[5.0, 0.0, 0.0, 1.0], [5.0, 1.0, 1.0, 1.0]];
    assert!(World::from_config(&cfg).is_err());
}

#[test]
fn generate_paired_runs_writes_a_complete_corpus() {
    let mut cfg = desk_sim_config(5);
    cfg.path.step = 8.0; // keep the corpus tiny
    cfg.sensor.rows = 8;
    cfg.sensor.cols = 32;
    let dir = tempfile::tempdir().unwrap();
    let summary = generate_paired_runs(&cfg, dir.path()).unwrap();
    assert!(summary.scans_per_run >= 10);

    for (run, expect_masks) in [("static", false), ("dynamic", true)] {
        let run_dir = dir.path().join(run);
        let traj = load_tum(&run_dir.join("trajectory.txt")).unwrap();
        assert_eq!(traj.len(), summary.scans_per_run);
        assert!(run_dir.join("provenance.txt").exists());
        for i in 0..summary.scans_per_run {
            let cloud = load_cloud(&run_dir.join(format!("scan_{i:06}.bin"))).unwrap();
            assert!(!cloud.is_empty(), "{run} scan {i} is empty");
            let mask = run_dir.join(format!("mask_{i:06}.pbm"));
            assert_eq!(mask.exists(), expect_masks, "unexpected mask state for {run} {i}");
            if run == "static" {
                assert!(cloud.points.iter().all(|p| p.label == Label::Static));
            }
        }
    }
    // At least one dynamic scan actually sees a mover.
    let any_dynamic = (0..summary.scans_per_run).any(|i| {
        let c = load_cloud(&dir.path().join("dynamic").join(format!("scan_{i:06}.bin"))).unwrap();
        c.points.iter().any(|p| p.label == Label::Dynamic)
    });
    assert!(any_dynamic, "no mover visible anywhere in the dynamic run");
    // The two runs' trajectories differ (independent jitter).
    let st = load_tum(&dir.path().join("static/trajectory.txt")).unwrap();
    let dy = load_tum(&dir.path().join("dynamic/trajectory.txt")).unwrap();
    assert_ne!(st, dy);
}
