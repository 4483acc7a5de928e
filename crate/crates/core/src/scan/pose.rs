//! Timestamped SE(3) poses backed by nalgebra unit quaternions.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use super::{Point3, PointCloud, ScanError};

/// How far a quaternion's norm may stray from 1 before construction fails.
/// Loose enough for low-precision text trajectories; stored rotations are
/// renormalized, so the unit invariant holds to machine precision afterward.
const QUAT_NORM_TOL: f64 = 1e-3;

/// Rigid transform plus a timestamp in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
    pub timestamp: f64,
}

impl Pose {
    /// Builds a pose from a translation and an (x, y, z, w) quaternion,
    /// rejecting quaternions whose norm is off unit by more than 1e-3 and
    /// renormalizing accepted ones.
    pub fn from_xyzw(
        translation: [f64; 3],
        quat_xyzw: [f64; 4],
        timestamp: f64,
    ) -> Result<Self, ScanError> {
        let q = Quaternion::new(quat_xyzw[3], quat_xyzw[0], quat_xyzw[1], quat_xyzw[2]);
        let norm = q.norm();
        if !norm.is_finite() || (norm - 1.0).abs() > QUAT_NORM_TOL {
            return Err(ScanError::NonUnitQuaternion { norm });
        }
        // Skip renormalization when the input is already unit to machine
        // precision, so serialized trajectories round-trip bit-exactly.
        let rotation = if (norm - 1.0).abs() <= 1e-12 {
            UnitQuaternion::new_unchecked(q)
        } else {
            UnitQuaternion::from_quaternion(q)
        };
        Ok(Pose {
            rotation,
            translation: Vector3::new(translation[0], translation[1], translation[2]),
            timestamp,
        })
    }

    pub fn identity(timestamp: f64) -> Self {
        Pose {
            rotation: UnitQuaternion::identity(),
            translation: Vector3::zeros(),
            timestamp,
        }
    }

    /// Quaternion as (x, y, z, w), the trajectory-file order.
    pub fn quat_xyzw(&self) -> [f64; 4] {
        let q = self.rotation.quaternion();
        [q.i, q.j, q.k, q.w]
    }

    pub fn transform_point(&self, p: [f64; 3]) -> [f64; 3] {
        let v = self.rotation * Vector3::new(p[0], p[1], p[2]) + self.translation;
        [v.x, v.y, v.z]
    }

    /// Applies the pose to every point; labels are preserved.
    pub fn transform_cloud(&self, cloud: &PointCloud) -> PointCloud {
        PointCloud::new(
            cloud
                .points
                .iter()
                .map(|p| {
                    let v = self.transform_point([p.x, p.y, p.z]);
                    Point3::new(v[0], v[1], v[2], p.label)
                })
                .collect(),
        )
    }

    /// self then-applied-after other: (self * other)(x) = self(other(x)).
    /// The result carries the right operand's timestamp.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
            timestamp: other.timestamp,
        }
    }

    pub fn inverse(&self) -> Pose {
        let inv_rot = self.rotation.inverse();
        Pose {
            rotation: inv_rot,
            translation: -(inv_rot * self.translation),
            timestamp: self.timestamp,
        }
    }

    /// Transform mapping `other`'s frame into `self`'s: inverse(self) * other.
    pub fn relative(&self, other: &Pose) -> Pose {
        self.inverse().compose(other)
    }

    /// Euclidean distance between the two translations.
    pub fn translation_distance_to(&self, other: &Pose) -> f64 {
        (self.translation - other.translation).norm()
    }

    /// Geodesic angle to another rotation: 2*acos(|<q1, q2>|), radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        let dot = self
            .rotation
            .quaternion()
            .coords
            .dot(&other.rotation.quaternion().coords);
        2.0 * dot.abs().min(1.0).acos()
    }

    /// Geodesic rotation angle of this pose itself, radians.
    pub fn rotation_angle(&self) -> f64 {
        2.0 * self.rotation.quaternion().w.abs().min(1.0).acos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn yaw_pose(angle: f64, t: [f64; 3], ts: f64) -> Pose {
        Pose {
            rotation: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle),
            translation: Vector3::new(t[0], t[1], t[2]),
            timestamp: ts,
        }
    }

    #[test]
    fn rejects_non_unit_quaternion() {
        let err = Pose::from_xyzw([0.0; 3], [0.0, 0.0, 0.0, 2.0], 0.0).unwrap_err();
        assert!(matches!(err, ScanError::NonUnitQuaternion { .. }));
    }

    #[test]
    #[allow(clippy::approx_constant)]
    fn accepts_low_precision_unit_quaternion_and_renormalizes() {
        // Four-decimal TUM-style quaternion for a 90 degree yaw; the point
        // is precisely that the input is NOT an exact unit quaternion.
        let p = Pose::from_xyzw([0.0; 3], [0.0, 0.0, 0.7071, 0.7071], 0.0).unwrap();
        assert_relative_eq!(p.rotation.norm(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(p.rotation_angle(), FRAC_PI_2, epsilon = 1e-4);
    }

    #[test]
    fn yaw_quarter_turn_moves_x_to_y() {
        let p = yaw_pose(FRAC_PI_2, [0.0, 0.0, 0.0], 0.0);
        let v = p.transform_point([1.0, 0.0, 0.0]);
        assert_relative_eq!(v[0], 0.0, epsilon = 1e-15);
        assert_relative_eq!(v[1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(v[2], 0.0, epsilon = 1e-15);
    }

    #[test]
    fn inverse_composes_to_identity() {
        let p = yaw_pose(0.4, [1.0, -2.0, 0.5], 3.0);
        let id = p.inverse().compose(&p);
        assert_relative_eq!(id.translation.norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(id.rotation_angle(), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn relative_of_equal_poses_is_identity() {
        let p = yaw_pose(-0.7, [4.0, 1.0, -1.0], 2.0);
        let rel = p.relative(&p);
        assert_relative_eq!(rel.translation.norm(), 0.0, epsilon = 1e-14);
        assert_relative_eq!(rel.rotation_angle(), 0.0, epsilon = 1e-7);
    }

    #[test]
    fn relative_maps_other_frame_into_self_frame() {
        let a = yaw_pose(0.3, [1.0, 2.0, 0.0], 0.0);
        let b = yaw_pose(0.9, [-1.0, 0.5, 0.2], 1.0);
        let rel = a.relative(&b);
        let x = [0.7, -0.3, 1.1];
        // Point expressed in b's frame, moved to world, then into a's frame.
        let world = b.transform_point(x);
        let in_a = a.inverse().transform_point(world);
        let direct = rel.transform_point(x);
        for k in 0..3 {
            assert_relative_eq!(in_a[k], direct[k], epsilon = 1e-12);
        }
    }

    #[test]
    fn geodesic_angle_between_yaws() {
        let a = yaw_pose(0.2, [0.0; 3], 0.0);
        let b = yaw_pose(0.2 + 0.5, [0.0; 3], 0.0);
        assert_relative_eq!(a.rotation_angle_to(&b), 0.5, epsilon = 1e-12);
        // Antipodal quaternion represents the same rotation: angle 0.
        let mut c = a;
        c.rotation = UnitQuaternion::from_quaternion(-a.rotation.quaternion());
        assert_relative_eq!(a.rotation_angle_to(&c), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn transform_preserves_labels() {
        use crate::scan::{Label, Point3, PointCloud};
        let p = yaw_pose(FRAC_PI_2, [0.0, 0.0, 1.0], 0.0);
        let cloud = PointCloud::new(vec![
            Point3::new(1.0, 0.0, 0.0, Label::Dynamic),
            Point3::new(0.0, 1.0, 0.0, Label::Static),
        ]);
        let out = p.transform_cloud(&cloud);
        assert_eq!(out.points[0].label, Label::Dynamic);
        assert_eq!(out.points[1].label, Label::Static);
        assert_relative_eq!(out.points[0].y, 1.0, epsilon = 1e-15);
        assert_relative_eq!(out.points[0].z, 1.0, epsilon = 1e-15);
    }
}
