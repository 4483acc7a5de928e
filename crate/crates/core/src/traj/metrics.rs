//! Absolute, relative, and unaligned trajectory error metrics.

use nalgebra::{UnitQuaternion, Vector3};

use super::{align_rigid, associate, TrajError, Trajectory};

/// Absolute error after rigid alignment of the estimate onto the reference.
#[derive(Debug, Clone)]
pub struct AteResult {
    /// Root mean square of residual translation norms.
    pub rmse: f64,
    pub mean: f64,
    pub median: f64,
    pub max: f64,
    /// Number of timestamp-matched pose pairs used.
    pub matched: usize,
    /// The alignment applied to the estimate.
    pub rotation: UnitQuaternion<f64>,
    pub translation: Vector3<f64>,
}

/// Relative pose error over a fixed index delta.
#[derive(Debug, Clone, Copy)]
pub struct RpeResult {
    pub trans_rmse: f64,
    /// Mean geodesic rotation error in degrees.
    pub rot_mean_deg: f64,
    pub samples: usize,
}

fn matched_or_err(
    est: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
    need: usize,
    what: &str,
) -> Result<Vec<(usize, usize)>, TrajError> {
    let pairs = associate(est, reference, max_dt);
    if pairs.len() < need {
        return Err(TrajError::NotEnoughPoses(format!(
            "{what} needs at least {need} matched poses, found {}",
            pairs.len()
        )));
    }
    Ok(pairs)
}

fn residual_result(
    mut errors: Vec<f64>,
    rotation: UnitQuaternion<f64>,
    translation: Vector3<f64>,
) -> AteResult {
    let matched = errors.len();
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / matched as f64).sqrt();
    let mean = errors.iter().sum::<f64>() / matched as f64;
    let max = errors.iter().copied().fold(0.0, f64::max);
    errors.sort_by(f64::total_cmp);
    let mid = matched / 2;
    let median = if matched % 2 == 1 {
        errors[mid]
    } else {
        0.5 * (errors[mid - 1] + errors[mid])
    };
    AteResult { rmse, mean, median, max, matched, rotation, translation }
}

/// Absolute trajectory error: rigidly aligns the estimate onto the reference
/// (closed-form, no scale), then reports residual statistics.
pub fn ate(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<AteResult, TrajError> {
    let pairs = matched_or_err(est, reference, max_dt, 3, "absolute error")?;
    let from: Vec<Vector3<f64>> = pairs.iter().map(|&(i, _)| est.poses()[i].translation).collect();
    let to: Vec<Vector3<f64>> = pairs
        .iter()
        .map(|&(_, j)| reference.poses()[j].translation)
        .collect();
    let (rot, trans) = align_rigid(&from, &to);
    let errors: Vec<f64> = from
        .iter()
        .zip(&to)
        .map(|(f, t)| ((rot * f + trans) - t).norm())
        .collect();
    Ok(residual_result(errors, rot, trans))
}

/// Absolute trajectory error without the rigid alignment step: residuals are
/// taken directly in the shared world frame. Same samples as [`drift`], but
/// reported as the full statistics set (drift is their mean).
pub fn ate_unaligned(
    est: &Trajectory,
    reference: &Trajectory,
    max_dt: f64,
) -> Result<AteResult, TrajError> {
    let pairs = matched_or_err(est, reference, max_dt, 1, "absolute error")?;
    let errors: Vec<f64> = pairs
        .iter()
        .map(|&(i, j)| (est.poses()[i].translation - reference.poses()[j].translation).norm())
        .collect();
    Ok(residual_result(errors, UnitQuaternion::identity(), Vector3::zeros()))
}

/// Relative pose error: for matched pose pairs k and k+delta (in the matched
/// sequence), compares the estimated relative motion against the reference's,
/// reporting translational RMSE and mean rotational geodesic error.
pub fn rpe(
    est: &Trajectory,
    reference: &Trajectory,
    delta: usize,
    max_dt: f64,
) -> Result<RpeResult, TrajError> {
    if delta == 0 {
        return Err(TrajError::NotEnoughPoses("relative error needs delta >= 1".into()));
    }
    let pairs = matched_or_err(est, reference, max_dt, delta + 1, "relative error")?;
    let mut sq_trans = 0.0;
    let mut rot_sum_deg = 0.0;
    let mut samples = 0usize;
    for k in 0..pairs.len() - delta {
        let (i0, j0) = pairs[k];
        let (i1, j1) = pairs[k + delta];
        let rel_est = est.poses()[i0].relative(&est.poses()[i1]);
        let rel_ref = reference.poses()[j0].relative(&reference.poses()[j1]);
        let err = rel_ref.inverse().compose(&rel_est);
        sq_trans += err.translation.norm_squared();
        rot_sum_deg += err.rotation_angle().to_degrees();
        samples += 1;
    }
    Ok(RpeResult {
        trans_rmse: (sq_trans / samples as f64).sqrt(),
        rot_mean_deg: rot_sum_deg / samples as f64,
        samples,
    })
}

/// Mean translational error between matched poses with no alignment applied:
/// how far the estimate has wandered in the shared world frame.
pub fn drift(est: &Trajectory, reference: &Trajectory, max_dt: f64) -> Result<f64, TrajError> {
    let pairs = matched_or_err(est, reference, max_dt, 1, "drift")?;
    let sum: f64 = pairs
        .iter()
        .map(|&(i, j)| (est.poses()[i].translation - reference.poses()[j].translation).norm())
        .sum();
    Ok(sum / pairs.len() as f64)
}
