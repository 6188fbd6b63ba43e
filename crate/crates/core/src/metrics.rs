//! Pose errors, trial summaries and a paired bootstrap.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::transform::RigidTransform;
use crate::{Error, Result};

/// Orthonormality tolerance for metric inputs. Looser than
/// [`crate::transform::ORTHONORMAL_TOL`] so matrices read back from text
/// reports are still accepted.
pub const ROTATION_INPUT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoseError {
    pub rotation_error_deg: f64,
    pub translation_error: f64,
}

/// Geodesic angle of `R_bᵀ·R_a` in radians, in `[0, π]`.
///
/// Uses `atan2(‖axis part‖, cos part)` rather than `acos` so angles near
/// zero keep full relative precision.
pub fn rotation_angle_rad(r_a: &Matrix3<f64>, r_b: &Matrix3<f64>) -> f64 {
    let m = r_b.transpose() * r_a;
    let cos = (m.trace() - 1.0) / 2.0;
    let v = Vector3::new(m[(2, 1)] - m[(1, 2)], m[(0, 2)] - m[(2, 0)], m[(1, 0)] - m[(0, 1)]);
    let sin = v.norm() / 2.0;
    sin.atan2(cos)
}

fn check_rotation(r: &Matrix3<f64>, name: &str) -> Result<()> {
    if !r.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput(format!("{name} has non-finite entries")));
    }
    let ortho = (r.transpose() * r - Matrix3::identity()).amax();
    let det = r.determinant();
    if ortho > ROTATION_INPUT_TOL || (det - 1.0).abs() > ROTATION_INPUT_TOL {
        return Err(Error::InvalidInput(format!(
            "{name} is not a rotation (‖RᵀR−I‖ = {ortho:.3e}, det = {det})"
        )));
    }
    Ok(())
}

/// Geodesic rotation error in degrees.
pub fn rotation_error_deg(r_est: &Matrix3<f64>, r_gt: &Matrix3<f64>) -> Result<f64> {
    check_rotation(r_est, "estimated rotation")?;
    check_rotation(r_gt, "ground-truth rotation")?;
    Ok(rotation_angle_rad(r_est, r_gt).to_degrees())
}

pub fn translation_error(t_est: &Vector3<f64>, t_gt: &Vector3<f64>) -> f64 {
    (t_est - t_gt).norm()
}

pub fn pose_error(est: &RigidTransform, gt: &RigidTransform) -> Result<PoseError> {
    Ok(PoseError {
        rotation_error_deg: rotation_error_deg(est.rotation(), gt.rotation())?,
        translation_error: translation_error(est.translation(), gt.translation()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub trials: usize,
    pub mean_rotation_error_deg: f64,
    pub mean_translation_error: f64,
    pub mean_time_s: f64,
}

/// Arithmetic means over trials. `times` may be empty only when `errors` is.
pub fn summarize(errors: &[PoseError], times: &[f64]) -> Result<Summary> {
    if errors.is_empty() || times.is_empty() {
        return Err(Error::EmptyInput);
    }
    let n = errors.len() as f64;
    Ok(Summary {
        trials: errors.len(),
        mean_rotation_error_deg: errors.iter().map(|e| e.rotation_error_deg).sum::<f64>() / n,
        mean_translation_error: errors.iter().map(|e| e.translation_error).sum::<f64>() / n,
        mean_time_s: times.iter().sum::<f64>() / times.len() as f64,
    })
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Percentile bootstrap of the mean of paired differences.
///
/// Returns the `(lower, upper)` bounds of the two-sided interval at
/// `confidence`, e.g. 0.9 gives the 5th and 95th percentiles.
pub fn bootstrap_mean_interval(diffs: &[f64], resamples: usize, confidence: f64, seed: u64) -> Result<(f64, f64)> {
    if diffs.is_empty() || resamples == 0 {
        return Err(Error::EmptyInput);
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidInput(format!(
            "confidence must be in (0,1), got {confidence}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = diffs.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| diffs[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Ok((at(tail), at(1.0 - tail)))
}
