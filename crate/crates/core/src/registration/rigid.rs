//! Closed-form least-squares rigid fit (Kabsch/Umeyama without scale).

use nalgebra::{Matrix3, Point3, Vector3, SVD};

use crate::transform::RigidTransform;
use crate::{Error, Result};

/// Ratio of second to first singular value of the centred points below which
/// a set counts as collinear.
const COLLINEAR_RATIO: f64 = 1e-10;

fn centroid(points: &[Point3<f64>]) -> Vector3<f64> {
    points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / points.len() as f64
}

fn check_spread(points: &[Point3<f64>], c: &Vector3<f64>, which: &str) -> Result<()> {
    let mut cov = Matrix3::zeros();
    for p in points {
        let d = p.coords - c;
        cov += d * d.transpose();
    }
    let mut sv = SVD::new(cov, false, false).singular_values;
    sv.as_mut_slice().sort_by(|a, b| b.total_cmp(a));
    if !(sv[0] > 0.0) || sv[1] <= COLLINEAR_RATIO * sv[0] {
        return Err(Error::DegenerateConfiguration(format!(
            "{which} points are coincident or collinear"
        )));
    }
    Ok(())
}

/// The proper rigid transform minimising `Σ ‖T(pᵢ) − qᵢ‖²`.
pub fn estimate_rigid(p: &[Point3<f64>], q: &[Point3<f64>]) -> Result<RigidTransform> {
    if p.len() != q.len() {
        return Err(Error::InvalidInput(format!(
            "{} source points but {} targets",
            p.len(),
            q.len()
        )));
    }
    if p.len() < 3 {
        return Err(Error::InsufficientPoints {
            needed: 3,
            got: p.len(),
        });
    }
    let cp = centroid(p);
    let cq = centroid(q);
    check_spread(p, &cp, "source")?;
    check_spread(q, &cq, "target")?;

    // H = Σ (q − q̄)(p − p̄)ᵀ, so R = U·D·Vᵀ maps p onto q.
    let mut h = Matrix3::zeros();
    for (a, b) in p.iter().zip(q) {
        h += (b.coords - cq) * (a.coords - cp).transpose();
    }
    let svd = SVD::new(h, true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::DegenerateConfiguration("SVD did not converge".into())),
    };
    // Reflection fix: flip the axis paired with the smallest singular value.
    let smallest = svd
        .singular_values
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap();
    let mut d = Vector3::repeat(1.0);
    if (u * v_t).determinant() < 0.0 {
        d[smallest] = -1.0;
    }
    let r = u * Matrix3::from_diagonal(&d) * v_t;
    let t = cq - r * cp;
    Ok(RigidTransform::from_parts_unchecked(r, t))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::rotation_angle_rad;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn cloud(rng: &mut ChaCha8Rng, n: usize) -> Vec<Point3<f64>> {
        (0..n)
            .map(|_| {
                Point3::new(
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                )
            })
            .collect()
    }

    #[test]
    fn identity_on_equal_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = cloud(&mut rng, 10);
        let t = estimate_rigid(&p, &p).unwrap();
        assert!((t.rotation() - Matrix3::identity()).amax() < 1e-12);
        assert!(t.translation().norm() < 1e-12);
    }

    #[test]
    fn recovers_known_transform() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = cloud(&mut rng, 10);
        let truth = RigidTransform::from_axis_angle(Vector3::new(0.2, -0.7, 0.4), 2.1, Vector3::new(3.0, -1.0, 0.5));
        let q: Vec<_> = p.iter().map(|x| truth.apply(x)).collect();
        let est = estimate_rigid(&p, &q).unwrap();
        assert!(rotation_angle_rad(est.rotation(), truth.rotation()) < 1e-9);
        assert!((est.translation() - truth.translation()).norm() < 1e-9);
        assert!((est.rotation().determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mirrored_planar_input_still_proper() {
        // P in the z = 0 plane; Q is P mirrored through x = 0.
        let p: Vec<Point3<f64>> = [[1.0, 0.0], [0.0, 2.0], [-1.5, 0.3], [0.4, -1.0], [2.0, 1.0]]
            .iter()
            .map(|&[x, y]| Point3::new(x, y, 0.0))
            .collect();
        let q: Vec<Point3<f64>> = p.iter().map(|v| Point3::new(-v.x, v.y, v.z)).collect();
        let est = estimate_rigid(&p, &q).unwrap();
        assert!((est.rotation().determinant() - 1.0).abs() < 1e-12);
        let residual =
            |t: &RigidTransform| -> f64 { p.iter().zip(&q).map(|(a, b)| (t.apply(a) - b).norm_squared()).sum() };
        // Oracle: brute force over a grid of rotations (axis-angle) with the
        // optimal translation for each.
        let cq = centroid(&q);
        let cp = centroid(&p);
        let mut best = f64::INFINITY;
        let steps = 36;
        for i in 0..steps {
            for j in 0..steps / 2 + 1 {
                let theta = std::f64::consts::PI * j as f64 / (steps / 2) as f64;
                let phi = 2.0 * std::f64::consts::PI * i as f64 / steps as f64;
                let axis = Vector3::new(theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos());
                for k in 0..steps {
                    let angle = 2.0 * std::f64::consts::PI * k as f64 / steps as f64;
                    let r = RigidTransform::from_axis_angle(axis, angle, Vector3::zeros());
                    let t = RigidTransform::new(*r.rotation(), cq - r.rotation() * cp).unwrap();
                    best = best.min(residual(&t));
                }
            }
        }
        assert!(residual(&est) <= best + 1e-9, "{} vs grid {}", residual(&est), best);
        // The mirror about x = 0 on a z = 0 plane equals a half turn about y.
        assert!(residual(&est) < 1e-20);
    }

    #[test]
    fn degenerate_inputs() {
        let line: Vec<_> = (0..5).map(|i| Point3::new(i as f64, 2.0 * i as f64, 0.0)).collect();
        assert!(matches!(
            estimate_rigid(&line, &line),
            Err(Error::DegenerateConfiguration(_))
        ));
        let same = vec![Point3::new(1.0, 1.0, 1.0); 4];
        assert!(matches!(
            estimate_rigid(&same, &same),
            Err(Error::DegenerateConfiguration(_))
        ));
        assert!(estimate_rigid(&line[..2], &line[..2]).is_err());
        assert!(estimate_rigid(&line, &line[..4]).is_err());
    }
}
