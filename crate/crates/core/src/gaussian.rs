//! Gaussian scene representation.
//!
//! Registration only reads means and opacities. Scales, rotations and
//! spherical-harmonic coefficients are carried so that clouds survive a
//! load/transform/save cycle.

use nalgebra::{Matrix3, Point3, Quaternion, SymmetricEigen, UnitQuaternion, Vector3};

use crate::transform::RigidTransform;
use crate::{Error, Result};

/// Condition-number ceiling for [`evaluate_gaussian`].
pub const MAX_CONDITION: f64 = 1e12;

/// Spherical-harmonic coefficients stored as one flat row per Gaussian.
#[derive(Debug, Clone, PartialEq)]
pub struct ShCoeffs {
    pub per_gaussian: usize,
    pub values: Vec<f64>,
}

impl ShCoeffs {
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.per_gaussian..(i + 1) * self.per_gaussian]
    }
}

/// A set of 3D Gaussians. Immutable once built; operations return new clouds.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct GaussianCloud {
    positions: Vec<Point3<f64>>,
    opacities: Vec<f64>,
    /// Log-scale per axis.
    scales: Option<Vec<Vector3<f64>>>,
    rotations: Option<Vec<UnitQuaternion<f64>>>,
    sh: Option<ShCoeffs>,
}

impl GaussianCloud {
    pub fn new(positions: Vec<Point3<f64>>, opacities: Vec<f64>) -> Result<Self> {
        if positions.len() != opacities.len() {
            return Err(Error::InvalidInput(format!(
                "{} positions but {} opacities",
                positions.len(),
                opacities.len()
            )));
        }
        if let Some(i) = opacities.iter().position(|o| !(0.0..=1.0).contains(o)) {
            return Err(Error::InvalidInput(format!(
                "opacity {} at index {i} outside [0, 1]",
                opacities[i]
            )));
        }
        Ok(Self {
            positions,
            opacities,
            scales: None,
            rotations: None,
            sh: None,
        })
    }

    pub fn with_scales(mut self, scales: Vec<Vector3<f64>>) -> Result<Self> {
        self.check_len("scales", scales.len())?;
        self.scales = Some(scales);
        Ok(self)
    }

    pub fn with_rotations(mut self, rotations: Vec<UnitQuaternion<f64>>) -> Result<Self> {
        self.check_len("rotations", rotations.len())?;
        self.rotations = Some(rotations);
        Ok(self)
    }

    pub fn with_sh(mut self, sh: ShCoeffs) -> Result<Self> {
        if sh.per_gaussian == 0 || sh.values.len() != sh.per_gaussian * self.len() {
            return Err(Error::InvalidInput(format!(
                "sh block of {} values does not fit {} gaussians × {}",
                sh.values.len(),
                self.len(),
                sh.per_gaussian
            )));
        }
        self.sh = Some(sh);
        Ok(self)
    }

    fn check_len(&self, what: &str, n: usize) -> Result<()> {
        if n != self.len() {
            return Err(Error::InvalidInput(format!(
                "{what} has {n} entries, cloud has {}",
                self.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Point3<f64>] {
        &self.positions
    }

    pub fn opacities(&self) -> &[f64] {
        &self.opacities
    }

    pub fn scales(&self) -> Option<&[Vector3<f64>]> {
        self.scales.as_deref()
    }

    pub fn rotations(&self) -> Option<&[UnitQuaternion<f64>]> {
        self.rotations.as_deref()
    }

    pub fn sh(&self) -> Option<&ShCoeffs> {
        self.sh.as_ref()
    }

    /// Covariance of Gaussian `i`, when scales and rotations are present.
    pub fn covariance(&self, i: usize) -> Option<Matrix3<f64>> {
        let s = self.scales.as_ref()?[i].map(f64::exp);
        let q = self.rotations.as_ref()?[i];
        covariance_from_params(&s, q.quaternion()).ok()
    }

    /// Axis-aligned bounding-box diagonal of the means.
    pub fn bbox_diagonal(&self) -> f64 {
        bbox_diagonal(&self.positions)
    }

    /// Sub-cloud with the given indices, in the given order.
    pub fn select(&self, indices: &[usize]) -> GaussianCloud {
        GaussianCloud {
            positions: indices.iter().map(|&i| self.positions[i]).collect(),
            opacities: indices.iter().map(|&i| self.opacities[i]).collect(),
            scales: self.scales.as_ref().map(|s| indices.iter().map(|&i| s[i]).collect()),
            rotations: self.rotations.as_ref().map(|r| indices.iter().map(|&i| r[i]).collect()),
            sh: self.sh.as_ref().map(|sh| ShCoeffs {
                per_gaussian: sh.per_gaussian,
                values: indices.iter().flat_map(|&i| sh.row(i)).copied().collect(),
            }),
        }
    }

    /// Same attributes, new means and opacities. Lengths must match.
    pub(crate) fn with_positions_opacities(&self, positions: Vec<Point3<f64>>, opacities: Vec<f64>) -> GaussianCloud {
        debug_assert_eq!(positions.len(), self.len());
        debug_assert_eq!(opacities.len(), self.len());
        GaussianCloud {
            positions,
            opacities,
            ..self.clone()
        }
    }
}

pub fn bbox_diagonal(points: &[Point3<f64>]) -> f64 {
    if points.is_empty() {
        return 0.0;
    }
    let mut lo = points[0].coords;
    let mut hi = lo;
    for p in points {
        lo = lo.inf(&p.coords);
        hi = hi.sup(&p.coords);
    }
    (hi - lo).norm()
}

/// `Σ = R·S·Sᵀ·Rᵀ` with `S = diag(scale)` and `R` the rotation of `rotation`.
pub fn covariance_from_params(scale: &Vector3<f64>, rotation: &Quaternion<f64>) -> Result<Matrix3<f64>> {
    if !scale.iter().chain(rotation.coords.iter()).all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite scale or rotation".into()));
    }
    if (rotation.norm() - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidInput(format!(
            "rotation quaternion has norm {}",
            rotation.norm()
        )));
    }
    let r = UnitQuaternion::new_unchecked(*rotation).to_rotation_matrix();
    let m = r.matrix() * Matrix3::from_diagonal(scale);
    let sigma = m * m.transpose();
    Ok((sigma + sigma.transpose()) * 0.5)
}

/// Unnormalized Gaussian density `exp(−½ dᵀΣ⁻¹d)`, `d = x − μ`.
pub fn evaluate_gaussian(x: &Point3<f64>, mu: &Point3<f64>, sigma: &Matrix3<f64>) -> Result<f64> {
    if !sigma.iter().all(|v| v.is_finite()) {
        return Err(Error::InvalidInput("non-finite covariance".into()));
    }
    let sym = (sigma + sigma.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lo = eig.eigenvalues.min();
    let hi = eig.eigenvalues.max();
    if lo <= 0.0 || hi / lo >= MAX_CONDITION {
        return Err(Error::SingularMatrix);
    }
    let d = x - mu;
    let chol = sym.cholesky().ok_or(Error::SingularMatrix)?;
    let q = d.dot(&chol.solve(&d));
    Ok((-0.5 * q).exp())
}

/// Applies `t` to every mean and composes it onto every stored orientation.
pub fn transform_cloud(cloud: &GaussianCloud, t: &RigidTransform) -> GaussianCloud {
    let positions = cloud.positions.iter().map(|p| t.apply(p)).collect();
    let q = t.unit_quaternion();
    GaussianCloud {
        positions,
        opacities: cloud.opacities.clone(),
        scales: cloud.scales.clone(),
        rotations: cloud.rotations.as_ref().map(|rs| rs.iter().map(|r| q * r).collect()),
        sh: cloud.sh.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_PI_2;

    fn quat_z(angle: f64) -> Quaternion<f64> {
        *UnitQuaternion::from_axis_angle(&Vector3::z_axis(), angle).quaternion()
    }

    #[test]
    fn covariance_identity_and_axis_scale() {
        let id = Quaternion::identity();
        let c = covariance_from_params(&Vector3::new(1.0, 1.0, 1.0), &id).unwrap();
        assert_relative_eq!(c, Matrix3::identity(), epsilon = 1e-15);
        let c = covariance_from_params(&Vector3::new(2.0, 1.0, 1.0), &id).unwrap();
        assert_relative_eq!(c, Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0)), epsilon = 1e-15);
    }

    #[test]
    fn covariance_quarter_turn_swaps_axes() {
        // Oracle: R = [[0,-1,0],[1,0,0],[0,0,1]], S = diag(2,1,1).
        // R·S = [[0,-1,0],[2,0,0],[0,0,1]]; (RS)(RS)ᵀ = diag(1,4,1).
        let c = covariance_from_params(&Vector3::new(2.0, 1.0, 1.0), &quat_z(FRAC_PI_2)).unwrap();
        assert_relative_eq!(c, Matrix3::from_diagonal(&Vector3::new(1.0, 4.0, 1.0)), epsilon = 1e-12);
    }

    #[test]
    fn covariance_rejects_bad_input() {
        let id = Quaternion::identity();
        assert!(covariance_from_params(&Vector3::new(f64::NAN, 1.0, 1.0), &id).is_err());
        assert!(covariance_from_params(&Vector3::new(1.0, 1.0, 1.0), &(id * 2.0)).is_err());
    }

    #[test]
    fn density_examples() {
        let mu = Point3::new(0.3, -1.0, 2.0);
        let sigma = Matrix3::new(2.0, 0.3, 0.0, 0.3, 1.0, 0.1, 0.0, 0.1, 0.5);
        assert_eq!(evaluate_gaussian(&mu, &mu, &sigma).unwrap(), 1.0);

        let g = evaluate_gaussian(&Point3::new(1.0, 0.0, 0.0), &Point3::origin(), &Matrix3::identity()).unwrap();
        assert_relative_eq!(g, (-0.5f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(g, 0.60653, epsilon = 1e-5);

        // dᵀΣ⁻¹d = 1/4 + 1 = 1.25 → exp(−0.625).
        let sigma = Matrix3::from_diagonal(&Vector3::new(4.0, 1.0, 1.0));
        let g = evaluate_gaussian(&Point3::new(1.0, 1.0, 0.0), &Point3::origin(), &sigma).unwrap();
        assert_relative_eq!(g, (-0.625f64).exp(), epsilon = 1e-15);
    }

    #[test]
    fn density_rejects_singular() {
        let sigma = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0));
        assert!(matches!(
            evaluate_gaussian(&Point3::origin(), &Point3::origin(), &sigma),
            Err(Error::SingularMatrix)
        ));
        let sigma = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 1e-13));
        assert!(matches!(
            evaluate_gaussian(&Point3::origin(), &Point3::origin(), &sigma),
            Err(Error::SingularMatrix)
        ));
    }

    #[test]
    fn cloud_rejects_bad_opacity_and_lengths() {
        assert!(GaussianCloud::new(vec![Point3::origin()], vec![1.5]).is_err());
        assert!(GaussianCloud::new(vec![Point3::origin()], vec![]).is_err());
        let c = GaussianCloud::new(vec![Point3::origin()], vec![0.5]).unwrap();
        assert!(c.clone().with_scales(vec![]).is_err());
        assert!(c
            .with_sh(ShCoeffs {
                per_gaussian: 3,
                values: vec![0.0; 2]
            })
            .is_err());
    }

    #[test]
    fn transform_rotates_orientation() {
        let c = GaussianCloud::new(vec![Point3::new(1.0, 0.0, 0.0)], vec![0.5])
            .unwrap()
            .with_scales(vec![Vector3::new(2f64.ln(), 0.0, 0.0)])
            .unwrap()
            .with_rotations(vec![UnitQuaternion::identity()])
            .unwrap();
        let t = RigidTransform::from_axis_angle(Vector3::z(), FRAC_PI_2, Vector3::zeros());
        let out = transform_cloud(&c, &t);
        assert_relative_eq!(out.positions()[0], Point3::new(0.0, 1.0, 0.0), epsilon = 1e-15);
        // Covariance follows the rotation: RΣRᵀ.
        let expected = t.rotation() * c.covariance(0).unwrap() * t.rotation().transpose();
        assert_relative_eq!(out.covariance(0).unwrap(), expected, epsilon = 1e-12);
        assert_eq!(out.opacities(), c.opacities());
    }

    fn arb_quat() -> impl Strategy<Value = UnitQuaternion<f64>> {
        (-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64)
            .prop_filter("nonzero", |(w, x, y, z)| w * w + x * x + y * y + z * z > 1e-3)
            .prop_map(|(w, x, y, z)| UnitQuaternion::from_quaternion(Quaternion::new(w, x, y, z)))
    }

    proptest! {
        #[test]
        fn covariance_is_sign_invariant(q in arb_quat(), s in prop::array::uniform3(0.01..3.0f64)) {
            let s = Vector3::from(s);
            let a = covariance_from_params(&s, q.quaternion()).unwrap();
            let b = covariance_from_params(&s, &(-q.into_inner())).unwrap();
            prop_assert!((a - b).amax() < 1e-12);
            prop_assert!((a - a.transpose()).amax() < 1e-12);
            prop_assert!(SymmetricEigen::new(a).eigenvalues.min() >= -1e-12);
        }

        #[test]
        fn density_is_rigid_invariant(
            q in arb_quat(),
            s in prop::array::uniform3(0.2..2.0f64),
            x in prop::array::uniform3(-2.0..2.0f64),
            t in prop::array::uniform3(-5.0..5.0f64),
        ) {
            let sigma = covariance_from_params(&Vector3::from(s), q.quaternion()).unwrap();
            let mu = Point3::new(0.1, -0.2, 0.3);
            let x = Point3::from(x);
            let motion = RigidTransform::from_axis_angle(Vector3::new(1.0, 2.0, -0.5), 0.7, Vector3::from(t));
            let r = motion.rotation();
            let g0 = evaluate_gaussian(&x, &mu, &sigma).unwrap();
            let g1 = evaluate_gaussian(&motion.apply(&x), &motion.apply(&mu), &(r * sigma * r.transpose())).unwrap();
            prop_assert!((g0 - g1).abs() < 1e-9);
            prop_assert!(g0 > 0.0 && g0 <= 1.0);
        }
    }
}
