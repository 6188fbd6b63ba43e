//! Synthetic Gaussian scenes and scene pairs with known ground truth.

use std::f64::consts::TAU;

use nalgebra::{Point3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, Normal, UnitSphere};
use serde::{Deserialize, Serialize};

use crate::cascade::{Provenance, SceneSnapshot};
use crate::deformation::{apply_deformation, DeformationField};
use crate::gaussian::{bbox_diagonal, transform_cloud, GaussianCloud};
use crate::seed::derive;
use crate::transform::RigidTransform;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub center: [f64; 3],
    pub std: f64,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Geometry {
    /// Isotropic normal blobs picked by weight.
    BlobMixture { components: Vec<Blob> },
    /// Undulating sheet `z = a·sin(2πx/λ)·cos(2πy/λ) + bumps + noise` over
    /// `[−w/2, w/2] × [−h/2, h/2]`. Bump centres and heights come from the
    /// scene seed so the surface has no symmetry.
    TissueSheet {
        extent: [f64; 2],
        amplitude: f64,
        wavelength: f64,
        bumps: usize,
        bump_height: f64,
        bump_width: f64,
        thickness: f64,
    },
    /// Bent tube around the centreline `(s, bend·s², 0)`, `s ∈ [−L/2, L/2]`.
    Tube {
        radius: f64,
        length: f64,
        bend: f64,
        thickness: f64,
    },
}

impl Geometry {
    pub fn tissue_sheet() -> Self {
        Geometry::TissueSheet {
            extent: [1.0, 0.7],
            amplitude: 0.04,
            wavelength: 0.45,
            bumps: 14,
            bump_height: 0.06,
            bump_width: 0.07,
            thickness: 0.002,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum OpacityDistribution {
    Uniform { low: f64, high: f64 },
    Beta { a: f64, b: f64 },
}

impl Default for OpacityDistribution {
    fn default() -> Self {
        OpacityDistribution::Beta { a: 5.0, b: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub num_gaussians: usize,
    pub geometry: Geometry,
    #[serde(default)]
    pub opacity: OpacityDistribution,
    #[serde(default)]
    pub seed: u64,
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.num_gaussians == 0 {
            return Err(Error::DegenerateSpec("num_gaussians must be at least 1".into()));
        }
        match self.opacity {
            OpacityDistribution::Beta { a, b } if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) => {
                return Err(Error::DegenerateSpec(format!(
                    "beta parameters must be positive, got ({a}, {b})"
                )));
            }
            OpacityDistribution::Uniform { low, high } if !(0.0 <= low && low <= high && high <= 1.0) => {
                return Err(Error::DegenerateSpec(format!(
                    "uniform opacity range [{low}, {high}] not inside [0, 1]"
                )));
            }
            _ => {}
        }
        let bad = |what: &str| Err(Error::DegenerateSpec(format!("{what} must be finite and non-negative")));
        match &self.geometry {
            Geometry::BlobMixture { components } => {
                if components.is_empty() {
                    return Err(Error::DegenerateSpec(
                        "blob mixture needs at least one component".into(),
                    ));
                }
                if components.iter().any(|c| !(c.std >= 0.0 && c.weight >= 0.0)) {
                    return bad("blob std and weight");
                }
                if components.iter().map(|c| c.weight).sum::<f64>() <= 0.0 {
                    return Err(Error::DegenerateSpec("blob weights sum to zero".into()));
                }
            }
            Geometry::TissueSheet {
                extent,
                wavelength,
                bump_width,
                thickness,
                ..
            } => {
                if !(extent[0] > 0.0 && extent[1] > 0.0 && *wavelength > 0.0 && *bump_width > 0.0) {
                    return Err(Error::DegenerateSpec(
                        "sheet extent, wavelength and bump width must be positive".into(),
                    ));
                }
                if !(*thickness >= 0.0) {
                    return bad("sheet thickness");
                }
            }
            Geometry::Tube {
                radius,
                length,
                thickness,
                ..
            } => {
                if !(*radius > 0.0 && *length > 0.0) {
                    return Err(Error::DegenerateSpec("tube radius and length must be positive".into()));
                }
                if !(*thickness >= 0.0) {
                    return bad("tube thickness");
                }
            }
        }
        Ok(())
    }
}

fn normal(std: f64) -> Normal<f64> {
    Normal::new(0.0, std).expect("validated std")
}

fn sample_positions(spec: &SceneSpec, rng: &mut ChaCha8Rng) -> Vec<Point3<f64>> {
    let n = spec.num_gaussians;
    match &spec.geometry {
        Geometry::BlobMixture { components } => {
            let total: f64 = components.iter().map(|c| c.weight).sum();
            (0..n)
                .map(|_| {
                    let mut u = rng.random::<f64>() * total;
                    let mut pick = &components[components.len() - 1];
                    for c in components {
                        if u < c.weight {
                            pick = c;
                            break;
                        }
                        u -= c.weight;
                    }
                    let d = normal(pick.std);
                    Point3::new(
                        pick.center[0] + d.sample(rng),
                        pick.center[1] + d.sample(rng),
                        pick.center[2] + d.sample(rng),
                    )
                })
                .collect()
        }
        Geometry::TissueSheet {
            extent,
            amplitude,
            wavelength,
            bumps,
            bump_height,
            bump_width,
            thickness,
        } => {
            let [w, h] = *extent;
            let centers: Vec<(f64, f64, f64)> = (0..*bumps)
                .map(|_| {
                    (
                        rng.random_range(-0.5..0.5) * w,
                        rng.random_range(-0.5..0.5) * h,
                        bump_height * rng.random_range(0.4..1.0) * if rng.random::<bool>() { 1.0 } else { -1.0 },
                    )
                })
                .collect();
            let inv = 1.0 / (2.0 * bump_width * bump_width);
            let noise = normal(*thickness);
            (0..n)
                .map(|_| {
                    let x = (rng.random::<f64>() - 0.5) * w;
                    let y = (rng.random::<f64>() - 0.5) * h;
                    let mut z = amplitude * (TAU * x / wavelength).sin() * (TAU * y / wavelength).cos();
                    for &(cx, cy, ch) in &centers {
                        z += ch * (-((x - cx).powi(2) + (y - cy).powi(2)) * inv).exp();
                    }
                    Point3::new(x, y, z + noise.sample(rng))
                })
                .collect()
        }
        Geometry::Tube {
            radius,
            length,
            bend,
            thickness,
        } => {
            let noise = normal(*thickness);
            (0..n)
                .map(|_| {
                    let s = (rng.random::<f64>() - 0.5) * length;
                    let theta = rng.random::<f64>() * TAU;
                    let r = radius + noise.sample(rng);
                    let tangent = Vector3::new(1.0, 2.0 * bend * s, 0.0).normalize();
                    let n1 = Vector3::new(-tangent.y, tangent.x, 0.0);
                    let n2 = Vector3::z();
                    let c = Vector3::new(s, bend * s * s, 0.0);
                    Point3::from(c + r * (theta.cos() * n1 + theta.sin() * n2))
                })
                .collect()
        }
    }
}

/// Samples a cloud from `spec`. Besides means and opacities, each Gaussian
/// gets a random orientation and a log-scale near 0.4% of the diagonal.
pub fn generate_cloud(spec: &SceneSpec) -> Result<GaussianCloud> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let positions = sample_positions(spec, &mut rng);
    let opacities: Vec<f64> = match spec.opacity {
        OpacityDistribution::Uniform { low, high } => (0..positions.len())
            .map(|_| low + (high - low) * rng.random::<f64>())
            .collect(),
        OpacityDistribution::Beta { a, b } => {
            let beta = Beta::new(a, b).map_err(|e| Error::DegenerateSpec(e.to_string()))?;
            (0..positions.len()).map(|_| beta.sample(&mut rng)).collect()
        }
    };
    let base_scale = 0.004 * bbox_diagonal(&positions).max(1e-6);
    let scales = (0..positions.len())
        .map(|_| Vector3::from_fn(|_, _| (base_scale * rng.random_range(0.5..1.5)).ln()))
        .collect();
    let rotations = (0..positions.len()).map(|_| random_rotation(&mut rng)).collect();
    GaussianCloud::new(positions, opacities)?
        .with_scales(scales)?
        .with_rotations(rotations)
}

fn random_axis(rng: &mut ChaCha8Rng) -> Vector3<f64> {
    Vector3::from(UnitSphere.sample(rng))
}

fn random_rotation(rng: &mut ChaCha8Rng) -> UnitQuaternion<f64> {
    UnitQuaternion::from_axis_angle(
        &nalgebra::Unit::new_unchecked(random_axis(rng)),
        rng.random::<f64>() * TAU,
    )
}

/// Uniform random axis, angle uniform in `[0, max_rotation_deg]`,
/// translation in a uniform random direction with length uniform in
/// `[0, max_translation]`.
pub fn random_rigid(seed: u64, max_rotation_deg: f64, max_translation: f64) -> RigidTransform {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let axis = random_axis(&mut rng);
    let angle = rng.random::<f64>() * max_rotation_deg.to_radians();
    let dir = random_axis(&mut rng);
    let len = rng.random::<f64>() * max_translation;
    RigidTransform::from_axis_angle(axis, angle, dir * len)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSpec {
    pub base: SceneSpec,
    pub ground_truth: RigidTransform,
    /// Fraction of the base Gaussians kept in scene B.
    pub overlap_fraction: f64,
    /// Position noise on scene B, as a fraction of the base bbox diagonal.
    pub noise_sigma: f64,
    pub deformation_a: DeformationField,
    /// Expressed in the base frame; applied to B after the ground-truth motion.
    pub deformation_b: DeformationField,
    pub t_a: f64,
    pub t_b: f64,
    /// Drives the crop direction and the noise.
    #[serde(default)]
    pub seed: u64,
}

impl PairSpec {
    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if !(self.overlap_fraction > 0.0 && self.overlap_fraction <= 1.0) {
            return Err(Error::DegenerateSpec(format!(
                "overlap_fraction must be in (0, 1], got {}",
                self.overlap_fraction
            )));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(Error::DegenerateSpec(format!(
                "noise_sigma must be non-negative, got {}",
                self.noise_sigma
            )));
        }
        self.deformation_a.validate()?;
        self.deformation_b.validate()?;
        self.deformation_a.check_time(self.t_a)?;
        self.deformation_b.check_time(self.t_b)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenePair {
    pub a: SceneSnapshot,
    pub b: SceneSnapshot,
    /// Maps scene-A coordinates to scene-B coordinates.
    pub ground_truth: RigidTransform,
    /// Base-cloud index of every Gaussian in B, in B's order.
    pub b_indices: Vec<usize>,
}

fn add_noise(cloud: &GaussianCloud, std: f64, rng: &mut ChaCha8Rng) -> GaussianCloud {
    if std == 0.0 {
        return cloud.clone();
    }
    let d = normal(std);
    let pos = cloud
        .positions()
        .iter()
        .map(|p| p + Vector3::new(d.sample(rng), d.sample(rng), d.sample(rng)))
        .collect();
    cloud.with_positions_opacities(pos, cloud.opacities().to_vec())
}

/// Indices of the `keep` base points with the lowest projection on `dir`.
fn plane_sweep(points: &[Point3<f64>], dir: &Vector3<f64>, keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        points[i]
            .coords
            .dot(dir)
            .total_cmp(&points[j].coords.dot(dir))
            .then(i.cmp(&j))
    });
    order.truncate(keep);
    order.sort_unstable();
    order
}

/// Builds scene A from the full base cloud and scene B from a plane-swept
/// crop of it moved by the ground truth. Both blocks of B receive
/// independent position noise.
pub fn make_pair(spec: &PairSpec) -> Result<ScenePair> {
    spec.validate()?;
    let base = generate_cloud(&spec.base)?;
    let diag = base.bbox_diagonal();
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    let keep = (spec.overlap_fraction * base.len() as f64).round() as usize;
    if keep == 0 {
        return Err(Error::DegenerateSpec("overlap crop leaves no Gaussians".into()));
    }
    let dir = random_axis(&mut rng);
    let b_indices = if keep == base.len() {
        (0..base.len()).collect()
    } else {
        plane_sweep(base.positions(), &dir, keep)
    };

    let a = SceneSnapshot::from_field(base.clone(), &spec.deformation_a, spec.t_a)?;

    let moved = transform_cloud(&base.select(&b_indices), &spec.ground_truth);
    let field_b = spec.deformation_b.moved_by(&spec.ground_truth);
    let deformed = apply_deformation(&moved, &field_b, spec.t_b)?;
    let std = spec.noise_sigma * diag;
    let static_b = add_noise(&moved, std, &mut rng);
    let deformed_b = add_noise(&deformed, std, &mut rng);
    let b = SceneSnapshot::new(
        static_b,
        deformed_b,
        spec.t_b,
        Provenance::Field {
            field: field_b,
            noise_std: std,
        },
    )?;
    Ok(ScenePair {
        a,
        b,
        ground_truth: spec.ground_truth,
        b_indices,
    })
}

/// A family of pair specs differing only by seed. Sizes that depend on
/// the scene scale are fractions of the base bbox diagonal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticPairTemplate {
    pub base: SceneSpec,
    pub max_rotation_deg: f64,
    pub max_translation_frac: f64,
    pub overlap_fraction: f64,
    pub noise_sigma: f64,
    /// Peak sinusoidal displacement; zero means identity deformation.
    pub deformation_frac: f64,
    pub deformation_wavelength_frac: f64,
    #[serde(default)]
    pub opacity_delta: f64,
    pub t_a: f64,
    pub t_b: f64,
}

impl SyntheticPairTemplate {
    /// Full overlap, no noise, no deformation.
    pub fn exact_recovery() -> Self {
        Self {
            base: SceneSpec {
                num_gaussians: 5000,
                geometry: Geometry::tissue_sheet(),
                opacity: OpacityDistribution::default(),
                seed: 0,
            },
            max_rotation_deg: 30.0,
            max_translation_frac: 0.2,
            overlap_fraction: 1.0,
            noise_sigma: 0.0,
            deformation_frac: 0.0,
            deformation_wavelength_frac: 0.5,
            opacity_delta: 0.0,
            t_a: 0.25,
            t_b: 0.25,
        }
    }

    /// 60% overlap, 0.5% noise, 2% sinusoidal deformation.
    pub fn robust() -> Self {
        Self {
            overlap_fraction: 0.6,
            noise_sigma: 0.005,
            deformation_frac: 0.02,
            opacity_delta: 0.1,
            ..Self::exact_recovery()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = [
            self.max_rotation_deg,
            self.max_translation_frac,
            self.deformation_frac,
            self.deformation_wavelength_frac,
        ]
        .iter()
        .all(|v| v.is_finite() && *v >= 0.0);
        if !ok || !(self.deformation_wavelength_frac > 0.0) {
            return Err(Error::DegenerateSpec(
                "template magnitudes must be finite and non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Pair spec for trial `seed`; the base cloud, ground truth and
    /// crop/noise streams each get their own derived seed.
    pub fn instantiate(&self, seed: u64) -> Result<PairSpec> {
        self.validate()?;
        let base = SceneSpec {
            seed: derive(seed, 0),
            ..self.base.clone()
        };
        let diag = generate_cloud(&base)?.bbox_diagonal();
        let ground_truth = random_rigid(derive(seed, 1), self.max_rotation_deg, self.max_translation_frac * diag);
        let field = if self.deformation_frac > 0.0 {
            DeformationField::sinusoidal(self.deformation_frac * diag, self.deformation_wavelength_frac * diag)
                .with_opacity_delta(self.opacity_delta)
        } else {
            DeformationField::identity()
        };
        Ok(PairSpec {
            base,
            ground_truth,
            overlap_fraction: self.overlap_fraction,
            noise_sigma: self.noise_sigma,
            deformation_a: field.clone(),
            deformation_b: field,
            t_a: self.t_a,
            t_b: self.t_b,
            seed: derive(seed, 2),
        })
    }
}
