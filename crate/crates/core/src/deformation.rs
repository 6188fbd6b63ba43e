//! Analytic deformation fields `ΔG = F(G, t)`.
//!
//! A field is defined in its own body frame. `frame` maps body coordinates to
//! the world coordinates of the cloud it is applied to, so the same field can
//! deform a rigidly moved copy of a scene consistently.

use std::f64::consts::TAU;

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::gaussian::GaussianCloud;
use crate::transform::RigidTransform;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DeformationKind {
    Identity,
    /// Time-independent displacement `T(p) − p`.
    Rigid {
        transform: RigidTransform,
    },
    /// Sum of Gaussian radial basis bumps, modulated in time by
    /// `(1 − cos 2πνt) / 2`.
    RbfDisplacement {
        centers: Vec<Vector3<f64>>,
        amplitudes: Vec<Vector3<f64>>,
        bandwidth: f64,
        temporal_frequency: f64,
    },
    /// Travelling wave: `d_x = A_x sin(2π(κ p_y + νt) + φ)`, and cyclically
    /// `d_y` from `p_z`, `d_z` from `p_x`. `|d| ≤ |A|`.
    Sinusoidal {
        amplitude: Vector3<f64>,
        wavenumber: f64,
        temporal_frequency: f64,
        phase: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeformationField {
    #[serde(flatten)]
    pub kind: DeformationKind,
    #[serde(default)]
    pub opacity_delta_scale: f64,
    pub time_domain: [f64; 2],
    #[serde(default)]
    pub frame: RigidTransform,
}

impl DeformationField {
    pub fn identity() -> Self {
        Self::new(DeformationKind::Identity)
    }

    /// Field over the unit time domain `[0, 1]` with no opacity change.
    pub fn new(kind: DeformationKind) -> Self {
        Self {
            kind,
            opacity_delta_scale: 0.0,
            time_domain: [0.0, 1.0],
            frame: RigidTransform::identity(),
        }
    }

    /// Sinusoidal field whose displacement magnitude never exceeds `max_displacement`.
    pub fn sinusoidal(max_displacement: f64, wavelength: f64) -> Self {
        let a = max_displacement / 3f64.sqrt();
        Self::new(DeformationKind::Sinusoidal {
            amplitude: Vector3::new(a, a, a),
            wavenumber: 1.0 / wavelength,
            temporal_frequency: 1.0,
            phase: 0.0,
        })
    }

    pub fn with_opacity_delta(mut self, scale: f64) -> Self {
        self.opacity_delta_scale = scale;
        self
    }

    /// The same field re-expressed for a cloud moved by `motion`.
    pub fn moved_by(&self, motion: &RigidTransform) -> Self {
        Self {
            frame: motion.compose(&self.frame),
            ..self.clone()
        }
    }

    pub fn midpoint(&self) -> f64 {
        0.5 * (self.time_domain[0] + self.time_domain[1])
    }

    pub fn check_time(&self, t: f64) -> Result<()> {
        let [min, max] = self.time_domain;
        if !(t >= min && t <= max) {
            return Err(Error::Domain { t, min, max });
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let [a, b] = self.time_domain;
        if !(a.is_finite() && b.is_finite() && a <= b) {
            return Err(Error::InvalidInput(format!("bad time domain [{a}, {b}]")));
        }
        if !self.opacity_delta_scale.is_finite() {
            return Err(Error::InvalidInput("non-finite opacity delta scale".into()));
        }
        if let DeformationKind::RbfDisplacement {
            centers,
            amplitudes,
            bandwidth,
            ..
        } = &self.kind
        {
            if centers.len() != amplitudes.len() || !(*bandwidth > 0.0) {
                return Err(Error::InvalidInput(
                    "rbf field needs matching centers/amplitudes and positive bandwidth".into(),
                ));
            }
        }
        Ok(())
    }

    /// World-frame displacement at `p`, time `t`. Does not check the domain.
    pub fn displacement(&self, p: &Point3<f64>, t: f64) -> Vector3<f64> {
        if matches!(self.kind, DeformationKind::Identity) {
            return Vector3::zeros();
        }
        let q = self.frame.inverse().apply(p);
        self.frame.apply_vector(&self.local_displacement(&q, t))
    }

    /// Opacity change at `p`, time `t`. Does not check the domain.
    pub fn opacity_delta(&self, p: &Point3<f64>, t: f64) -> f64 {
        if self.opacity_delta_scale == 0.0 {
            return 0.0;
        }
        let q = self.frame.inverse().apply(p);
        self.opacity_delta_scale * self.modulation(&q, t)
    }

    fn local_displacement(&self, q: &Point3<f64>, t: f64) -> Vector3<f64> {
        match &self.kind {
            DeformationKind::Identity => Vector3::zeros(),
            DeformationKind::Rigid { transform } => transform.apply(q) - q,
            DeformationKind::RbfDisplacement {
                centers,
                amplitudes,
                bandwidth,
                temporal_frequency,
            } => {
                let envelope = 0.5 * (1.0 - (TAU * temporal_frequency * t).cos());
                let inv = 1.0 / (2.0 * bandwidth * bandwidth);
                centers
                    .iter()
                    .zip(amplitudes)
                    .map(|(c, a)| a * (-(q.coords - c).norm_squared() * inv).exp())
                    .sum::<Vector3<f64>>()
                    * envelope
            }
            DeformationKind::Sinusoidal {
                amplitude,
                wavenumber,
                temporal_frequency,
                phase,
            } => {
                let wave = |x: f64| (TAU * (wavenumber * x + temporal_frequency * t) + phase).sin();
                Vector3::new(
                    amplitude.x * wave(q.y),
                    amplitude.y * wave(q.z),
                    amplitude.z * wave(q.x),
                )
            }
        }
    }

    /// Opacity modulation in [−1, 1].
    fn modulation(&self, q: &Point3<f64>, t: f64) -> f64 {
        match &self.kind {
            DeformationKind::Identity | DeformationKind::Rigid { .. } => 0.0,
            DeformationKind::RbfDisplacement {
                centers,
                bandwidth,
                temporal_frequency,
                ..
            } => {
                let inv = 1.0 / (2.0 * bandwidth * bandwidth);
                let w: f64 = centers
                    .iter()
                    .map(|c| (-(q.coords - c).norm_squared() * inv).exp())
                    .sum();
                (w.min(1.0) * (TAU * temporal_frequency * t).sin()).clamp(-1.0, 1.0)
            }
            DeformationKind::Sinusoidal {
                wavenumber,
                temporal_frequency,
                phase,
                ..
            } => (TAU * (wavenumber * (q.x + q.y + q.z) + temporal_frequency * t) + phase).sin(),
        }
    }
}

/// `G′ = G + F(G, t)`: displaces means and shifts opacities, clamped to [0, 1].
pub fn apply_deformation(cloud: &GaussianCloud, field: &DeformationField, t: f64) -> Result<GaussianCloud> {
    field.validate()?;
    field.check_time(t)?;
    if matches!(field.kind, DeformationKind::Identity) {
        return Ok(cloud.clone());
    }
    let positions = cloud.positions().iter().map(|p| p + field.displacement(p, t)).collect();
    let opacities = cloud
        .positions()
        .iter()
        .zip(cloud.opacities())
        .map(|(p, o)| (o + field.opacity_delta(p, t)).clamp(0.0, 1.0))
        .collect();
    Ok(cloud.with_positions_opacities(positions, opacities))
}
