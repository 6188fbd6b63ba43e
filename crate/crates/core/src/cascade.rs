//! Feature cascading: one SWC pass over the static and deformed Gaussians of
//! a scene, concatenated static block first.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::deformation::{apply_deformation, DeformationField};
use crate::gaussian::GaussianCloud;
use crate::swc::{opacity_mask, swc, KeypointSet, SwcParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CascadeMode {
    #[default]
    Both,
    #[serde(alias = "static")]
    StaticOnly,
    #[serde(alias = "deformed")]
    DeformedOnly,
}

impl CascadeMode {
    pub const ALL: [CascadeMode; 3] = [CascadeMode::StaticOnly, CascadeMode::DeformedOnly, CascadeMode::Both];

    pub fn label(self) -> &'static str {
        match self {
            CascadeMode::Both => "both",
            CascadeMode::StaticOnly => "static",
            CascadeMode::DeformedOnly => "deformed",
        }
    }
}

impl std::str::FromStr for CascadeMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(CascadeMode::Both),
            "static" | "static_only" => Ok(CascadeMode::StaticOnly),
            "deformed" | "deformed_only" => Ok(CascadeMode::DeformedOnly),
            other => Err(Error::Config(format!("unknown cascade mode `{other}`"))),
        }
    }
}

/// How the deformed cloud of a snapshot came to be.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum Provenance {
    /// Produced by `field` at the snapshot timestamp, then perturbed by
    /// isotropic position noise of the given standard deviation.
    Field { field: DeformationField, noise_std: f64 },
    /// Supplied pre-deformed, e.g. read from disk.
    External,
}

/// The canonical and time-deformed Gaussians of one scene.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneSnapshot {
    static_cloud: GaussianCloud,
    deformed_cloud: GaussianCloud,
    timestamp: f64,
    provenance: Provenance,
}

impl SceneSnapshot {
    pub fn new(
        static_cloud: GaussianCloud,
        deformed_cloud: GaussianCloud,
        timestamp: f64,
        provenance: Provenance,
    ) -> Result<Self> {
        if static_cloud.len() != deformed_cloud.len() {
            return Err(Error::InvalidInput(format!(
                "static cloud has {} gaussians, deformed has {}",
                static_cloud.len(),
                deformed_cloud.len()
            )));
        }
        Ok(Self {
            static_cloud,
            deformed_cloud,
            timestamp,
            provenance,
        })
    }

    /// Deforms `static_cloud` with `field` at `t`.
    pub fn from_field(static_cloud: GaussianCloud, field: &DeformationField, t: f64) -> Result<Self> {
        let deformed = apply_deformation(&static_cloud, field, t)?;
        Self::new(
            static_cloud,
            deformed,
            t,
            Provenance::Field {
                field: field.clone(),
                noise_std: 0.0,
            },
        )
    }

    pub fn static_cloud(&self) -> &GaussianCloud {
        &self.static_cloud
    }

    pub fn deformed_cloud(&self) -> &GaussianCloud {
        &self.deformed_cloud
    }

    pub fn timestamp(&self) -> f64 {
        self.timestamp
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn len(&self) -> usize {
        self.static_cloud.len()
    }

    pub fn is_empty(&self) -> bool {
        self.static_cloud.is_empty()
    }

    /// Which block a keypoint source index refers to.
    pub fn is_deformed_index(&self, index: usize) -> bool {
        index >= self.len()
    }

    /// Concatenated positions, opacities and masks for `mode`. Indices of the
    /// deformed block are offset by the cloud size in every mode.
    fn blocks(&self, epsilon: f64, mode: CascadeMode) -> (Vec<Point3<f64>>, Vec<f64>, Vec<bool>) {
        let n = self.len();
        let mut pos = Vec::with_capacity(2 * n);
        let mut op = Vec::with_capacity(2 * n);
        pos.extend_from_slice(self.static_cloud.positions());
        op.extend_from_slice(self.static_cloud.opacities());
        pos.extend_from_slice(self.deformed_cloud.positions());
        op.extend_from_slice(self.deformed_cloud.opacities());
        let mut mask = opacity_mask(&op, epsilon);
        match mode {
            CascadeMode::Both => {}
            CascadeMode::StaticOnly => mask[n..].fill(false),
            CascadeMode::DeformedOnly => mask[..n].fill(false),
        }
        (pos, op, mask)
    }

    /// Number of Gaussians passing the opacity mask under `mode`.
    pub fn masked_count(&self, epsilon: f64, mode: CascadeMode) -> usize {
        self.blocks(epsilon, mode).2.iter().filter(|&&m| m).count()
    }
}

/// `X* = SWC([X, X′], [o, o′], [M, M′], N, δ)`, restricted to one block in
/// the ablation modes.
pub fn cascade_extract(snapshot: &SceneSnapshot, params: &SwcParams, mode: CascadeMode) -> Result<KeypointSet> {
    let (pos, op, mask) = snapshot.blocks(params.opacity_threshold, mode);
    swc(&pos, &op, &mask, params)
}

/// Every opacity-masked point of the selected blocks, without clustering.
pub fn bypass_extract(snapshot: &SceneSnapshot, epsilon: f64, mode: CascadeMode) -> Result<KeypointSet> {
    let (pos, _, mask) = snapshot.blocks(epsilon, mode);
    let idx: Vec<usize> = (0..pos.len()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::EmptySelection);
    }
    Ok(KeypointSet::from_indices(&pos, idx))
}
