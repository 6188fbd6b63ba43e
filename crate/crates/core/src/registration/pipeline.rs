use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cascade::{bypass_extract, cascade_extract, CascadeMode, SceneSnapshot};
use crate::error::Stage;
use crate::exec::Execution;
use crate::registration::icp::{icp_refine, IcpParams};
use crate::registration::ransac::{ransac_global, RansacParams, ResolvedScales};
use crate::swc::{KeypointSet, SwcParams};
use crate::transform::RigidTransform;
use crate::{Error, Result};

/// How keypoints are pulled out of a scene.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Extractor {
    Swc(SwcParams),
    /// Every opacity-masked Gaussian goes straight to registration.
    MaskOnly {
        opacity_threshold: f64,
    },
}

impl Extractor {
    /// `clusters == 0` selects [`Extractor::MaskOnly`] with the same threshold.
    pub fn from_clusters(clusters: usize, swc: SwcParams) -> Self {
        if clusters == 0 {
            Extractor::MaskOnly {
                opacity_threshold: swc.opacity_threshold,
            }
        } else {
            Extractor::Swc(SwcParams {
                num_clusters: clusters,
                ..swc
            })
        }
    }

    pub fn extract(&self, scene: &SceneSnapshot, mode: CascadeMode) -> Result<KeypointSet> {
        match self {
            Extractor::Swc(p) => cascade_extract(scene, p, mode),
            Extractor::MaskOnly { opacity_threshold } => bypass_extract(scene, *opacity_threshold, mode),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    pub extractor: Extractor,
    pub ransac: RansacParams,
    pub icp: IcpParams,
    pub mode: CascadeMode,
}

impl Default for PipelineParams {
    fn default() -> Self {
        Self {
            extractor: Extractor::Swc(SwcParams::default()),
            ransac: RansacParams::default(),
            icp: IcpParams::default(),
            mode: CascadeMode::Both,
        }
    }
}

impl PipelineParams {
    pub fn with_execution(mut self, exec: Execution) -> Self {
        if let Extractor::Swc(p) = &mut self.extractor {
            p.execution = exec;
        }
        self.ransac.execution = exec;
        self.icp.execution = exec;
        self
    }

    /// Re-seeds the clustering and RANSAC streams.
    pub fn with_seed(mut self, seed: u64) -> Self {
        if let Extractor::Swc(p) = &mut self.extractor {
            p.seed = crate::seed::derive(seed, 1);
        }
        self.ransac.seed = crate::seed::derive(seed, 2);
        self
    }
}

impl PipelineParams {
    /// Pins every automatic distance to the values `report` resolved, so a
    /// second run uses identical RANSAC and ICP settings.
    pub fn with_scales_of(mut self, report: &RegistrationReport) -> Self {
        self.ransac.inlier_distance = Some(report.scales.inlier_distance);
        self.ransac.descriptor_radius = Some(report.scales.descriptor_radius);
        self.icp.correspondence_distance = Some(report.icp_distance);
        self
    }
}

/// Wall-clock seconds per stage.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub swc_s: f64,
    pub ransac_s: f64,
    pub icp_s: f64,
    pub total_s: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegistrationReport {
    /// Maps scene-A coordinates to scene-B coordinates.
    pub estimate: RigidTransform,
    pub coarse_estimate: RigidTransform,
    /// False when RANSAC found no hypothesis with enough inliers and ICP
    /// started from its best effort.
    pub coarse_converged: bool,
    pub inlier_count: usize,
    pub final_rmse: f64,
    pub keypoints_a: usize,
    pub keypoints_b: usize,
    pub correspondences: usize,
    pub ransac_iterations: usize,
    pub icp_iterations: usize,
    pub scales: ResolvedScales,
    pub icp_distance: f64,
    pub timings: StageTimings,
}

/// Extracts keypoints from both scenes, aligns them with RANSAC and refines
/// with ICP.
pub fn register_scenes(a: &SceneSnapshot, b: &SceneSnapshot, params: &PipelineParams) -> Result<RegistrationReport> {
    let start = Instant::now();
    let ka = params
        .extractor
        .extract(a, params.mode)
        .map_err(|e| e.at(Stage::Extraction))?;
    let kb = params
        .extractor
        .extract(b, params.mode)
        .map_err(|e| e.at(Stage::Extraction))?;
    let swc_s = start.elapsed().as_secs_f64();

    let t = Instant::now();
    let (coarse, converged, inliers, iterations, correspondences, scales) =
        match ransac_global(&ka, &kb, &params.ransac) {
            Ok(o) => (
                o.transform,
                true,
                o.inlier_count,
                o.iterations,
                o.correspondences.len(),
                o.scales,
            ),
            Err(Error::RegistrationFailure { best, inliers, .. }) => {
                let scales = params.ransac.resolve(&kb).map_err(|e| e.at(Stage::Ransac))?;
                (best, false, inliers, params.ransac.max_iterations, 0, scales)
            }
            Err(e) => return Err(e.at(Stage::Ransac)),
        };
    let ransac_s = t.elapsed().as_secs_f64();

    let icp_distance = params.icp.resolve_distance(&kb).map_err(|e| e.at(Stage::Icp))?;
    let t = Instant::now();
    let refined = icp_refine(&ka, &kb, &coarse, &params.icp).map_err(|e| e.at(Stage::Icp))?;
    let icp_s = t.elapsed().as_secs_f64();

    Ok(RegistrationReport {
        estimate: refined.transform,
        coarse_estimate: coarse,
        coarse_converged: converged,
        inlier_count: inliers,
        final_rmse: refined.rmse,
        keypoints_a: ka.len(),
        keypoints_b: kb.len(),
        correspondences,
        ransac_iterations: iterations,
        icp_iterations: refined.iterations,
        scales,
        icp_distance,
        timings: StageTimings {
            swc_s,
            ransac_s,
            icp_s,
            total_s: start.elapsed().as_secs_f64(),
        },
    })
}
