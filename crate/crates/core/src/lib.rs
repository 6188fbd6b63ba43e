//! Rigid registration of dynamic Gaussian-splat scenes.
//!
//! The pipeline reduces each scene to a compact keypoint set by masking
//! low-opacity Gaussians and keeping the most opaque fraction of every
//! spatial cluster, over the concatenation of the static and deformed
//! Gaussian means. The two keypoint sets are then aligned by
//! descriptor-matched RANSAC followed by point-to-point ICP.
//!
//! ```no_run
//! use splatreg::prelude::*;
//!
//! let template = SyntheticPairTemplate::exact_recovery();
//! let pair = make_pair(&template.instantiate(7)?)?;
//! let params = PipelineParams::default();
//! let report = register_scenes(&pair.a, &pair.b, &params)?;
//! let err = pose_error(&report.estimate, &pair.ground_truth)?;
//! println!("{:.3} deg, {:.4} units", err.rotation_error_deg, err.translation_error);
//! # Ok::<(), splatreg::Error>(())
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cascade;
pub mod deformation;
pub mod error;
pub mod exec;
pub mod gaussian;
pub mod io;
pub mod kmeans;
pub mod metrics;
pub mod registration;
pub mod seed;
pub mod spatial;
pub mod swc;
pub mod synth;
pub mod transform;

pub use error::{Error, Result};

pub mod prelude {
    pub use crate::cascade::{bypass_extract, cascade_extract, CascadeMode, SceneSnapshot};
    pub use crate::deformation::{DeformationField, DeformationKind};
    pub use crate::exec::Execution;
    pub use crate::gaussian::{covariance_from_params, evaluate_gaussian, GaussianCloud};
    pub use crate::metrics::{pose_error, rotation_error_deg, translation_error, PoseError};
    pub use crate::registration::{
        estimate_rigid, icp_refine, ransac_global, register_scenes, Extractor, IcpParams, PipelineParams, RansacParams,
        RegistrationReport,
    };
    pub use crate::swc::{opacity_mask, swc, KeypointSet, SwcParams};
    pub use crate::synth::{generate_cloud, make_pair, PairSpec, SceneSpec, SyntheticPairTemplate};
    pub use crate::transform::RigidTransform;
    pub use crate::Error;
}
