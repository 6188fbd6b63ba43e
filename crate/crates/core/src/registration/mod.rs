//! Rigid registration of keypoint sets: closed-form fit, descriptors,
//! RANSAC, ICP and the end-to-end scene pipeline.

pub mod fpfh;
pub mod icp;
pub mod pipeline;
pub mod ransac;
pub mod rigid;

pub use icp::{icp_refine, IcpOutcome, IcpParams};
pub use pipeline::{register_scenes, Extractor, PipelineParams, RegistrationReport, StageTimings};
pub use ransac::{ransac_global, RansacOutcome, RansacParams, ResolvedScales};
pub use rigid::estimate_rigid;
