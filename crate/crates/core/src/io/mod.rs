//! File formats, run configuration and the trial harness.

pub mod config;
pub mod harness;
pub mod ply;
pub mod report;

pub use config::{load_ground_truth, LoadedPair, Preset, RunConfig, ScenePaths, SceneSource};
pub use harness::{
    run_ablation, run_bench, run_registration, trial_seeds, AblationCell, BenchReport, Sweep, CLUSTER_SWEEP,
};
pub use ply::{load_ply_gaussians, parse_ply, save_ply, write_ply, PlyFormat, PlyOptions, PlyScalar};
pub use report::{csv_string, write_csv, AblationRow, RunReport, RunSummary, TrialRecord, TrialResult, CSV_HEADER};
