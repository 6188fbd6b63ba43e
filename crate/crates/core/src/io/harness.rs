//! Repeated trials, ablation sweeps and the SWC-versus-bypass timing run.

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeMode;
use crate::io::config::{LoadedPair, RunConfig};
use crate::io::report::{AblationRow, RunReport, RunSummary, TrialRecord, TrialResult, SCHEMA_VERSION};
use crate::metrics::{mean, pose_error, PoseError};
use crate::registration::{register_scenes, Extractor, RegistrationReport};
use crate::seed::derive;
use crate::Result;

/// Cluster counts of the clusters sweep; 0 bypasses clustering.
pub const CLUSTER_SWEEP: [usize; 6] = [0, 5, 10, 15, 20, 25];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sweep {
    Clusters,
    Cascade,
}

impl std::str::FromStr for Sweep {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "clusters" => Ok(Sweep::Clusters),
            "cascade" => Ok(Sweep::Cascade),
            other => Err(crate::Error::Config(format!(
                "unknown sweep `{other}` (expected clusters or cascade)"
            ))),
        }
    }
}

/// Trial seeds of a run, in trial order.
pub fn trial_seeds(cfg: &RunConfig) -> Vec<u64> {
    (0..cfg.trials as u64).map(|i| derive(cfg.seed, i)).collect()
}

fn scaled_error(report: &RegistrationReport, pair: &LoadedPair, units_scale: f64) -> Result<Option<PoseError>> {
    pair.ground_truth
        .as_ref()
        .map(|gt| {
            pose_error(&report.estimate, gt).map(|mut e| {
                e.translation_error *= units_scale;
                e
            })
        })
        .transpose()
}

/// Runs every trial of `cfg` in order. Trial failures are recorded, not
/// propagated; configuration and loading errors are.
pub fn run_registration(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let shared = if cfg.source.is_file_based() {
        Some(cfg.source.pair(0)?)
    } else {
        None
    };
    let mut records = Vec::with_capacity(cfg.trials);
    for (trial, seed) in trial_seeds(cfg).into_iter().enumerate() {
        let pair = match &shared {
            Some(p) => p.clone(),
            None => cfg.source.pair(seed)?,
        };
        let outcome = register_scenes(&pair.a, &pair.b, &cfg.pipeline(seed))
            .and_then(|r| Ok(TrialResult::new(&r, scaled_error(&r, &pair, cfg.units_scale)?)));
        records.push(match outcome {
            Ok(result) => TrialRecord {
                trial,
                seed,
                result: Some(result),
                failure: None,
            },
            Err(e) => TrialRecord {
                trial,
                seed,
                result: None,
                failure: Some(e.to_string()),
            },
        });
    }
    Ok(assemble(cfg, records))
}

fn assemble(cfg: &RunConfig, trials: Vec<TrialRecord>) -> RunReport {
    let ok: Vec<&TrialResult> = trials.iter().filter_map(|t| t.result.as_ref()).collect();
    let errors: Vec<PoseError> = ok.iter().filter_map(|r| r.error).collect();
    let summary = RunSummary {
        trials: trials.len(),
        failures: trials.len() - ok.len(),
        mean_rotation_error_deg: mean(&errors.iter().map(|e| e.rotation_error_deg).collect::<Vec<_>>()),
        mean_translation_error: mean(&errors.iter().map(|e| e.translation_error).collect::<Vec<_>>()),
        mean_time_s: mean(&ok.iter().map(|r| r.timings.total_s).collect::<Vec<_>>()),
    };
    RunReport {
        schema_version: SCHEMA_VERSION,
        master_seed: cfg.seed,
        mode: cfg.mode,
        num_clusters: cfg.swc.num_clusters,
        units_scale: cfg.units_scale,
        trials,
        summary,
    }
}

/// One cell of a sweep. `report` is `None` when the whole cell failed.
#[derive(Debug, Clone)]
pub struct AblationCell {
    pub row: AblationRow,
    pub report: Option<RunReport>,
    pub failure: Option<String>,
}

fn cell_row(label: String, report: &RunReport) -> AblationRow {
    let ok: Vec<&TrialResult> = report.successes().collect();
    if ok.is_empty() {
        return AblationRow::failed(label);
    }
    let errors = report.errors();
    let nan_if_none = |v: Option<f64>| v.unwrap_or(f64::NAN);
    AblationRow {
        sweep_value: label,
        dr_deg: nan_if_none(mean(&errors.iter().map(|e| e.rotation_error_deg).collect::<Vec<_>>())),
        dt: nan_if_none(mean(&errors.iter().map(|e| e.translation_error).collect::<Vec<_>>())),
        time_s: nan_if_none(report.summary.mean_time_s),
        keypoints_a: nan_if_none(mean(&ok.iter().map(|r| r.keypoints_a as f64).collect::<Vec<_>>())),
        keypoints_b: nan_if_none(mean(&ok.iter().map(|r| r.keypoints_b as f64).collect::<Vec<_>>())),
    }
}

/// Runs `cfg` once per sweep value. Every cell sees the same trial seeds,
/// so rows are paired trial by trial.
pub fn run_ablation(cfg: &RunConfig, sweep: Sweep) -> Vec<AblationCell> {
    let cells: Vec<(String, RunConfig)> = match sweep {
        Sweep::Clusters => CLUSTER_SWEEP
            .iter()
            .map(|&n| {
                let mut c = cfg.clone();
                c.swc.num_clusters = n;
                (n.to_string(), c)
            })
            .collect(),
        Sweep::Cascade => CascadeMode::ALL
            .iter()
            .map(|&m| {
                let mut c = cfg.clone();
                c.mode = m;
                (m.label().to_string(), c)
            })
            .collect(),
    };
    cells
        .into_iter()
        .map(|(label, c)| match run_registration(&c) {
            Ok(report) => AblationCell {
                row: cell_row(label, &report),
                report: Some(report),
                failure: None,
            },
            Err(e) => AblationCell {
                row: AblationRow::failed(label),
                report: None,
                failure: Some(e.to_string()),
            },
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub num_clusters: usize,
    pub swc_time_s: Vec<f64>,
    pub bypass_time_s: Vec<f64>,
    pub swc_keypoints_a: Vec<usize>,
    pub bypass_keypoints_a: Vec<usize>,
    pub mean_swc_s: f64,
    pub mean_bypass_s: f64,
    /// `mean_swc_s / mean_bypass_s`.
    pub ratio: f64,
}

/// Times the configured SWC pipeline against the bypass on the same pairs.
/// The bypass reuses the distances the SWC run resolved, so both runs share
/// RANSAC and ICP settings. A configured cluster count of 0 falls back to 5.
pub fn run_bench(cfg: &RunConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let mut swc_cfg = cfg.clone();
    if swc_cfg.swc.num_clusters == 0 {
        swc_cfg.swc.num_clusters = 5;
    }
    let shared = if cfg.source.is_file_based() {
        Some(cfg.source.pair(0)?)
    } else {
        None
    };
    let mut out = BenchReport {
        num_clusters: swc_cfg.swc.num_clusters,
        swc_time_s: Vec::new(),
        bypass_time_s: Vec::new(),
        swc_keypoints_a: Vec::new(),
        bypass_keypoints_a: Vec::new(),
        mean_swc_s: 0.0,
        mean_bypass_s: 0.0,
        ratio: 0.0,
    };
    for seed in trial_seeds(cfg) {
        let pair = match &shared {
            Some(p) => p.clone(),
            None => cfg.source.pair(seed)?,
        };
        let params = swc_cfg.pipeline(seed);
        let with_swc = register_scenes(&pair.a, &pair.b, &params)?;
        let mut bypass = params.with_scales_of(&with_swc);
        bypass.extractor = Extractor::MaskOnly {
            opacity_threshold: swc_cfg.swc.opacity_threshold,
        };
        let without = register_scenes(&pair.a, &pair.b, &bypass)?;
        out.swc_time_s.push(with_swc.timings.total_s);
        out.bypass_time_s.push(without.timings.total_s);
        out.swc_keypoints_a.push(with_swc.keypoints_a);
        out.bypass_keypoints_a.push(without.keypoints_a);
    }
    out.mean_swc_s = mean(&out.swc_time_s).unwrap_or(f64::NAN);
    out.mean_bypass_s = mean(&out.bypass_time_s).unwrap_or(f64::NAN);
    out.ratio = out.mean_swc_s / out.mean_bypass_s;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::io::config::{Preset, SceneSource};
    use crate::synth::{Geometry, OpacityDistribution, SceneSpec, SyntheticPairTemplate};

    fn small_config(trials: usize) -> RunConfig {
        let mut t = SyntheticPairTemplate::exact_recovery();
        t.base = SceneSpec {
            num_gaussians: 800,
            geometry: Geometry::tissue_sheet(),
            opacity: OpacityDistribution::default(),
            seed: 0,
        };
        let mut cfg = RunConfig::new(SceneSource::Synthetic { template: t });
        cfg.trials = trials;
        cfg.seed = 11;
        cfg
    }

    #[test]
    fn seeds_are_derived_per_trial() {
        let cfg = small_config(3);
        let seeds = trial_seeds(&cfg);
        assert_eq!(seeds, vec![derive(11, 0), derive(11, 1), derive(11, 2)]);
        assert_eq!(seeds.iter().collect::<std::collections::BTreeSet<_>>().len(), 3);
    }

    #[test]
    fn repeated_runs_match_except_timings() {
        let cfg = small_config(2);
        let a = run_registration(&cfg).unwrap();
        let b = run_registration(&cfg).unwrap();
        assert_eq!(a.without_timings().to_json(), b.without_timings().to_json());
        assert_eq!(a.summary.failures, 0);
    }

    #[test]
    fn sweeps_have_fixed_row_counts() {
        let cfg = small_config(1);
        let clusters = run_ablation(&cfg, Sweep::Clusters);
        let labels: Vec<&str> = clusters.iter().map(|c| c.row.sweep_value.as_str()).collect();
        assert_eq!(labels, ["0", "5", "10", "15", "20", "25"]);
        let cascade = run_ablation(&cfg, Sweep::Cascade);
        let labels: Vec<&str> = cascade.iter().map(|c| c.row.sweep_value.as_str()).collect();
        assert_eq!(labels, ["static", "deformed", "both"]);
    }

    #[test]
    fn bypass_row_counts_masked_points() {
        let cfg = small_config(1);
        let cells = run_ablation(&cfg, Sweep::Clusters);
        let pair = cfg.source.pair(trial_seeds(&cfg)[0]).unwrap();
        let masked = pair.a.masked_count(0.8, CascadeMode::Both) as f64;
        assert_eq!(cells[0].row.keypoints_a, masked);
        assert!(cells[1].row.keypoints_a < masked);
    }

    #[test]
    fn failed_cells_become_nan_rows() {
        // Beta opacities are below 1, so a threshold of 1 masks everything
        // out and every trial fails at extraction.
        let mut cfg = small_config(1);
        cfg.swc.opacity_threshold = 1.0;
        let cells = run_ablation(&cfg, Sweep::Cascade);
        assert_eq!(cells.len(), 3);
        assert!(cells
            .iter()
            .all(|c| c.row.dr_deg.is_nan() && c.row.keypoints_a.is_nan()));
        let report = cells[0].report.as_ref().unwrap();
        assert_eq!(report.summary.failures, 1);
        assert!(report.trials[0].failure.as_ref().unwrap().contains("selects no points"));
    }

    #[test]
    fn units_scale_multiplies_translation_error() {
        let mut cfg = small_config(1);
        let base = run_registration(&cfg).unwrap().errors()[0];
        cfg.units_scale = 1000.0;
        let scaled = run_registration(&cfg).unwrap().errors()[0];
        assert_eq!(scaled.rotation_error_deg, base.rotation_error_deg);
        assert!(
            (scaled.translation_error - 1000.0 * base.translation_error).abs()
                <= 1e-9 * scaled.translation_error.max(1.0)
        );
    }

    #[test]
    fn preset_source_builds() {
        let cfg = RunConfig::new(SceneSource::Preset { name: Preset::Exact });
        let p = cfg.source.pair(1).unwrap();
        assert_eq!(p.a.len(), 5000);
    }
}
