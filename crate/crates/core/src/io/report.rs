//! Machine-readable run reports: JSON per trial and CSV summaries.
//!
//! The JSON layout is described by `schema/report.schema.json` in this crate.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::cascade::CascadeMode;
use crate::metrics::PoseError;
use crate::registration::{RegistrationReport, StageTimings};
use crate::transform::RigidTransform;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;
pub const CSV_HEADER: [&str; 6] = ["sweep_value", "dR_deg", "dt", "time_s", "keypoints_a", "keypoints_b"];

/// What a completed registration produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub transform: RigidTransform,
    pub coarse_transform: RigidTransform,
    pub coarse_converged: bool,
    pub inlier_count: usize,
    pub final_rmse: f64,
    pub keypoints_a: usize,
    pub keypoints_b: usize,
    pub ransac_iterations: usize,
    pub icp_iterations: usize,
    /// Present when the ground truth is known; translation in scaled units.
    pub error: Option<PoseError>,
    pub timings: StageTimings,
}

impl TrialResult {
    pub fn new(report: &RegistrationReport, error: Option<PoseError>) -> Self {
        Self {
            transform: report.estimate,
            coarse_transform: report.coarse_estimate,
            coarse_converged: report.coarse_converged,
            inlier_count: report.inlier_count,
            final_rmse: report.final_rmse,
            keypoints_a: report.keypoints_a,
            keypoints_b: report.keypoints_b,
            ransac_iterations: report.ransac_iterations,
            icp_iterations: report.icp_iterations,
            error,
            timings: report.timings,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    /// Absent when the trial failed.
    pub result: Option<TrialResult>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub trials: usize,
    pub failures: usize,
    pub mean_rotation_error_deg: Option<f64>,
    pub mean_translation_error: Option<f64>,
    pub mean_time_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub schema_version: u32,
    pub master_seed: u64,
    pub mode: CascadeMode,
    pub num_clusters: usize,
    pub units_scale: f64,
    pub trials: Vec<TrialRecord>,
    pub summary: RunSummary,
}

impl RunReport {
    pub fn successes(&self) -> impl Iterator<Item = &TrialResult> {
        self.trials.iter().filter_map(|t| t.result.as_ref())
    }

    /// Pose errors of trials that finished with a known ground truth.
    pub fn errors(&self) -> Vec<PoseError> {
        self.successes().filter_map(|r| r.error).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// The same report with every wall-clock field zeroed, for comparing runs.
    pub fn without_timings(&self) -> Self {
        let mut r = self.clone();
        for t in r.trials.iter_mut().filter_map(|t| t.result.as_mut()) {
            t.timings = StageTimings::default();
        }
        r.summary.mean_time_s = r.summary.mean_time_s.map(|_| 0.0);
        r
    }

    /// One CSV row per trial, `sweep_value` being the trial index.
    pub fn csv_rows(&self) -> Vec<AblationRow> {
        self.trials
            .iter()
            .map(|t| match &t.result {
                Some(r) => AblationRow {
                    sweep_value: t.trial.to_string(),
                    dr_deg: r.error.map_or(f64::NAN, |e| e.rotation_error_deg),
                    dt: r.error.map_or(f64::NAN, |e| e.translation_error),
                    time_s: r.timings.total_s,
                    keypoints_a: r.keypoints_a as f64,
                    keypoints_b: r.keypoints_b as f64,
                },
                None => AblationRow::failed(t.trial.to_string()),
            })
            .collect()
    }
}

/// One CSV row: means over the trials of a cell, NaN when none succeeded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub sweep_value: String,
    #[serde(rename = "dR_deg")]
    pub dr_deg: f64,
    pub dt: f64,
    pub time_s: f64,
    pub keypoints_a: f64,
    pub keypoints_b: f64,
}

impl AblationRow {
    pub fn failed(sweep_value: String) -> Self {
        Self {
            sweep_value,
            dr_deg: f64::NAN,
            dt: f64::NAN,
            time_s: f64::NAN,
            keypoints_a: f64::NAN,
            keypoints_b: f64::NAN,
        }
    }
}

pub fn write_csv<W: Write>(rows: &[AblationRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.sweep_value.clone(),
            r.dr_deg.to_string(),
            r.dt.to_string(),
            r.time_s.to_string(),
            r.keypoints_a.to_string(),
            r.keypoints_b.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))
}

pub fn csv_string(rows: &[AblationRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("csv is UTF-8")
}

fn csv_err(e: csv::Error) -> Error {
    Error::Config(format!("csv: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(v: &str) -> AblationRow {
        AblationRow {
            sweep_value: v.into(),
            dr_deg: 0.25,
            dt: 0.001,
            time_s: 0.5,
            keypoints_a: 100.0,
            keypoints_b: 80.5,
        }
    }

    #[test]
    fn csv_has_fixed_header() {
        let text = csv_string(&[row("5"), AblationRow::failed("10".into())]);
        let mut lines = text.lines();
        assert_eq!(
            lines.next(),
            Some("sweep_value,dR_deg,dt,time_s,keypoints_a,keypoints_b")
        );
        assert_eq!(lines.next(), Some("5,0.25,0.001,0.5,100,80.5"));
        assert_eq!(lines.next(), Some("10,NaN,NaN,NaN,NaN,NaN"));
        assert_eq!(lines.next(), None);
    }
}
