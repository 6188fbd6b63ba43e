//! Opacity masking and spatially weighted clustering.
//!
//! Masked-in Gaussians are partitioned by k-means; within every cluster the
//! most opaque `max(1, ⌊size·(1−δ)⌋)` are kept. The result is always a subset
//! of the input means.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::exec::Execution;
use crate::kmeans::{kmeans, ClusterAssignment, KMeansParams};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SwcParams {
    pub num_clusters: usize,
    /// Gaussians with opacity `≥ ε` are kept by the mask.
    pub opacity_threshold: f64,
    /// Fraction of each cluster dropped, lowest opacity first.
    pub drop_rate: f64,
    pub kmeans_max_iters: usize,
    /// Relative to the bounding-box diagonal of the clustered points.
    pub kmeans_tol: f64,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for SwcParams {
    fn default() -> Self {
        Self {
            num_clusters: 5,
            opacity_threshold: 0.8,
            drop_rate: 0.5,
            kmeans_max_iters: 100,
            kmeans_tol: 1e-4,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl SwcParams {
    pub fn validate(&self) -> Result<()> {
        if self.num_clusters == 0 {
            return Err(Error::InvalidInput("SWC needs at least one cluster".into()));
        }
        if !(0.0..=1.0).contains(&self.opacity_threshold) {
            return Err(Error::InvalidInput(format!(
                "opacity threshold {} outside [0, 1]",
                self.opacity_threshold
            )));
        }
        if !(0.0..1.0).contains(&self.drop_rate) {
            return Err(Error::InvalidInput(format!(
                "drop rate {} outside [0, 1)",
                self.drop_rate
            )));
        }
        if self.kmeans_max_iters == 0 || !(self.kmeans_tol > 0.0) {
            return Err(Error::InvalidInput(
                "k-means iterations and tolerance must be positive".into(),
            ));
        }
        Ok(())
    }

    fn kmeans(&self) -> KMeansParams {
        KMeansParams {
            clusters: self.num_clusters,
            max_iters: self.kmeans_max_iters,
            tol: self.kmeans_tol,
            seed: self.seed,
            execution: self.execution,
        }
    }
}

/// Selected means together with their indices into the source arrays.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct KeypointSet {
    pub positions: Vec<Point3<f64>>,
    pub source_indices: Vec<usize>,
}

impl KeypointSet {
    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn from_points(positions: Vec<Point3<f64>>) -> Self {
        let source_indices = (0..positions.len()).collect();
        Self {
            positions,
            source_indices,
        }
    }

    pub(crate) fn from_indices(positions: &[Point3<f64>], indices: Vec<usize>) -> Self {
        Self {
            positions: indices.iter().map(|&i| positions[i]).collect(),
            source_indices: indices,
        }
    }
}

/// `mask[i] = opacities[i] ≥ ε`.
pub fn opacity_mask(opacities: &[f64], epsilon: f64) -> Vec<bool> {
    opacities.iter().map(|&o| o >= epsilon).collect()
}

/// Number of points a cluster of `size` keeps at drop rate `drop_rate`.
pub fn keep_count(size: usize, drop_rate: f64) -> usize {
    if size == 0 {
        return 0;
    }
    // The epsilon absorbs products such as 10 × 0.7 = 6.999…
    ((size as f64 * (1.0 - drop_rate) + 1e-9).floor() as usize).clamp(1, size)
}

/// Diagnostic output of [`swc_detailed`].
#[derive(Debug, Clone)]
pub struct SwcOutcome {
    pub keypoints: KeypointSet,
    /// Original indices of the masked-in points, in clustering order.
    pub clustered_indices: Vec<usize>,
    pub assignment: ClusterAssignment,
}

pub fn swc(positions: &[Point3<f64>], opacities: &[f64], mask: &[bool], params: &SwcParams) -> Result<KeypointSet> {
    swc_detailed(positions, opacities, mask, params).map(|o| o.keypoints)
}

/// [`swc`] that also returns the cluster assignment.
pub fn swc_detailed(
    positions: &[Point3<f64>],
    opacities: &[f64],
    mask: &[bool],
    params: &SwcParams,
) -> Result<SwcOutcome> {
    params.validate()?;
    if positions.len() != opacities.len() || positions.len() != mask.len() {
        return Err(Error::InvalidInput(format!(
            "length mismatch: {} positions, {} opacities, {} mask entries",
            positions.len(),
            opacities.len(),
            mask.len()
        )));
    }
    let mut selected: Vec<usize> = (0..positions.len()).filter(|&i| mask[i]).collect();
    if selected.is_empty() {
        return Err(Error::EmptySelection);
    }
    if selected.len() < params.num_clusters {
        return Err(Error::InsufficientPoints {
            needed: params.num_clusters,
            got: selected.len(),
        });
    }
    // Canonical order makes seeding independent of input order.
    selected.sort_by(|&a, &b| {
        let (p, q) = (&positions[a], &positions[b]);
        p.x.total_cmp(&q.x)
            .then(p.y.total_cmp(&q.y))
            .then(p.z.total_cmp(&q.z))
            .then(opacities[b].total_cmp(&opacities[a]))
            .then(a.cmp(&b))
    });
    let pts: Vec<Point3<f64>> = selected.iter().map(|&i| positions[i]).collect();
    let assignment = kmeans(&pts, &params.kmeans())?;

    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); params.num_clusters];
    for (slot, &label) in assignment.labels.iter().enumerate() {
        bins[label].push(selected[slot]);
    }
    let mut kept = Vec::new();
    for mut bin in bins {
        let n = keep_count(bin.len(), params.drop_rate);
        bin.sort_by(|&a, &b| opacities[b].total_cmp(&opacities[a]).then(a.cmp(&b)));
        kept.extend_from_slice(&bin[..n]);
    }
    kept.sort_unstable();
    Ok(SwcOutcome {
        keypoints: KeypointSet::from_indices(positions, kept),
        clustered_indices: selected,
        assignment,
    })
}
