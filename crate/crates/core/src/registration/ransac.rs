//! Descriptor-matched RANSAC for coarse global alignment.
//!
//! Iterations run in deterministic batches. Each iteration draws its sample
//! from an RNG stream keyed by `(seed, iteration)`, so the winning hypothesis
//! is identical under sequential and parallel execution: the best inlier
//! count wins and ties go to the lowest iteration index. The confidence-based
//! early exit is checked only at batch boundaries.

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::exec::{map_range, Execution};
use crate::registration::fpfh::{fpfh_descriptors, mutual_matches, nearest_descriptors};
use crate::registration::rigid::estimate_rigid;
use crate::spatial::{median_spacing, KdTree};
use crate::swc::KeypointSet;
use crate::transform::RigidTransform;
use crate::{Error, Result};

/// Multiplier on the median keypoint spacing for the automatic inlier distance.
pub const AUTO_INLIER_FACTOR: f64 = 1.5;
/// Multiplier on the median keypoint spacing for the automatic descriptor radius.
pub const AUTO_RADIUS_FACTOR: f64 = 15.0;

const FIRST_BATCH: usize = 32;
const MAX_BATCH: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RansacParams {
    pub max_iterations: usize,
    pub sample_size: usize,
    /// Scene units. `None` derives `1.5 ×` the median spacing of the target keypoints.
    pub inlier_distance: Option<f64>,
    /// Scene units. `None` derives `15 ×` the median spacing of the target keypoints.
    pub descriptor_radius: Option<f64>,
    /// Minimum ratio between corresponding edge lengths within a sample.
    pub edge_length_check: f64,
    /// Early-exit confidence.
    pub confidence: f64,
    pub seed: u64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            max_iterations: 100_000,
            sample_size: 3,
            inlier_distance: None,
            descriptor_radius: None,
            edge_length_check: 0.9,
            confidence: 0.999,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

impl RansacParams {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: Option<f64>| v.is_none_or(|v| v > 0.0 && v.is_finite());
        if self.max_iterations == 0
            || self.sample_size < 3
            || !positive(self.inlier_distance)
            || !positive(self.descriptor_radius)
            || !(self.edge_length_check > 0.0 && self.edge_length_check <= 1.0)
            || !(self.confidence > 0.0 && self.confidence < 1.0)
        {
            return Err(Error::InvalidInput(format!("invalid RANSAC parameters: {self:?}")));
        }
        Ok(())
    }

    /// Fills automatic distances from the target keypoints.
    pub fn resolve(&self, target: &KeypointSet) -> Result<ResolvedScales> {
        let spacing = || {
            median_spacing(&target.positions).ok_or_else(|| {
                Error::DegenerateConfiguration("target keypoints have fewer than two distinct positions".into())
            })
        };
        let inlier_distance = match self.inlier_distance {
            Some(d) => d,
            None => AUTO_INLIER_FACTOR * spacing()?,
        };
        let descriptor_radius = match self.descriptor_radius {
            Some(r) => r,
            None => AUTO_RADIUS_FACTOR * spacing()?,
        };
        Ok(ResolvedScales {
            inlier_distance,
            descriptor_radius,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedScales {
    pub inlier_distance: f64,
    pub descriptor_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RansacOutcome {
    pub transform: RigidTransform,
    pub inlier_count: usize,
    pub iterations: usize,
    /// Descriptor correspondences `(index in A, index in B)` sampled from.
    pub correspondences: Vec<(usize, usize)>,
    pub scales: ResolvedScales,
}

/// Number of distinct target points hit by a transformed source point
/// within `threshold`. Bounded by both set sizes.
pub fn count_inliers(source: &[Point3<f64>], target_tree: &KdTree, t: &RigidTransform, threshold: f64) -> usize {
    let t2 = threshold * threshold;
    let mut hit = vec![false; target_tree.len()];
    let mut count = 0;
    for p in source {
        if let Some((j, d2)) = target_tree.nearest(&t.apply(p)) {
            if d2 <= t2 && !hit[j] {
                hit[j] = true;
                count += 1;
            }
        }
    }
    count
}

/// Iterations needed to draw an all-inlier sample with `confidence`.
fn required_iterations(inlier_ratio: f64, sample_size: usize, confidence: f64) -> f64 {
    let good = inlier_ratio.clamp(0.0, 1.0).powi(sample_size as i32);
    if good <= 0.0 {
        return f64::INFINITY;
    }
    if good >= 1.0 {
        return 1.0;
    }
    ((1.0 - confidence).ln() / (1.0 - good).ln()).ceil()
}

struct Hypothesis {
    transform: RigidTransform,
    inliers: usize,
}

fn draw_sample(rng: &mut ChaCha8Rng, n: usize, k: usize) -> Vec<usize> {
    let mut s: Vec<usize> = Vec::with_capacity(k);
    while s.len() < k {
        let c = rng.random_range(0..n);
        if !s.contains(&c) {
            s.push(c);
        }
    }
    s
}

/// Least-squares fit over every correspondence `t` already explains.
fn refit(
    a: &KeypointSet,
    b: &KeypointSet,
    tree_b: &KdTree,
    corr: &[(usize, usize)],
    t: &RigidTransform,
    threshold: f64,
) -> Option<Hypothesis> {
    let t2 = threshold * threshold;
    let (pa, pb): (Vec<Point3<f64>>, Vec<Point3<f64>>) = corr
        .iter()
        .filter(|&&(i, j)| (t.apply(&a.positions[i]) - b.positions[j]).norm_squared() <= t2)
        .map(|&(i, j)| (a.positions[i], b.positions[j]))
        .unzip();
    let transform = estimate_rigid(&pa, &pb).ok()?;
    let inliers = count_inliers(&a.positions, tree_b, &transform, threshold);
    Some(Hypothesis { transform, inliers })
}

pub fn ransac_global(a: &KeypointSet, b: &KeypointSet, params: &RansacParams) -> Result<RansacOutcome> {
    params.validate()?;
    let k = params.sample_size;
    if a.len() < k || b.len() < k {
        return Err(Error::InsufficientPoints {
            needed: k,
            got: a.len().min(b.len()),
        });
    }
    let exec = params.execution;
    let scales = params.resolve(b)?;
    let tree_a = KdTree::build(&a.positions);
    let tree_b = KdTree::build(&b.positions);
    let desc_a = fpfh_descriptors(&a.positions, scales.descriptor_radius, &tree_a, exec)?;
    let desc_b = fpfh_descriptors(&b.positions, scales.descriptor_radius, &tree_b, exec)?;
    let mut corr = mutual_matches(&desc_a, &desc_b, exec);
    if corr.len() < k {
        corr = nearest_descriptors(&desc_a, &desc_b, exec)
            .into_iter()
            .enumerate()
            .collect();
    }
    ransac_on_correspondences(a, b, &tree_b, corr, scales, params)
}

/// The hypothesise-and-verify loop over a fixed correspondence list.
pub(crate) fn ransac_on_correspondences(
    a: &KeypointSet,
    b: &KeypointSet,
    tree_b: &KdTree,
    corr: Vec<(usize, usize)>,
    scales: ResolvedScales,
    params: &RansacParams,
) -> Result<RansacOutcome> {
    let k = params.sample_size;
    let threshold = scales.inlier_distance;
    let ratio = params.edge_length_check;
    let exec = params.execution;

    let evaluate = |iteration: usize| -> Option<Hypothesis> {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(iteration as u64);
        let sample = draw_sample(&mut rng, corr.len(), k);
        let pa: Vec<Point3<f64>> = sample.iter().map(|&s| a.positions[corr[s].0]).collect();
        let pb: Vec<Point3<f64>> = sample.iter().map(|&s| b.positions[corr[s].1]).collect();
        for i in 0..k {
            for j in i + 1..k {
                let la = (pa[i] - pa[j]).norm();
                let lb = (pb[i] - pb[j]).norm();
                if la < ratio * lb || lb < ratio * la {
                    return None;
                }
            }
        }
        let transform = estimate_rigid(&pa, &pb).ok()?;
        // A sample that its own fit cannot explain cannot be all inliers.
        if pa
            .iter()
            .zip(&pb)
            .any(|(p, q)| (transform.apply(p) - q).norm() > threshold)
        {
            return None;
        }
        let inliers = count_inliers(&a.positions, tree_b, &transform, threshold);
        Some(Hypothesis { transform, inliers })
    };

    let mut best: Option<Hypothesis> = None;
    let mut done = 0;
    let mut batch = FIRST_BATCH;
    let mut budget = params.max_iterations as f64;
    while done < params.max_iterations && (done as f64) < budget {
        let end = (done + batch).min(params.max_iterations);
        let results = map_range(exec, end - done, |i| evaluate(done + i));
        for h in results.into_iter().flatten() {
            let better = match &best {
                None => true,
                Some(b) => h.inliers > b.inliers,
            };
            if better {
                best = Some(h);
            }
        }
        done = end;
        batch = (batch * 2).min(MAX_BATCH);
        if let Some(h) = &best {
            let t2 = threshold * threshold;
            let consistent = corr
                .iter()
                .filter(|&&(i, j)| (h.transform.apply(&a.positions[i]) - b.positions[j]).norm_squared() <= t2)
                .count();
            budget = required_iterations(consistent as f64 / corr.len() as f64, k, params.confidence);
        }
    }

    if let Some(h) = &mut best {
        if let Some(refined) = refit(a, b, tree_b, &corr, &h.transform, threshold) {
            if refined.inliers >= h.inliers {
                *h = refined;
            }
        }
    }

    match best {
        Some(h) if h.inliers >= k => Ok(RansacOutcome {
            transform: h.transform,
            inlier_count: h.inliers,
            iterations: done,
            correspondences: corr,
            scales,
        }),
        other => {
            let (best, inliers) = other.map_or((RigidTransform::identity(), 0), |h| (h.transform, h.inliers));
            Err(Error::RegistrationFailure {
                best,
                inliers,
                required: k,
            })
        }
    }
}
