//! Point-to-point ICP.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

use crate::exec::{map_slice, Execution};
use crate::registration::rigid::estimate_rigid;
use crate::spatial::{median_spacing, KdTree};
use crate::swc::KeypointSet;
use crate::transform::RigidTransform;
use crate::{Error, Result};

/// Multiplier on the median target spacing when no correspondence distance is set.
pub const AUTO_CORRESPONDENCE_FACTOR: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IcpParams {
    pub max_iterations: usize,
    /// Scene units. `None` derives `3 ×` the median spacing of the target keypoints.
    pub correspondence_distance: Option<f64>,
    /// Relative RMSE change below which iteration stops.
    pub convergence_tol: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for IcpParams {
    fn default() -> Self {
        Self {
            max_iterations: 50,
            correspondence_distance: None,
            convergence_tol: 1e-6,
            execution: Execution::default(),
        }
    }
}

impl IcpParams {
    pub fn validate(&self) -> Result<()> {
        if self.max_iterations == 0
            || !(self.convergence_tol > 0.0)
            || !self.correspondence_distance.is_none_or(|d| d > 0.0)
        {
            return Err(Error::InvalidInput(format!("invalid ICP parameters: {self:?}")));
        }
        Ok(())
    }

    pub fn resolve_distance(&self, target: &KeypointSet) -> Result<f64> {
        match self.correspondence_distance {
            Some(d) => Ok(d),
            None => median_spacing(&target.positions)
                .map(|s| AUTO_CORRESPONDENCE_FACTOR * s)
                .ok_or_else(|| {
                    Error::DegenerateConfiguration("target keypoints have fewer than two distinct positions".into())
                }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IcpOutcome {
    pub transform: RigidTransform,
    pub rmse: f64,
    pub correspondences: usize,
    pub iterations: usize,
    /// RMSE over the correspondences found at the start of each iteration.
    pub rmse_history: Vec<f64>,
}

struct Matches {
    source: Vec<Point3<f64>>,
    target: Vec<Point3<f64>>,
    rmse: f64,
}

fn correspond(
    a: &[Point3<f64>],
    b: &[Point3<f64>],
    tree: &KdTree,
    t: &RigidTransform,
    max_d2: f64,
    exec: Execution,
) -> Matches {
    let nn = map_slice(exec, a, |p| tree.nearest(&t.apply(p)));
    let mut m = Matches {
        source: Vec::new(),
        target: Vec::new(),
        rmse: 0.0,
    };
    let mut sum = 0.0;
    for (p, hit) in a.iter().zip(nn) {
        if let Some((j, d2)) = hit {
            if d2 <= max_d2 {
                m.source.push(*p);
                m.target.push(b[j]);
                sum += d2;
            }
        }
    }
    if !m.source.is_empty() {
        m.rmse = (sum / m.source.len() as f64).sqrt();
    }
    m
}

/// Refines `init` so that `T(A)` fits `B`.
pub fn icp_refine(a: &KeypointSet, b: &KeypointSet, init: &RigidTransform, params: &IcpParams) -> Result<IcpOutcome> {
    params.validate()?;
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let correspondence_distance = params.resolve_distance(b)?;
    let exec = params.execution;
    let tree = KdTree::build(&b.positions);
    let max_d2 = correspondence_distance * correspondence_distance;
    let floor = 1e-12 * crate::gaussian::bbox_diagonal(&b.positions).max(f64::MIN_POSITIVE);

    let mut t = *init;
    let mut m = correspond(&a.positions, &b.positions, &tree, &t, max_d2, exec);
    if m.source.is_empty() {
        return Err(Error::NoOverlap);
    }
    let mut history = vec![m.rmse];
    let mut iterations = 0;
    while iterations < params.max_iterations && m.rmse > floor {
        let Ok(next) = estimate_rigid(&m.source, &m.target) else {
            break;
        };
        iterations += 1;
        let nm = correspond(&a.positions, &b.positions, &tree, &next, max_d2, exec);
        if nm.source.is_empty() {
            break;
        }
        let prev = m.rmse;
        t = next;
        m = nm;
        history.push(m.rmse);
        if (prev - m.rmse).abs() <= params.convergence_tol * prev {
            break;
        }
    }
    Ok(IcpOutcome {
        transform: t,
        rmse: m.rmse,
        correspondences: m.source.len(),
        iterations,
        rmse_history: history,
    })
}
