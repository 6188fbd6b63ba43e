//! Lloyd's k-means with k-means++ seeding.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::exec::{map_slice, Execution};
use crate::gaussian::bbox_diagonal;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansParams {
    pub clusters: usize,
    pub max_iters: usize,
    /// Stop once no centroid moves more than `tol × bounding-box diagonal`.
    pub tol: f64,
    pub seed: u64,
    pub execution: Execution,
}

impl Default for KMeansParams {
    fn default() -> Self {
        Self {
            clusters: 5,
            max_iters: 100,
            tol: 1e-4,
            seed: 0,
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClusterAssignment {
    pub labels: Vec<usize>,
    pub centroids: Vec<Point3<f64>>,
    /// Sum of squared distances from each point to its assigned centroid.
    pub inertia: f64,
    pub iterations: usize,
    /// Inertia after every assignment step, ending with the final one.
    pub inertia_history: Vec<f64>,
}

impl ClusterAssignment {
    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.centroids.len()];
        for &l in &self.labels {
            sizes[l] += 1;
        }
        sizes
    }
}

/// Index and squared distance of the closest centroid; ties go to the lower index.
#[inline]
fn closest(p: &Point3<f64>, centroids: &[Point3<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = (p - c).norm_squared();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn plus_plus(points: &[Point3<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Point3<f64>> {
    let n = points.len();
    let mut centroids = Vec::with_capacity(k);
    centroids.push(points[rng.random_range(0..n)]);
    let mut d2: Vec<f64> = points.iter().map(|p| (p - centroids[0]).norm_squared()).collect();
    while centroids.len() < k {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random_range(0.0..total);
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if d > 0.0 && target < d {
                    chosen = i;
                    break;
                }
                target -= d;
            }
            // Guard against accumulated rounding landing on a zero-weight tail.
            if d2[chosen] == 0.0 {
                chosen = d2.iter().rposition(|&d| d > 0.0).unwrap_or(chosen);
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = points[pick];
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min((p - c).norm_squared());
        }
        centroids.push(c);
    }
    centroids
}

pub fn kmeans(points: &[Point3<f64>], params: &KMeansParams) -> Result<ClusterAssignment> {
    let k = params.clusters;
    if k == 0 {
        return Err(Error::InvalidInput("k-means needs at least one cluster".into()));
    }
    if points.len() < k {
        return Err(Error::InsufficientPoints {
            needed: k,
            got: points.len(),
        });
    }
    let exec = params.execution;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut centroids = plus_plus(points, k, &mut rng);
    let tol = params.tol * bbox_diagonal(points);

    let mut history = Vec::new();
    let mut iterations = 0;
    let (mut labels, mut dists): (Vec<usize>, Vec<f64>);
    loop {
        (labels, dists) = map_slice(exec, points, |p| closest(p, &centroids)).into_iter().unzip();
        history.push(dists.iter().sum());
        if iterations >= params.max_iters.max(1) {
            break;
        }
        iterations += 1;

        let mut sums = vec![Vector3::zeros(); k];
        let mut counts = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sums[l] += p.coords;
            counts[l] += 1;
        }
        let mut next: Vec<Point3<f64>> = sums
            .iter()
            .zip(&counts)
            .zip(&centroids)
            .map(|((s, &c), old)| if c > 0 { Point3::from(s / c as f64) } else { *old })
            .collect();

        // Empty clusters take the point farthest from its own centroid.
        let mut taken = vec![false; points.len()];
        for j in (0..k).filter(|&j| counts[j] == 0) {
            let far =
                dists
                    .iter()
                    .enumerate()
                    .filter(|&(i, _)| !taken[i])
                    .fold(None::<(usize, f64)>, |best, (i, &d)| match best {
                        Some((_, bd)) if bd >= d => best,
                        _ => Some((i, d)),
                    });
            if let Some((i, _)) = far {
                taken[i] = true;
                next[j] = points[i];
            }
        }

        let shift = next
            .iter()
            .zip(&centroids)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        centroids = next;
        if shift <= tol {
            (labels, dists) = map_slice(exec, points, |p| closest(p, &centroids)).into_iter().unzip();
            history.push(dists.iter().sum());
            break;
        }
    }

    Ok(ClusterAssignment {
        labels,
        centroids,
        inertia: *history.last().unwrap(),
        iterations,
        inertia_history: history,
    })
}
