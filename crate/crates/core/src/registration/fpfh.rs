//! Fast point feature histograms.
//!
//! Normals come from PCA over the 40 nearest neighbours, oriented towards the
//! cloud centroid. Each descriptor concatenates three 11-bin histograms of the
//! Darboux-frame angles; every sub-histogram of the final descriptor sums to
//! [`SUBHIST_SUM`] unless the point has no non-coincident neighbours.

use std::f64::consts::PI;

use nalgebra::{Matrix3, Point3, SymmetricEigen, Vector3};

use crate::exec::{map_range, Execution};
use crate::spatial::KdTree;
use crate::{Error, Result};

pub const BINS: usize = 11;
pub const DIM: usize = 3 * BINS;
pub const NORMAL_NEIGHBORS: usize = 40;
pub const MIN_NEIGHBORS: usize = 5;
pub const SUBHIST_SUM: f64 = 200.0;
const TIE_TOL: f64 = 1e-12;

pub type Descriptor = [f64; DIM];

/// Unit normals by local PCA, flipped to point at the centroid of `points`.
pub fn estimate_normals(points: &[Point3<f64>], tree: &KdTree, exec: Execution) -> Vec<Vector3<f64>> {
    let centroid = points.iter().map(|p| p.coords).sum::<Vector3<f64>>() / points.len().max(1) as f64;
    map_range(exec, points.len(), |i| {
        let p = &points[i];
        let nn = tree.knn(p, NORMAL_NEIGHBORS);
        let mean = nn.iter().map(|&(j, _)| points[j].coords).sum::<Vector3<f64>>() / nn.len() as f64;
        let mut cov = Matrix3::zeros();
        for &(j, _) in &nn {
            let d = points[j].coords - mean;
            cov += d * d.transpose();
        }
        let eig = SymmetricEigen::new(cov);
        let k = eig.eigenvalues.imin();
        let mut n: Vector3<f64> = eig.eigenvectors.column(k).into_owned();
        if !(n.norm() > 0.0) || !n.iter().all(|v| v.is_finite()) {
            n = Vector3::z();
        }
        n.normalize_mut();
        if n.dot(&(centroid - p.coords)) < 0.0 {
            n = -n;
        }
        n
    })
}

/// `(f1, f2, f3)`: the azimuth in [−π, π] and two cosines in [−1, 1].
/// Returns `None` for coincident points.
///
/// The frame is anchored at the point whose normal is closer to the pair
/// axis. Near-ties, common when both points share a normal, go to the
/// lower index so the choice does not depend on rounding.
fn pair_features(
    (i1, p1, n1): (usize, &Vector3<f64>, &Vector3<f64>),
    (i2, p2, n2): (usize, &Vector3<f64>, &Vector3<f64>),
) -> Option<[f64; 3]> {
    let mut d = p2 - p1;
    let len = d.norm();
    if len == 0.0 {
        return None;
    }
    let a1 = n1.dot(&d) / len;
    let a2 = n2.dot(&d) / len;
    let gap = a1.abs() - a2.abs();
    let swap = if gap.abs() <= TIE_TOL { i1 > i2 } else { gap < 0.0 };
    let (u, n_t, f3) = if swap {
        d = -d;
        (n2, n1, -a2)
    } else {
        (n1, n2, a1)
    };
    let v = d.cross(u);
    let vn = v.norm();
    if vn == 0.0 {
        return Some([0.0, 0.0, f3]);
    }
    let v = v / vn;
    let w = u.cross(&v);
    let f2 = v.dot(n_t);
    let f1 = w.dot(n_t).atan2(u.dot(n_t));
    Some([f1, f2, f3])
}

#[inline]
fn bin(value: f64, lo: f64, hi: f64) -> usize {
    let b = (BINS as f64 * (value - lo) / (hi - lo)).floor();
    (b.max(0.0) as usize).min(BINS - 1)
}

/// Neighbours of `i` other than itself: all within `radius`, or the five
/// nearest when the ball holds fewer than five.
fn neighborhood(points: &[Point3<f64>], tree: &KdTree, i: usize, radius: f64) -> Vec<(usize, f64)> {
    let mut nb = Vec::new();
    tree.within_radius(&points[i], radius, &mut nb);
    nb.retain(|&(j, _)| j != i);
    if nb.len() < MIN_NEIGHBORS {
        nb = tree
            .knn(&points[i], MIN_NEIGHBORS + 1)
            .into_iter()
            .filter(|&(j, _)| j != i)
            .take(MIN_NEIGHBORS)
            .collect();
    } else {
        crate::spatial::sort_neighbors(&mut nb);
    }
    nb
}

pub fn fpfh_descriptors(
    points: &[Point3<f64>],
    radius: f64,
    tree: &KdTree,
    exec: Execution,
) -> Result<Vec<Descriptor>> {
    if points.len() < MIN_NEIGHBORS {
        return Err(Error::InsufficientPoints {
            needed: MIN_NEIGHBORS,
            got: points.len(),
        });
    }
    if !(radius > 0.0) {
        return Err(Error::InvalidInput(format!(
            "descriptor radius {radius} must be positive"
        )));
    }
    let normals = estimate_normals(points, tree, exec);
    let neighborhoods: Vec<Vec<(usize, f64)>> =
        map_range(exec, points.len(), |i| neighborhood(points, tree, i, radius));

    let spfh: Vec<Descriptor> = map_range(exec, points.len(), |i| {
        let mut h = [0.0; DIM];
        let feats: Vec<[f64; 3]> = neighborhoods[i]
            .iter()
            .filter_map(|&(j, _)| {
                pair_features((i, &points[i].coords, &normals[i]), (j, &points[j].coords, &normals[j]))
            })
            .collect();
        if feats.is_empty() {
            return h;
        }
        let inc = 100.0 / feats.len() as f64;
        for [f1, f2, f3] in feats {
            h[bin(f1, -PI, PI)] += inc;
            h[BINS + bin(f2, -1.0, 1.0)] += inc;
            h[2 * BINS + bin(f3, -1.0, 1.0)] += inc;
        }
        h
    });

    Ok(map_range(exec, points.len(), |i| {
        let mut acc = [0.0; DIM];
        for &(j, d2) in &neighborhoods[i] {
            if d2 == 0.0 {
                continue;
            }
            let w = 1.0 / d2.sqrt();
            for (a, s) in acc.iter_mut().zip(&spfh[j]) {
                *a += w * s;
            }
        }
        for part in acc.chunks_mut(BINS) {
            let sum: f64 = part.iter().sum();
            if sum > 0.0 {
                let scale = 100.0 / sum;
                part.iter_mut().for_each(|v| *v *= scale);
            }
        }
        let mut out = spfh[i];
        for (o, a) in out.iter_mut().zip(&acc) {
            *o += a;
        }
        out
    }))
}

#[inline]
fn dist2_bounded(a: &Descriptor, b: &Descriptor, bound: f64) -> f64 {
    let mut s = 0.0;
    for chunk in 0..3 {
        for k in chunk * BINS..(chunk + 1) * BINS {
            let d = a[k] - b[k];
            s += d * d;
        }
        if s > bound {
            return s;
        }
    }
    s
}

/// For each descriptor in `from`, the index of the closest descriptor in
/// `to`; ties go to the lower index.
pub fn nearest_descriptors(from: &[Descriptor], to: &[Descriptor], exec: Execution) -> Vec<usize> {
    map_range(exec, from.len(), |i| {
        let mut best = (f64::INFINITY, 0usize);
        for (j, d) in to.iter().enumerate() {
            let s = dist2_bounded(&from[i], d, best.0);
            if s < best.0 {
                best = (s, j);
            }
        }
        best.1
    })
}

/// Mutual nearest neighbours in descriptor space as `(index in a, index in b)`,
/// ordered by index in `a`.
pub fn mutual_matches(a: &[Descriptor], b: &[Descriptor], exec: Execution) -> Vec<(usize, usize)> {
    let ab = nearest_descriptors(a, b, exec);
    let ba = nearest_descriptors(b, a, exec);
    ab.iter()
        .enumerate()
        .filter(|&(i, &j)| ba[j] == i)
        .map(|(i, &j)| (i, j))
        .collect()
}
