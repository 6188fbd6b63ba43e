//! Static 3-d tree for nearest-neighbour, k-nearest and radius queries.
//!
//! Ties in distance are broken by the lower original index, so query results
//! do not depend on tree layout.

use nalgebra::Point3;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
enum Node {
    Leaf {
        start: u32,
        end: u32,
    },
    Split {
        axis: u8,
        value: f64,
        left: u32,
        right: u32,
    },
}

/// Immutable after construction; `Sync`, so it can be shared across threads.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    index: Vec<u32>,
    nodes: Vec<Node>,
}

#[inline]
fn dist2(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

#[inline]
fn closer(a: (f64, u32), b: (f64, u32)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

impl KdTree {
    pub fn build(points: &[Point3<f64>]) -> Self {
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let raw: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let mut nodes = Vec::with_capacity(2 * points.len() / LEAF_SIZE + 1);
        if !points.is_empty() {
            build_rec(&raw, &mut order, 0, &mut nodes);
        }
        let points = order.iter().map(|&i| raw[i as usize]).collect();
        KdTree {
            points,
            index: order,
            nodes,
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Nearest point as `(original index, squared distance)`.
    pub fn nearest(&self, q: &Point3<f64>) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let q = [q.x, q.y, q.z];
        let mut best = (f64::INFINITY, u32::MAX);
        self.nearest_rec(0, &q, &mut best);
        Some((best.1 as usize, best.0))
    }

    fn nearest_rec(&self, node: usize, q: &[f64; 3], best: &mut (f64, u32)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    let cand = (dist2(&self.points[slot], q), self.index[slot]);
                    if closer(cand, *best) {
                        *best = cand;
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.nearest_rec(near as usize, q, best);
                if diff * diff <= best.0 {
                    self.nearest_rec(far as usize, q, best);
                }
            }
        }
    }

    /// The `k` nearest points sorted by `(squared distance, index)`.
    pub fn knn(&self, q: &Point3<f64>, k: usize) -> Vec<(usize, f64)> {
        let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1);
        if k > 0 && !self.is_empty() {
            self.knn_rec(0, &[q.x, q.y, q.z], k, &mut heap);
        }
        heap.into_iter().map(|(d, i)| (i as usize, d)).collect()
    }

    fn knn_rec(&self, node: usize, q: &[f64; 3], k: usize, found: &mut Vec<(f64, u32)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    let cand = (dist2(&self.points[slot], q), self.index[slot]);
                    if found.len() == k && !closer(cand, found[k - 1]) {
                        continue;
                    }
                    let pos = found.partition_point(|&e| closer(e, cand));
                    found.insert(pos, cand);
                    found.truncate(k);
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near as usize, q, k, found);
                if found.len() < k || diff * diff <= found[k - 1].0 {
                    self.knn_rec(far as usize, q, k, found);
                }
            }
        }
    }

    /// Appends every point with squared distance `≤ radius²` to `out`, in
    /// tree order.
    pub fn within_radius(&self, q: &Point3<f64>, radius: f64, out: &mut Vec<(usize, f64)>) {
        if self.is_empty() {
            return;
        }
        self.radius_rec(0, &[q.x, q.y, q.z], radius * radius, out);
    }

    fn radius_rec(&self, node: usize, q: &[f64; 3], r2: f64, out: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start as usize..end as usize {
                    let d = dist2(&self.points[slot], q);
                    if d <= r2 {
                        out.push((self.index[slot] as usize, d));
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis as usize] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_rec(near as usize, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_rec(far as usize, q, r2, out);
                }
            }
        }
    }
}

fn build_rec(raw: &[[f64; 3]], order: &mut [u32], offset: usize, nodes: &mut Vec<Node>) -> u32 {
    let id = nodes.len() as u32;
    if order.len() <= LEAF_SIZE {
        nodes.push(Node::Leaf {
            start: offset as u32,
            end: (offset + order.len()) as u32,
        });
        return id;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &raw[i as usize];
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        raw[a as usize][axis].total_cmp(&raw[b as usize][axis]).then(a.cmp(&b))
    });
    let value = raw[order[mid] as usize][axis];
    nodes.push(Node::Leaf { start: 0, end: 0 });
    let (l, r) = order.split_at_mut(mid);
    let left = build_rec(raw, l, offset, nodes);
    let right = build_rec(raw, r, offset + mid, nodes);
    nodes[id as usize] = Node::Split {
        axis: axis as u8,
        value,
        left,
        right,
    };
    id
}

/// Orders `(index, squared distance)` pairs by distance, then index.
pub fn sort_neighbors(v: &mut [(usize, f64)]) {
    v.sort_unstable_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
}

/// Median distance from each point to its nearest non-coincident neighbour.
///
/// Coincident copies are collapsed first so duplicated keypoints do not drive
/// the spacing to zero. Returns `None` with fewer than two distinct points.
pub fn median_spacing(points: &[Point3<f64>]) -> Option<f64> {
    let mut distinct: Vec<Point3<f64>> = points.to_vec();
    distinct.sort_unstable_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)).then(a.z.total_cmp(&b.z)));
    distinct.dedup();
    if distinct.len() < 2 {
        return None;
    }
    let tree = KdTree::build(&distinct);
    let mut d: Vec<f64> = distinct.iter().map(|p| tree.knn(p, 2)[1].1.sqrt()).collect();
    let mid = d.len() / 2;
    let (_, m, _) = d.select_nth_unstable_by(mid, |a, b| a.total_cmp(b));
    Some(*m)
}
