//! Exact nearest-neighbor search over 3D points.

use nalgebra::Vector3;

pub const DEFAULT_LEAF_SIZE: usize = 16;

#[derive(Clone, Debug)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

/// Result of a nearest-neighbor query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Neighbor {
    /// Index of the point in the slice the tree was built from.
    pub index: usize,
    pub point: Vector3<f64>,
    pub distance: f64,
}

/// Balanced k-d tree with median splits on the widest axis.
///
/// Queries are exact. Equidistant candidates resolve to the lowest original
/// point index.
#[derive(Clone, Debug)]
pub struct KdTree {
    points: Vec<[f64; 3]>,
    ids: Vec<usize>,
    nodes: Vec<Node>,
    leaf_size: usize,
}

impl KdTree {
    pub fn build(points: &[Vector3<f64>]) -> Self {
        Self::with_leaf_size(points, DEFAULT_LEAF_SIZE)
    }

    pub fn with_leaf_size(points: &[Vector3<f64>], leaf_size: usize) -> Self {
        let leaf_size = leaf_size.max(1);
        let mut ids: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        if !points.is_empty() {
            build_node(points, &mut ids, 0, points.len(), leaf_size, &mut nodes);
        }
        let permuted = ids.iter().map(|&i| [points[i].x, points[i].y, points[i].z]).collect();
        Self { points: permuted, ids, nodes, leaf_size }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    pub fn nearest(&self, query: &Vector3<f64>) -> Option<Neighbor> {
        if self.nodes.is_empty() {
            return None;
        }
        let q = [query.x, query.y, query.z];
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        self.search(0, &q, &mut best);
        let (d2, id, slot) = best;
        let p = self.points[slot];
        Some(Neighbor {
            index: id,
            point: Vector3::new(p[0], p[1], p[2]),
            distance: d2.sqrt(),
        })
    }

    // best = (squared distance, original id, slot in permuted storage)
    fn search(&self, node: usize, q: &[f64; 3], best: &mut (f64, usize, usize)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for slot in start..end {
                    let p = &self.points[slot];
                    let d2 = (p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2) + (p[2] - q[2]).powi(2);
                    let id = self.ids[slot];
                    if d2 < best.0 || (d2 == best.0 && id < best.1) {
                        *best = (d2, id, slot);
                    }
                }
            }
            Node::Split { axis, value, left, right } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, q, best);
                // <= keeps equidistant lower-index candidates reachable
                if diff * diff <= best.0 {
                    self.search(far, q, best);
                }
            }
        }
    }
}

fn build_node(
    points: &[Vector3<f64>],
    ids: &mut [usize],
    start: usize,
    end: usize,
    leaf_size: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let slot = nodes.len();
    if end - start <= leaf_size {
        nodes.push(Node::Leaf { start, end });
        return slot;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in &ids[start..end] {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap_or(0);
    let mid = (end - start) / 2;
    ids[start..end].select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    let value = points[ids[start + mid]][axis];
    nodes.push(Node::Leaf { start, end });
    let left = build_node(points, ids, start, start + mid, leaf_size, nodes);
    let right = build_node(points, ids, start + mid, end, leaf_size, nodes);
    nodes[slot] = Node::Split { axis, value, left, right };
    slot
}

/// Linear scan with the same tie rule as [`KdTree::nearest`].
pub fn brute_force_nearest(points: &[Vector3<f64>], query: &Vector3<f64>) -> Option<Neighbor> {
    let mut best: Option<(f64, usize)> = None;
    for (i, p) in points.iter().enumerate() {
        let d2 = (p - query).norm_squared();
        if best.is_none_or(|(b, _)| d2 < b) {
            best = Some((d2, i));
        }
    }
    best.map(|(d2, i)| Neighbor { index: i, point: points[i], distance: d2.sqrt() })
}
