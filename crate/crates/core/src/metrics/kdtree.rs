//! 3-D k-d tree for exact nearest-neighbor queries.
//!
//! Median splits on the axis of largest spread; queries prune subtrees whose
//! slab distance already exceeds the best squared distance. Results match
//! brute force exactly (same distances), which the chamfer tests assert.

pub struct KdTree3 {
    nodes: Vec<Node>,
    root: usize,
}

struct Node {
    point: [f64; 3],
    axis: usize,
    left: usize,
    right: usize,
}

const NONE: usize = usize::MAX;

impl KdTree3 {
    /// Builds a tree over the points; returns None for an empty slice.
    pub fn build(points: &[[f64; 3]]) -> Option<KdTree3> {
        if points.is_empty() {
            return None;
        }
        let mut idx: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = build_rec(points, &mut idx[..], &mut nodes);
        Some(KdTree3 { nodes, root })
    }

    /// Index-free nearest neighbor: returns the smallest squared distance.
    pub fn nearest_sq(&self, q: &[f64; 3]) -> f64 {
        let mut best = f64::INFINITY;
        self.search(self.root, q, &mut best);
        best
    }

    fn search(&self, node: usize, q: &[f64; 3], best: &mut f64) {
        if node == NONE {
            return;
        }
        let n = &self.nodes[node];
        let d = sq_dist(&n.point, q);
        if d < *best {
            *best = d;
        }
        let delta = q[n.axis] - n.point[n.axis];
        let (near, far) = if delta < 0.0 {
            (n.left, n.right)
        } else {
            (n.right, n.left)
        };
        self.search(near, q, best);
        if delta * delta < *best {
            self.search(far, q, best);
        }
    }
}

fn build_rec(points: &[[f64; 3]], idx: &mut [usize], nodes: &mut Vec<Node>) -> usize {
    if idx.is_empty() {
        return NONE;
    }
    // Split on the axis with the largest coordinate spread.
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in idx.iter() {
        for a in 0..3 {
            lo[a] = lo[a].min(points[i][a]);
            hi[a] = hi[a].max(points[i][a]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = idx.len() / 2;
    idx.select_nth_unstable_by(mid, |&a, &b| points[a][axis].total_cmp(&points[b][axis]));
    let pivot = idx[mid];
    let slot = nodes.len();
    nodes.push(Node {
        point: points[pivot],
        axis,
        left: NONE,
        right: NONE,
    });
    let (left_idx, rest) = idx.split_at_mut(mid);
    let right_idx = &mut rest[1..];
    let left = build_rec(points, left_idx, nodes);
    let right = build_rec(points, right_idx, nodes);
    nodes[slot].left = left;
    nodes[slot].right = right;
    slot
}

pub(crate) fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}
