//! Exact nearest-neighbor search over small point sets.
//!
//! The tree reproduces brute-force results bit for bit, including the
//! tie-break rule (equal distances resolve to the smallest point index), so
//! it can back the matching contract without changing any decision the
//! brute-force reference would make.

use nalgebra::DVector;

const LEAF_SIZE: usize = 16;

/// Squared Euclidean distance accumulated in coordinate order. Matching the
/// accumulation order of the brute-force reference keeps results bit-exact.
pub fn dist_sq(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let mut acc = 0.0;
    for k in 0..a.len() {
        let d = a[k] - b[k];
        acc += d * d;
    }
    acc
}

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

pub struct KdTree<'a> {
    points: &'a [DVector<f64>],
    order: Vec<usize>,
    nodes: Vec<Node>,
    root: usize,
}

impl<'a> KdTree<'a> {
    pub fn build(points: &'a [DVector<f64>]) -> Self {
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::new();
        let n = order.len();
        let root = build_node(points, &mut order, 0, n, &mut nodes);
        Self {
            points,
            order,
            nodes,
            root,
        }
    }

    /// Index and squared distance of the nearest point; ties resolve to the
    /// smallest index.
    pub fn nearest(&self, query: &DVector<f64>) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(self.root, query, &mut best);
        best
    }

    fn search(&self, node: usize, query: &DVector<f64>, best: &mut (usize, f64)) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    let d2 = dist_sq(query, &self.points[idx]);
                    if d2 < best.1 || (d2 == best.1 && idx < best.0) {
                        *best = (idx, d2);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff <= 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, best);
                // An equally distant smaller index may sit on the far side,
                // so only prune on a strict bound violation.
                if diff * diff <= best.1 {
                    self.search(far, query, best);
                }
            }
        }
    }
}

fn build_node(
    points: &[DVector<f64>],
    order: &mut [usize],
    start: usize,
    end: usize,
    nodes: &mut Vec<Node>,
) -> usize {
    let count = end - start;
    if count <= LEAF_SIZE {
        nodes.push(Node::Leaf { start, end });
        return nodes.len() - 1;
    }
    let dim = points[0].len();
    // split along the widest axis of this node's bounding box
    let mut axis = 0;
    let mut widest = -1.0;
    for a in 0..dim {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &i in &order[start..end] {
            let v = points[i][a];
            lo = lo.min(v);
            hi = hi.max(v);
        }
        if hi - lo > widest {
            widest = hi - lo;
            axis = a;
        }
    }
    if widest == 0.0 {
        // all points coincident; no split can make progress
        nodes.push(Node::Leaf { start, end });
        return nodes.len() - 1;
    }
    let mid = count / 2;
    order[start..end]
        .select_nth_unstable_by(mid, |&i, &j| points[i][axis].total_cmp(&points[j][axis]));
    let value = points[order[start + mid]][axis];
    let left = build_node(points, order, start, start + mid, nodes);
    let right = build_node(points, order, start + mid, end, nodes);
    nodes.push(Node::Split {
        axis,
        value,
        left,
        right,
    });
    nodes.len() - 1
}
