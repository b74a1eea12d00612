//! Exact k-d tree over fixed-dimension points.
//!
//! Used for HDBSCAN core distances and Borůvka MST edges, and for ICP
//! correspondences. All queries are exact; ties are broken by point index so
//! results never depend on traversal order.

use std::collections::BinaryHeap;

const LEAF_SIZE: usize = 12;

#[derive(Debug, Clone)]
pub(crate) struct Node<const D: usize> {
    pub start: usize,
    pub end: usize,
    pub lo: [f64; D],
    pub hi: [f64; D],
    /// Child node ids; `None` for leaves.
    pub children: Option<(usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    /// Permutation: `order[start..end]` are the point ids under a node.
    pub(crate) order: Vec<usize>,
    pub(crate) nodes: Vec<Node<D>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist_sq: f64,
    index: usize,
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.index.cmp(&other.index))
    }
}

#[inline]
pub(crate) fn dist_sq<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = a[d] - b[d];
        s += t * t;
    }
    s
}

/// Squared distance from `q` to the axis-aligned box `[lo, hi]`.
#[inline]
pub(crate) fn box_dist_sq<const D: usize>(q: &[f64; D], lo: &[f64; D], hi: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for d in 0..D {
        let t = if q[d] < lo[d] {
            lo[d] - q[d]
        } else if q[d] > hi[d] {
            q[d] - hi[d]
        } else {
            0.0
        };
        s += t * t;
    }
    s
}

impl<const D: usize> KdTree<D> {
    pub fn new(points: Vec<[f64; D]>) -> Self {
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.build(0, tree.points.len());
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f64; D]] {
        &self.points
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let mut lo = [f64::INFINITY; D];
        let mut hi = [f64::NEG_INFINITY; D];
        for &i in &self.order[start..end] {
            let p = &self.points[i];
            for d in 0..D {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        let id = self.nodes.len();
        self.nodes.push(Node {
            start,
            end,
            lo,
            hi,
            children: None,
        });
        if end - start > LEAF_SIZE {
            let axis = (0..D)
                .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
                .unwrap_or(0);
            if hi[axis] > lo[axis] {
                let mid = start + (end - start) / 2;
                let points = &self.points;
                self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                    points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
                });
                let left = self.build(start, mid);
                let right = self.build(mid, end);
                self.nodes[id].children = Some((left, right));
            }
        }
        id
    }

    /// The `k` nearest points to `query` (including any point equal to it),
    /// sorted by `(distance, index)`. Returns `(distance, index)` pairs.
    pub fn knn(&self, query: &[f64; D], k: usize) -> Vec<(f64, usize)> {
        if k == 0 || self.points.is_empty() {
            return Vec::new();
        }
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.knn_rec(0, query, k, &mut heap);
        let mut out: Vec<(f64, usize)> = heap
            .into_sorted_vec()
            .into_iter()
            .map(|c| (c.dist_sq.sqrt(), c.index))
            .collect();
        out.truncate(k);
        out
    }

    fn knn_rec(&self, node_id: usize, q: &[f64; D], k: usize, heap: &mut BinaryHeap<Candidate>) {
        let node = &self.nodes[node_id];
        if heap.len() == k {
            let worst = heap.peek().map(|c| c.dist_sq).unwrap_or(f64::INFINITY);
            if box_dist_sq(q, &node.lo, &node.hi) > worst {
                return;
            }
        }
        match node.children {
            None => {
                for &i in &self.order[node.start..node.end] {
                    let c = Candidate {
                        dist_sq: dist_sq(q, &self.points[i]),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(c);
                    } else if let Some(top) = heap.peek() {
                        if c < *top {
                            heap.pop();
                            heap.push(c);
                        }
                    }
                }
            }
            Some((l, r)) => {
                let dl = box_dist_sq(q, &self.nodes[l].lo, &self.nodes[l].hi);
                let dr = box_dist_sq(q, &self.nodes[r].lo, &self.nodes[r].hi);
                let (first, second) = if dl <= dr { (l, r) } else { (r, l) };
                self.knn_rec(first, q, k, heap);
                self.knn_rec(second, q, k, heap);
            }
        }
    }

    /// Nearest point to `query` as `(distance, index)`.
    pub fn nearest(&self, query: &[f64; D]) -> Option<(f64, usize)> {
        self.knn(query, 1).into_iter().next()
    }
}
