//! Exact HDBSCAN.
//!
//! Core distance is the distance to the `min_samples`-th nearest neighbour
//! (the point itself counts as the first). The minimum spanning tree of the
//! mutual-reachability graph is built with Borůvka over a k-d tree, using the
//! total edge order `(weight, lower index, higher index)`.
//!
//! MST edges of equal weight are merged simultaneously, so the single-linkage
//! hierarchy has n-ary nodes and does not depend on which of several
//! equal-weight spanning trees was found. The condensed tree, excess-of-mass
//! selection and epsilon merge are then computed on that hierarchy.

use serde::{Deserialize, Serialize};

use crate::kdtree::{box_dist_sq, dist_sq, KdTree};
use crate::par;

/// Merge distances are floored here before inversion so that duplicate
/// points give a finite lambda.
pub const MIN_MERGE_DISTANCE: f64 = 1e-12;

pub fn lambda_of(distance: f64) -> f64 {
    1.0 / distance.max(MIN_MERGE_DISTANCE)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HdbscanParams {
    pub min_cluster_size: usize,
    pub min_samples: usize,
    /// Meters.
    pub cluster_selection_epsilon: f64,
}

impl Default for HdbscanParams {
    fn default() -> Self {
        HdbscanParams {
            min_cluster_size: 16,
            min_samples: 16,
            cluster_selection_epsilon: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HdbscanResult {
    /// Cluster id per point; `None` is noise.
    pub labels: Vec<Option<usize>>,
    /// Sorted member indices per cluster. Clusters are ordered by their
    /// smallest member.
    pub clusters: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub a: usize,
    pub b: usize,
    pub weight: f64,
}

struct UnionFind {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Core distances (distance to the `min_samples`-th neighbour, self included).
pub fn core_distances<const D: usize>(tree: &KdTree<D>, min_samples: usize) -> Vec<f64> {
    let k = min_samples.clamp(1, tree.len().max(1));
    let pts = tree.points();
    par::map(pts, |p| tree.knn(p, k).last().map(|x| x.0).unwrap_or(0.0))
}

#[inline]
fn edge_less(w: f64, a: usize, b: usize, bw: f64, ba: usize, bb: usize) -> bool {
    let (lo, hi) = (a.min(b), a.max(b));
    let (blo, bhi) = (ba.min(bb), ba.max(bb));
    match w.total_cmp(&bw) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => (lo, hi) < (blo, bhi),
    }
}

struct BoruvkaIndex<'a, const D: usize> {
    tree: &'a KdTree<D>,
    core: &'a [f64],
    node_min_core: Vec<f64>,
    node_min_index: Vec<usize>,
}

impl<'a, const D: usize> BoruvkaIndex<'a, D> {
    fn new(tree: &'a KdTree<D>, core: &'a [f64]) -> Self {
        let mut node_min_core = vec![f64::INFINITY; tree.nodes.len()];
        let mut node_min_index = vec![usize::MAX; tree.nodes.len()];
        for (id, node) in tree.nodes.iter().enumerate() {
            for &i in &tree.order[node.start..node.end] {
                node_min_core[id] = node_min_core[id].min(core[i]);
                node_min_index[id] = node_min_index[id].min(i);
            }
        }
        BoruvkaIndex {
            tree,
            core,
            node_min_core,
            node_min_index,
        }
    }

    /// Component id shared by every point under a node, if any.
    fn node_components(&self, comp: &[usize]) -> Vec<Option<usize>> {
        let nodes = &self.tree.nodes;
        let mut out = vec![None; nodes.len()];
        // Children are created after their parent, so a reverse sweep is bottom-up.
        for id in (0..nodes.len()).rev() {
            out[id] = match nodes[id].children {
                None => {
                    let ids = &self.tree.order[nodes[id].start..nodes[id].end];
                    let c = comp[ids[0]];
                    ids.iter().all(|&i| comp[i] == c).then_some(c)
                }
                Some((l, r)) => match (out[l], out[r]) {
                    (Some(a), Some(b)) if a == b => Some(a),
                    _ => None,
                },
            };
        }
        out
    }

    /// Cheapest mutual-reachability edge from `i` to another component.
    fn cheapest_out(
        &self,
        i: usize,
        comp: &[usize],
        node_comp: &[Option<usize>],
    ) -> Option<(f64, usize)> {
        let mut best = (f64::INFINITY, usize::MAX);
        let q = self.tree.points()[i];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if node_comp[id] == Some(comp[i]) {
                continue;
            }
            let node = &self.tree.nodes[id];
            let bound = self.core[i]
                .max(self.node_min_core[id])
                .max(box_dist_sq(&q, &node.lo, &node.hi).sqrt());
            if bound > best.0 || (bound == best.0 && self.node_min_index[id] > best.1) {
                continue;
            }
            match node.children {
                None => {
                    for &j in &self.tree.order[node.start..node.end] {
                        if comp[j] == comp[i] {
                            continue;
                        }
                        let w = dist_sq(&q, &self.tree.points()[j])
                            .sqrt()
                            .max(self.core[i])
                            .max(self.core[j]);
                        if w < best.0 || (w == best.0 && j < best.1) {
                            best = (w, j);
                        }
                    }
                }
                Some((l, r)) => {
                    let dl = box_dist_sq(&q, &self.tree.nodes[l].lo, &self.tree.nodes[l].hi);
                    let dr = box_dist_sq(&q, &self.tree.nodes[r].lo, &self.tree.nodes[r].hi);
                    // Visit the nearer child first (pushed last).
                    if dl <= dr {
                        stack.push(r);
                        stack.push(l);
                    } else {
                        stack.push(l);
                        stack.push(r);
                    }
                }
            }
        }
        (best.1 != usize::MAX).then_some(best)
    }
}

/// Minimum spanning tree of the mutual-reachability graph, edges sorted by
/// `(weight, lower index, higher index)`.
pub fn mutual_reachability_mst<const D: usize>(tree: &KdTree<D>, core: &[f64]) -> Vec<MstEdge> {
    let n = tree.len();
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n < 2 {
        return edges;
    }
    let index = BoruvkaIndex::new(tree, core);
    let mut uf = UnionFind::new(n);
    let mut components = n;
    while components > 1 {
        let comp: Vec<usize> = (0..n).map(|i| uf.find(i)).collect();
        let node_comp = index.node_components(&comp);
        let per_point = par::map_range(n, |i| index.cheapest_out(i, &comp, &node_comp));
        let mut best: Vec<Option<MstEdge>> = vec![None; n];
        for (i, cand) in per_point.into_iter().enumerate() {
            let Some((w, j)) = cand else { continue };
            let slot = &mut best[comp[i]];
            let better = match slot {
                None => true,
                Some(e) => edge_less(w, i, j, e.weight, e.a, e.b),
            };
            if better {
                *slot = Some(MstEdge {
                    a: i.min(j),
                    b: i.max(j),
                    weight: w,
                });
            }
        }
        let mut added = false;
        for e in best.into_iter().flatten() {
            if uf.union(e.a, e.b) {
                edges.push(e);
                components -= 1;
                added = true;
            }
        }
        assert!(added, "Borůvka round made no progress");
    }
    edges.sort_by(|x, y| {
        x.weight
            .total_cmp(&y.weight)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    edges
}

/// Node of the n-ary single-linkage hierarchy. Ids `0..n` are points.
#[derive(Debug, Clone)]
struct MergeNode {
    weight: f64,
    children: Vec<usize>,
    size: usize,
}

struct Hierarchy {
    n: usize,
    internal: Vec<MergeNode>,
}

impl Hierarchy {
    fn size(&self, id: usize) -> usize {
        if id < self.n {
            1
        } else {
            self.internal[id - self.n].size
        }
    }

    fn root(&self) -> usize {
        if self.internal.is_empty() {
            0
        } else {
            self.n + self.internal.len() - 1
        }
    }

    fn collect_points(&self, id: usize, out: &mut Vec<usize>) {
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            if x < self.n {
                out.push(x);
            } else {
                stack.extend(self.internal[x - self.n].children.iter().copied());
            }
        }
    }
}

fn build_hierarchy(n: usize, edges: &[MstEdge]) -> Hierarchy {
    let mut uf = UnionFind::new(n);
    let mut node_of_root: Vec<usize> = (0..n).collect();
    let mut internal: Vec<MergeNode> = Vec::new();
    let mut start = 0;
    while start < edges.len() {
        let w = edges[start].weight;
        let mut end = start;
        while end < edges.len() && edges[end].weight == w {
            end += 1;
        }
        let group = &edges[start..end];
        let mut before: Vec<usize> = Vec::with_capacity(2 * group.len());
        for e in group {
            before.push(uf.find(e.a));
            before.push(uf.find(e.b));
        }
        before.sort_unstable();
        before.dedup();
        let before_nodes: Vec<(usize, usize)> =
            before.iter().map(|&r| (r, node_of_root[r])).collect();
        for e in group {
            uf.union(e.a, e.b);
        }
        let mut merged: Vec<(usize, usize)> = before_nodes
            .iter()
            .map(|&(r, node)| (uf.find(r), node))
            .collect();
        merged.sort_unstable();
        let mut i = 0;
        while i < merged.len() {
            let root = merged[i].0;
            let mut children = Vec::new();
            while i < merged.len() && merged[i].0 == root {
                children.push(merged[i].1);
                i += 1;
            }
            children.sort_unstable();
            let size = children
                .iter()
                .map(|&c| if c < n { 1 } else { internal[c - n].size })
                .sum::<usize>();
            internal.push(MergeNode {
                weight: w,
                children,
                size,
            });
            node_of_root[root] = n + internal.len() - 1;
        }
        start = end;
    }
    Hierarchy { n, internal }
}

/// Condensed-tree cluster.
#[derive(Debug, Clone)]
pub struct CondensedCluster {
    pub parent: Option<usize>,
    pub birth_lambda: f64,
    pub children: Vec<usize>,
    pub stability: f64,
    pub size: usize,
}

#[derive(Debug, Clone)]
pub struct CondensedTree {
    pub clusters: Vec<CondensedCluster>,
    /// Cluster each point last belonged to, with the lambda at which it left.
    pub point_exit: Vec<(usize, f64)>,
}

fn condense(h: &Hierarchy, min_cluster_size: usize) -> CondensedTree {
    let n = h.n;
    let mut clusters = vec![CondensedCluster {
        parent: None,
        birth_lambda: 0.0,
        children: Vec::new(),
        stability: 0.0,
        size: n,
    }];
    let mut point_exit = vec![(0usize, 0.0f64); n];
    if n == 0 {
        return CondensedTree {
            clusters,
            point_exit,
        };
    }
    let mut buf = Vec::new();
    let mut stack = vec![(h.root(), 0usize)];
    while let Some((node_id, cluster)) = stack.pop() {
        if node_id < n {
            // Only reachable when min_cluster_size is 1.
            point_exit[node_id] = (cluster, f64::INFINITY);
            continue;
        }
        let node = &h.internal[node_id - n];
        let lambda = lambda_of(node.weight);
        let real: Vec<usize> = node
            .children
            .iter()
            .copied()
            .filter(|&c| h.size(c) >= min_cluster_size)
            .collect();
        let mut drop_points = |child: usize, clusters: &mut Vec<CondensedCluster>| {
            buf.clear();
            h.collect_points(child, &mut buf);
            for &p in &buf {
                point_exit[p] = (cluster, lambda);
            }
            clusters[cluster].stability +=
                buf.len() as f64 * (lambda - clusters[cluster].birth_lambda);
        };
        if real.len() >= 2 {
            for &c in &node.children {
                if h.size(c) >= min_cluster_size {
                    let id = clusters.len();
                    let size = h.size(c);
                    clusters.push(CondensedCluster {
                        parent: Some(cluster),
                        birth_lambda: lambda,
                        children: Vec::new(),
                        stability: 0.0,
                        size,
                    });
                    clusters[cluster].children.push(id);
                    let birth = clusters[cluster].birth_lambda;
                    clusters[cluster].stability += size as f64 * (lambda - birth);
                    stack.push((c, id));
                } else {
                    drop_points(c, &mut clusters);
                }
            }
        } else {
            for &c in &node.children {
                if real.first() == Some(&c) {
                    stack.push((c, cluster));
                } else {
                    drop_points(c, &mut clusters);
                }
            }
        }
    }
    CondensedTree {
        clusters,
        point_exit,
    }
}

fn is_descendant(tree: &CondensedTree, mut c: usize, ancestor: usize) -> bool {
    while let Some(p) = tree.clusters[c].parent {
        if p == ancestor {
            return true;
        }
        c = p;
    }
    false
}

/// Excess-of-mass selection followed by the epsilon merge. The root is never
/// selected.
fn select(tree: &CondensedTree, epsilon: f64) -> Vec<usize> {
    let m = tree.clusters.len();
    let mut selected = vec![false; m];
    let mut total = vec![0.0; m];
    for c in (1..m).rev() {
        let cl = &tree.clusters[c];
        let sub: f64 = cl.children.iter().map(|&k| total[k]).sum();
        if !cl.children.is_empty() && sub > cl.stability {
            total[c] = sub;
        } else {
            total[c] = cl.stability;
            selected[c] = true;
            let mut stack = cl.children.clone();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                stack.extend(tree.clusters[k].children.iter().copied());
            }
        }
    }
    let eom: Vec<usize> = (1..m).filter(|&c| selected[c]).collect();
    if epsilon <= 0.0 {
        return eom;
    }
    let birth_eps = |c: usize| 1.0 / tree.clusters[c].birth_lambda;
    let mut chosen: Vec<usize> = Vec::new();
    for &leaf in &eom {
        if birth_eps(leaf) >= epsilon {
            chosen.push(leaf);
            continue;
        }
        if chosen.iter().any(|&c| is_descendant(tree, leaf, c)) {
            continue;
        }
        let mut cur = leaf;
        loop {
            let parent = tree.clusters[cur]
                .parent
                .expect("non-root cluster has a parent");
            if parent == 0 {
                break;
            }
            cur = parent;
            if birth_eps(parent) > epsilon {
                break;
            }
        }
        chosen.push(cur);
    }
    chosen.sort_unstable();
    chosen.dedup();
    let nested: Vec<usize> = chosen
        .iter()
        .copied()
        .filter(|&c| chosen.iter().any(|&a| a != c && is_descendant(tree, c, a)))
        .collect();
    chosen.retain(|c| !nested.contains(c));
    chosen
}

fn label_points(tree: &CondensedTree, chosen: &[usize]) -> HdbscanResult {
    let n = tree.point_exit.len();
    let mut is_chosen = vec![false; tree.clusters.len()];
    for &c in chosen {
        is_chosen[c] = true;
    }
    let mut raw: Vec<Option<usize>> = vec![None; n];
    for (p, &(mut c, _)) in tree.point_exit.iter().enumerate() {
        loop {
            if is_chosen[c] {
                raw[p] = Some(c);
                break;
            }
            match tree.clusters[c].parent {
                Some(parent) => c = parent,
                None => break,
            }
        }
    }
    // Renumber by smallest member.
    let mut remap = vec![usize::MAX; tree.clusters.len()];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut labels = vec![None; n];
    for p in 0..n {
        if let Some(c) = raw[p] {
            if remap[c] == usize::MAX {
                remap[c] = clusters.len();
                clusters.push(Vec::new());
            }
            labels[p] = Some(remap[c]);
            clusters[remap[c]].push(p);
        }
    }
    HdbscanResult { labels, clusters }
}

pub fn hdbscan<const D: usize>(points: &[[f64; D]], params: &HdbscanParams) -> HdbscanResult {
    let n = points.len();
    let mcs = params.min_cluster_size.max(2);
    if n < mcs {
        return HdbscanResult {
            labels: vec![None; n],
            clusters: Vec::new(),
        };
    }
    let tree = KdTree::new(points.to_vec());
    let core = core_distances(&tree, params.min_samples);
    let mst = mutual_reachability_mst(&tree, &core);
    let hierarchy = build_hierarchy(n, &mst);
    let condensed = condense(&hierarchy, mcs);
    let chosen = select(&condensed, params.cluster_selection_epsilon);
    label_points(&condensed, &chosen)
}

/// The condensed tree alone, for inspection.
pub fn condensed_tree<const D: usize>(
    points: &[[f64; D]],
    params: &HdbscanParams,
) -> CondensedTree {
    let tree = KdTree::new(points.to_vec());
    let core = core_distances(&tree, params.min_samples);
    let mst = mutual_reachability_mst(&tree, &core);
    condense(
        &build_hierarchy(points.len(), &mst),
        params.min_cluster_size.max(2),
    )
}
