//! O(n³) HDBSCAN from the explicit mutual-reachability matrix.
//!
//! The hierarchy is built top-down: for a cluster S, the split level is the
//! smallest threshold at which S is connected, and the children are the
//! connected components of S using only strictly shorter edges.

const MIN_MERGE_DISTANCE: f64 = 1e-12;

struct Cluster {
    parent: Option<usize>,
    birth: f64,
    children: Vec<usize>,
    stability: f64,
}

pub struct Oracle {
    mr: Vec<Vec<f64>>,
    mcs: usize,
    clusters: Vec<Cluster>,
    exit: Vec<usize>,
}

fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

impl Oracle {
    fn components(&self, set: &[usize], below: f64, inclusive: bool) -> Vec<Vec<usize>> {
        let mut seen = vec![false; set.len()];
        let mut out = Vec::new();
        for s in 0..set.len() {
            if seen[s] {
                continue;
            }
            seen[s] = true;
            let mut comp = vec![set[s]];
            let mut queue = vec![s];
            while let Some(a) = queue.pop() {
                for b in 0..set.len() {
                    if seen[b] {
                        continue;
                    }
                    let w = self.mr[set[a]][set[b]];
                    if (inclusive && w <= below) || (!inclusive && w < below) {
                        seen[b] = true;
                        comp.push(set[b]);
                        queue.push(b);
                    }
                }
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out.sort();
        out
    }

    fn split_level(&self, set: &[usize]) -> f64 {
        let mut levels: Vec<f64> = Vec::new();
        for (i, &a) in set.iter().enumerate() {
            for &b in &set[i + 1..] {
                levels.push(self.mr[a][b]);
            }
        }
        levels.sort_by(|a, b| a.total_cmp(b));
        levels.dedup();
        let (mut lo, mut hi) = (0usize, levels.len() - 1);
        while lo < hi {
            let mid = (lo + hi) / 2;
            if self.components(set, levels[mid], true).len() == 1 {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        levels[lo]
    }

    fn grow(&mut self, set: Vec<usize>, cluster: usize) {
        let mut work = vec![(set, cluster)];
        while let Some((set, cid)) = work.pop() {
            if set.len() < 2 {
                for p in set {
                    self.exit[p] = cid;
                }
                continue;
            }
            let w = self.split_level(&set);
            let lambda = 1.0 / w.max(MIN_MERGE_DISTANCE);
            let comps = self.components(&set, w, false);
            let real: Vec<&Vec<usize>> = comps.iter().filter(|c| c.len() >= self.mcs).collect();
            let birth = self.clusters[cid].birth;
            if real.len() >= 2 {
                for comp in &comps {
                    if comp.len() >= self.mcs {
                        let id = self.clusters.len();
                        self.clusters.push(Cluster {
                            parent: Some(cid),
                            birth: lambda,
                            children: Vec::new(),
                            stability: 0.0,
                        });
                        self.clusters[cid].children.push(id);
                        self.clusters[cid].stability += comp.len() as f64 * (lambda - birth);
                        work.push((comp.clone(), id));
                    } else {
                        for &p in comp {
                            self.exit[p] = cid;
                        }
                        self.clusters[cid].stability += comp.len() as f64 * (lambda - birth);
                    }
                }
            } else {
                for comp in &comps {
                    if real.len() == 1 && comp == real[0] {
                        work.push((comp.clone(), cid));
                    } else {
                        for &p in comp {
                            self.exit[p] = cid;
                        }
                        self.clusters[cid].stability += comp.len() as f64 * (lambda - birth);
                    }
                }
            }
        }
    }

    fn eom(&self, c: usize) -> (f64, Vec<usize>) {
        let cl = &self.clusters[c];
        if cl.children.is_empty() {
            return (cl.stability, vec![c]);
        }
        let mut sub = 0.0;
        let mut sel = Vec::new();
        for &k in &cl.children {
            let (s, v) = self.eom(k);
            sub += s;
            sel.extend(v);
        }
        if sub > cl.stability {
            (sub, sel)
        } else {
            (cl.stability, vec![c])
        }
    }

    fn ancestors_or_self(&self, mut c: usize) -> Vec<usize> {
        let mut out = vec![c];
        while let Some(p) = self.clusters[c].parent {
            out.push(p);
            c = p;
        }
        out
    }
}

/// Cluster memberships (each sorted; clusters ordered by smallest member).
pub fn oracle_hdbscan(
    points: &[Vec<f64>],
    mcs: usize,
    min_samples: usize,
    epsilon: f64,
) -> Vec<Vec<usize>> {
    let n = points.len();
    let mcs = mcs.max(2);
    if n < mcs {
        return Vec::new();
    }
    let k = min_samples.clamp(1, n);
    let d: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| euclid(&points[i], &points[j])).collect())
        .collect();
    let core: Vec<f64> = d
        .iter()
        .map(|row| {
            let mut r = row.clone();
            r.sort_by(|a, b| a.total_cmp(b));
            r[k - 1]
        })
        .collect();
    let mr: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| d[i][j].max(core[i]).max(core[j])).collect())
        .collect();
    let mut o = Oracle {
        mr,
        mcs,
        clusters: vec![Cluster {
            parent: None,
            birth: 0.0,
            children: Vec::new(),
            stability: 0.0,
        }],
        exit: vec![0; n],
    };
    o.grow((0..n).collect(), 0);

    let mut selected: Vec<usize> = Vec::new();
    for &c in &o.clusters[0].children {
        selected.extend(o.eom(c).1);
    }
    if epsilon > 0.0 {
        let mut chosen = Vec::new();
        for &c in &selected {
            let mut cur = c;
            if 1.0 / o.clusters[c].birth < epsilon {
                loop {
                    let p = o.clusters[cur].parent.unwrap();
                    if p == 0 {
                        break;
                    }
                    cur = p;
                    if 1.0 / o.clusters[p].birth > epsilon {
                        break;
                    }
                }
            }
            chosen.push(cur);
        }
        chosen.sort_unstable();
        chosen.dedup();
        let keep: Vec<usize> = chosen
            .iter()
            .copied()
            .filter(|&c| {
                !o.ancestors_or_self(c)[1..]
                    .iter()
                    .any(|a| chosen.contains(a))
            })
            .collect();
        selected = keep;
    }
    let mut out: Vec<Vec<usize>> = Vec::new();
    for &c in &selected {
        let members: Vec<usize> = (0..n)
            .filter(|&p| o.ancestors_or_self(o.exit[p]).contains(&c))
            .collect();
        if !members.is_empty() {
            out.push(members);
        }
    }
    out.sort();
    out
}
