//! Direct small-instance computation of the detection metrics.
//!
//! Boxes are plain tuples; everything is recomputed from scratch per prefix
//! of the score ranking.

use std::f64::consts::PI;

#[derive(Debug, Clone)]
pub struct OBox {
    pub frame: usize,
    pub class: &'static str,
    pub x: f64,
    pub y: f64,
    pub size: [f64; 3],
    pub yaw: f64,
    pub vel: [f64; 2],
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    pub map: f64,
    pub map_unclipped: f64,
    /// `[ate, ase, aoe, ave]`, averaged over classes.
    pub errors: [f64; 4],
    pub nds: f64,
    /// Per class (sorted by name), per threshold: clipped AP.
    pub ap: Vec<Vec<f64>>,
}

fn ranking(preds: &[OBox], class: &str) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..preds.len())
        .filter(|&i| preds[i].class == class)
        .collect();
    // Insertion sort: descending score, earlier input first on ties.
    for a in 1..idx.len() {
        let mut b = a;
        while b > 0 && preds[idx[b]].score > preds[idx[b - 1]].score {
            idx.swap(b, b - 1);
            b -= 1;
        }
    }
    idx
}

/// Per ranked prediction: `Some(gt index)` when matched.
fn greedy(preds: &[OBox], gts: &[OBox], class: &str, th: f64) -> Vec<Option<usize>> {
    let mut used = vec![false; gts.len()];
    let mut out = Vec::new();
    for p in ranking(preds, class) {
        let mut best: Option<usize> = None;
        for g in 0..gts.len() {
            if used[g] || gts[g].frame != preds[p].frame || gts[g].class != class {
                continue;
            }
            let d = dist(&preds[p], &gts[g]);
            if best.is_none_or(|b| d < dist(&preds[p], &gts[b])) {
                best = Some(g);
            }
        }
        match best {
            Some(g) if dist(&preds[p], &gts[g]) < th => {
                used[g] = true;
                out.push(Some(g));
            }
            _ => out.push(None),
        }
    }
    out
}

fn dist(a: &OBox, b: &OBox) -> f64 {
    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt()
}

fn ap(hits: &[Option<usize>], npos: usize, clip: f64) -> f64 {
    if npos == 0 {
        return 0.0;
    }
    let mut rec = Vec::new();
    let mut prec = Vec::new();
    for k in 0..hits.len() {
        let tp = hits[..=k].iter().filter(|h| h.is_some()).count();
        rec.push(tp);
        prec.push(tp as f64 / (k + 1) as f64);
    }
    let first = (100.0 * clip).round() as usize + 1;
    let mut total = 0.0;
    for j in first..=100 {
        let mut p: f64 = 0.0;
        for k in 0..hits.len() {
            if rec[k] * 100 >= j * npos {
                p = p.max(prec[k]);
            }
        }
        total += (p - clip).max(0.0);
    }
    total / (101 - first) as f64 / (1.0 - clip)
}

pub fn oracle(
    preds: &[OBox],
    gts: &[OBox],
    thresholds: &[f64],
    clip: f64,
    yaw_period: f64,
) -> OracleReport {
    let mut classes: Vec<&'static str> = gts.iter().map(|g| g.class).collect();
    classes.sort();
    classes.dedup();
    let mut aps = Vec::new();
    let mut maps = (0.0, 0.0);
    let mut errs = [0.0; 4];
    for &c in &classes {
        let npos = gts.iter().filter(|g| g.class == c).count();
        let row: Vec<f64> = thresholds
            .iter()
            .map(|&t| ap(&greedy(preds, gts, c, t), npos, clip))
            .collect();
        let unclipped: Vec<f64> = thresholds
            .iter()
            .map(|&t| ap(&greedy(preds, gts, c, t), npos, 0.0))
            .collect();
        maps.0 += row.iter().sum::<f64>() / row.len() as f64;
        maps.1 += unclipped.iter().sum::<f64>() / unclipped.len() as f64;
        aps.push(row);
        let ranked = ranking(preds, c);
        let hits = greedy(preds, gts, c, 2.0);
        let pairs: Vec<(&OBox, &OBox)> = ranked
            .iter()
            .zip(&hits)
            .filter_map(|(&p, h)| h.map(|g| (&preds[p], &gts[g])))
            .collect();
        if pairs.is_empty() {
            for e in &mut errs {
                *e += 1.0;
            }
            continue;
        }
        let n = pairs.len() as f64;
        for (p, g) in pairs {
            let inter = (0..3).map(|i| p.size[i].min(g.size[i])).product::<f64>();
            let vol = |s: [f64; 3]| s[0] * s[1] * s[2];
            let mut dy = (p.yaw - g.yaw).abs() % yaw_period;
            if dy > yaw_period / 2.0 {
                dy = yaw_period - dy;
            }
            errs[0] += dist(p, g) / n;
            errs[1] += (1.0 - inter / (vol(p.size) + vol(g.size) - inter)) / n;
            errs[2] += dy / n;
            errs[3] += ((p.vel[0] - g.vel[0]).powi(2) + (p.vel[1] - g.vel[1]).powi(2)).sqrt() / n;
        }
    }
    let nc = classes.len().max(1) as f64;
    let map = maps.0 / nc;
    let errors = if classes.is_empty() {
        [1.0; 4]
    } else {
        errs.map(|e| e / nc)
    };
    let nds = (5.0 * map + errors.iter().map(|e| 1.0 - e.min(1.0)).sum::<f64>()) / 10.0;
    OracleReport {
        map,
        map_unclipped: maps.1 / nc,
        errors,
        nds,
        ap: aps,
    }
}

pub const FULL_TURN: f64 = 2.0 * PI;
