//! Per-proposal SE(2) motion from the proposal's own temporal slices.
//!
//! The proposal's frames are split into an earlier and a later half; the
//! earlier half's bird's-eye-view points are registered onto the later half
//! with trimmed point-to-point ICP restricted to yaw + planar translation.

use serde::{Deserialize, Serialize};

use crate::kdtree::KdTree;
use crate::spatial_clustering::{AggregatedCloud, ObjectProposal};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionParams {
    /// Speeds at or above this are dynamic, m/s.
    pub dynamic_threshold: f64,
    pub max_iterations: usize,
    /// Convergence bound on the per-iteration parameter change.
    pub tolerance: f64,
    /// Correspondences beyond this distance quantile are dropped each iteration.
    pub trim_quantile: f64,
    pub min_points_per_half: usize,
    /// ICP is restarted from initial yaws in `±yaw_search_deg`, spaced by
    /// `yaw_search_step_deg`; the fit with the lowest trimmed RMSE wins.
    /// A zero step disables the search.
    pub yaw_search_deg: f64,
    pub yaw_search_step_deg: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        MotionParams {
            dynamic_threshold: 0.5,
            max_iterations: 50,
            tolerance: 1e-4,
            trim_quantile: 0.9,
            min_points_per_half: 5,
            yaw_search_deg: 45.0,
            yaw_search_step_deg: 7.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionEstimate {
    /// Displacement of the earlier half's BEV centroid, meters.
    pub translation_xy: [f64; 2],
    pub yaw: f64,
    /// Seconds between the two halves' mean point timestamps.
    pub dt: f64,
    pub speed: f64,
    pub is_dynamic: bool,
    /// Too few frames or points to estimate motion; reported as static.
    pub low_evidence: bool,
}

impl MotionEstimate {
    pub fn low_evidence() -> Self {
        MotionEstimate {
            translation_xy: [0.0, 0.0],
            yaw: 0.0,
            dt: 1.0,
            speed: 0.0,
            is_dynamic: false,
            low_evidence: true,
        }
    }

    /// Velocity in m/s.
    pub fn velocity(&self) -> [f64; 2] {
        [
            self.translation_xy[0] / self.dt,
            self.translation_xy[1] / self.dt,
        ]
    }

    /// Velocity, or zero for static estimates.
    pub fn box_velocity(&self) -> [f64; 2] {
        if self.is_dynamic {
            self.velocity()
        } else {
            [0.0, 0.0]
        }
    }

    pub fn yaw_rate(&self) -> f64 {
        self.yaw / self.dt
    }
}

/// `p ↦ R(yaw)(p − pivot) + pivot + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Se2Transform {
    pub yaw: f64,
    pub translation: [f64; 2],
    pub pivot: [f64; 2],
}

impl Se2Transform {
    pub fn apply(&self, p: [f64; 2]) -> [f64; 2] {
        let (s, c) = self.yaw.sin_cos();
        let (x, y) = (p[0] - self.pivot[0], p[1] - self.pivot[1]);
        [
            c * x - s * y + self.pivot[0] + self.translation[0],
            s * x + c * y + self.pivot[1] + self.translation[1],
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IcpResult {
    pub transform: Se2Transform,
    pub iterations: usize,
    pub converged: bool,
    /// RMS distance of the kept correspondences at the last iteration.
    pub rmse: f64,
}

fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len().max(1) as f64;
    let (sx, sy) = points
        .iter()
        .fold((0.0, 0.0), |a, p| (a.0 + p[0], a.1 + p[1]));
    [sx / n, sy / n]
}

fn wrap_angle(a: f64) -> f64 {
    let t = std::f64::consts::TAU;
    let mut r = (a + std::f64::consts::PI).rem_euclid(t) - std::f64::consts::PI;
    if r <= -std::f64::consts::PI {
        r += t;
    }
    r
}

/// Closed-form SE(2) fit of paired points, expressed about `pivot`.
pub fn procrustes_se2(source: &[[f64; 2]], target: &[[f64; 2]], pivot: [f64; 2]) -> Se2Transform {
    let ms = centroid(source);
    let mt = centroid(target);
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for (p, q) in source.iter().zip(target) {
        let (ax, ay) = (p[0] - ms[0], p[1] - ms[1]);
        let (bx, by) = (q[0] - mt[0], q[1] - mt[1]);
        sxx += ax * bx + ay * by;
        sxy += ax * by - ay * bx;
    }
    let yaw = sxy.atan2(sxx);
    let (s, c) = yaw.sin_cos();
    let n = source.len().max(1) as f64;
    let mut residual = [0.0, 0.0];
    for (p, q) in source.iter().zip(target) {
        residual[0] += q[0] - (c * p[0] - s * p[1]);
        residual[1] += q[1] - (s * p[0] + c * p[1]);
    }
    let spin = [
        c * pivot[0] - s * pivot[1] - pivot[0],
        s * pivot[0] + c * pivot[1] - pivot[1],
    ];
    Se2Transform {
        yaw,
        translation: [residual[0] / n + spin[0], residual[1] / n + spin[1]],
        pivot,
    }
}

/// Registers `source` onto `target`, rotating about the source centroid.
///
/// Translation starts from the centroid offset; each initial yaw of the
/// configured search runs its own ICP and the lowest trimmed RMSE wins
/// (ties keep the smaller initial yaw magnitude).
pub fn icp_se2(source: &[[f64; 2]], target: &[[f64; 2]], params: &MotionParams) -> IcpResult {
    let mut starts = vec![0.0];
    if params.yaw_search_step_deg > 0.0 {
        let steps = (params.yaw_search_deg / params.yaw_search_step_deg).floor() as usize;
        for k in 1..=steps {
            let a = (k as f64 * params.yaw_search_step_deg).to_radians();
            starts.push(a);
            starts.push(-a);
        }
    }
    let tree = (!target.is_empty()).then(|| KdTree::new(target.to_vec()));
    let mut best: Option<IcpResult> = None;
    for yaw0 in starts {
        let fit = icp_from(source, target, tree.as_ref(), yaw0, params);
        if best.is_none_or(|b| fit.rmse < b.rmse) {
            best = Some(fit);
        }
    }
    best.expect("at least one start")
}

/// Single ICP run from the initial yaw `yaw0` about the source centroid.
pub fn icp_from(
    source: &[[f64; 2]],
    target: &[[f64; 2]],
    tree: Option<&KdTree<2>>,
    yaw0: f64,
    params: &MotionParams,
) -> IcpResult {
    let pivot = centroid(source);
    let ct = centroid(target);
    let mut current = Se2Transform {
        yaw: yaw0,
        translation: [ct[0] - pivot[0], ct[1] - pivot[1]],
        pivot,
    };
    let Some(tree) = tree.filter(|_| !source.is_empty()) else {
        return IcpResult {
            transform: current,
            iterations: 0,
            converged: false,
            rmse: f64::INFINITY,
        };
    };
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(source.len());
    let mut rmse = f64::INFINITY;
    for iter in 1..=params.max_iterations {
        pairs.clear();
        for (i, p) in source.iter().enumerate() {
            let moved = current.apply(*p);
            if let Some((d, j)) = tree.nearest(&moved) {
                pairs.push((d, i, j));
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let keep =
            ((pairs.len() as f64 * params.trim_quantile).ceil() as usize).clamp(1, pairs.len());
        let kept = &pairs[..keep];
        rmse = (kept.iter().map(|x| x.0 * x.0).sum::<f64>() / keep as f64).sqrt();
        let src: Vec<[f64; 2]> = kept.iter().map(|x| source[x.1]).collect();
        let tgt: Vec<[f64; 2]> = kept.iter().map(|x| target[x.2]).collect();
        let next = procrustes_se2(&src, &tgt, pivot);
        let change = wrap_angle(next.yaw - current.yaw).abs()
            + (next.translation[0] - current.translation[0])
                .hypot(next.translation[1] - current.translation[1]);
        current = next;
        if change < params.tolerance {
            return IcpResult {
                transform: current,
                iterations: iter,
                converged: true,
                rmse,
            };
        }
    }
    IcpResult {
        transform: current,
        iterations: params.max_iterations,
        converged: false,
        rmse,
    }
}

/// Estimates a proposal's motion. `frame_times[f]` is frame `f`'s time in seconds.
pub fn estimate_motion(
    proposal: &ObjectProposal,
    agg: &AggregatedCloud,
    frame_times: &[f64],
    params: &MotionParams,
) -> MotionEstimate {
    let frames = proposal.frame_span();
    if frames.len() < 2 {
        return MotionEstimate::low_evidence();
    }
    let (early, late) = frames.split_at(frames.len() / 2);
    let gather = |fs: &[usize]| -> (Vec<[f64; 2]>, f64) {
        let mut pts = Vec::new();
        let mut tsum = 0.0;
        for f in fs {
            for &i in &proposal.slices[f] {
                let p = agg.points[i];
                pts.push([p[0], p[1]]);
                tsum += frame_times[*f];
            }
        }
        let mean_t = tsum / pts.len().max(1) as f64;
        (pts, mean_t)
    };
    let (source, t_src) = gather(early);
    let (target, t_tgt) = gather(late);
    if source.len() < params.min_points_per_half || target.len() < params.min_points_per_half {
        return MotionEstimate::low_evidence();
    }
    let dt = t_tgt - t_src;
    if !(dt > 0.0) {
        return MotionEstimate::low_evidence();
    }
    let fit = icp_se2(&source, &target, params);
    let t = fit.transform.translation;
    let speed = t[0].hypot(t[1]) / dt;
    MotionEstimate {
        translation_xy: t,
        yaw: wrap_angle(fit.transform.yaw),
        dt,
        speed,
        is_dynamic: is_dynamic_speed(speed, params.dynamic_threshold),
        low_evidence: false,
    }
}

/// Dynamic means at or above the threshold.
pub fn is_dynamic_speed(speed: f64, threshold: f64) -> bool {
    speed >= threshold
}

/// Indices of static and dynamic estimates, in input order.
pub fn split_static_dynamic(estimates: &[MotionEstimate]) -> (Vec<usize>, Vec<usize>) {
    (0..estimates.len()).partition(|&i| !estimates[i].is_dynamic)
}

/// Re-times a proposal's points to `reference_time` under the estimated
/// constant velocity and yaw rate (rotation about the proposal's BEV centroid).
pub fn compensate_motion(
    proposal: &ObjectProposal,
    agg: &AggregatedCloud,
    frame_times: &[f64],
    reference_time: f64,
    motion: &MotionEstimate,
) -> Vec<[f64; 3]> {
    let pts: Vec<[f64; 3]> = proposal.points(agg).collect();
    if !motion.is_dynamic {
        return pts;
    }
    let bev: Vec<[f64; 2]> = pts.iter().map(|p| [p[0], p[1]]).collect();
    let c = centroid(&bev);
    let v = motion.velocity();
    let w = motion.yaw_rate();
    proposal
        .point_indices
        .iter()
        .zip(&pts)
        .map(|(&i, p)| {
            let tau = frame_times[agg.source_frame[i]] - reference_time;
            let back = Se2Transform {
                yaw: -w * tau,
                translation: [-v[0] * tau, -v[1] * tau],
                pivot: c,
            }
            .apply([p[0], p[1]]);
            [back[0], back[1], p[2]]
        })
        .collect()
}
