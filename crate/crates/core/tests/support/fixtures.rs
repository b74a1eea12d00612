//! Seeded random inputs shared by the integration and acceptance tests.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use union_core::ground_removal::PlaneModel;
use union_core::motion_estimation::{icp_se2, MotionParams};
use union_core::spatial_clustering::{AggregatedCloud, HdbscanParams, ObjectProposal};

use super::kmeans_oracle::objective;
use super::se2_oracle::{centroid, rotate_about};

/// A random plane tilted at most 15°, 700 inliers within ±1 cm, and 300
/// uniform outliers (30%) above and below it.
pub fn ransac_plane(seed: u64) -> (Vec<[f64; 3]>, PlaneModel) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tilt = rng.random_range(0.0..15f64).to_radians();
    let az = rng.random_range(-PI..PI);
    let normal = [tilt.sin() * az.cos(), tilt.sin() * az.sin(), tilt.cos()];
    let truth = PlaneModel::new(normal, rng.random_range(-2.0..2.0)).unwrap();
    let mut pts = Vec::with_capacity(1000);
    for _ in 0..700 {
        let (x, y) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        pts.push([x, y, truth.z_at(x, y) + rng.random_range(-0.01..0.01)]);
    }
    for _ in 0..300 {
        let (x, y) = (rng.random_range(-20.0..20.0), rng.random_range(-20.0..20.0));
        let above = if rng.random_bool(0.8) {
            rng.random_range(0.2..4.0)
        } else {
            -rng.random_range(0.2..1.0)
        };
        pts.push([x, y, truth.z_at(x, y) + above]);
    }
    (pts, truth)
}

/// Angle between plane normals, degrees.
pub fn normal_angle_deg(a: &PlaneModel, b: &PlaneModel) -> f64 {
    let d: f64 = (0..3).map(|i| a.normal[i] * b.normal[i]).sum();
    d.clamp(-1.0, 1.0).acos().to_degrees()
}

/// Up to four Gaussian blobs plus uniform noise, at most 200 points, with
/// random parameters. Every third seed is quantized to create distance ties.
pub fn hdbscan_dataset(seed: u64) -> (Vec<[f64; 3]>, HdbscanParams) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blobs = rng.random_range(1..5);
    let mut pts: Vec<[f64; 3]> = Vec::new();
    for _ in 0..blobs {
        let c: [f64; 3] = [
            rng.random_range(-6.0..6.0),
            rng.random_range(-6.0..6.0),
            rng.random_range(-1.0..1.0),
        ];
        let s = rng.random_range(0.1..0.8);
        let nd = Normal::new(0.0, s).unwrap();
        for _ in 0..rng.random_range(10..50) {
            pts.push([
                c[0] + nd.sample(&mut rng),
                c[1] + nd.sample(&mut rng),
                c[2] + nd.sample(&mut rng),
            ]);
        }
    }
    for _ in 0..rng.random_range(0..30) {
        pts.push([
            rng.random_range(-8.0..8.0),
            rng.random_range(-8.0..8.0),
            rng.random_range(-2.0..2.0),
        ]);
    }
    pts.truncate(200);
    if seed.is_multiple_of(3) {
        for p in &mut pts {
            for v in p.iter_mut() {
                *v = (*v * 4.0).round() / 4.0;
            }
        }
    }
    let params = HdbscanParams {
        min_cluster_size: rng.random_range(4..17),
        min_samples: rng.random_range(2..17),
        cluster_selection_epsilon: [0.0, 0.3, 0.5, 1.0][rng.random_range(0..4)],
    };
    (pts, params)
}

/// Random vehicle-like footprint: box outline samples plus interior scatter.
pub fn random_object(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    let (l, w) = (rng.random_range(1.5..5.0), rng.random_range(0.8..2.2));
    (0..n)
        .map(|_| {
            if rng.random_bool(0.7) {
                match rng.random_range(0..3) {
                    0 => [rng.random_range(-l / 2.0..l / 2.0), -w / 2.0],
                    1 => [l / 2.0, rng.random_range(-w / 2.0..w / 2.0)],
                    _ => [rng.random_range(-l / 2.0..l / 2.0), w / 2.0],
                }
            } else {
                [
                    rng.random_range(-l / 2.0..l / 2.0),
                    rng.random_range(-w / 2.0..w / 2.0),
                ]
            }
        })
        .collect()
}

pub fn icp_trial(seed: u64, sigma: f64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(30..80);
    let src = random_object(&mut rng, n);
    let yaw = rng.random_range(-30f64..30.0).to_radians();
    let r = rng.random_range(0.0..2.0);
    let dir = rng.random_range(0.0..std::f64::consts::TAU);
    let t = [r * dir.cos(), r * dir.sin()];
    let mut tgt = rotate_about(&src, centroid(&src), yaw, t);
    if sigma > 0.0 {
        let nd = Normal::new(0.0, sigma).unwrap();
        for p in &mut tgt {
            p[0] += nd.sample(&mut rng);
            p[1] += nd.sample(&mut rng);
        }
    }
    let fit = icp_se2(&src, &tgt, &MotionParams::default());
    let et = (fit.transform.translation[0] - t[0]).hypot(fit.transform.translation[1] - t[1]);
    let ey = (fit.transform.yaw - yaw).abs().to_degrees();
    (et, ey)
}

fn center_gap(centers: &[Vec<f64>]) -> f64 {
    let mut gap = f64::INFINITY;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            gap = gap.min(objective(&[centers[i].clone()], &[centers[j].clone()]).sqrt());
        }
    }
    gap
}

/// Three Gaussian groups (σ = 0.6) in 6 dimensions with uneven sizes and
/// centers at least 4 apart.
pub fn kmeans_fixture(seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.6).unwrap();
    let centers = loop {
        let c: Vec<Vec<f64>> = (0..3)
            .map(|_| (0..6).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        if center_gap(&c) >= 4.0 {
            break c;
        }
    };
    let sizes = [18, 13, 9];
    let mut out = Vec::new();
    for (c, &n) in centers.iter().zip(&sizes) {
        for _ in 0..n {
            out.push(c.iter().map(|x| x + noise.sample(&mut rng)).collect());
        }
    }
    out
}

/// Scattered points inside a random rotated rectangle.
pub fn random_cloud(rng: &mut ChaCha8Rng) -> Vec<[f64; 2]> {
    let n = rng.random_range(5..60);
    let (a, b) = (rng.random_range(0.3..5.0), rng.random_range(0.2..3.0));
    let rot: f64 = rng.random_range(-PI..PI);
    let off = [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)];
    (0..n)
        .map(|_| {
            let (x, y) = (rng.random_range(-a..a), rng.random_range(-b..b));
            let (s, c) = rot.sin_cos();
            [off[0] + c * x - s * y, off[1] + s * x + c * y]
        })
        .collect()
}

/// A proposal whose frame 0 holds `early` and frame 1 holds `late`.
pub fn proposal_from_halves(
    early: &[[f64; 2]],
    late: &[[f64; 2]],
) -> (ObjectProposal, AggregatedCloud) {
    let mut agg = AggregatedCloud::default();
    for (f, half) in [early, late].iter().enumerate() {
        for p in half.iter() {
            agg.points.push([p[0], p[1], 0.5]);
            agg.source_frame.push(f);
            agg.source_point.push(0);
        }
    }
    let mut slices: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, &f) in agg.source_frame.iter().enumerate() {
        slices.entry(f).or_default().push(i);
    }
    (
        ObjectProposal {
            id: 0,
            center_frame: 0,
            point_indices: (0..agg.points.len()).collect(),
            slices,
        },
        agg,
    )
}
