//! Upright box fitting and per-keyframe pseudo-label assembly.

use std::f64::consts::{FRAC_PI_2, PI};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset_io::{read_json, write_json, DatasetError, Pose};
use crate::ground_removal::PlaneModel;

/// Width (and minimum length/height) given to degenerate fits, meters.
pub const MIN_EXTENT: f64 = 0.1;

#[derive(Debug, Error, PartialEq)]
pub enum BoxError {
    #[error("cannot fit a box to an empty point set")]
    Empty,
    #[error("non-finite point coordinates")]
    NonFinite,
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Convex hull by Andrew's monotone chain: counter-clockwise, no repeated or
/// collinear vertices. Fewer than three vertices means collinear input.
pub fn convex_hull(points: &[[f64; 2]]) -> Vec<[f64; 2]> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// A rotated rectangle in the plane. `yaw` is the direction of the side of
/// length `length`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub center: [f64; 2],
    pub length: f64,
    pub width: f64,
    pub yaw: f64,
}

impl Rect {
    pub fn area(&self) -> f64 {
        self.length * self.width
    }

    pub fn corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.length / 2.0, self.width / 2.0);
        let at = |a: f64, b: f64| {
            [
                self.center[0] + a * c - b * s,
                self.center[1] + a * s + b * c,
            ]
        };
        [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
    }

    /// Whether `p` lies inside, allowing `tol` meters outside each side.
    pub fn contains(&self, p: [f64; 2], tol: f64) -> bool {
        let (s, c) = self.yaw.sin_cos();
        let (dx, dy) = (p[0] - self.center[0], p[1] - self.center[1]);
        (dx * c + dy * s).abs() <= self.length / 2.0 + tol
            && (-dx * s + dy * c).abs() <= self.width / 2.0 + tol
    }
}

fn dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

/// Relative area difference under which two candidate rectangles tie.
pub const AREA_TIE_TOLERANCE: f64 = 1e-12;

/// Minimum-area enclosing rectangle of a counter-clockwise convex hull with at
/// least three vertices, by rotating calipers. The returned rectangle has one
/// side on a hull edge; `yaw` follows that edge and `length`/`width` are not
/// yet ordered. Tied areas (every edge of a triangle, say) keep the candidate
/// with the longest side.
pub fn min_area_rect(hull: &[[f64; 2]]) -> Option<Rect> {
    let n = hull.len();
    if n < 3 {
        return None;
    }
    let origin = hull[0];
    let h: Vec<[f64; 2]> = hull.iter().map(|&p| sub(p, origin)).collect();
    let next = |i: usize| (i + 1) % n;
    let edge_dir = |i: usize| {
        let e = sub(h[next(i)], h[i]);
        let len = e[0].hypot(e[1]);
        [e[0] / len, e[1] / len]
    };
    // Caliper indices: farthest along the edge, farthest from the edge
    // (interior side), and farthest against the edge.
    let (mut right, mut top, mut left) = (1 % n, 0, 0);
    let mut best: Option<(f64, Rect)> = None;
    for i in 0..n {
        let u = edge_dir(i);
        let nrm = [-u[1], u[0]];
        if i == 0 {
            right = (0..n)
                .max_by(|&a, &b| dot(h[a], u).total_cmp(&dot(h[b], u)))
                .unwrap_or(0);
            top = (0..n)
                .max_by(|&a, &b| dot(h[a], nrm).total_cmp(&dot(h[b], nrm)))
                .unwrap_or(0);
            left = (0..n)
                .min_by(|&a, &b| dot(h[a], u).total_cmp(&dot(h[b], u)))
                .unwrap_or(0);
        } else {
            while dot(h[next(right)], u) > dot(h[right], u) {
                right = next(right);
            }
            while dot(h[next(top)], nrm) > dot(h[top], nrm) {
                top = next(top);
            }
            while dot(h[next(left)], u) < dot(h[left], u) {
                left = next(left);
            }
        }
        let base_n = dot(h[i], nrm);
        let (umin, umax) = (dot(h[left], u), dot(h[right], u));
        let nmax = dot(h[top], nrm);
        let length = umax - umin;
        let width = nmax - base_n;
        let area = length * width;
        let mid_u = (umin + umax) / 2.0;
        let mid_n = (base_n + nmax) / 2.0;
        let center = [
            origin[0] + mid_u * u[0] + mid_n * nrm[0],
            origin[1] + mid_u * u[1] + mid_n * nrm[1],
        ];
        let rect = Rect {
            center,
            length,
            width,
            yaw: u[1].atan2(u[0]),
        };
        let better = match &best {
            None => true,
            Some((b_area, b_rect)) => {
                if (area - b_area).abs() <= AREA_TIE_TOLERANCE * b_area.max(area) {
                    length.max(width) > b_rect.length.max(b_rect.width)
                } else {
                    area < *b_area
                }
            }
        };
        if better {
            best = Some((area, rect));
        }
    }
    best.map(|b| b.1)
}

/// Wraps to `(−π/2, π/2]`.
pub fn canonical_yaw(yaw: f64) -> f64 {
    let mut r = (yaw + FRAC_PI_2).rem_euclid(PI) - FRAC_PI_2;
    if r <= -FRAC_PI_2 {
        r += PI;
    }
    r
}

/// Wraps to `(−π, π]`.
pub fn wrap_pi(yaw: f64) -> f64 {
    let mut r = (yaw + PI).rem_euclid(2.0 * PI) - PI;
    if r <= -PI {
        r += 2.0 * PI;
    }
    r
}

/// Orders sides so `length ≥ width` and canonicalizes yaw.
fn canonical_rect(r: Rect) -> Rect {
    let (length, width, yaw) = if r.length >= r.width {
        (r.length, r.width, r.yaw)
    } else {
        (r.width, r.length, r.yaw + FRAC_PI_2)
    };
    Rect {
        center: r.center,
        length,
        width,
        yaw: canonical_yaw(yaw),
    }
}

/// Minimum-area rectangle over arbitrary BEV points, canonicalized
/// (`length ≥ width`, yaw in `(−π/2, π/2]`). `None` for collinear input.
pub fn fit_rectangle(points: &[[f64; 2]]) -> Option<Rect> {
    min_area_rect(&convex_hull(points)).map(canonical_rect)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxFit {
    pub center: [f64; 3],
    pub length: f64,
    pub width: f64,
    pub height: f64,
    pub yaw: f64,
    /// Collinear BEV footprint; width set to the floor.
    pub degenerate: bool,
}

/// Upright box around `points`. With a non-zero `heading`, the yaw is flipped
/// by π when it points against it.
pub fn fit_box(
    points: &[[f64; 3]],
    plane: &PlaneModel,
    heading: Option<[f64; 2]>,
) -> Result<BoxFit, BoxError> {
    if points.is_empty() {
        return Err(BoxError::Empty);
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(BoxError::NonFinite);
    }
    let bev: Vec<[f64; 2]> = points.iter().map(|p| [p[0], p[1]]).collect();
    let hull = convex_hull(&bev);
    let (rect, degenerate) = match min_area_rect(&hull) {
        Some(r) => (canonical_rect(r), false),
        None => (collinear_rect(&hull), true),
    };
    let n = points.len() as f64;
    let cx = bev.iter().map(|p| p[0]).sum::<f64>() / n;
    let cy = bev.iter().map(|p| p[1]).sum::<f64>() / n;
    let bottom = plane.z_at(cx, cy);
    let top = points
        .iter()
        .map(|p| p[2])
        .fold(f64::NEG_INFINITY, f64::max);
    let height = (top - bottom).max(MIN_EXTENT);
    let mut yaw = rect.yaw;
    if let Some(hd) = heading {
        if hd[0].hypot(hd[1]) > 0.0 && yaw.cos() * hd[0] + yaw.sin() * hd[1] < 0.0 {
            yaw += PI;
        }
    }
    Ok(BoxFit {
        center: [rect.center[0], rect.center[1], bottom + height / 2.0],
        length: rect.length,
        width: rect.width,
        height,
        yaw: wrap_pi(yaw),
        degenerate,
    })
}

fn collinear_rect(hull: &[[f64; 2]]) -> Rect {
    match hull {
        [a, b] => {
            let d = sub(*b, *a);
            Rect {
                center: [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0],
                length: d[0].hypot(d[1]).max(MIN_EXTENT),
                width: MIN_EXTENT,
                yaw: canonical_yaw(d[1].atan2(d[0])),
            }
        }
        _ => Rect {
            center: hull.first().copied().unwrap_or([0.0, 0.0]),
            length: MIN_EXTENT,
            width: MIN_EXTENT,
            yaw: 0.0,
        },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoBox {
    pub center: [f64; 3],
    /// `[l, w, h]`.
    pub size: [f64; 3],
    pub yaw: f64,
    pub velocity: [f64; 2],
    pub pseudo_class: usize,
    /// Real class name when prototypes named this pseudo-class.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_name: Option<String>,
    pub score: f64,
    /// Points in the source proposal.
    pub num_points: usize,
    /// Keyframe index (from `frames.json`).
    #[serde(skip)]
    pub frame: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PseudoLabelSet {
    pub frame: usize,
    pub boxes: Vec<PseudoBox>,
}

/// A fitted mobile object ready to be emitted.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedObject {
    pub fit: BoxFit,
    /// Velocity in m/s (zero for static objects).
    pub velocity: [f64; 2],
    pub pseudo_class: usize,
    pub num_points: usize,
    /// Time of the fitted box, seconds.
    pub reference_time: f64,
    /// First and last time observed, seconds.
    pub span: (f64, f64),
}

/// A keyframe that can receive boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeyframeSlot {
    pub index: usize,
    pub time_s: f64,
}

/// Emits one box per keyframe whose time lies within each object's observed
/// span, moved along the object's constant velocity from its reference time.
/// Objects spanning no keyframe go to the keyframe nearest their reference
/// time (earliest on ties). Returns one set per slot, in slot order.
pub fn assemble_labels(
    objects: &[FittedObject],
    keyframes: &[KeyframeSlot],
) -> Vec<PseudoLabelSet> {
    let mut sets: Vec<PseudoLabelSet> = keyframes
        .iter()
        .map(|k| PseudoLabelSet {
            frame: k.index,
            boxes: Vec::new(),
        })
        .collect();
    if keyframes.is_empty() {
        return sets;
    }
    for obj in objects {
        let mut hits: Vec<usize> = (0..keyframes.len())
            .filter(|&k| keyframes[k].time_s >= obj.span.0 && keyframes[k].time_s <= obj.span.1)
            .collect();
        if hits.is_empty() {
            let nearest = (0..keyframes.len())
                .min_by(|&a, &b| {
                    (keyframes[a].time_s - obj.reference_time)
                        .abs()
                        .total_cmp(&(keyframes[b].time_s - obj.reference_time).abs())
                })
                .unwrap_or(0);
            hits.push(nearest);
        }
        for k in hits {
            let dt = keyframes[k].time_s - obj.reference_time;
            let f = &obj.fit;
            sets[k].boxes.push(PseudoBox {
                center: [
                    f.center[0] + obj.velocity[0] * dt,
                    f.center[1] + obj.velocity[1] * dt,
                    f.center[2],
                ],
                size: [f.length, f.width, f.height],
                yaw: f.yaw,
                velocity: obj.velocity,
                pseudo_class: obj.pseudo_class,
                class_name: None,
                score: 1.0,
                num_points: obj.num_points,
                frame: keyframes[k].index,
            });
        }
    }
    sets
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFrame {
    pub index: usize,
    pub timestamp_us: i64,
    /// Ego → world at this keyframe; boxes are in the world frame.
    pub ego_pose: Pose,
    pub boxes: Vec<PseudoBox>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneLabels {
    pub scene_id: String,
    pub frames: Vec<LabelFrame>,
}

/// Contents of `pseudo_labels.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelFile {
    pub scenes: Vec<SceneLabels>,
}

impl PseudoLabelFile {
    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let mut file: PseudoLabelFile = read_json(path)?;
        for scene in &mut file.scenes {
            for frame in &mut scene.frames {
                for b in &mut frame.boxes {
                    b.frame = frame.index;
                }
            }
        }
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<(), DatasetError> {
        write_json(path, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ground() -> PlaneModel {
        PlaneModel::horizontal(0.0)
    }

    #[test]
    fn unit_square_box() {
        let mut pts = Vec::new();
        for &(x, y) in &[(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0), (0.5, 0.5)] {
            pts.push([x, y, 0.0]);
            pts.push([x, y, 2.0]);
        }
        let b = fit_box(&pts, &ground(), None).unwrap();
        assert!((b.length - 1.0).abs() < 1e-12 && (b.width - 1.0).abs() < 1e-12);
        assert!((b.height - 2.0).abs() < 1e-12);
        assert!((b.center[0] - 0.5).abs() < 1e-12 && (b.center[1] - 0.5).abs() < 1e-12);
        assert!((b.center[2] - 1.0).abs() < 1e-12);
        assert!(!b.degenerate);
    }

    #[test]
    fn rotated_rectangle_recovered() {
        let truth = Rect {
            center: [3.0, -1.0],
            length: 4.0,
            width: 2.0,
            yaw: PI / 4.0,
        };
        let pts: Vec<[f64; 3]> = truth.corners().iter().map(|c| [c[0], c[1], 1.5]).collect();
        let b = fit_box(&pts, &ground(), None).unwrap();
        assert!((b.length - 4.0).abs() < 1e-6);
        assert!((b.width - 2.0).abs() < 1e-6);
        assert!((b.yaw - PI / 4.0).abs() < 1e-6);
        assert!((b.center[0] - 3.0).abs() < 1e-9 && (b.center[1] + 1.0).abs() < 1e-9);
    }

    #[test]
    fn wall_is_degenerate() {
        let pts: Vec<[f64; 3]> = (0..20)
            .map(|i| [i as f64 * 0.2, i as f64 * 0.2, 1.0])
            .collect();
        let b = fit_box(&pts, &ground(), None).unwrap();
        assert!(b.degenerate);
        assert_eq!(b.width, MIN_EXTENT);
        assert!((b.length - 3.8 * 2f64.sqrt()).abs() < 1e-9);
        assert!((b.yaw - PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn heading_flips_yaw() {
        let truth = Rect {
            center: [0.0, 0.0],
            length: 4.0,
            width: 1.8,
            yaw: 0.2,
        };
        let pts: Vec<[f64; 3]> = truth.corners().iter().map(|c| [c[0], c[1], 1.0]).collect();
        let fwd = fit_box(&pts, &ground(), Some([1.0, 0.0])).unwrap();
        assert!((fwd.yaw - 0.2).abs() < 1e-9);
        let back = fit_box(&pts, &ground(), Some([-1.0, 0.1])).unwrap();
        assert!((back.yaw - (0.2 - PI)).abs() < 1e-9);
        assert!(fit_box(&[], &ground(), None).is_err());
    }

    #[test]
    fn hull_drops_interior_and_collinear() {
        let pts = [
            [0.0, 0.0],
            [1.0, 0.0],
            [2.0, 0.0],
            [2.0, 2.0],
            [0.0, 2.0],
            [1.0, 1.0],
            [0.0, 0.0],
        ];
        let h = convex_hull(&pts);
        assert_eq!(h, vec![[0.0, 0.0], [2.0, 0.0], [2.0, 2.0], [0.0, 2.0]]);
    }

    #[test]
    fn canonical_yaw_range() {
        assert_eq!(canonical_yaw(FRAC_PI_2), FRAC_PI_2);
        assert!((canonical_yaw(-FRAC_PI_2) - FRAC_PI_2).abs() < 1e-15);
        assert!((canonical_yaw(PI) - 0.0).abs() < 1e-15);
        assert!((wrap_pi(-PI) - PI).abs() < 1e-15);
    }

    fn obj(velocity: [f64; 2], span: (f64, f64)) -> FittedObject {
        FittedObject {
            fit: BoxFit {
                center: [0.0, 0.0, 1.0],
                length: 4.0,
                width: 2.0,
                height: 1.5,
                yaw: 0.0,
                degenerate: false,
            },
            velocity,
            pseudo_class: 1,
            num_points: 50,
            reference_time: 5.5,
            span,
        }
    }

    fn slots() -> Vec<KeyframeSlot> {
        (0..20)
            .map(|i| KeyframeSlot {
                index: i,
                time_s: i as f64 * 0.5,
            })
            .collect()
    }

    #[test]
    fn static_object_repeats_box() {
        let sets = assemble_labels(&[obj([0.0, 0.0], (5.0, 6.0))], &slots());
        let hit: Vec<&PseudoLabelSet> = sets.iter().filter(|s| !s.boxes.is_empty()).collect();
        assert_eq!(
            hit.iter().map(|s| s.frame).collect::<Vec<_>>(),
            vec![10, 11, 12]
        );
        assert!(hit
            .windows(2)
            .all(|w| w[0].boxes[0].center == w[1].boxes[0].center));
        assert!(hit
            .iter()
            .all(|s| s.boxes[0].velocity == [0.0, 0.0] && s.boxes[0].score == 1.0));
    }

    #[test]
    fn dynamic_object_moves_between_keyframes() {
        let sets = assemble_labels(&[obj([2.0, 0.0], (5.0, 6.0))], &slots());
        let c: Vec<[f64; 3]> = sets
            .iter()
            .flat_map(|s| s.boxes.iter().map(|b| b.center))
            .collect();
        assert_eq!(c.len(), 3);
        for w in c.windows(2) {
            assert!((w[1][0] - w[0][0] - 1.0).abs() < 1e-12);
            assert_eq!(w[1][1], w[0][1]);
        }
    }

    #[test]
    fn object_between_keyframes_goes_to_nearest() {
        let mut o = obj([0.0, 0.0], (5.6, 5.7));
        o.reference_time = 5.65;
        let sets = assemble_labels(&[o], &slots());
        let frames: Vec<usize> = sets
            .iter()
            .filter(|s| !s.boxes.is_empty())
            .map(|s| s.frame)
            .collect();
        assert_eq!(frames, vec![11]);
    }
}
