//! Known-correspondence SE(2) registration via complex arithmetic.
//!
//! With paired points, the least-squares rotation is the argument of
//! Σ conj(p̃)·q̃ over centred complex coordinates.

/// Returns `(yaw, translation)` such that `q ≈ R(yaw)(p − pivot) + pivot + t`.
pub fn procrustes(source: &[[f64; 2]], target: &[[f64; 2]], pivot: [f64; 2]) -> (f64, [f64; 2]) {
    let n = source.len() as f64;
    let ps = source
        .iter()
        .fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    let qs = target
        .iter()
        .fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n]);
    let (mut re, mut im) = (0.0, 0.0);
    for (p, q) in source.iter().zip(target) {
        let (a, b) = (p[0] - ps[0], p[1] - ps[1]);
        let (c, d) = (q[0] - qs[0], q[1] - qs[1]);
        // conj(a + ib) * (c + id)
        re += a * c + b * d;
        im += a * d - b * c;
    }
    let yaw = im.atan2(re);
    let (s, co) = yaw.sin_cos();
    let rx = co * (ps[0] - pivot[0]) - s * (ps[1] - pivot[1]) + pivot[0];
    let ry = s * (ps[0] - pivot[0]) + co * (ps[1] - pivot[1]) + pivot[1];
    (yaw, [qs[0] - rx, qs[1] - ry])
}

pub fn rotate_about(points: &[[f64; 2]], pivot: [f64; 2], yaw: f64, t: [f64; 2]) -> Vec<[f64; 2]> {
    let (s, c) = yaw.sin_cos();
    points
        .iter()
        .map(|p| {
            let (x, y) = (p[0] - pivot[0], p[1] - pivot[1]);
            [
                c * x - s * y + pivot[0] + t[0],
                s * x + c * y + pivot[1] + t[1],
            ]
        })
        .collect()
}

pub fn centroid(points: &[[f64; 2]]) -> [f64; 2] {
    let n = points.len() as f64;
    points
        .iter()
        .fold([0.0, 0.0], |a, p| [a[0] + p[0] / n, a[1] + p[1] / n])
}
