//! Exhaustive angle search for the minimum-area enclosing rectangle.

/// Area of the axis-aligned bounding box of `points` rotated by `-theta`.
pub fn area_at(points: &[[f64; 2]], theta: f64) -> f64 {
    let (s, c) = theta.sin_cos();
    let (mut a0, mut a1, mut b0, mut b1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in points {
        let a = p[0] * c + p[1] * s;
        let b = -p[0] * s + p[1] * c;
        a0 = a0.min(a);
        a1 = a1.max(a);
        b0 = b0.min(b);
        b1 = b1.max(b);
    }
    (a1 - a0) * (b1 - b0)
}

/// Minimum area over angles `k · step_deg` in `[0°, 90°)`, with its angle.
pub fn grid_min(points: &[[f64; 2]], step_deg: f64) -> (f64, f64) {
    let steps = (90.0 / step_deg).round() as usize;
    (0..steps)
        .map(|k| {
            let t = (k as f64 * step_deg).to_radians();
            (area_at(points, t), t)
        })
        .fold((f64::INFINITY, 0.0), |a, b| if b.0 < a.0 { b } else { a })
}

/// The 0.01° grid minimum, then repeated tenfold local refinement around the
/// best angle until the step is below 1e-12 rad.
pub fn refined_min(points: &[[f64; 2]]) -> f64 {
    let (mut best, mut theta) = grid_min(points, 0.01);
    let mut step = 0.01f64.to_radians();
    while step > 1e-12 {
        let fine = step / 10.0;
        for k in -10..=10 {
            let t = theta + k as f64 * fine;
            let a = area_at(points, t);
            if a < best {
                best = a;
                theta = t;
            }
        }
        step = fine;
    }
    best
}
