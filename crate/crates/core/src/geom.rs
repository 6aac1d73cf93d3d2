//! Small planar geometry helpers shared by the ingest, network and
//! contiguity code.

/// Squared distance from `p` to segment `a`-`b` plus the clamped projection
/// parameter `t` in [0, 1].
pub(crate) fn dist2_point_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> (f64, f64) {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let px = a[0] + t * dx;
    let py = a[1] + t * dy;
    let ex = p[0] - px;
    let ey = p[1] - py;
    (ex * ex + ey * ey, t)
}

/// Euclidean length of one segment.
pub(crate) fn segment_length(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt()
}

/// Signed shoelace area of a closed ring.
pub(crate) fn ring_area(ring: &[[f64; 2]]) -> f64 {
    let mut acc = 0.0;
    for w in ring.windows(2) {
        acc += w[0][0] * w[1][1] - w[1][0] * w[0][1];
    }
    acc / 2.0
}
