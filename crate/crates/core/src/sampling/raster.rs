//! Supercover line traversal on the pixel grid.

use super::Pixel;

/// Every pixel whose closed cell `[c-0.5, c+0.5] x [r-0.5, r+0.5]` touches
/// the segment `a -> b`, in signed coordinates (may fall outside an image).
///
/// The segment is swept column by column: within each column strip the
/// segment's vertical extent is an interval, and every row overlapping it
/// is emitted.
pub fn supercover(a: [f64; 2], b: [f64; 2]) -> Vec<(i64, i64)> {
    let (p, q) = if a[0] <= b[0] { (a, b) } else { (b, a) };
    let (u0, v0) = (p[0], p[1]);
    let (u1, v1) = (q[0], q[1]);
    let c_min = (u0 - 0.5).ceil() as i64;
    let c_max = (u1 + 0.5).floor() as i64;
    let mut out = Vec::new();
    let v_at = |x: f64| -> f64 {
        if x == u0 {
            v0
        } else if x == u1 {
            v1
        } else {
            v0 + (x - u0) / (u1 - u0) * (v1 - v0)
        }
    };
    for c in c_min..=c_max {
        let (lo, hi) = if u0 == u1 {
            (v0.min(v1), v0.max(v1))
        } else {
            let x_lo = u0.max(c as f64 - 0.5);
            let x_hi = u1.min(c as f64 + 0.5);
            let (va, vb) = (v_at(x_lo), v_at(x_hi));
            (va.min(vb), va.max(vb))
        };
        let r_min = (lo - 0.5).ceil() as i64;
        let r_max = (hi + 0.5).floor() as i64;
        for r in r_min..=r_max {
            out.push((c, r));
        }
    }
    out
}

/// [`supercover`] clipped to a `width x height` image.
pub fn supercover_in_image(a: [f64; 2], b: [f64; 2], width: u32, height: u32) -> Vec<Pixel> {
    supercover(a, b)
        .into_iter()
        .filter(|&(c, r)| c >= 0 && r >= 0 && c < width as i64 && r < height as i64)
        .map(|(c, r)| Pixel::new(c as u32, r as u32))
        .collect()
}
