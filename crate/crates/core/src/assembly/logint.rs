//! Double integrals `∫_A ∫_B log|x - y| ds_y ds_x` over straight segments.
//!
//! Three routes:
//!
//! * parallel (including collinear and coincident) segments reduce to a
//!   one-dimensional kernel with an explicit second antiderivative;
//! * non-parallel segments map affinely onto a parallelogram in the
//!   difference variable `r = x - y`, where `log|r|` is integrated through the
//!   divergence theorem with the field `r (log|r|/2 - 1/4)`;
//! * separated pairs use tensor Gauss–Legendre quadrature.
//!
//! The closed forms lose digits when one segment is much longer than the
//! other or when the pair is far apart, so [`log_integral`] subdivides the
//! longer segment until every piece is either well separated (Gauss) or of
//! comparable size and close (closed form).

use crate::mesh::Point;

use super::quadrature::{gauss16, gauss8, GaussRule};

/// Pairs with `distance >= SEPARATION * max(len)` are integrated by Gauss.
const SEPARATION: f64 = 1.0;
/// Beyond this separation ratio the 8-point rule is already at round-off.
const FAR_SEPARATION: f64 = 4.0;
/// Largest length ratio handed to the closed forms.
const MAX_CLOSED_FORM_RATIO: f64 = 4.0;
/// `|sin angle|` below which two segments are treated as parallel.
const PARALLEL_SINE: f64 = 1e-12;

fn cross(a: Point, b: Point) -> f64 {
    a.x * b.y - a.y * b.x
}

/// `∫_{[a0,a1]} ∫_{[b0,b1]} log|x - y|`, choosing the route per sub-pair.
pub fn log_integral(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    let la = (a1 - a0).norm();
    let lb = (b1 - b0).norm();
    let diam = la.max(lb);
    let dist = segment_distance(a0, a1, b0, b1);
    if dist >= SEPARATION * diam {
        let rule = if dist >= FAR_SEPARATION * diam {
            gauss8()
        } else {
            gauss16()
        };
        return log_integral_gauss(a0, a1, b0, b1, rule);
    }
    if diam <= MAX_CLOSED_FORM_RATIO * la.min(lb) {
        return log_integral_closed_form(a0, a1, b0, b1);
    }
    if la >= lb {
        let m = (a0 + a1) * 0.5;
        log_integral(a0, m, b0, b1) + log_integral(m, a1, b0, b1)
    } else {
        let m = (b0 + b1) * 0.5;
        log_integral(a0, a1, b0, m) + log_integral(a0, a1, m, b1)
    }
}

/// Tensor-product Gauss approximation; accurate only for separated segments.
pub fn log_integral_gauss(a0: Point, a1: Point, b0: Point, b1: Point, rule: &GaussRule) -> f64 {
    let da = a1 - a0;
    let db = b1 - b0;
    let mut sum = 0.0;
    for (&s, &ws) in rule.points.iter().zip(&rule.weights) {
        let x = a0 + da * s;
        let mut inner = 0.0;
        for (&t, &wt) in rule.points.iter().zip(&rule.weights) {
            let y = b0 + db * t;
            inner += wt * (x - y).norm().ln();
        }
        sum += ws * inner;
    }
    sum * da.norm() * db.norm()
}

/// Exact value for any pair of non-degenerate segments.
pub fn log_integral_closed_form(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    let la = (a1 - a0).norm();
    let lb = (b1 - b0).norm();
    let u = (a1 - a0) / la;
    let v = (b1 - b0) / lb;
    let sine = cross(u, v);
    if sine.abs() < PARALLEL_SINE {
        // walk B in the direction of A
        let start_b = if u.dot(&v) < 0.0 { b1 } else { b0 };
        let w = a0 - start_b;
        let c0 = w.dot(&u);
        let d = cross(u, w).abs();
        let k = |x: f64| parallel_antiderivative(x, d);
        return k(la + c0) + k(c0 - lb) - k(la - lb + c0) - k(c0);
    }
    // r(s, t) = w + s u - t v over [0, la] x [0, lb]
    let w = a0 - b0;
    let corners = [w, w + u * la, w + u * la - v * lb, w - v * lb];
    let mut boundary = 0.0;
    for i in 0..4 {
        let p0 = corners[i];
        let p1 = corners[(i + 1) % 4];
        boundary += edge_flux(p0, p1);
    }
    // ∮ over the traversal above equals sign(-sine) ∫_P, and ds dt = dr / |sine|
    -boundary / sine
}

/// `∫_{edge} (r·n) (log|r|/2 - 1/4) dl` for the edge `p0 → p1`, with `n`
/// the right-hand normal.
fn edge_flux(p0: Point, p1: Point) -> f64 {
    let len = (p1 - p0).norm();
    if len == 0.0 {
        return 0.0;
    }
    let c = cross(p0, p1) / len;
    if c == 0.0 {
        return 0.0;
    }
    let e = (p1 - p0) / len;
    let t0 = p0.dot(&e);
    let t1 = t0 + len;
    let j = |t: f64| 0.5 * t * (c * c + t * t).ln() - t + c * (t / c).atan();
    // j' = log|r| on the edge
    c * (0.5 * (j(t1) - j(t0)) - 0.25 * len)
}

/// `K(x)` with `K'' = log(x² + d²)/2`.
fn parallel_antiderivative(x: f64, d: f64) -> f64 {
    if d == 0.0 {
        if x == 0.0 {
            0.0
        } else {
            0.5 * x * x * x.abs().ln() - 0.75 * x * x
        }
    } else {
        0.25 * (x * x - d * d) * (x * x + d * d).ln() - 0.75 * x * x + d * x * (x / d).atan()
    }
}

fn point_segment_distance(p: Point, a: Point, b: Point) -> f64 {
    let d = b - a;
    let t = ((p - a).dot(&d) / d.norm_squared()).clamp(0.0, 1.0);
    (p - (a + d * t)).norm()
}

/// Euclidean distance between two segments (zero if they touch or cross).
pub fn segment_distance(a0: Point, a1: Point, b0: Point, b1: Point) -> f64 {
    let o1 = cross(b1 - b0, a0 - b0);
    let o2 = cross(b1 - b0, a1 - b0);
    let o3 = cross(a1 - a0, b0 - a0);
    let o4 = cross(a1 - a0, b1 - a0);
    if o1 * o2 < 0.0 && o3 * o4 < 0.0 {
        return 0.0;
    }
    point_segment_distance(a0, b0, b1)
        .min(point_segment_distance(a1, b0, b1))
        .min(point_segment_distance(b0, a0, a1))
        .min(point_segment_distance(b1, a0, a1))
}
