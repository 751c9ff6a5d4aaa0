//! Sign conventions over the adaptive-precision predicates of the `robust` crate.
//!
//! All predicates return a value whose sign is exact:
//! * `orient2d > 0` when (a, b, c) is counterclockwise,
//! * `orient3d > 0` when det[b−a, c−a, d−a] > 0,
//! * `incircle` / `insphere` > 0 when the query point is strictly inside the
//!   circumball of a positively oriented simplex.

use robust::{Coord, Coord3D};

#[inline]
fn c2(p: &[f64]) -> Coord<f64> {
    Coord { x: p[0], y: p[1] }
}

#[inline]
fn c3(p: &[f64]) -> Coord3D<f64> {
    Coord3D {
        x: p[0],
        y: p[1],
        z: p[2],
    }
}

#[inline]
pub fn orient2d(a: &[f64], b: &[f64], c: &[f64]) -> f64 {
    robust::orient2d(c2(a), c2(b), c2(c))
}

#[inline]
pub fn incircle(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    robust::incircle(c2(a), c2(b), c2(c), c2(d))
}

#[inline]
pub fn orient3d(a: &[f64], b: &[f64], c: &[f64], d: &[f64]) -> f64 {
    -robust::orient3d(c3(a), c3(b), c3(c), c3(d))
}

#[inline]
pub fn insphere(a: &[f64], b: &[f64], c: &[f64], d: &[f64], e: &[f64]) -> f64 {
    -robust::insphere(c3(a), c3(b), c3(c), c3(d), c3(e))
}

/// Orientation of a full simplex given as `dim + 1` points.
#[inline]
pub fn orient(p: &[&[f64]]) -> f64 {
    match p.len() {
        3 => orient2d(p[0], p[1], p[2]),
        4 => orient3d(p[0], p[1], p[2], p[3]),
        n => panic!("unsupported simplex size {n}"),
    }
}

/// In-circumball test for a positively oriented simplex `p` and query `q`.
#[inline]
pub fn in_ball(p: &[&[f64]], q: &[f64]) -> f64 {
    match p.len() {
        3 => incircle(p[0], p[1], p[2], q),
        4 => insphere(p[0], p[1], p[2], p[3], q),
        n => panic!("unsupported simplex size {n}"),
    }
}

/// Exact collinearity of three 3D points.
pub fn collinear3(a: &[f64], b: &[f64], c: &[f64]) -> bool {
    let xy = |p: &[f64]| [p[0], p[1]];
    let yz = |p: &[f64]| [p[1], p[2]];
    let zx = |p: &[f64]| [p[2], p[0]];
    orient2d(&xy(a), &xy(b), &xy(c)) == 0.0
        && orient2d(&yz(a), &yz(b), &yz(c)) == 0.0
        && orient2d(&zx(a), &zx(b), &zx(c)) == 0.0
}

/// For `q` coplanar with triangle (a, b, c) in 3D: is `q` strictly inside its circumcircle?
pub fn coplanar_in_circle(a: &[f64], b: &[f64], c: &[f64], q: &[f64]) -> bool {
    // Any sphere through a, b, c meets their plane in the circumcircle, so an
    // off-plane lift point turns the planar test into an insphere test. The
    // lift steps along the axis closest to the normal; a rounded cross product
    // can vanish for slivers, hence the exact off-plane check.
    let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
    let n = [
        (u[1] * v[2] - u[2] * v[1]).abs(),
        (u[2] * v[0] - u[0] * v[2]).abs(),
        (u[0] * v[1] - u[1] * v[0]).abs(),
    ];
    let mut axes = [0usize, 1, 2];
    axes.sort_by(|&i, &j| n[j].total_cmp(&n[i]));
    let step = 1.0 + u.iter().chain(&v).fold(0.0f64, |m, x| m.max(x.abs()));
    for k in axes {
        let mut lift = [a[0], a[1], a[2]];
        lift[k] += step;
        let o = orient3d(a, b, c, &lift);
        if o != 0.0 {
            return insphere(a, b, c, &lift, q) * o.signum() > 0.0;
        }
    }
    false
}

/// For `q` collinear with segment (a, b): is `q` strictly between the endpoints?
pub fn strictly_between(a: &[f64], b: &[f64], q: &[f64]) -> bool {
    let dot = |p: &[f64], r: &[f64], s: &[f64]| -> f64 { p.iter().zip(r).zip(s).map(|((p, r), s)| (r - p) * (s - p)).sum() };
    dot(a, b, q) > 0.0 && dot(b, a, q) > 0.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_conventions() {
        let (a, b, c) = ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0]);
        assert!(orient2d(&a, &b, &c) > 0.0);
        assert!(incircle(&a, &b, &c, &[0.2, 0.2]) > 0.0);
        assert!(incircle(&a, &b, &c, &[2.0, 2.0]) < 0.0);

        let t = [[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        assert!(orient3d(&t[0], &t[1], &t[2], &t[3]) > 0.0);
        assert!(insphere(&t[0], &t[1], &t[2], &t[3], &[0.1, 0.1, 0.1]) > 0.0);
        assert!(insphere(&t[0], &t[1], &t[2], &t[3], &[3.0, 3.0, 3.0]) < 0.0);
    }

    #[test]
    fn degenerate_helpers() {
        assert!(collinear3(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0]));
        assert!(!collinear3(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[2.0, 2.0, 2.5]));
        let (a, b, c) = ([0.0, 0.0, 1.0], [1.0, 0.0, 1.0], [0.0, 1.0, 1.0]);
        assert!(coplanar_in_circle(&a, &b, &c, &[0.4, 0.4, 1.0]));
        assert!(!coplanar_in_circle(&a, &b, &c, &[1.0, 1.0, 1.0]));
        assert!(!coplanar_in_circle(&a, &b, &c, &[2.0, 2.0, 1.0]));
        // sliver whose rounded normal vanishes
        let (s, t) = (-0.33333333333333337, 0.33333333333333326);
        assert!(coplanar_in_circle(&[-1.0, t, t], &[-1.0, s, 1.0], &[-1.0, 1.0, s], &[-1.0, t, 1.0]));
        assert!(!coplanar_in_circle(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0], &[2.0, 2.0, 2.0], &[0.5, 0.5, 0.5]));
        assert!(strictly_between(&[0.0, 0.0], &[2.0, 0.0], &[1.0, 0.0]));
        assert!(!strictly_between(&[0.0, 0.0], &[2.0, 0.0], &[3.0, 0.0]));
        assert!(!strictly_between(&[0.0, 0.0], &[2.0, 0.0], &[2.0, 0.0]));
    }
}
