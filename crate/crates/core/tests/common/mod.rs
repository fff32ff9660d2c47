//! Brute-force oracles shared by the integration tests. None of these call
//! into the code paths they check beyond basic containers.
#![allow(dead_code)]

use swarmguard::geometry::{ConvexPolygon, Vec2, WeibullWeight};

/// Grid points of an `n × n` lattice (cell midpoints) over the bounding box
/// of `poly` that fall inside it, plus the area represented by each point.
pub fn grid_points(poly: &ConvexPolygon, n: usize) -> (Vec<Vec2>, f64) {
    let (lo, hi) = poly.bounding_box();
    let dx = (hi.x - lo.x) / n as f64;
    let dy = (hi.y - lo.y) / n as f64;
    let mut pts = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let q = Vec2::new(lo.x + (i as f64 + 0.5) * dx, lo.y + (j as f64 + 0.5) * dy);
            if inside(poly, q) {
                pts.push(q);
            }
        }
    }
    (pts, dx * dy)
}

/// Point-in-convex-polygon via edge cross products.
pub fn inside(poly: &ConvexPolygon, q: Vec2) -> bool {
    let vs = poly.vertices();
    (0..vs.len()).all(|i| {
        let a = vs[i];
        let b = vs[(i + 1) % vs.len()];
        (b.x - a.x) * (q.y - a.y) - (b.y - a.y) * (q.x - a.x) >= 0.0
    })
}

/// Index of the nearest site (ties to the lower index).
pub fn nearest_site(q: Vec2, sites: &[Vec2]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, s) in sites.iter().enumerate() {
        let d = (q.x - s.x).powi(2) + (q.y - s.y).powi(2);
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Brute-force minimizer of the discretized `∫_W ‖q − x‖² dq` over an
/// `n × n` candidate lattice on the bounding box of `cell`. Returns the
/// minimizer and the candidate spacing.
pub fn grid_argmin_centroid(cell: &ConvexPolygon, n: usize) -> (Vec2, f64) {
    let (pts, _) = grid_points(cell, 400);
    let (s0, s1, s2) = pts.iter().fold((0.0, Vec2::ZERO, 0.0), |(a, b, c), q| {
        (a + 1.0, b + *q, c + q.x * q.x + q.y * q.y)
    });
    let (lo, hi) = cell.bounding_box();
    let dx = (hi.x - lo.x) / (n - 1) as f64;
    let dy = (hi.y - lo.y) / (n - 1) as f64;
    let mut best = lo;
    let mut best_j = f64::INFINITY;
    for i in 0..n {
        for j in 0..n {
            let x = Vec2::new(lo.x + i as f64 * dx, lo.y + j as f64 * dy);
            let jx = s2 - 2.0 * (x.x * s1.x + x.y * s1.y) + (x.x * x.x + x.y * x.y) * s0;
            if jx < best_j {
                best_j = jx;
                best = x;
            }
        }
    }
    (best, dx.hypot(dy))
}

/// Weighted centroid by dense midpoint quadrature on an `n × n` lattice.
pub fn grid_weighted_centroid(
    cell: &ConvexPolygon,
    roi: Vec2,
    w: &WeibullWeight,
    n: usize,
) -> Vec2 {
    let (pts, _) = grid_points(cell, n);
    let mut mass = 0.0;
    let mut first = Vec2::ZERO;
    for q in pts {
        let x = -((q.x - roi.x).powi(2) + (q.y - roi.y).powi(2));
        let phi = if x >= w.shift {
            1.0 - (-((x - w.shift) / w.scale).powf(w.shape)).exp() + 0.1
        } else {
            0.1
        };
        mass += phi;
        first = first + q * phi;
    }
    first / mass
}

/// Area-weighted coverage cost `∫ min_i ‖q − x_i‖² dq` on a lattice.
pub fn grid_coverage_cost(area: &ConvexPolygon, sites: &[Vec2], n: usize) -> f64 {
    let (pts, da) = grid_points(area, n);
    pts.iter()
        .map(|q| {
            sites
                .iter()
                .map(|s| (q.x - s.x).powi(2) + (q.y - s.y).powi(2))
                .fold(f64::INFINITY, f64::min)
        })
        .sum::<f64>()
        * da
}

/// Ternary search for the closest point to `p` on segment `[a, b]`.
pub fn ternary_closest(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let at = |t: f64| Vec2::new(a.x + (b.x - a.x) * t, a.y + (b.y - a.y) * t);
    let d = |t: f64| {
        let q = at(t);
        (q.x - p.x).powi(2) + (q.y - p.y).powi(2)
    };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..200 {
        let m1 = lo + (hi - lo) / 3.0;
        let m2 = hi - (hi - lo) / 3.0;
        if d(m1) <= d(m2) {
            hi = m2;
        } else {
            lo = m1;
        }
    }
    at(0.5 * (lo + hi))
}
