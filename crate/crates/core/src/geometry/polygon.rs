use serde::{Deserialize, Serialize};

use super::{GeometryError, Vec2, EPS_DEGENERATE};

/// Points whose signed distance to a clip line is within this band count as
/// lying on the line. Keeps clipping idempotent under rounding.
const EPS_ON_LINE: f64 = 1e-12;

/// Strictly convex polygon with counter-clockwise vertices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec2>", into = "Vec<Vec2>")]
pub struct ConvexPolygon {
    vertices: Vec<Vec2>,
}

/// Relative turn test shared by validation and clip cleanup.
fn turns_left(a: Vec2, b: Vec2, c: Vec2) -> bool {
    let e1 = b - a;
    let e2 = c - b;
    e1.cross(e2) > EPS_DEGENERATE * e1.norm() * e2.norm()
}

fn signed_area(vs: &[Vec2]) -> f64 {
    let n = vs.len();
    let mut twice = 0.0;
    for i in 0..n {
        twice += vs[i].cross(vs[(i + 1) % n]);
    }
    0.5 * twice
}

impl ConvexPolygon {
    /// Validates and wraps a CCW vertex list.
    pub fn new(vertices: Vec<Vec2>) -> Result<Self, GeometryError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeometryError::InvalidGeometry(format!(
                "polygon needs at least 3 vertices, got {n}"
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !v.is_finite()) {
            return Err(GeometryError::InvalidGeometry(format!(
                "non-finite vertex {v:?}"
            )));
        }
        for i in 0..n {
            let (a, b) = (vertices[i], vertices[(i + 1) % n]);
            if a.dist(b) <= EPS_DEGENERATE {
                return Err(GeometryError::InvalidGeometry(format!(
                    "duplicate consecutive vertices at index {i}"
                )));
            }
        }
        for i in 0..n {
            let (a, b, c) = (vertices[i], vertices[(i + 1) % n], vertices[(i + 2) % n]);
            if !turns_left(a, b, c) {
                return Err(GeometryError::InvalidGeometry(format!(
                    "not strictly convex and counter-clockwise at vertex {}",
                    (i + 1) % n
                )));
            }
        }
        let area = signed_area(&vertices);
        if area <= 0.0 {
            return Err(GeometryError::InvalidGeometry(format!(
                "non-positive area {area}"
            )));
        }
        Ok(Self { vertices })
    }

    /// Axis-aligned rectangle `[x0, x1] × [y0, y1]`.
    pub fn rectangle(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, GeometryError> {
        Self::new(vec![
            Vec2::new(x0, y0),
            Vec2::new(x1, y0),
            Vec2::new(x1, y1),
            Vec2::new(x0, y1),
        ])
    }

    /// Builds a polygon from the raw output of a clipping pass: removes
    /// near-duplicate and collinear vertices. `None` if nothing with positive
    /// area remains.
    pub(crate) fn from_clipped(mut pts: Vec<Vec2>) -> Option<Self> {
        loop {
            pts.dedup_by(|b, a| a.dist(*b) <= EPS_DEGENERATE);
            while pts.len() > 1 && pts[0].dist(pts[pts.len() - 1]) <= EPS_DEGENERATE {
                pts.pop();
            }
            if pts.len() < 3 {
                return None;
            }
            let n = pts.len();
            let keep: Vec<bool> = (0..n)
                .map(|i| turns_left(pts[(i + n - 1) % n], pts[i], pts[(i + 1) % n]))
                .collect();
            if keep.iter().all(|k| *k) {
                break;
            }
            // Drop one collinear vertex at a time so that neighbours are re-tested.
            let drop = keep.iter().position(|k| !k).unwrap();
            pts.remove(drop);
        }
        if signed_area(&pts) <= 0.0 {
            return None;
        }
        Some(Self { vertices: pts })
    }

    pub fn vertices(&self) -> &[Vec2] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    /// Edges as `(start, end)` pairs in CCW order.
    pub fn edges(&self) -> impl Iterator<Item = (Vec2, Vec2)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Shoelace area.
    pub fn area(&self) -> f64 {
        signed_area(&self.vertices)
    }

    /// Area centroid.
    pub fn centroid(&self) -> Vec2 {
        // Shift to the first vertex to limit cancellation for far-off polygons.
        let o = self.vertices[0];
        let mut twice_area = 0.0;
        let mut acc = Vec2::ZERO;
        for (a, b) in self.edges() {
            let (a, b) = (a - o, b - o);
            let c = a.cross(b);
            twice_area += c;
            acc += (a + b) * c;
        }
        o + acc / (3.0 * twice_area)
    }

    /// Arithmetic mean of the vertices.
    pub fn vertex_mean(&self) -> Vec2 {
        let s = self.vertices.iter().fold(Vec2::ZERO, |s, v| s + *v);
        s / self.vertices.len() as f64
    }

    /// `(min, max)` corners of the bounding box.
    pub fn bounding_box(&self) -> (Vec2, Vec2) {
        let mut lo = Vec2::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
        }
        (lo, hi)
    }

    /// Largest vertex-to-vertex distance.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(a.dist(*b));
            }
        }
        d
    }

    /// Outward unit normal of edge `i` (from vertex `i` to `i + 1`).
    pub fn edge_normal(&self, i: usize) -> Vec2 {
        let n = self.vertices.len();
        let e = self.vertices[(i + 1) % n] - self.vertices[i];
        Vec2::new(e.y, -e.x) / e.norm()
    }

    /// Largest signed distance from `p` to the edge lines; `<= 0` means inside.
    pub fn max_edge_distance(&self, p: Vec2) -> f64 {
        (0..self.vertices.len())
            .map(|i| (p - self.vertices[i]).dot(self.edge_normal(i)))
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Inside test with slack `tol` (meters).
    pub fn contains(&self, p: Vec2, tol: f64) -> bool {
        self.max_edge_distance(p) <= tol
    }

    /// Closest point on the boundary.
    pub fn closest_boundary_point(&self, p: Vec2) -> Vec2 {
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for (a, b) in self.edges() {
            let q = closest_on_segment(p, a, b);
            let d = q.dist(p);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }

    /// Moves `p` to lie at least `margin` inside the polygon; points already
    /// that deep are returned unchanged.
    pub fn project_inside(&self, p: Vec2, margin: f64) -> Vec2 {
        if self.max_edge_distance(p) <= -margin {
            return p;
        }
        let mut inset = Some(self.clone());
        for i in 0..self.vertices.len() {
            let normal = self.edge_normal(i);
            let hp = HalfPlane {
                anchor: self.vertices[i] - normal * margin,
                normal,
            };
            inset = inset.and_then(|poly| clip_halfplane(&poly, &hp));
        }
        match inset {
            Some(inset) if inset.max_edge_distance(p) <= 0.0 => p,
            Some(inset) => inset.closest_boundary_point(p),
            None => self.centroid(),
        }
    }

    /// Vertices followed by the clamped perpendicular foot of `p` on every edge.
    pub fn boundary_points(&self, p: Vec2) -> Vec<Vec2> {
        let mut out = self.vertices.clone();
        out.extend(self.edges().map(|(a, b)| closest_on_segment(p, a, b)));
        out
    }

    /// Same polygon shifted by `d`.
    pub fn translated(&self, d: Vec2) -> Self {
        Self {
            vertices: self.vertices.iter().map(|v| *v + d).collect(),
        }
    }
}

impl TryFrom<Vec<Vec2>> for ConvexPolygon {
    type Error = GeometryError;
    fn try_from(v: Vec<Vec2>) -> Result<Self, Self::Error> {
        Self::new(v)
    }
}

impl From<ConvexPolygon> for Vec<Vec2> {
    fn from(p: ConvexPolygon) -> Self {
        p.vertices
    }
}

/// Closest point to `p` on segment `[a, b]`.
pub(crate) fn closest_on_segment(p: Vec2, a: Vec2, b: Vec2) -> Vec2 {
    let e = b - a;
    let len_sq = e.norm_sq();
    if len_sq == 0.0 {
        return a;
    }
    let t = ((p - a).dot(e) / len_sq).clamp(0.0, 1.0);
    a + e * t
}

/// Closed half-plane `{x : (x - anchor) · normal <= 0}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HalfPlane {
    pub anchor: Vec2,
    pub normal: Vec2,
}

impl HalfPlane {
    /// Normalizes `normal`; fails on a zero or non-finite normal.
    pub fn new(anchor: Vec2, normal: Vec2) -> Result<Self, GeometryError> {
        let n = normal.norm();
        if !(n > EPS_DEGENERATE) || !n.is_finite() || !anchor.is_finite() {
            return Err(GeometryError::InvalidGeometry(format!(
                "half-plane normal {normal:?} is degenerate"
            )));
        }
        Ok(Self {
            anchor,
            normal: normal / n,
        })
    }

    /// Signed distance, positive outside.
    #[inline]
    pub fn signed_distance(&self, p: Vec2) -> f64 {
        (p - self.anchor).dot(self.normal)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.signed_distance(p) <= EPS_ON_LINE
    }
}

/// Sutherland–Hodgman step: intersection of `poly` with `hp`.
pub fn clip_halfplane(poly: &ConvexPolygon, hp: &HalfPlane) -> Option<ConvexPolygon> {
    let vs = poly.vertices();
    let dist: Vec<f64> = vs.iter().map(|v| hp.signed_distance(*v)).collect();
    if dist.iter().all(|d| *d <= EPS_ON_LINE) {
        return Some(poly.clone());
    }
    if dist.iter().all(|d| *d >= -EPS_ON_LINE) {
        return None;
    }
    let n = vs.len();
    let mut out = Vec::with_capacity(n + 1);
    for i in 0..n {
        let j = (i + 1) % n;
        let (a, b) = (vs[i], vs[j]);
        let (da, db) = (dist[i], dist[j]);
        let a_in = da <= EPS_ON_LINE;
        let b_in = db <= EPS_ON_LINE;
        if a_in {
            out.push(a);
        }
        if a_in != b_in {
            // Strict crossing: one side is beyond the tolerance band.
            let t = da / (da - db);
            if t > 0.0 && t < 1.0 {
                out.push(a.lerp(b, t));
            }
        }
    }
    ConvexPolygon::from_clipped(out)
}
