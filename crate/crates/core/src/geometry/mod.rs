//! Planar geometry for the coverage task: convex polygons, half-plane
//! clipping, bounded Voronoi cells and (weighted) cell centroids.
//!
//! All coordinates are in meters. Polygons are convex with counter-clockwise
//! vertex order.

mod polygon;
mod quadrature;
mod random;
mod vec2;
mod voronoi;
mod weibull;

pub use polygon::{clip_halfplane, ConvexPolygon, HalfPlane};
pub use random::{convex_hull, random_convex_polygon};
pub use vec2::Vec2;
pub use voronoi::voronoi_cell;
pub use weibull::{weibull_phi, weighted_centroid, WeibullWeight, WEIBULL_FLOOR};

use thiserror::Error;

/// Distance below which two points are considered identical.
pub const EPS_DEGENERATE: f64 = 1e-9;
/// Slack allowed when testing whether a point lies inside a polygon.
pub const EPS_CONTAINS: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid geometry: {0}")]
    InvalidGeometry(String),
    #[error("degenerate bisector: robots at {0:?} and {1:?} coincide")]
    DegenerateBisector(Vec2, Vec2),
    #[error("empty cell")]
    EmptyCell,
    #[error("point {0:?} lies outside the area")]
    OutsideArea(Vec2),
    #[error("polygon generation failed after {attempts} attempts: {reason}")]
    Generation { attempts: usize, reason: String },
}

/// Area of a valid convex polygon.
pub fn polygon_area(poly: &ConvexPolygon) -> f64 {
    poly.area()
}

/// Minimizer of the integrated squared distance over the cell.
pub fn cell_centroid(cell: &ConvexPolygon) -> Vec2 {
    cell.centroid()
}

/// Corners of `area` followed by the closest point of every edge to `p`.
pub fn nearest_boundary_points(p: Vec2, area: &ConvexPolygon) -> Vec<Vec2> {
    area.boundary_points(p)
}
