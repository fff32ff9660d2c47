use super::{clip_halfplane, ConvexPolygon, GeometryError, HalfPlane, Vec2, EPS_CONTAINS, EPS_DEGENERATE};

/// Bounded Voronoi cell of `own`: the part of `area` closer to `own` than to
/// any point in `others`.
pub fn voronoi_cell(
    own: Vec2,
    others: &[Vec2],
    area: &ConvexPolygon,
) -> Result<ConvexPolygon, GeometryError> {
    if !area.contains(own, EPS_CONTAINS) {
        return Err(GeometryError::OutsideArea(own));
    }
    let mut cell = area.clone();
    for &other in others {
        let d = other - own;
        if d.norm() < EPS_DEGENERATE {
            return Err(GeometryError::DegenerateBisector(own, other));
        }
        let hp = HalfPlane::new((own + other) * 0.5, d)?;
        cell = clip_halfplane(&cell, &hp).ok_or(GeometryError::EmptyCell)?;
    }
    Ok(cell)
}
