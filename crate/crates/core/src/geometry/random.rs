use std::f64::consts::TAU;

use rand::Rng;

use super::{ConvexPolygon, GeometryError, Vec2};

const MAX_ATTEMPTS: usize = 100;

/// Andrew's monotone chain; returns the hull in CCW order without collinear
/// points.
pub fn convex_hull(points: &[Vec2]) -> Vec<Vec2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: Vec2, a: Vec2, b: Vec2| (a - o).cross(b - o);
    let mut hull: Vec<Vec2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Vec2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2
                && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Random convex deployment area with exactly `n_vertices` corners, total
/// area `area_per_agent · n_agents` and bounding-box aspect (width / height)
/// `aspect`. The bounding box's lower-left corner is at the origin.
///
/// Points are drawn on an ellipse at jittered angles, hulled, stretched to the
/// requested aspect and scaled to the requested area.
pub fn random_convex_polygon<R: Rng + ?Sized>(
    rng: &mut R,
    n_vertices: usize,
    area_per_agent: f64,
    n_agents: usize,
    aspect: f64,
) -> Result<ConvexPolygon, GeometryError> {
    if !(3..=8).contains(&n_vertices) {
        return Err(GeometryError::InvalidGeometry(format!(
            "vertex count {n_vertices} outside [3, 8]"
        )));
    }
    if !(0.2..=5.0).contains(&aspect) {
        return Err(GeometryError::InvalidGeometry(format!(
            "aspect ratio {aspect} outside [0.2, 5]"
        )));
    }
    let target_area = area_per_agent * n_agents as f64;
    if !(target_area > 0.0 && target_area.is_finite()) {
        return Err(GeometryError::InvalidGeometry(format!(
            "target area {target_area} must be positive"
        )));
    }

    let sector = TAU / n_vertices as f64;
    let mut last_reason = String::new();
    for _ in 0..MAX_ATTEMPTS {
        let offset = rng.random::<f64>() * TAU;
        let pts: Vec<Vec2> = (0..n_vertices)
            .map(|i| {
                let jitter = (rng.random::<f64>() - 0.5) * 0.7 * sector;
                let t = offset + i as f64 * sector + jitter;
                Vec2::new(aspect * t.cos(), t.sin())
            })
            .collect();
        let hull = convex_hull(&pts);
        if hull.len() < n_vertices {
            last_reason = format!("hull has {} < {n_vertices} vertices", hull.len());
            continue;
        }
        let poly = match ConvexPolygon::new(hull) {
            Ok(p) => p,
            Err(e) => {
                last_reason = e.to_string();
                continue;
            }
        };
        // Stretch to the exact bounding-box aspect, then scale to the area.
        let (lo, hi) = poly.bounding_box();
        let (w, h) = (hi.x - lo.x, hi.y - lo.y);
        let sx = aspect * h / w;
        let stretched: Vec<Vec2> = poly
            .vertices()
            .iter()
            .map(|v| Vec2::new((v.x - lo.x) * sx, v.y - lo.y))
            .collect();
        let a = ConvexPolygon::new(stretched.clone())
            .map(|p| p.area())
            .unwrap_or(0.0);
        if a <= 0.0 {
            last_reason = "degenerate after stretching".into();
            continue;
        }
        let s = (target_area / a).sqrt();
        match ConvexPolygon::new(stretched.into_iter().map(|v| v * s).collect()) {
            Ok(p) => return Ok(p),
            Err(e) => last_reason = e.to_string(),
        }
    }
    Err(GeometryError::Generation {
        attempts: MAX_ATTEMPTS,
        reason: last_reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hull_drops_interior_and_collinear() {
        let pts = [
            Vec2::new(0.0, 0.0),
            Vec2::new(1.0, 0.0),
            Vec2::new(2.0, 0.0),
            Vec2::new(2.0, 2.0),
            Vec2::new(0.0, 2.0),
            Vec2::new(1.0, 1.0),
        ];
        let hull = convex_hull(&pts);
        assert_eq!(hull.len(), 4);
        assert!(ConvexPolygon::new(hull).is_ok());
    }

    #[test]
    fn quadrilateral_contract() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_convex_polygon(&mut rng, 4, 1.0, 4, 1.0).unwrap();
        assert_eq!(p.len(), 4);
        assert!((p.area() - 4.0).abs() < 0.04);
        let (lo, hi) = p.bounding_box();
        assert!(((hi.x - lo.x) / (hi.y - lo.y) - 1.0).abs() < 0.1);
    }

    #[test]
    fn triangle_is_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_convex_polygon(&mut rng, 3, 5.0, 3, 0.2).unwrap();
        assert_eq!(p.len(), 3);
    }

    #[test]
    fn rejects_out_of_range_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(random_convex_polygon(&mut rng, 9, 1.0, 3, 1.0).is_err());
        assert!(random_convex_polygon(&mut rng, 2, 1.0, 3, 1.0).is_err());
        assert!(random_convex_polygon(&mut rng, 4, 1.0, 3, 6.0).is_err());
        assert!(random_convex_polygon(&mut rng, 4, 0.0, 3, 1.0).is_err());
    }
}
