use serde::{Deserialize, Serialize};

use super::quadrature::integrate_moments;
use super::{ConvexPolygon, GeometryError, Vec2};

/// Lower bound (and additive offset) of the Weibull weighting function.
pub const WEIBULL_FLOOR: f64 = 0.1;

/// Change in the weighted centroid (m) below which refinement stops.
const CENTROID_TOL: f64 = 1e-4;
/// Finest uniform subdivision per fan triangle.
const MAX_SUBDIVISION: usize = 256;

/// Shifted cumulative Weibull weight `φ(x; k, λ, l)` used to bias a cell's
/// mass toward a region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeibullWeight {
    /// Shape `k > 0`.
    pub shape: f64,
    /// Scale `λ > 0`.
    pub scale: f64,
    /// Shift `l`.
    pub shift: f64,
}

impl WeibullWeight {
    pub fn new(shape: f64, scale: f64, shift: f64) -> Result<Self, GeometryError> {
        let w = Self { shape, scale, shift };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if !(self.shape > 0.0 && self.shape.is_finite())
            || !(self.scale > 0.0 && self.scale.is_finite())
            || self.shift.is_nan()
        {
            return Err(GeometryError::InvalidGeometry(format!(
                "invalid Weibull parameters {self:?}"
            )));
        }
        Ok(())
    }

    /// Weight of location `q` for a region of interest at `roi`.
    #[inline]
    pub fn weight_at(&self, q: Vec2, roi: Vec2) -> f64 {
        weibull_phi(-(q - roi).norm_sq(), self)
    }
}

/// `1 - exp(-((x - l)/λ)^k) + 0.1` for `x >= l`, `0.1` otherwise.
pub fn weibull_phi(x: f64, w: &WeibullWeight) -> f64 {
    if x >= w.shift {
        1.0 - (-((x - w.shift) / w.scale).powf(w.shape)).exp() + WEIBULL_FLOOR
    } else {
        WEIBULL_FLOOR
    }
}

/// Minimizer of `∫_cell ‖q − x‖² φ(−‖q − roi‖²) dq`, i.e. the φ-weighted
/// centroid of the cell.
///
/// The cell is fanned into triangles around its centroid and each triangle is
/// integrated with a 12-point degree-6 rule on a uniform subdivision that is
/// doubled until the result moves by less than 0.1 mm.
pub fn weighted_centroid(
    cell: &ConvexPolygon,
    roi: Vec2,
    w: &WeibullWeight,
) -> Result<Vec2, GeometryError> {
    w.validate()?;
    if cell.is_empty() {
        return Err(GeometryError::EmptyCell);
    }
    let center = cell.centroid();
    let weight = |q: Vec2| w.weight_at(q, roi);
    let evaluate = |m: usize| {
        let mut mass = 0.0;
        let mut first = Vec2::ZERO;
        for (a, b) in cell.edges() {
            let (tm, tf) = integrate_moments(center, a, b, m, &weight);
            mass += tm;
            first += tf;
        }
        first / mass
    };
    let mut m = 1;
    let mut prev = evaluate(m);
    while m < MAX_SUBDIVISION {
        m *= 2;
        let next = evaluate(m);
        if next.dist(prev) < CENTROID_TOL {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_values() {
        let w = WeibullWeight::new(2.0, 4.0, -25.0).unwrap();
        assert_eq!(weibull_phi(-30.0, &w), 0.1);
        assert_eq!(weibull_phi(-25.0, &w), 0.1);
        for k in [0.5, 1.0, 2.0, 7.0] {
            let w = WeibullWeight::new(k, 4.0, -25.0).unwrap();
            let v = weibull_phi(-25.0 + 4.0, &w);
            assert!((v - (1.0 - (-1.0f64).exp() + 0.1)).abs() < 1e-15);
            assert!((v - 0.73212).abs() < 1e-5);
        }
    }

    #[test]
    fn invalid_parameters() {
        assert!(WeibullWeight::new(0.0, 1.0, 0.0).is_err());
        assert!(WeibullWeight::new(1.0, -1.0, 0.0).is_err());
        assert!(WeibullWeight::new(1.0, 1.0, f64::NAN).is_err());
    }

    #[test]
    fn constant_weight_gives_centroid() {
        // Positive shift: −‖q − roi‖² < l everywhere, so φ ≡ 0.1.
        let w = WeibullWeight::new(2.0, 1.0, 1.0).unwrap();
        let cell = ConvexPolygon::new(vec![
            Vec2::new(0.0, 0.0),
            Vec2::new(3.0, 0.2),
            Vec2::new(3.5, 2.0),
            Vec2::new(1.0, 3.0),
            Vec2::new(-0.5, 1.5),
        ])
        .unwrap();
        let c = weighted_centroid(&cell, Vec2::new(10.0, 10.0), &w).unwrap();
        assert!(c.dist(cell.centroid()) < 1e-9);
    }

    #[test]
    fn weight_pulls_toward_roi() {
        let cell = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let w = WeibullWeight::new(1.0, 0.5, -1.0).unwrap();
        let c = weighted_centroid(&cell, Vec2::new(1.0, 0.5), &w).unwrap();
        assert!(c.x > 0.5);
        assert!((c.y - 0.5).abs() < 1e-9);
    }
}
