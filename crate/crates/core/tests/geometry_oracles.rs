mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmguard::geometry::*;

fn random_sites(rng: &mut ChaCha8Rng, area: &ConvexPolygon, n: usize) -> Vec<Vec2> {
    let (lo, hi) = area.bounding_box();
    let mut sites = Vec::new();
    while sites.len() < n {
        let q = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if area.contains(q, -1e-3) {
            sites.push(q);
        }
    }
    sites
}

#[test]
fn three_robot_cells_match_nearest_neighbor_grid() {
    let area = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
    let sites = [Vec2::new(0.2, 0.3), Vec2::new(0.7, 0.2), Vec2::new(0.5, 0.8)];
    let (pts, da) = grid_points(&area, 500);
    for i in 0..3 {
        let others: Vec<Vec2> = (0..3).filter(|j| *j != i).map(|j| sites[j]).collect();
        let cell = voronoi_cell(sites[i], &others, &area).unwrap();
        let mismatches = pts
            .iter()
            .filter(|q| inside(&cell, **q) != (nearest_site(**q, &sites) == i))
            .count();
        assert!(mismatches as f64 * da < 1e-3, "cell {i}: {mismatches}");
    }
}

#[test]
fn cells_partition_random_areas() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let nv = rng.random_range(3..=8);
        let nr = rng.random_range(1..=20);
        let aspect = rng.random_range(0.2..5.0);
        let apa = rng.random_range(1.0..25.0);
        let area = random_convex_polygon(&mut rng, nv, apa, nr, aspect).unwrap();
        let sites = random_sites(&mut rng, &area, nr);
        let cells: Vec<ConvexPolygon> = (0..nr)
            .map(|i| {
                let others: Vec<Vec2> = (0..nr).filter(|j| *j != i).map(|j| sites[j]).collect();
                voronoi_cell(sites[i], &others, &area).unwrap()
            })
            .collect();
        let total: f64 = cells.iter().map(polygon_area).sum();
        assert!((total - area.area()).abs() / area.area() < 1e-6);
        for (i, c) in cells.iter().enumerate() {
            assert!(c.contains(sites[i], 1e-9));
        }
        // Pairwise interior-disjoint: clip one cell by the other's edges.
        for i in 0..nr {
            for j in (i + 1)..nr {
                let mut inter = Some(cells[i].clone());
                for e in 0..cells[j].len() {
                    let hp = HalfPlane::new(cells[j].vertices()[e], cells[j].edge_normal(e)).unwrap();
                    inter = inter.and_then(|p| clip_halfplane(&p, &hp));
                }
                let a = inter.map(|p| p.area()).unwrap_or(0.0);
                assert!(a < 1e-6 * area.area(), "cells {i},{j} overlap by {a}");
            }
        }
    }
}

#[test]
fn centroid_matches_grid_minimization() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let aspect = rng.random_range(0.5..2.0);
        let area = random_convex_polygon(&mut rng, 5, 1.0, 3, aspect).unwrap();
        let sites = random_sites(&mut rng, &area, 3);
        let cell = voronoi_cell(sites[0], &sites[1..], &area).unwrap();
        let (oracle, spacing) = grid_argmin_centroid(&cell, 200);
        assert!(cell_centroid(&cell).dist(oracle) <= spacing, "{:?} vs {oracle:?}", cell_centroid(&cell));
    }
}

#[test]
fn weighted_centroid_matches_dense_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..10 {
        let nv = rng.random_range(3..=8);
        let area = random_convex_polygon(&mut rng, nv, 4.0, 4, 1.3).unwrap();
        let sites = random_sites(&mut rng, &area, 4);
        let cell = voronoi_cell(sites[0], &sites[1..], &area).unwrap();
        let roi = random_sites(&mut rng, &area, 1)[0];
        let w = WeibullWeight::new(
            rng.random_range(0.8..3.0),
            rng.random_range(0.5..5.0),
            -rng.random_range(1.0..20.0),
        )
        .unwrap();
        let got = weighted_centroid(&cell, roi, &w).unwrap();
        let oracle = grid_weighted_centroid(&cell, roi, &w, 1000);
        assert!(got.dist(oracle) < 1e-3 * cell.diameter(), "{got:?} vs {oracle:?}");
        assert!(cell.contains(got, 1e-9));
    }
}

#[test]
fn triangle_feet_minimize_segment_distance() {
    let tri = ConvexPolygon::new(vec![
        Vec2::new(0.0, 0.0),
        Vec2::new(4.0, 0.5),
        Vec2::new(1.0, 3.0),
    ])
    .unwrap();
    let p = Vec2::new(1.5, 1.0);
    let pts = nearest_boundary_points(p, &tri);
    assert_eq!(pts.len(), 6);
    for (k, (a, b)) in tri.edges().enumerate() {
        let oracle = ternary_closest(p, a, b);
        assert!(pts[3 + k].dist(oracle) < 1e-6);
    }
}

#[test]
fn random_polygons_satisfy_invariants() {
    let mut rng = ChaCha8Rng::seed_from_u64(1234);
    for _ in 0..1000 {
        let nv = rng.random_range(3..=8);
        let nr = rng.random_range(3..=20);
        let apa = rng.random_range(1.0..25.0);
        let aspect = rng.random_range(0.2..5.0);
        let p = random_convex_polygon(&mut rng, nv, apa, nr, aspect).unwrap();
        assert_eq!(p.len(), nv);
        // Re-validating exercises every ConvexPolygon invariant.
        ConvexPolygon::new(p.vertices().to_vec()).unwrap();
        assert!((p.area() / (apa * nr as f64) - 1.0).abs() < 0.01);
        let (lo, hi) = p.bounding_box();
        assert!(((hi.x - lo.x) / (hi.y - lo.y) / aspect - 1.0).abs() < 0.1);
    }
}

#[test]
fn weibull_phi_monotone_sweep() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let w = WeibullWeight::new(
            rng.random_range(0.2..5.0),
            rng.random_range(0.1..20.0),
            rng.random_range(-100.0..0.0),
        )
        .unwrap();
        let a = rng.random_range(-150.0..10.0);
        let b = rng.random_range(-150.0..10.0);
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (pl, ph) = (weibull_phi(lo, &w), weibull_phi(hi, &w));
        assert!(pl <= ph);
        assert!((0.1..=1.1).contains(&pl) && (0.1..=1.1).contains(&ph));
    }
}

proptest! {
    #[test]
    fn clipping_is_idempotent(
        ax in -1.0f64..2.0, ay in -1.0f64..2.0, theta in 0.0f64..std::f64::consts::TAU,
    ) {
        let sq = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let hp = HalfPlane::new(Vec2::new(ax, ay), Vec2::new(theta.cos(), theta.sin())).unwrap();
        let once = clip_halfplane(&sq, &hp);
        let twice = once.as_ref().and_then(|p| clip_halfplane(p, &hp));
        prop_assert_eq!(once, twice);
    }

    #[test]
    fn constant_weight_identity(seed in 0u64..1000) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let area = random_convex_polygon(&mut rng, 6, 2.0, 3, 1.5).unwrap();
        let w = WeibullWeight::new(2.0, 3.0, 0.5).unwrap();
        let c = weighted_centroid(&area, Vec2::new(1.0, 1.0), &w).unwrap();
        prop_assert!(c.dist(cell_centroid(&area)) < 1e-9);
    }
}
