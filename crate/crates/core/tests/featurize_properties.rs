use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmguard::featurize::*;
use swarmguard::geometry::{random_convex_polygon, ConvexPolygon, Vec2};

fn sorted_rows(c: &Context) -> Vec<[f64; CONTEXT_DIM]> {
    let mut rows = c.rows.clone();
    rows.sort_by(|a, b| a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal));
    rows
}

fn swarm(seed: u64) -> (ConvexPolygon, Vec<Vec2>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..12);
    let nv = rng.random_range(3..=8);
    let area = random_convex_polygon(&mut rng, nv, 4.0, n, 1.5).unwrap();
    let (lo, hi) = area.bounding_box();
    let mut pts = Vec::new();
    while pts.len() < n {
        let q = Vec2::new(rng.random_range(lo.x..hi.x), rng.random_range(lo.y..hi.y));
        if area.contains(q, -1e-3) {
            pts.push(q);
        }
    }
    (area, pts)
}

#[test]
fn action_round_trip_on_ten_thousand_actions() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let a_max = 1.2;
    for _ in 0..10_000 {
        let a = Vec2::new(rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
        let v = encode_action(a, a_max).unwrap();
        let dir = (v.0[0].powi(2) + v.0[1].powi(2)).sqrt();
        assert!((dir - 1.0).abs() < 1e-9);
        let back = decode_action(v, a_max);
        assert!(back.dist(a) <= 1e-12 * a.norm().max(1.0));
    }
    assert_eq!(encode_action(Vec2::ZERO, a_max).unwrap().0, [0.0; 3]);
    assert!(encode_action(Vec2::new(f64::NAN, 0.0), a_max).is_err());
}

#[test]
fn context_shape_and_labels() {
    for seed in 0..50 {
        let (area, pts) = swarm(seed);
        let c = build_context(0, &pts, &area, None).unwrap();
        let robots = c.rows.iter().filter(|r| r[3] == 0.0 && r[4] == 1.0).count();
        let border = c.rows.iter().filter(|r| r[3] == 1.0 && r[4] == 0.0).count();
        assert_eq!(robots, pts.len() - 1);
        assert_eq!(border, 2 * area.len());
        assert_eq!(robots + border, c.len());
        for r in &c.rows {
            let n = (r[0] * r[0] + r[1] * r[1]).sqrt();
            assert!((n - 1.0).abs() < 1e-9 || n == 0.0);
        }
    }
}

proptest! {
    #[test]
    fn other_robot_order_does_not_matter(seed in 0u64..500, rot in 1usize..11) {
        let (area, pts) = swarm(seed);
        let mut others: Vec<Vec2> = pts[1..].to_vec();
        let k = rot % others.len();
        others.rotate_left(k);
        let mut permuted = vec![pts[0]];
        permuted.extend(others);
        let a = build_context(0, &pts, &area, None).unwrap();
        let b = build_context(0, &permuted, &area, None).unwrap();
        prop_assert_eq!(sorted_rows(&a), sorted_rows(&b));
    }

    #[test]
    fn translation_leaves_features_unchanged(seed in 0u64..500, dx in -50.0f64..50.0, dy in -50.0f64..50.0) {
        let (area, pts) = swarm(seed);
        let d = Vec2::new(dx, dy);
        let moved: Vec<Vec2> = pts.iter().map(|p| *p + d).collect();
        let a = build_context(1, &pts, &area, None).unwrap();
        let b = build_context(1, &moved, &area.translated(d), None).unwrap();
        prop_assert_eq!(a.len(), b.len());
        for (ra, rb) in a.rows.iter().zip(&b.rows) {
            for (x, y) in ra.iter().zip(rb) {
                prop_assert!((x - y).abs() < 1e-9, "{:?} vs {:?}", ra, rb);
            }
        }
    }

    #[test]
    fn shuffling_preserves_rows(seed in 0u64..500, s in any::<u64>()) {
        let (area, pts) = swarm(seed);
        let a = build_context(0, &pts, &area, None).unwrap();
        let mut b = a.clone();
        b.shuffle(&mut ChaCha8Rng::seed_from_u64(s));
        prop_assert_eq!(sorted_rows(&a), sorted_rows(&b));
    }
}
