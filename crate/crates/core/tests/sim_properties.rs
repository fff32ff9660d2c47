mod common;

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use swarmguard::adversaries::{
    target_weibull, AgentKind, AgentSpec, SneakyParams, AGGRESSIVE_WEIBULL_PRESET, WEIBULL_PRESET,
};
use swarmguard::evaluation::dataset::episode_state;
use swarmguard::evaluation::{generate_dataset, generate_episode, Role, Scenario};
use swarmguard::geometry::*;
use swarmguard::sim::*;

fn cell_of(i: usize, pos: &[Vec2], active: &[bool], area: &ConvexPolygon) -> ConvexPolygon {
    let others: Vec<Vec2> = (0..pos.len()).filter(|&j| j != i && active[j]).map(|j| pos[j]).collect();
    voronoi_cell(pos[i], &others, area).unwrap()
}

/// `Σ ∫ min_i ‖q − p_i‖²` on a 200 × 200 lattice.
fn grid_cost(area: &ConvexPolygon, sites: &[Vec2]) -> f64 {
    let (pts, da) = grid_points(area, 200);
    pts.iter()
        .map(|q| {
            let s = sites[nearest_site(*q, sites)];
            ((q.x - s.x).powi(2) + (q.y - s.y).powi(2)) * da
        })
        .sum()
}

#[test]
fn same_seed_same_run() {
    let sc = Scenario::default();
    for role in [Role::Train, Role::Test(AgentKind::Spoofing), Role::Test(AgentKind::Weibull)] {
        let a = generate_episode(&sc, role, 3, 77, None).unwrap();
        let b = generate_episode(&sc, role, 3, 77, None).unwrap();
        assert_eq!(a, b);
        let c = generate_episode(&sc, role, 3, 78, None).unwrap();
        assert_ne!(a.positions, c.positions);
    }
}

#[test]
fn dataset_order_does_not_depend_on_threads() {
    let sc = Scenario::default();
    let par = generate_dataset(&sc, Role::Calibration, 6, 5).unwrap();
    for (i, r) in par.iter().enumerate() {
        assert_eq!(*r, generate_episode(&sc, Role::Calibration, i as u64, 5, None).unwrap());
    }
}

#[test]
fn runs_round_trip_through_json_lines() {
    let sc = Scenario::default();
    let runs = generate_dataset(&sc, Role::Test(AgentKind::Sneaky), 3, 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("runs.jsonl");
    write_runs(&path, &runs).unwrap();
    assert_eq!(read_runs(&path).unwrap(), runs);
}

#[test]
fn motion_is_physical() {
    let sc = Scenario::default();
    for kind in std::iter::once(AgentKind::Normal).chain(AgentKind::ANTAGONISTS) {
        let role = if kind.is_antagonist() { Role::Test(kind) } else { Role::Holdout };
        for r in generate_dataset(&sc, role, 10, 9).unwrap() {
            r.validate().unwrap();
            let cfg = r.config;
            let noise_margin = 6.0 * cfg.actuation_noise_sigma * cfg.control_interval * (cfg.ticks_per_round() as f64).sqrt();
            for t in 0..r.steps {
                for i in 0..r.n_robots() {
                    let step = r.positions[t + 1][i].dist(r.positions[t][i]);
                    assert!(step <= cfg.a_max() + noise_margin, "{kind} step {step}");
                    assert!(r.area.contains(r.positions[t + 1][i], 1e-9));
                    if kind != AgentKind::Spoofing || !r.specs[i].kind().is_antagonist() {
                        assert_eq!(r.positions[t][i], r.communicated[t][i]);
                    }
                }
            }
        }
    }
}

#[test]
fn coverage_cost_descends_and_runs_converge() {
    let sc = Scenario::default();
    let runs = generate_dataset(&sc, Role::Holdout, 20, 21).unwrap();
    let converged = runs.iter().filter(|r| r.converged).count();
    assert!(converged >= 19, "{converged}/20 converged");
    for r in &runs {
        let costs: Vec<f64> = r.communicated.iter().map(|p| grid_cost(&r.area, p)).collect();
        for w in costs.windows(2) {
            assert!(w[1] <= w[0] * 1.01, "cost rose from {} to {}", w[0], w[1]);
        }
    }
}

#[test]
fn sneaky_is_normal_until_triggered() {
    let sc = Scenario::default();
    let params = SneakyParams::default();
    let mut checked = 0;
    for index in 0..10 {
        let (state, rng) = episode_state(&sc, Role::Test(AgentKind::Sneaky), index, 4).unwrap();
        let who = state.specs.iter().position(|s| s.kind() == AgentKind::Sneaky).unwrap();
        let mut normal_state = state.clone();
        normal_state.specs[who] = AgentSpec::normal();
        let sneaky = run_from_state(state, &mut rng.clone(), None).unwrap();
        let normal = run_from_state(normal_state, &mut rng.clone(), None).unwrap();

        let all = vec![true; sneaky.n_robots()];
        let trigger = (0..sneaky.steps).find(|&t| {
            let p = &sneaky.communicated[t];
            p[who].dist(cell_of(who, p, &all, &sneaky.area).centroid()) <= params.trigger_radius
        });
        let Some(trigger) = trigger else { continue };
        for t in 0..=trigger {
            assert_eq!(sneaky.positions[t], normal.positions[t], "episode {index} step {t}");
        }
        if trigger < normal.steps {
            assert_ne!(sneaky.positions[trigger + 1][who], normal.positions[trigger + 1][who]);
            checked += 1;
        }
    }
    assert!(checked >= 5, "only {checked} episodes triggered");
}

#[test]
fn weibull_target_is_continuous_in_roi() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..20 {
        let nv = rng.random_range(3..=8);
        let cell = random_convex_polygon(&mut rng, nv, 4.0, 1, 1.0).unwrap();
        let c = cell.centroid();
        let roi = c + Vec2::new(rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0));
        let bumped = roi + Vec2::new(1e-4, -1e-4) * std::f64::consts::FRAC_1_SQRT_2;
        for w in [WEIBULL_PRESET, AGGRESSIVE_WEIBULL_PRESET] {
            let a = target_weibull(&cell, roi, &w).unwrap();
            let b = target_weibull(&cell, bumped, &w).unwrap();
            assert!(a.dist(b) < 1e-2, "{a:?} vs {b:?}");
        }
    }
}

#[test]
fn aggressive_preset_pulls_harder() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let mut closer = 0;
    for _ in 0..100 {
        let (nv, size, aspect) = (rng.random_range(3..=8), rng.random_range(1.0..25.0), rng.random_range(0.2..5.0));
        let cell = random_convex_polygon(&mut rng, nv, size, 1, aspect).unwrap();
        let dir = rng.random_range(0.0..std::f64::consts::TAU);
        let roi = cell.centroid() + Vec2::new(dir.cos(), dir.sin()) * rng.random_range(1.0..8.0);
        let mild = target_weibull(&cell, roi, &WEIBULL_PRESET).unwrap();
        let aggressive = target_weibull(&cell, roi, &AGGRESSIVE_WEIBULL_PRESET).unwrap();
        closer += (aggressive.dist(roi) < mild.dist(roi)) as usize;
    }
    assert_eq!(closer, 100);
}

#[test]
fn excluded_agents_never_shape_other_cells() {
    let sc = Scenario {
        sim: SimConfig {
            actuation_noise_sigma: 0.0,
            ..SimConfig::default()
        },
        ..Scenario::default()
    };
    let mut differs = 0;
    for index in 0..10 {
        let (state, mut rng) = episode_state(&sc, Role::Test(AgentKind::BruteForce), index, 8).unwrap();
        let who = state.specs.iter().position(|s| s.kind().is_antagonist()).unwrap();
        let mut policy = ScriptedExclusion {
            agents: vec![who],
            after_actions: 2,
        };
        let r = run_from_state(state, &mut rng, Some(&mut policy)).unwrap();
        let from = r.excluded_from[who].expect("agent was excluded");
        assert_eq!(from, 2);
        let active: Vec<bool> = (0..r.n_robots()).map(|j| j != who).collect();
        let all = vec![true; r.n_robots()];
        for t in from..r.steps {
            let p = &r.communicated[t];
            for i in (0..r.n_robots()).filter(|&i| i != who) {
                let c = cell_of(i, p, &active, &r.area).centroid();
                let d = c - p[i];
                let expect = if d.norm() <= r.config.a_max() { c } else { p[i] + d * (r.config.a_max() / d.norm()) };
                assert!(r.communicated[t + 1][i].dist(expect) < 1e-9, "episode {index} step {t} robot {i}");
                let with_all = cell_of(i, p, &all, &r.area).centroid();
                differs += (with_all.dist(c) > 1e-6) as usize;
            }
        }
    }
    assert!(differs > 0);
}
