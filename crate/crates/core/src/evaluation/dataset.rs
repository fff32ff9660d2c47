//! Randomized deployment scenarios and labeled run datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversaries::{AgentKind, AgentSpec, Behavior, SneakyParams, AGGRESSIVE_WEIBULL_PRESET, WEIBULL_PRESET};
use crate::geometry::{random_convex_polygon, ConvexPolygon, Vec2, WeibullWeight};
use crate::rng;
use crate::sim::{
    run_from_state, spawn_positions, ExclusionPolicy, RunRecord, SimConfig, SimError, SimState, BOUNDARY_MARGIN,
};

/// Sampling ranges of a random deployment task. Integer ranges are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioRanges {
    pub robots: [usize; 2],
    pub vertices: [usize; 2],
    /// Area per agent (m²).
    pub area_per_agent: [f64; 2],
    /// Bounding-box x/y ratio, sampled log-uniformly.
    pub aspect: [f64; 2],
}

impl Default for ScenarioRanges {
    fn default() -> Self {
        Self {
            robots: [3, 20],
            vertices: [3, 8],
            area_per_agent: [1.0, 25.0],
            aspect: [0.2, 5.0],
        }
    }
}

impl ScenarioRanges {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        let [r0, r1] = self.robots;
        let [v0, v1] = self.vertices;
        let [a0, a1] = self.area_per_agent;
        let [s0, s1] = self.aspect;
        if r0 < 1 || r0 > r1 {
            return err(format!("robot range {:?}", self.robots));
        }
        if v0 < 3 || v1 > 8 || v0 > v1 {
            return err(format!("vertex range {:?} must lie within [3, 8]", self.vertices));
        }
        if !(a0 > 0.0 && a0 <= a1 && a1.is_finite()) {
            return err(format!("area-per-agent range {:?}", self.area_per_agent));
        }
        if !(s0 >= 0.2 && s1 <= 5.0 && s0 <= s1) {
            return err(format!("aspect range {:?} must lie within [0.2, 5]", self.aspect));
        }
        Ok(())
    }
}

/// Strategy parameters used for generated antagonists.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AntagonistParams {
    pub sneaky: SneakyParams,
    pub weibull: WeibullWeight,
    pub aggressive_weibull: WeibullWeight,
    /// Minimum distance (m) between an antagonist's spawn point and its ROI.
    pub roi_min_distance: f64,
}

impl Default for AntagonistParams {
    fn default() -> Self {
        Self {
            sneaky: SneakyParams::default(),
            weibull: WEIBULL_PRESET,
            aggressive_weibull: AGGRESSIVE_WEIBULL_PRESET,
            roi_min_distance: 0.5,
        }
    }
}

impl AntagonistParams {
    pub fn behavior(&self, kind: AgentKind) -> Behavior {
        match kind {
            AgentKind::Sneaky => Behavior::Sneaky(self.sneaky),
            AgentKind::Weibull => Behavior::Weibull(self.weibull),
            AgentKind::AggressiveWeibull => Behavior::AggressiveWeibull(self.aggressive_weibull),
            k => k.default_behavior(),
        }
    }
}

/// Run counts per dataset role.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetScale {
    pub n_train: usize,
    pub n_val: usize,
    pub n_calibrate: usize,
    pub n_test_per_type: usize,
}

impl DatasetScale {
    pub const DESK: DatasetScale = DatasetScale {
        n_train: 100,
        n_val: 30,
        n_calibrate: 50,
        n_test_per_type: 100,
    };
    pub const FULL: DatasetScale = DatasetScale {
        n_train: 350,
        n_val: 125,
        n_calibrate: 100,
        n_test_per_type: 1000,
    };
}

impl Default for DatasetScale {
    fn default() -> Self {
        Self::DESK
    }
}

/// What a generated run is for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Validation,
    Calibration,
    /// Normal-only runs for checking a calibrated detector.
    Holdout,
    Test(AgentKind),
}

impl Role {
    fn tag(self) -> [u64; 2] {
        match self {
            Role::Train => [1, 0],
            Role::Validation => [2, 0],
            Role::Calibration => [3, 0],
            Role::Holdout => [4, 0],
            Role::Test(k) => [5, k as u64],
        }
    }

    pub fn name(self) -> String {
        match self {
            Role::Train => "train".into(),
            Role::Validation => "val".into(),
            Role::Calibration => "calibrate".into(),
            Role::Holdout => "holdout".into(),
            Role::Test(k) => format!("test_{k}"),
        }
    }
}

/// Everything that defines how random runs are produced.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub sim: SimConfig,
    pub ranges: ScenarioRanges,
    pub antagonists: AntagonistParams,
}

impl Scenario {
    pub fn validate(&self) -> Result<(), SimError> {
        self.ranges.validate()?;
        let probe = SimConfig {
            n_robots: self.ranges.robots[0],
            ..self.sim
        };
        probe.validate()?;
        if !(self.antagonists.roi_min_distance >= 0.0) {
            return Err(SimError::Config("roi_min_distance must be non-negative".into()));
        }
        Ok(())
    }
}

const ROI_ATTEMPTS: usize = 10_000;

/// Uniform point of the area at least `min_dist` from `avoid`.
pub fn sample_roi<R: Rng + ?Sized>(
    area: &ConvexPolygon,
    avoid: Vec2,
    min_dist: f64,
    rng: &mut R,
) -> Result<Vec2, SimError> {
    let (lo, hi) = area.bounding_box();
    for _ in 0..ROI_ATTEMPTS {
        let q = Vec2::new(
            lo.x + rng.random::<f64>() * (hi.x - lo.x),
            lo.y + rng.random::<f64>() * (hi.y - lo.y),
        );
        if area.max_edge_distance(q) <= -BOUNDARY_MARGIN && q.dist(avoid) >= min_dist {
            return Ok(q);
        }
    }
    Err(SimError::Config(format!(
        "no ROI at least {min_dist} m from {avoid:?} found"
    )))
}

/// Initial state of run `index` of `role`; test roles get one antagonist.
pub fn episode_state(scenario: &Scenario, role: Role, index: u64, seed: u64) -> Result<(SimState, ChaCha8Rng), SimError> {
    let [t0, t1] = role.tag();
    let ep_seed = rng::derive_seed(seed, &[t0, t1, index]);
    let mut rng = ChaCha8Rng::seed_from_u64(ep_seed);
    let r = &scenario.ranges;
    let n_r = rng.random_range(r.robots[0]..=r.robots[1]);
    let n_v = rng.random_range(r.vertices[0]..=r.vertices[1]);
    let apa = if r.area_per_agent[0] < r.area_per_agent[1] {
        rng.random_range(r.area_per_agent[0]..r.area_per_agent[1])
    } else {
        r.area_per_agent[0]
    };
    let aspect = if r.aspect[0] < r.aspect[1] {
        rng.random_range(r.aspect[0].ln()..r.aspect[1].ln()).exp()
    } else {
        r.aspect[0]
    };
    let area = random_convex_polygon(&mut rng, n_v, apa, n_r, aspect)?;
    let positions = spawn_positions(n_r, &area, &mut rng)?;
    let mut specs = vec![AgentSpec::normal(); n_r];
    if let Role::Test(kind) = role {
        if kind.is_antagonist() {
            let who = rng.random_range(0..n_r);
            let roi = sample_roi(&area, positions[who], scenario.antagonists.roi_min_distance, &mut rng)?;
            specs[who] = AgentSpec {
                behavior: scenario.antagonists.behavior(kind),
                x_roi: Some(roi),
            };
        }
    }
    let config = SimConfig {
        n_robots: n_r,
        seed: ep_seed,
        ..scenario.sim
    };
    let state = SimState::from_positions(config, area, specs, positions, &mut rng)?;
    Ok((state, rng))
}

/// Simulates run `index` of `role`.
pub fn generate_episode(
    scenario: &Scenario,
    role: Role,
    index: u64,
    seed: u64,
    exclusion: Option<&mut dyn ExclusionPolicy>,
) -> Result<RunRecord, SimError> {
    let (state, mut rng) = episode_state(scenario, role, index, seed)?;
    let seed_used = state.config.seed;
    let mut rec = run_from_state(state, &mut rng, exclusion)?;
    rec.episode = index;
    rec.seed = seed_used;
    Ok(rec)
}

/// `count` runs of `role`, simulated in parallel and returned in index order.
pub fn generate_dataset(scenario: &Scenario, role: Role, count: usize, seed: u64) -> Result<Vec<RunRecord>, SimError> {
    scenario.validate()?;
    (0..count as u64)
        .into_par_iter()
        .map(|i| generate_episode(scenario, role, i, seed, None))
        .collect()
}
