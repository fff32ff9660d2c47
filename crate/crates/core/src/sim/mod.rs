//! Deployment-episode simulator: communication rounds, target selection and
//! velocity-saturated kinematic motion.

mod record;

pub use record::{read_runs, write_runs, RunRecord, RUN_SCHEMA_VERSION};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversaries::{
    spoofing_outputs, target_brute_force, target_normal, target_sneaky, target_weibull, AgentKind,
    AgentSpec, Behavior, StrategyError,
};
use crate::geometry::{voronoi_cell, ConvexPolygon, GeometryError, Vec2};

/// Minimum spawn separation between robots (m).
pub const SPAWN_SEPARATION: f64 = 0.3;
/// Spawn attempts per robot before giving up.
pub const SPAWN_ATTEMPTS: usize = 1000;
/// Positions are kept this far inside the area (m).
pub const BOUNDARY_MARGIN: f64 = 1e-3;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid simulation config: {0}")]
    Config(String),
    #[error("could not place robot {robot} after {attempts} attempts")]
    Spawn { robot: usize, attempts: usize },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Strategy(#[from] StrategyError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed run record on line {line}: {msg}")]
    Format { line: usize, msg: String },
}

/// Timing, motion and termination parameters of a deployment episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_robots: usize,
    /// Communication interval Δt_c (s).
    pub comm_interval: f64,
    /// Control interval Δt_v (s).
    pub control_interval: f64,
    /// Maximum number of communication steps.
    pub max_steps: usize,
    /// Step magnitude (m) below which a robot counts as stopped.
    pub convergence_threshold: f64,
    /// Speed limit (m/s).
    pub v_max: f64,
    /// Standard deviation (m/s) of the isotropic velocity noise per control tick.
    pub actuation_noise_sigma: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_robots: 5,
            comm_interval: 3.0,
            control_interval: 0.2,
            max_steps: 50,
            convergence_threshold: 0.075,
            v_max: 0.4,
            actuation_noise_sigma: 0.005,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |m: String| Err(SimError::Config(m));
        if self.n_robots < 1 {
            return err("n_robots must be >= 1".into());
        }
        if self.max_steps < 1 {
            return err("max_steps must be >= 1".into());
        }
        if !(self.v_max > 0.0 && self.v_max.is_finite()) {
            return err(format!("v_max must be positive, got {}", self.v_max));
        }
        if !(self.comm_interval > 0.0 && self.control_interval > 0.0) {
            return err("intervals must be positive".into());
        }
        let ratio = self.comm_interval / self.control_interval;
        if (ratio - ratio.round()).abs() > 1e-9 || ratio.round() < 1.0 {
            return err(format!(
                "control interval {} must divide communication interval {}",
                self.control_interval, self.comm_interval
            ));
        }
        if !(self.convergence_threshold > 0.0) {
            return err("convergence_threshold must be positive".into());
        }
        if !(self.actuation_noise_sigma >= 0.0 && self.actuation_noise_sigma.is_finite()) {
            return err("actuation_noise_sigma must be non-negative".into());
        }
        Ok(())
    }

    /// Control ticks per communication interval.
    pub fn ticks_per_round(&self) -> usize {
        (self.comm_interval / self.control_interval).round() as usize
    }

    /// Largest displacement a robot can make within one communication interval.
    pub fn a_max(&self) -> f64 {
        self.v_max * self.comm_interval
    }
}

/// Decides online which agents the swarm stops listening to.
pub trait ExclusionPolicy {
    /// Called after every completed communication step. `communicated[t]` holds
    /// all broadcast positions of step `t`; `active[i]` is false for agents
    /// already excluded. Returns agents to exclude from now on.
    fn flag(&mut self, area: &ConvexPolygon, communicated: &[Vec<Vec2>], active: &[bool]) -> Vec<usize>;
}

/// Excludes fixed agents once a given number of actions has been observed.
#[derive(Debug, Clone)]
pub struct ScriptedExclusion {
    pub agents: Vec<usize>,
    pub after_actions: usize,
}

impl ExclusionPolicy for ScriptedExclusion {
    fn flag(&mut self, _area: &ConvexPolygon, communicated: &[Vec<Vec2>], _active: &[bool]) -> Vec<usize> {
        if communicated.len() > self.after_actions {
            self.agents.clone()
        } else {
            Vec::new()
        }
    }
}

/// Uniform rejection sampling inside `area` with pairwise separation of at
/// least [`SPAWN_SEPARATION`].
pub fn spawn_positions<R: Rng + ?Sized>(
    n: usize,
    area: &ConvexPolygon,
    rng: &mut R,
) -> Result<Vec<Vec2>, SimError> {
    let (lo, hi) = area.bounding_box();
    let mut positions: Vec<Vec2> = Vec::with_capacity(n);
    for robot in 0..n {
        let mut placed = false;
        for _ in 0..SPAWN_ATTEMPTS {
            let q = Vec2::new(
                lo.x + rng.random::<f64>() * (hi.x - lo.x),
                lo.y + rng.random::<f64>() * (hi.y - lo.y),
            );
            if area.max_edge_distance(q) <= -BOUNDARY_MARGIN
                && positions.iter().all(|p| p.dist(q) >= SPAWN_SEPARATION)
            {
                positions.push(q);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(SimError::Spawn {
                robot,
                attempts: SPAWN_ATTEMPTS,
            });
        }
    }
    Ok(positions)
}

/// Per-round targets: physical target per agent and, for spoofing agents
/// before arrival, the target of the fabricated position.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub physical: Vec<Vec2>,
    pub fabricated: Vec<Option<Vec2>>,
}

/// Mutable state of a running episode.
#[derive(Debug, Clone)]
pub struct SimState {
    pub config: SimConfig,
    pub area: ConvexPolygon,
    pub specs: Vec<AgentSpec>,
    /// True positions.
    pub positions: Vec<Vec2>,
    /// Fabricated positions of spoofing agents (equal to the true position
    /// for everybody else).
    pub fabricated: Vec<Vec2>,
    /// Latched "reached ROI" flag of spoofing agents.
    pub arrived: Vec<bool>,
    /// Agents the swarm still listens to.
    pub active: Vec<bool>,
    /// Communication rounds completed.
    pub step: usize,
    last_comm: Option<Vec<Vec2>>,
    /// Noise for fabricated trajectories, kept apart from the physical noise
    /// stream so that physical trajectories do not depend on agent behavior.
    fabrication_rng: ChaCha8Rng,
}

impl SimState {
    /// Places robots uniformly at random with a minimum separation.
    pub fn init<R: Rng + ?Sized>(
        config: SimConfig,
        area: ConvexPolygon,
        specs: Vec<AgentSpec>,
        rng: &mut R,
    ) -> Result<Self, SimError> {
        config.validate()?;
        let positions = spawn_positions(config.n_robots, &area, rng)?;
        Self::from_positions(config, area, specs, positions, rng)
    }

    /// State with given initial positions.
    pub fn from_positions<R: Rng + ?Sized>(
        config: SimConfig,
        area: ConvexPolygon,
        specs: Vec<AgentSpec>,
        positions: Vec<Vec2>,
        rng: &mut R,
    ) -> Result<Self, SimError> {
        config.validate()?;
        if specs.len() != config.n_robots || positions.len() != config.n_robots {
            return Err(SimError::Config(format!(
                "{} agent specs and {} positions for {} robots",
                specs.len(),
                positions.len(),
                config.n_robots
            )));
        }
        for spec in &specs {
            if spec.kind().is_antagonist() {
                let roi = spec.x_roi.ok_or(StrategyError::MissingRoi(spec.kind()))?;
                if !area.contains(roi, 1e-6) {
                    return Err(SimError::Config(format!("ROI {roi:?} outside the area")));
                }
            }
            match spec.behavior {
                Behavior::Sneaky(p) => p.validate()?,
                Behavior::Weibull(w) | Behavior::AggressiveWeibull(w) => {
                    w.validate()?;
                }
                _ => {}
            }
        }
        if let Some(p) = positions.iter().find(|p| !area.contains(**p, 1e-6)) {
            return Err(SimError::Geometry(GeometryError::OutsideArea(*p)));
        }
        let fabrication_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let n = config.n_robots;
        Ok(Self {
            fabrication_rng,
            config,
            area,
            fabricated: positions.clone(),
            positions,
            specs,
            arrived: vec![false; n],
            active: vec![true; n],
            step: 0,
            last_comm: None,
        })
    }

    pub fn n_robots(&self) -> usize {
        self.positions.len()
    }

    fn is_spoofing_undercover(&self, i: usize) -> bool {
        self.specs[i].kind() == AgentKind::Spoofing && !self.arrived[i]
    }

    /// Positions every agent broadcasts this round. Spoofing agents that have
    /// not yet reached their ROI broadcast their fabricated position.
    pub fn communication_round(&mut self) -> Vec<Vec2> {
        let threshold = self.config.convergence_threshold;
        for i in 0..self.n_robots() {
            if self.specs[i].kind() == AgentKind::Spoofing && !self.arrived[i] {
                let roi = self.specs[i].x_roi.expect("validated at init");
                if self.positions[i].dist(roi) <= threshold {
                    self.arrived[i] = true;
                }
            }
        }
        let comm: Vec<Vec2> = (0..self.n_robots())
            .map(|i| {
                if self.is_spoofing_undercover(i) {
                    self.fabricated[i]
                } else {
                    self.positions[i]
                }
            })
            .collect();
        for i in 0..self.n_robots() {
            if !self.is_spoofing_undercover(i) {
                self.fabricated[i] = self.positions[i];
            }
        }
        self.last_comm = Some(comm.clone());
        comm
    }

    /// Cell of agent `i` around `own`, built from the broadcast positions of
    /// the other active agents.
    fn cell_of(&self, i: usize, own: Vec2, comm: &[Vec2]) -> Result<ConvexPolygon, GeometryError> {
        let others: Vec<Vec2> = (0..comm.len())
            .filter(|&j| j != i && self.active[j])
            .map(|j| comm[j])
            .collect();
        voronoi_cell(own, &others, &self.area)
    }

    /// Target of every agent for the coming interval.
    pub fn select_targets(&self) -> Result<Targets, SimError> {
        let comm = self
            .last_comm
            .as_ref()
            .ok_or_else(|| SimError::Config("select_targets before communication_round".into()))?;
        let n = self.n_robots();
        let mut physical = Vec::with_capacity(n);
        let mut fabricated = vec![None; n];
        for i in 0..n {
            let spec = &self.specs[i];
            let pos = self.positions[i];
            let target = match spec.behavior {
                Behavior::Normal => target_normal(&self.cell_of(i, pos, comm)?),
                Behavior::BruteForce => target_brute_force(spec)?,
                Behavior::Sneaky(p) => {
                    let roi = spec.x_roi.ok_or(StrategyError::MissingRoi(spec.kind()))?;
                    target_sneaky(pos, &self.cell_of(i, pos, comm)?, roi, &p)
                }
                Behavior::Weibull(w) | Behavior::AggressiveWeibull(w) => {
                    let roi = spec.x_roi.ok_or(StrategyError::MissingRoi(spec.kind()))?;
                    target_weibull(&self.cell_of(i, pos, comm)?, roi, &w)?
                }
                Behavior::Spoofing => {
                    let roi = spec.x_roi.ok_or(StrategyError::MissingRoi(spec.kind()))?;
                    let reached = self.arrived[i];
                    let own = if reached { pos } else { self.fabricated[i] };
                    let out = spoofing_outputs(pos, &self.cell_of(i, own, comm)?, roi, reached);
                    if !reached {
                        fabricated[i] = Some(out.x_comm);
                    }
                    out.x_target
                }
            };
            physical.push(target);
        }
        Ok(Targets {
            physical,
            fabricated,
        })
    }

    /// One communication interval of control ticks. Each tick moves every
    /// robot toward its target at `min(v_max, distance / Δt_v)` plus Gaussian
    /// velocity noise, then keeps it inside the area.
    pub fn step_interval<R: Rng + ?Sized>(&mut self, targets: &Targets, rng: &mut R) {
        let cfg = self.config;
        for _ in 0..cfg.ticks_per_round() {
            for i in 0..self.n_robots() {
                let noise = Vec2::new(
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ) * cfg.actuation_noise_sigma;
                self.positions[i] = self.kinematic_tick(self.positions[i], targets.physical[i], noise);
                if let Some(ft) = targets.fabricated[i] {
                    let fake_noise = Vec2::new(
                        self.fabrication_rng.sample::<f64, _>(StandardNormal),
                        self.fabrication_rng.sample::<f64, _>(StandardNormal),
                    ) * cfg.actuation_noise_sigma;
                    self.fabricated[i] = self.kinematic_tick(self.fabricated[i], ft, fake_noise);
                }
            }
        }
        self.step += 1;
    }

    fn kinematic_tick(&self, pos: Vec2, target: Vec2, noise: Vec2) -> Vec2 {
        let dt = self.config.control_interval;
        let d = target - pos;
        let dist = d.norm();
        let vel = if dist > 0.0 {
            d * (self.config.v_max.min(dist / dt) / dist)
        } else {
            Vec2::ZERO
        };
        self.area.project_inside(pos + (vel + noise) * dt, BOUNDARY_MARGIN)
    }
}

/// Runs one deployment episode until every robot stops moving or `max_steps`
/// actions have been taken.
pub fn run_episode<R: Rng + ?Sized>(
    config: SimConfig,
    area: ConvexPolygon,
    specs: Vec<AgentSpec>,
    rng: &mut R,
    exclusion: Option<&mut dyn ExclusionPolicy>,
) -> Result<RunRecord, SimError> {
    let state = SimState::init(config, area, specs, rng)?;
    run_from_state(state, rng, exclusion)
}

/// Runs an episode from an initialized (not yet communicated) state.
pub fn run_from_state<R: Rng + ?Sized>(
    mut state: SimState,
    rng: &mut R,
    mut exclusion: Option<&mut dyn ExclusionPolicy>,
) -> Result<RunRecord, SimError> {
    let config = state.config;
    let n = state.n_robots();
    let mut positions = vec![state.positions.clone()];
    let mut communicated = vec![state.communication_round()];
    let mut excluded_from: Vec<Option<usize>> = vec![None; n];
    let mut converged = false;

    for t in 0..config.max_steps {
        let targets = state.select_targets()?;
        state.step_interval(&targets, rng);
        positions.push(state.positions.clone());
        communicated.push(state.communication_round());

        if let Some(policy) = exclusion.as_deref_mut() {
            for i in policy.flag(&state.area, &communicated, &state.active) {
                if i < n && state.active[i] {
                    state.active[i] = false;
                    excluded_from[i] = Some(t + 1);
                }
            }
        }

        let thr = config.convergence_threshold;
        let still = (0..n).all(|i| {
            communicated[t + 1][i].dist(communicated[t][i]) < thr
                && positions[t + 1][i].dist(positions[t][i]) < thr
        });
        if still {
            converged = true;
            break;
        }
    }

    Ok(RunRecord::new(
        config,
        state.area,
        state.specs,
        positions,
        communicated,
        converged,
        excluded_from,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet(n: usize) -> SimConfig {
        SimConfig {
            n_robots: n,
            actuation_noise_sigma: 0.0,
            ..SimConfig::default()
        }
    }

    fn big_square() -> ConvexPolygon {
        ConvexPolygon::rectangle(0.0, 0.0, 10.0, 10.0).unwrap()
    }

    #[test]
    fn config_validation() {
        assert!(SimConfig::default().validate().is_ok());
        let bad = SimConfig {
            control_interval: 0.7,
            ..SimConfig::default()
        };
        assert!(bad.validate().is_err());
        assert!(SimConfig { n_robots: 0, ..SimConfig::default() }.validate().is_err());
        assert!(SimConfig { v_max: 0.0, ..SimConfig::default() }.validate().is_err());
        assert!((SimConfig::default().a_max() - 1.2).abs() < 1e-12);
        assert_eq!(SimConfig::default().ticks_per_round(), 15);
    }

    #[test]
    fn spawn_single_and_crowded() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let unit = ConvexPolygon::rectangle(0.0, 0.0, 1.0, 1.0).unwrap();
        let s = SimState::init(quiet(1), unit.clone(), vec![AgentSpec::normal()], &mut rng).unwrap();
        assert!(unit.contains(s.positions[0], 0.0));

        let area = ConvexPolygon::rectangle(0.0, 0.0, 5.0, 4.0).unwrap();
        let s = SimState::init(quiet(20), area, vec![AgentSpec::normal(); 20], &mut rng).unwrap();
        for i in 0..20 {
            for j in (i + 1)..20 {
                assert!(s.positions[i].dist(s.positions[j]) >= SPAWN_SEPARATION);
            }
        }
        let tiny = ConvexPolygon::rectangle(0.0, 0.0, 0.2, 0.2).unwrap();
        let err = SimState::init(quiet(3), tiny, vec![AgentSpec::normal(); 3], &mut rng);
        assert!(matches!(err, Err(SimError::Spawn { .. })));
    }

    #[test]
    fn init_is_deterministic() {
        let a = SimState::init(quiet(4), big_square(), vec![AgentSpec::normal(); 4], &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        let b = SimState::init(quiet(4), big_square(), vec![AgentSpec::normal(); 4], &mut ChaCha8Rng::seed_from_u64(9))
            .unwrap();
        assert_eq!(a.positions, b.positions);
    }

    #[test]
    fn saturated_displacement() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = SimState::init(quiet(1), big_square(), vec![AgentSpec::normal()], &mut rng).unwrap();
        s.positions[0] = Vec2::new(2.0, 5.0);
        let targets = Targets {
            physical: vec![Vec2::new(5.0, 5.0)],
            fabricated: vec![None],
        };
        s.step_interval(&targets, &mut rng);
        assert!((s.positions[0].dist(Vec2::new(2.0, 5.0)) - 1.2).abs() < 1e-12);
        assert!((s.positions[0].y - 5.0).abs() < 1e-12);

        let here = s.positions[0];
        let targets = Targets {
            physical: vec![here],
            fabricated: vec![None],
        };
        s.step_interval(&targets, &mut rng);
        assert_eq!(s.positions[0], here);
    }

    #[test]
    fn boundary_clamping() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let area = big_square();
        let mut s = SimState::init(quiet(1), area.clone(), vec![AgentSpec::normal()], &mut rng).unwrap();
        s.positions[0] = Vec2::new(9.95, 5.0);
        let targets = Targets {
            physical: vec![Vec2::new(20.0, 5.0)],
            fabricated: vec![None],
        };
        s.step_interval(&targets, &mut rng);
        assert!(area.max_edge_distance(s.positions[0]) <= -BOUNDARY_MARGIN + 1e-12);
    }

    #[test]
    fn normal_swarm_broadcasts_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut s = SimState::init(quiet(3), big_square(), vec![AgentSpec::normal(); 3], &mut rng).unwrap();
        assert_eq!(s.communication_round(), s.positions);
    }

    #[test]
    fn spoofing_fabricates_until_arrival() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let roi = Vec2::new(9.0, 9.0);
        let specs = vec![AgentSpec::antagonist(AgentKind::Spoofing, roi), AgentSpec::normal()];
        let mut s = SimState::init(quiet(2), big_square(), specs, &mut rng).unwrap();
        s.positions[0] = Vec2::new(1.0, 1.0);
        s.fabricated[0] = Vec2::new(1.0, 1.0);
        s.positions[1] = Vec2::new(5.0, 1.0);
        s.communication_round();
        let t = s.select_targets().unwrap();
        assert_eq!(t.physical[0], roi);
        let fab = t.fabricated[0].unwrap();
        // Normal target of the fabricated position is the cell centroid.
        let cell = voronoi_cell(Vec2::new(1.0, 1.0), &[Vec2::new(5.0, 1.0)], &big_square()).unwrap();
        assert!(fab.dist(cell.centroid()) < 1e-12);
        s.step_interval(&t, &mut rng);
        let comm = s.communication_round();
        assert_ne!(comm[0], s.positions[0]);

        s.positions[0] = roi;
        let comm = s.communication_round();
        assert_eq!(comm[0], roi);
        assert!(s.arrived[0]);
    }

    #[test]
    fn scripted_exclusion_latches() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut policy = ScriptedExclusion {
            agents: vec![0],
            after_actions: 1,
        };
        let specs = vec![AgentSpec::antagonist(AgentKind::BruteForce, Vec2::new(5.0, 5.0)), AgentSpec::normal(), AgentSpec::normal()];
        let rec = run_episode(quiet(3), big_square(), specs, &mut rng, Some(&mut policy)).unwrap();
        assert_eq!(rec.excluded_from[0], Some(1));
        assert_eq!(rec.excluded_from[1], None);
    }
}
