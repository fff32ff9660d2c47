//! Target-selection policies: normal Lloyd behavior and the five antagonist
//! strategies.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{cell_centroid, weighted_centroid, ConvexPolygon, GeometryError, Vec2, WeibullWeight};

/// Covert creeping toward the region of interest once the agent is close to
/// its normal target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SneakyParams {
    /// Distance to the normal target (m) below which creeping starts.
    pub trigger_radius: f64,
    /// Length (m) of each covert step toward the region of interest.
    pub creep_step: f64,
}

impl Default for SneakyParams {
    fn default() -> Self {
        Self {
            trigger_radius: 0.5,
            creep_step: 0.1,
        }
    }
}

/// Mild Weibull preset: weight rises steadily over the last
/// 10 m toward the ROI.
pub const WEIBULL_PRESET: WeibullWeight = WeibullWeight {
    shape: 1.0,
    scale: 100.0,
    shift: -100.0,
};

/// Aggressive Weibull preset: same 10 m reach, but the weight keeps climbing
/// close to the ROI, so the target lands nearer to it.
pub const AGGRESSIVE_WEIBULL_PRESET: WeibullWeight = WeibullWeight {
    shape: 3.0,
    scale: 100.0,
    shift: -100.0,
};

/// Agent behavior and its strategy parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Behavior {
    Normal,
    BruteForce,
    Sneaky(SneakyParams),
    Weibull(WeibullWeight),
    AggressiveWeibull(WeibullWeight),
    Spoofing,
}

/// Parameter-free behavior label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    Normal,
    BruteForce,
    Sneaky,
    Weibull,
    AggressiveWeibull,
    Spoofing,
}

impl AgentKind {
    pub const ANTAGONISTS: [AgentKind; 5] = [
        AgentKind::BruteForce,
        AgentKind::Sneaky,
        AgentKind::AggressiveWeibull,
        AgentKind::Weibull,
        AgentKind::Spoofing,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::Normal => "normal",
            AgentKind::BruteForce => "brute_force",
            AgentKind::Sneaky => "sneaky",
            AgentKind::Weibull => "weibull",
            AgentKind::AggressiveWeibull => "aggressive_weibull",
            AgentKind::Spoofing => "spoofing",
        }
    }

    pub fn is_antagonist(self) -> bool {
        self != AgentKind::Normal
    }

    /// Behavior with default parameters.
    pub fn default_behavior(self) -> Behavior {
        match self {
            AgentKind::Normal => Behavior::Normal,
            AgentKind::BruteForce => Behavior::BruteForce,
            AgentKind::Sneaky => Behavior::Sneaky(SneakyParams::default()),
            AgentKind::Weibull => Behavior::Weibull(WEIBULL_PRESET),
            AgentKind::AggressiveWeibull => Behavior::AggressiveWeibull(AGGRESSIVE_WEIBULL_PRESET),
            AgentKind::Spoofing => Behavior::Spoofing,
        }
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            AgentKind::Normal,
            AgentKind::BruteForce,
            AgentKind::Sneaky,
            AgentKind::Weibull,
            AgentKind::AggressiveWeibull,
            AgentKind::Spoofing,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("unknown agent kind '{s}'"))
    }
}

impl Behavior {
    pub fn kind(&self) -> AgentKind {
        match self {
            Behavior::Normal => AgentKind::Normal,
            Behavior::BruteForce => AgentKind::BruteForce,
            Behavior::Sneaky(_) => AgentKind::Sneaky,
            Behavior::Weibull(_) => AgentKind::Weibull,
            Behavior::AggressiveWeibull(_) => AgentKind::AggressiveWeibull,
            Behavior::Spoofing => AgentKind::Spoofing,
        }
    }
}

/// One agent's behavior and, for antagonists, its region of interest.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    pub behavior: Behavior,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub x_roi: Option<Vec2>,
}

impl AgentSpec {
    pub fn normal() -> Self {
        Self {
            behavior: Behavior::Normal,
            x_roi: None,
        }
    }

    /// Antagonist of `kind` with default strategy parameters.
    pub fn antagonist(kind: AgentKind, x_roi: Vec2) -> Self {
        Self {
            behavior: kind.default_behavior(),
            x_roi: Some(x_roi),
        }
    }

    pub fn kind(&self) -> AgentKind {
        self.behavior.kind()
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum StrategyError {
    #[error("{0} agent has no region of interest")]
    MissingRoi(AgentKind),
    #[error("invalid strategy parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl SneakyParams {
    pub fn validate(&self) -> Result<(), StrategyError> {
        if !(self.trigger_radius > 0.0 && self.creep_step > 0.0)
            || !self.trigger_radius.is_finite()
            || !self.creep_step.is_finite()
        {
            return Err(StrategyError::InvalidParams(format!("{self:?}")));
        }
        Ok(())
    }
}

/// Normal coverage target: the centroid of the agent's cell.
pub fn target_normal(cell: &ConvexPolygon) -> Vec2 {
    cell_centroid(cell)
}

/// Brute force ignores the tessellation and heads straight for its ROI.
pub fn target_brute_force(spec: &AgentSpec) -> Result<Vec2, StrategyError> {
    spec.x_roi.ok_or(StrategyError::MissingRoi(spec.kind()))
}

/// Normal behavior until within `trigger_radius` of the normal target, then a
/// fixed-length creep toward the ROI that never overshoots it.
pub fn target_sneaky(
    position: Vec2,
    cell: &ConvexPolygon,
    x_roi: Vec2,
    params: &SneakyParams,
) -> Vec2 {
    let normal = target_normal(cell);
    if position.dist(normal) > params.trigger_radius {
        return normal;
    }
    let to_roi = x_roi - position;
    let d = to_roi.norm();
    if d <= params.creep_step {
        x_roi
    } else {
        position + to_roi * (params.creep_step / d)
    }
}

/// Centroid of the cell weighted by proximity to the ROI.
pub fn target_weibull(
    cell: &ConvexPolygon,
    x_roi: Vec2,
    weight: &WeibullWeight,
) -> Result<Vec2, StrategyError> {
    Ok(weighted_centroid(cell, x_roi, weight)?)
}

/// Outputs of the spoofing strategy for one round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpoofOutputs {
    /// Where the agent claims to go (before arrival) or its true position.
    pub x_comm: Vec2,
    /// Where the agent physically moves.
    pub x_target: Vec2,
}

/// Spoofing agent: before reaching the ROI it reports normal coverage motion
/// while driving to the ROI; afterwards it reports the truth and behaves
/// normally.
///
/// `comm_cell` is the agent's Voronoi cell built around its communicated
/// position (which equals the true position after arrival).
pub fn spoofing_outputs(
    position: Vec2,
    comm_cell: &ConvexPolygon,
    x_roi: Vec2,
    reached: bool,
) -> SpoofOutputs {
    if reached {
        SpoofOutputs {
            x_comm: position,
            x_target: target_normal(comm_cell),
        }
    } else {
        SpoofOutputs {
            x_comm: target_normal(comm_cell),
            x_target: x_roi,
        }
    }
}
