use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{SimConfig, SimError};
use crate::adversaries::{AgentKind, AgentSpec};
use crate::geometry::{ConvexPolygon, Vec2};

/// Version of the JSON-lines run-record schema.
pub const RUN_SCHEMA_VERSION: u32 = 1;

/// One deployment episode.
///
/// `positions[t][i]` and `communicated[t][i]` are the true and broadcast
/// positions of robot `i` at communication step `t` (`steps + 1` entries);
/// `actions[t][i] = communicated[t + 1][i] - communicated[t][i]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunRecord {
    pub schema_version: u32,
    /// Index of the episode within its dataset.
    pub episode: u64,
    /// Seed of the episode's RNG stream.
    pub seed: u64,
    pub config: SimConfig,
    pub area: ConvexPolygon,
    pub specs: Vec<AgentSpec>,
    pub positions: Vec<Vec<Vec2>>,
    pub communicated: Vec<Vec<Vec2>>,
    pub actions: Vec<Vec<Vec2>>,
    pub steps: usize,
    pub converged: bool,
    /// Step from which the swarm ignored each agent, if ever.
    pub excluded_from: Vec<Option<usize>>,
}

impl RunRecord {
    pub(crate) fn new(
        config: SimConfig,
        area: ConvexPolygon,
        specs: Vec<AgentSpec>,
        positions: Vec<Vec<Vec2>>,
        communicated: Vec<Vec<Vec2>>,
        converged: bool,
        excluded_from: Vec<Option<usize>>,
    ) -> Self {
        let actions: Vec<Vec<Vec2>> = communicated
            .windows(2)
            .map(|w| w[1].iter().zip(&w[0]).map(|(b, a)| *b - *a).collect())
            .collect();
        Self {
            schema_version: RUN_SCHEMA_VERSION,
            episode: 0,
            seed: config.seed,
            steps: actions.len(),
            config,
            area,
            specs,
            positions,
            communicated,
            actions,
            converged,
            excluded_from,
        }
    }

    pub fn n_robots(&self) -> usize {
        self.specs.len()
    }

    pub fn kinds(&self) -> Vec<AgentKind> {
        self.specs.iter().map(AgentSpec::kind).collect()
    }

    /// Index of the first antagonist, if any.
    pub fn antagonist(&self) -> Option<usize> {
        self.specs.iter().position(|s| s.kind().is_antagonist())
    }

    /// Displacement of the true position of robot `i` during step `t`.
    pub fn true_action(&self, t: usize, i: usize) -> Vec2 {
        self.positions[t + 1][i] - self.positions[t][i]
    }

    /// Final true position of every robot.
    pub fn final_positions(&self) -> &[Vec2] {
        &self.positions[self.steps]
    }

    /// Structural consistency checks for records read from disk.
    pub fn validate(&self) -> Result<(), String> {
        if self.schema_version != RUN_SCHEMA_VERSION {
            return Err(format!("unsupported schema version {}", self.schema_version));
        }
        let n = self.specs.len();
        if self.positions.len() != self.steps + 1
            || self.communicated.len() != self.steps + 1
            || self.actions.len() != self.steps
        {
            return Err("step counts disagree".into());
        }
        let rows = self.positions.iter().chain(&self.communicated).chain(&self.actions);
        if rows.into_iter().any(|r| r.len() != n) || self.excluded_from.len() != n {
            return Err("robot counts disagree".into());
        }
        Ok(())
    }
}

/// Writes one JSON document per line.
pub fn write_runs(path: &Path, runs: &[RunRecord]) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    for run in runs {
        serde_json::to_writer(&mut w, run).map_err(|e| SimError::Io(e.into()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSON-lines run file; blank lines are skipped.
pub fn read_runs(path: &Path) -> Result<Vec<RunRecord>, SimError> {
    let r = BufReader::new(File::open(path)?);
    let mut runs = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let run: RunRecord = serde_json::from_str(&line).map_err(|e| SimError::Format {
            line: i + 1,
            msg: e.to_string(),
        })?;
        run.validate().map_err(|msg| SimError::Format { line: i + 1, msg })?;
        runs.push(run);
    }
    Ok(runs)
}
