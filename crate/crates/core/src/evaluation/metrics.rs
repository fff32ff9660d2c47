//! Agent-level detection metrics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adversaries::AgentKind;
use crate::detector::{score_run, Criterion, DetectorConfig, DetectorError, Verdict};
use crate::flow::FlowModel;
use crate::sim::RunRecord;

/// Default radius (m) within which an antagonist counts as having reached
/// its region of interest.
pub const SUCCESS_RADIUS: f64 = 0.5;

/// A run reduced to what the detectors need.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredRun {
    pub episode: u64,
    pub kinds: Vec<AgentKind>,
    /// `log_probs[i][t]`: log-density of agent `i`'s action at step `t`.
    pub log_probs: Vec<Vec<f64>>,
}

impl ScoredRun {
    pub fn steps(&self) -> usize {
        self.log_probs.first().map_or(0, Vec::len)
    }
}

pub fn scored_runs(model: &FlowModel, runs: &[RunRecord]) -> Result<Vec<ScoredRun>, DetectorError> {
    runs.par_iter()
        .map(|r| {
            Ok(ScoredRun {
                episode: r.episode,
                kinds: r.kinds(),
                log_probs: score_run(model, r)?,
            })
        })
        .collect()
}

/// Whether the run's antagonist ended within `radius` of its ROI.
pub fn antagonist_succeeded(run: &RunRecord, radius: f64) -> bool {
    run.antagonist().is_some_and(|i| {
        let roi = run.specs[i].x_roi.expect("antagonists carry an ROI");
        run.final_positions()[i].dist(roi) < radius
    })
}

/// Runs whose antagonist reached its ROI.
pub fn success_filter(runs: &[RunRecord], radius: f64) -> Vec<RunRecord> {
    runs.iter().filter(|r| antagonist_succeeded(r, radius)).cloned().collect()
}

/// Confusion counts at the agent level.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    /// Antagonists (A).
    pub antagonists: usize,
    /// Antagonists flagged at the end of their run.
    pub detected: usize,
    /// Normal agents (N).
    pub normals: usize,
    /// Normal agents flagged at the end of their run.
    pub false_alarms: usize,
}

impl Counts {
    pub fn add(&mut self, o: &Counts) {
        self.antagonists += o.antagonists;
        self.detected += o.detected;
        self.normals += o.normals;
        self.false_alarms += o.false_alarms;
    }

    pub fn tpr(&self) -> Option<f64> {
        (self.antagonists > 0).then(|| self.detected as f64 / self.antagonists as f64)
    }

    pub fn tnr(&self) -> Option<f64> {
        (self.normals > 0).then(|| (self.normals - self.false_alarms) as f64 / self.normals as f64)
    }

    pub fn fpr(&self) -> Option<f64> {
        self.tnr().map(|t| 1.0 - t)
    }

    /// `None` when nothing was flagged.
    pub fn ppv(&self) -> Option<f64> {
        let flagged = self.detected + self.false_alarms;
        (flagged > 0).then(|| self.detected as f64 / flagged as f64)
    }
}

/// Metrics of one detector on one set of runs. Undefined rates are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRow {
    pub criterion: Criterion,
    pub fpr_max: f64,
    /// Antagonist type of the test set, or `"pooled"`.
    pub agent_type: String,
    pub counts: Counts,
    pub tpr: Option<f64>,
    pub tnr: Option<f64>,
    pub ppv: Option<f64>,
}

impl MetricRow {
    fn new(cfg: &DetectorConfig, agent_type: String, counts: Counts) -> Self {
        Self {
            criterion: cfg.criterion,
            fpr_max: cfg.fpr_max,
            agent_type,
            tpr: counts.tpr(),
            tnr: counts.tnr(),
            ppv: counts.ppv(),
            counts,
        }
    }
}

/// Fraction of antagonists and of normal agents flagged after `t` actions,
/// for `t = 0..=max_steps`. Agents of finished runs keep their final flag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimestepRates {
    pub criterion: Criterion,
    pub fpr_max: f64,
    pub agent_type: String,
    pub tpr: Vec<f64>,
    pub fpr: Vec<f64>,
}

impl TimestepRates {
    /// First step at which the TPR curve reaches its maximum.
    pub fn tpr_peak_step(&self) -> usize {
        let mut best = 0;
        for (t, v) in self.tpr.iter().enumerate() {
            if *v > self.tpr[best] {
                best = t;
            }
        }
        best
    }
}

/// Final-step confusion counts of `runs` under `cfg`.
pub fn count_runs(runs: &[ScoredRun], cfg: &DetectorConfig) -> Counts {
    let mut c = Counts::default();
    for run in runs {
        for (kind, lps) in run.kinds.iter().zip(&run.log_probs) {
            let flagged = Verdict::from_log_probs(cfg, lps).flagged();
            if kind.is_antagonist() {
                c.antagonists += 1;
                c.detected += flagged as usize;
            } else {
                c.normals += 1;
                c.false_alarms += flagged as usize;
            }
        }
    }
    c
}

pub fn per_timestep_rates(runs: &[ScoredRun], cfg: &DetectorConfig, max_steps: usize, agent_type: &str) -> TimestepRates {
    let mut pos = vec![0usize; max_steps + 1];
    let mut neg = vec![0usize; max_steps + 1];
    let (mut n_pos, mut n_neg) = (0usize, 0usize);
    for run in runs {
        for (kind, lps) in run.kinds.iter().zip(&run.log_probs) {
            let v = Verdict::from_log_probs(cfg, lps);
            let (hits, total) = if kind.is_antagonist() {
                (&mut pos, &mut n_pos)
            } else {
                (&mut neg, &mut n_neg)
            };
            *total += 1;
            for (t, h) in hits.iter_mut().enumerate() {
                *h += v.flagged_at(t) as usize;
            }
        }
    }
    let rate = |hits: Vec<usize>, n: usize| hits.into_iter().map(|h| if n == 0 { 0.0 } else { h as f64 / n as f64 }).collect();
    TimestepRates {
        criterion: cfg.criterion,
        fpr_max: cfg.fpr_max,
        agent_type: agent_type.to_string(),
        tpr: rate(pos, n_pos),
        fpr: rate(neg, n_neg),
    }
}

/// Inputs and settings a report was produced from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed: u64,
    /// SHA-256 of the canonical pipeline configuration.
    pub config_hash: String,
    /// Number of runs per evaluated set.
    pub runs: BTreeMap<String, usize>,
    pub success_filter: Option<f64>,
}

/// Version of the JSON report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub detectors: Vec<DetectorConfig>,
    /// One row per detector and antagonist type; TNR over that set's normals.
    pub rows: Vec<MetricRow>,
    /// One row per detector over all sets.
    pub pooled: Vec<MetricRow>,
    /// Empty unless requested.
    pub timesteps: Vec<TimestepRates>,
}

impl MetricsReport {
    pub fn row(&self, criterion: Criterion, fpr_max: f64, agent_type: &str) -> Option<&MetricRow> {
        self.rows
            .iter()
            .chain(&self.pooled)
            .find(|r| r.criterion == criterion && r.fpr_max == fpr_max && r.agent_type == agent_type)
    }

    pub fn timestep(&self, criterion: Criterion, fpr_max: f64, agent_type: &str) -> Option<&TimestepRates> {
        self.timesteps
            .iter()
            .find(|r| r.criterion == criterion && r.fpr_max == fpr_max && r.agent_type == agent_type)
    }
}

/// Metrics of every detector on every test set.
pub fn evaluate(
    sets: &[(AgentKind, Vec<ScoredRun>)],
    detectors: &[DetectorConfig],
    per_timestep: Option<usize>,
    provenance: Provenance,
) -> MetricsReport {
    let mut rows = Vec::new();
    let mut pooled = Vec::new();
    let mut timesteps = Vec::new();
    for cfg in detectors {
        let mut total = Counts::default();
        for (kind, runs) in sets {
            let c = count_runs(runs, cfg);
            total.add(&c);
            rows.push(MetricRow::new(cfg, kind.to_string(), c));
            if let Some(max_steps) = per_timestep {
                timesteps.push(per_timestep_rates(runs, cfg, max_steps, kind.as_str()));
            }
        }
        pooled.push(MetricRow::new(cfg, "pooled".into(), total));
    }
    MetricsReport {
        schema_version: REPORT_SCHEMA_VERSION,
        provenance,
        detectors: detectors.to_vec(),
        rows,
        pooled,
        timesteps,
    }
}
