//! Threshold calibration and per-agent detection criteria on sequences of
//! flow log-densities.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::featurize::{build_context, context_at, encode_action, FeatureError};
use crate::flow::{FlowError, FlowModel, Workspace};
use crate::geometry::{ConvexPolygon, Vec2};
use crate::rng;
use crate::sim::{ExclusionPolicy, RunRecord};

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error("empty calibration set")]
    EmptyCalibration,
    #[error("invalid detector config: {0}")]
    Config(String),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Flag permanently after the first action below the threshold.
    Naive,
    /// Flag while the binomial probability of the observed count of
    /// sub-threshold actions is below the tolerated rate.
    Binomial,
    /// Flag while the running mean log-density is below the threshold.
    Mean,
}

impl Criterion {
    pub const ALL: [Criterion; 3] = [Criterion::Naive, Criterion::Binomial, Criterion::Mean];

    pub fn as_str(self) -> &'static str {
        match self {
            Criterion::Naive => "naive",
            Criterion::Binomial => "binomial",
            Criterion::Mean => "mean",
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Criterion {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Criterion::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| format!("unknown criterion '{s}' (expected naive, binomial or mean)"))
    }
}

/// A calibrated detector. Thresholds are log-densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorConfig {
    pub criterion: Criterion,
    pub fpr_max: f64,
    /// Per-action threshold (naive, binomial) or mean threshold (mean).
    pub threshold: f64,
    /// Fraction of calibration actions scoring below the per-action threshold.
    pub f_p: f64,
    /// Binomial criterion only: test `P(K >= k)` instead of `P(K = k)`.
    #[serde(default)]
    pub binomial_tail: bool,
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorError> {
        if !(self.fpr_max > 0.0 && self.fpr_max < 1.0) {
            return Err(DetectorError::Config(format!("fpr_max {} not in (0, 1)", self.fpr_max)));
        }
        if !(self.f_p > 0.0 && self.f_p < 1.0) {
            return Err(DetectorError::Config(format!("f_p {} not in (0, 1)", self.f_p)));
        }
        if !self.threshold.is_finite() {
            return Err(DetectorError::Config("threshold must be finite".into()));
        }
        Ok(())
    }
}

/// Probability of exactly `k` successes in `n` Bernoulli(`p`) trials.
pub fn binomial_pmf(n: u64, k: u64, p: f64) -> f64 {
    if k > n {
        return 0.0;
    }
    if p <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    if p >= 1.0 {
        return if k == n { 1.0 } else { 0.0 };
    }
    if n <= 64 {
        // C(n, k) fits exactly in a u64 here.
        let k_small = k.min(n - k);
        let mut c: u128 = 1;
        for i in 0..k_small {
            c = c * (n - i) as u128 / (i + 1) as u128;
        }
        return c as f64 * p.powi(k as i32) * (1.0 - p).powi((n - k) as i32);
    }
    let mut ln_c = 0.0;
    for i in 0..k.min(n - k) {
        ln_c += ((n - i) as f64 / (i + 1) as f64).ln();
    }
    (ln_c + k as f64 * p.ln() + (n - k) as f64 * (-p).ln_1p()).exp()
}

/// `P(K >= k)` for `K ~ Binomial(n, p)`.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    (k..=n).map(|j| binomial_pmf(n, j, p)).sum::<f64>().min(1.0)
}

/// Lower empirical quantile: the order statistic at index `⌊q·n⌋`.
pub fn lower_quantile(values: &[f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let idx = ((q * v.len() as f64).floor() as usize).min(v.len() - 1);
    Some(v[idx])
}

/// Per-agent classification timeline.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    /// Flag after each observed action.
    pub flags: Vec<bool>,
    pub log_probs: Vec<f64>,
    /// Running statistic after each action: the sub-threshold count for
    /// naive/binomial, the running mean for mean.
    pub statistic: Vec<f64>,
    below: u64,
    sum: f64,
}

impl Verdict {
    pub fn new() -> Self {
        Self::default()
    }

    /// Verdict after feeding every log-density in order.
    pub fn from_log_probs(cfg: &DetectorConfig, log_probs: &[f64]) -> Self {
        let mut v = Self::new();
        for &lp in log_probs {
            v.update(cfg, lp);
        }
        v
    }

    /// Current classification (normal before any action).
    pub fn flagged(&self) -> bool {
        self.flags.last().copied().unwrap_or(false)
    }

    /// Flag after `t` actions, holding the last value past the end.
    pub fn flagged_at(&self, t: usize) -> bool {
        if t == 0 || self.flags.is_empty() {
            false
        } else {
            self.flags[t.min(self.flags.len()) - 1]
        }
    }

    pub fn n_actions(&self) -> usize {
        self.log_probs.len()
    }

    fn observe(&mut self, cfg: &DetectorConfig, lp: f64) {
        self.log_probs.push(lp);
        self.sum += lp;
        if lp < cfg.threshold {
            self.below += 1;
        }
    }

    /// Applies the configured criterion and returns the new flag.
    pub fn update(&mut self, cfg: &DetectorConfig, lp: f64) -> bool {
        match cfg.criterion {
            Criterion::Naive => naive_update(cfg, self, lp),
            Criterion::Binomial => binomial_update(cfg, self, lp),
            Criterion::Mean => mean_update(cfg, self, lp),
        }
        self.flagged()
    }
}

/// Latching per-action threshold test.
pub fn naive_update(cfg: &DetectorConfig, v: &mut Verdict, lp: f64) {
    let was = v.flagged();
    v.observe(cfg, lp);
    v.statistic.push(v.below as f64);
    v.flags.push(was || lp < cfg.threshold);
}

/// Binomial test on the number of sub-threshold actions, re-evaluated at
/// every step.
pub fn binomial_update(cfg: &DetectorConfig, v: &mut Verdict, lp: f64) {
    v.observe(cfg, lp);
    let n = v.log_probs.len() as u64;
    let prob = if cfg.binomial_tail {
        binomial_upper_tail(n, v.below, cfg.f_p)
    } else {
        binomial_pmf(n, v.below, cfg.f_p)
    };
    v.statistic.push(v.below as f64);
    v.flags.push(prob < cfg.fpr_max);
}

/// Running-mean threshold test, re-evaluated at every step.
pub fn mean_update(cfg: &DetectorConfig, v: &mut Verdict, lp: f64) {
    v.observe(cfg, lp);
    let mean = v.sum / v.log_probs.len() as f64;
    v.statistic.push(mean);
    v.flags.push(mean < cfg.threshold);
}

/// Calibrates `criterion` on per-agent log-density sequences of normal
/// agents. Naive and binomial use the `fpr_max` quantile of all per-action
/// values; mean uses the quantile of per-agent final means. `f_p` is always
/// the calibration fraction below the per-action quantile, kept in
/// `[1/n, 1 - 1/n]`.
pub fn calibrate(criterion: Criterion, agents: &[Vec<f64>], fpr_max: f64) -> Result<DetectorConfig, DetectorError> {
    if !(fpr_max > 0.0 && fpr_max < 1.0) {
        return Err(DetectorError::Config(format!("fpr_max {fpr_max} not in (0, 1)")));
    }
    let actions: Vec<f64> = agents.iter().flatten().copied().collect();
    let h_action = lower_quantile(&actions, fpr_max).ok_or(DetectorError::EmptyCalibration)?;
    let n = actions.len() as f64;
    let below = actions.iter().filter(|&&v| v < h_action).count() as f64;
    let f_p = (below / n).clamp(1.0 / n, 1.0 - 1.0 / n).clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON);
    let threshold = match criterion {
        Criterion::Naive | Criterion::Binomial => h_action,
        Criterion::Mean => {
            let means: Vec<f64> = agents
                .iter()
                .filter(|a| !a.is_empty())
                .map(|a| a.iter().sum::<f64>() / a.len() as f64)
                .collect();
            lower_quantile(&means, fpr_max).ok_or(DetectorError::EmptyCalibration)?
        }
    };
    let cfg = DetectorConfig {
        criterion,
        fpr_max,
        threshold,
        f_p,
        binomial_tail: false,
    };
    cfg.validate()?;
    Ok(cfg)
}

/// Tag of the context-shuffling stream used when scoring runs.
const SCORE_TAG: u64 = 0x5343_4f52;

/// Whether agent `j` is still heard at step `t`.
pub fn active_at(run: &RunRecord, t: usize) -> Vec<bool> {
    run.excluded_from.iter().map(|e| e.is_none_or(|s| t < s)).collect()
}

/// Log-density of every action of every agent: `out[i][t]`. Contexts only
/// contain agents the swarm still listened to at step `t`.
pub fn score_run(model: &FlowModel, run: &RunRecord) -> Result<Vec<Vec<f64>>, DetectorError> {
    let a_max = run.config.a_max();
    let n = run.n_robots();
    let seed = rng::derive_seed(run.seed, &[SCORE_TAG]);
    let mut out = vec![Vec::with_capacity(run.steps); n];
    let mut ws = Workspace::default();
    for t in 0..run.steps {
        let active = active_at(run, t);
        let mask = active.iter().any(|a| !a).then_some(&active[..]);
        for (i, row) in out.iter_mut().enumerate() {
            let ctx = context_at(run, t, i, mask, seed)?;
            let a = encode_action(run.actions[t][i], a_max)?;
            row.push(model.log_prob_with(&a, &ctx, &mut ws)?);
        }
    }
    Ok(out)
}

/// [`score_run`] over many runs in parallel, in input order.
pub fn score_runs(model: &FlowModel, runs: &[RunRecord]) -> Result<Vec<Vec<Vec<f64>>>, DetectorError> {
    runs.par_iter().map(|r| score_run(model, r)).collect()
}

/// Online exclusion driven by a calibrated detector: every newly completed
/// action of a still-active agent is scored and fed to its verdict; flagged
/// agents are excluded.
pub struct DetectorExclusion<'a> {
    model: &'a FlowModel,
    cfg: DetectorConfig,
    a_max: f64,
    verdicts: Vec<Verdict>,
    ws: Workspace,
}

impl<'a> DetectorExclusion<'a> {
    pub fn new(model: &'a FlowModel, cfg: DetectorConfig, a_max: f64, n_robots: usize) -> Self {
        Self {
            model,
            cfg,
            a_max,
            verdicts: vec![Verdict::new(); n_robots],
            ws: Workspace::default(),
        }
    }

    pub fn verdicts(&self) -> &[Verdict] {
        &self.verdicts
    }
}

impl ExclusionPolicy for DetectorExclusion<'_> {
    fn flag(&mut self, area: &ConvexPolygon, communicated: &[Vec<Vec2>], active: &[bool]) -> Vec<usize> {
        let t = communicated.len() - 2;
        let mut flagged = Vec::new();
        for i in 0..active.len() {
            if !active[i] {
                continue;
            }
            let Ok(ctx) = build_context(i, &communicated[t], area, Some(active)) else {
                continue;
            };
            let Ok(a) = encode_action(communicated[t + 1][i] - communicated[t][i], self.a_max) else {
                flagged.push(i);
                continue;
            };
            let lp = self.model.log_prob_with(&a, &ctx, &mut self.ws).unwrap_or(f64::NEG_INFINITY);
            if self.verdicts[i].update(&self.cfg, lp) {
                flagged.push(i);
            }
        }
        flagged
    }
}
