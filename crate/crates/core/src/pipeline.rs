//! End-to-end stages driven by a single JSON configuration: generate, train,
//! calibrate, evaluate and snapshot. Every stage reads and writes files below
//! `out_dir` and is reproducible from the configuration alone.

use std::fs;
use std::path::{Path, PathBuf};

use log::info;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::adversaries::AgentKind;
use crate::detector::{calibrate, Criterion, DetectorConfig, DetectorError};
use crate::evaluation::{
    emit_report, evaluate, scored_runs, snapshot_svg, success_filter, DatasetScale, MetricsReport, Provenance,
    ReportError, ReportFormats, Role, Scenario, SUCCESS_RADIUS,
};
use crate::featurize::{featurize_run, read_samples, write_samples, FeatureError, Sample};
use crate::flow::train::train_from;
use crate::flow::{checkpoint, train as fit, EpochLog, FlowError, FlowModel, TrainConfig, TrainLog};
use crate::rng;
use crate::sim::{read_runs, write_runs, RunRecord, SimError};

/// Version of the pipeline configuration layout.
pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectionSettings {
    pub criteria: Vec<Criterion>,
    pub fpr_levels: Vec<f64>,
    /// Use the binomial upper tail instead of the point probability.
    pub binomial_tail: bool,
}

impl Default for DetectionSettings {
    fn default() -> Self {
        Self {
            criteria: Criterion::ALL.to_vec(),
            fpr_levels: vec![0.05, 0.01],
            binomial_tail: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvaluationSettings {
    /// Antagonist success radius (m) used by the success filter.
    pub success_radius: f64,
    pub per_timestep: bool,
    pub success_filter: bool,
}

impl Default for EvaluationSettings {
    fn default() -> Self {
        Self {
            success_radius: SUCCESS_RADIUS,
            per_timestep: false,
            success_filter: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub schema_version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub scenario: Scenario,
    #[serde(default)]
    pub scale: DatasetScale,
    /// `train.seed` is ignored; the training stream derives from `seed`.
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub detection: DetectionSettings,
    #[serde(default)]
    pub evaluation: EvaluationSettings,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("out")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA_VERSION,
            seed: 0,
            scenario: Scenario::default(),
            scale: DatasetScale::DESK,
            train: TrainConfig::default(),
            detection: DetectionSettings::default(),
            evaluation: EvaluationSettings::default(),
            out_dir: default_out_dir(),
        }
    }
}

/// Broad class of a pipeline failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Data,
    Numerical,
    Io,
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

impl PipelineError {
    pub fn class(&self) -> ErrorClass {
        match self {
            PipelineError::Config(_) => ErrorClass::Config,
            PipelineError::Data(_) => ErrorClass::Data,
            PipelineError::Numerical(_) => ErrorClass::Numerical,
            PipelineError::Io { .. } => ErrorClass::Io,
        }
    }

    fn io(path: &Path, source: std::io::Error) -> Self {
        PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    fn from_sim(path: &Path, e: SimError) -> Self {
        match e {
            SimError::Io(source) => Self::io(path, source),
            SimError::Format { .. } => PipelineError::Data(format!("{}: {e}", path.display())),
            SimError::Config(_) => PipelineError::Config(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }

    fn from_features(path: &Path, e: FeatureError) -> Self {
        match e {
            FeatureError::Io(source) => Self::io(path, source),
            other => PipelineError::Data(format!("{}: {other}", path.display())),
        }
    }

    fn from_flow(path: &Path, e: FlowError) -> Self {
        match e {
            FlowError::Io(source) => Self::io(path, source),
            FlowError::Param(m) => PipelineError::Config(m),
            FlowError::Format(m) => PipelineError::Data(format!("{}: {m}", path.display())),
            e @ (FlowError::Numerical { .. } | FlowError::Diverged { .. }) => PipelineError::Numerical(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<DetectorError> for PipelineError {
    fn from(e: DetectorError) -> Self {
        match e {
            DetectorError::Config(m) => PipelineError::Config(m),
            DetectorError::Flow(FlowError::Numerical { .. }) => PipelineError::Numerical(e.to_string()),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl From<ReportError> for PipelineError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::Io { path, source } => PipelineError::Io { path, source },
            ReportError::Step { .. } => PipelineError::Config(e.to_string()),
            ReportError::Detector(d) => d.into(),
            other => PipelineError::Data(other.to_string()),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
        let cfg: PipelineConfig =
            serde_json::from_str(&text).map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            return Err(PipelineError::Config(format!(
                "schema_version {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        self.scenario.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.train.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.detection.criteria.is_empty() || self.detection.fpr_levels.is_empty() {
            return Err(PipelineError::Config("at least one criterion and FPR level required".into()));
        }
        if let Some(f) = self.detection.fpr_levels.iter().find(|f| !(**f > 0.0 && **f < 1.0)) {
            return Err(PipelineError::Config(format!("FPR level {f} not in (0, 1)")));
        }
        if !(self.evaluation.success_radius > 0.0) {
            return Err(PipelineError::Config("success_radius must be positive".into()));
        }
        let s = &self.scale;
        if s.n_train == 0 || s.n_calibrate == 0 || s.n_test_per_type == 0 {
            return Err(PipelineError::Config("dataset sizes must be positive".into()));
        }
        Ok(())
    }

    /// Hex SHA-256 of the configuration's JSON form, ignoring `out_dir`.
    pub fn hash(&self) -> String {
        let canonical = PipelineConfig {
            out_dir: PathBuf::new(),
            ..self.clone()
        };
        let bytes = serde_json::to_vec(&canonical).expect("configuration serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn paths(&self) -> Paths {
        Paths::new(&self.out_dir)
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: rng::derive_seed(self.seed, &[TRAIN_STAGE]),
            ..self.train.clone()
        }
    }
}

const TRAIN_STAGE: u64 = 0x7472_6169;
const FEATURE_STAGE: u64 = 0x6665_6174;

/// File layout below the output directory.
#[derive(Debug, Clone)]
pub struct Paths {
    pub data: PathBuf,
    pub model: PathBuf,
    pub train_log: PathBuf,
    pub detectors: PathBuf,
    pub report: PathBuf,
}

impl Paths {
    pub fn new(out: &Path) -> Self {
        Self {
            data: out.join("data"),
            model: out.join("model").join("flow.ckpt"),
            train_log: out.join("model").join("train_log.json"),
            detectors: out.join("detectors.json"),
            report: out.join("report"),
        }
    }

    pub fn runs(&self, set: &str) -> PathBuf {
        self.data.join(format!("{set}.jsonl"))
    }

    pub fn features(&self, set: &str) -> PathBuf {
        self.data.join(format!("{set}.sgft"))
    }
}

fn create_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    if let Some(dir) = path.parent() {
        create_dir(dir)?;
    }
    let text = serde_json::to_string_pretty(value).expect("value serializes") + "\n";
    fs::write(path, text).map_err(|e| PipelineError::io(path, e))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Data(format!("{}: {e}", path.display())))
}

pub fn load_runs(path: &Path) -> Result<Vec<RunRecord>, PipelineError> {
    read_runs(path).map_err(|e| PipelineError::from_sim(path, e))
}

pub fn load_model(path: &Path) -> Result<FlowModel, PipelineError> {
    checkpoint::load(path).map_err(|e| PipelineError::from_flow(path, e))
}

/// Run counts written by [`generate`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerateSummary {
    pub train_runs: usize,
    pub val_runs: usize,
    pub calibrate_runs: usize,
    pub test_runs: usize,
    pub train_samples: usize,
    pub val_samples: usize,
}

fn simulate(cfg: &PipelineConfig, role: Role, count: usize) -> Result<Vec<RunRecord>, PipelineError> {
    info!("simulating {count} {} runs", role.name());
    crate::evaluation::generate_dataset(&cfg.scenario, role, count, cfg.seed)
        .map_err(|e| PipelineError::from_sim(Path::new(&role.name()), e))
}

fn features(cfg: &PipelineConfig, runs: &[RunRecord]) -> Result<Vec<Sample>, PipelineError> {
    let seed = rng::derive_seed(cfg.seed, &[FEATURE_STAGE]);
    let a_max = cfg.scenario.sim.a_max();
    let mut out = Vec::new();
    for r in runs {
        out.extend(featurize_run(r, a_max, seed, true).map_err(|e| PipelineError::Data(e.to_string()))?);
    }
    Ok(out)
}

/// Simulates the training, validation, calibration and test sets and writes
/// them as JSON-lines run files plus feature tensors for training.
pub fn generate(cfg: &PipelineConfig) -> Result<GenerateSummary, PipelineError> {
    cfg.validate()?;
    let paths = cfg.paths();
    create_dir(&paths.data)?;
    let s = cfg.scale;
    let train = simulate(cfg, Role::Train, s.n_train)?;
    let val = simulate(cfg, Role::Validation, s.n_val)?;
    let calib = simulate(cfg, Role::Calibration, s.n_calibrate)?;
    let mut test = Vec::new();
    for kind in AgentKind::ANTAGONISTS {
        test.extend(simulate(cfg, Role::Test(kind), s.n_test_per_type)?);
    }
    let train_f = features(cfg, &train)?;
    let val_f = features(cfg, &val)?;
    for (name, runs) in [("train", &train), ("val", &val), ("calibrate", &calib), ("test", &test)] {
        let p = paths.runs(name);
        write_runs(&p, runs).map_err(|e| PipelineError::from_sim(&p, e))?;
    }
    for (name, samples) in [("train", &train_f), ("val", &val_f)] {
        let p = paths.features(name);
        write_samples(&p, samples).map_err(|e| PipelineError::from_features(&p, e))?;
    }
    Ok(GenerateSummary {
        train_runs: train.len(),
        val_runs: val.len(),
        calibrate_runs: calib.len(),
        test_runs: test.len(),
        train_samples: train_f.len(),
        val_samples: val_f.len(),
    })
}

/// Trains the flow on the generated features (continuing from the existing
/// checkpoint with `resume`) and writes the checkpoint and the epoch log.
pub fn train(
    cfg: &PipelineConfig,
    resume: bool,
    on_epoch: &mut dyn FnMut(&EpochLog),
) -> Result<TrainLog, PipelineError> {
    cfg.validate()?;
    let paths = cfg.paths();
    let load = |name: &str| {
        let p = paths.features(name);
        read_samples(&p).map_err(|e| PipelineError::from_features(&p, e))
    };
    let train_set = load("train")?;
    let val_set = if cfg.scale.n_val > 0 { load("val")? } else { Vec::new() };
    let tc = cfg.train_config();
    let fitted = if resume {
        let m = load_model(&paths.model)?;
        if *m.arch() != tc.arch {
            return Err(PipelineError::Config("checkpoint architecture differs from the configuration".into()));
        }
        info!("resuming from {}", paths.model.display());
        train_from(m, &train_set, &val_set, &tc, on_epoch)
    } else {
        fit(&train_set, &val_set, &tc, on_epoch)
    };
    let (model, log) = fitted.map_err(|e| PipelineError::from_flow(&paths.model, e))?;
    if let Some(dir) = paths.model.parent() {
        create_dir(dir)?;
    }
    checkpoint::save(&paths.model, &model).map_err(|e| PipelineError::from_flow(&paths.model, e))?;
    write_json(&paths.train_log, &log)?;
    Ok(log)
}

/// Calibrated detectors, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorFile {
    pub schema_version: u32,
    pub config_hash: String,
    pub detectors: Vec<DetectorConfig>,
}

impl DetectorFile {
    pub fn find(&self, criterion: Criterion, fpr_max: f64) -> Option<&DetectorConfig> {
        self.detectors.iter().find(|d| d.criterion == criterion && d.fpr_max == fpr_max)
    }
}

pub fn load_detectors(path: &Path) -> Result<DetectorFile, PipelineError> {
    let f: DetectorFile = read_json(path)?;
    for d in &f.detectors {
        d.validate()?;
    }
    Ok(f)
}

/// Detector configurations selected by optional criterion / FPR filters.
fn selection(cfg: &PipelineConfig, criterion: Option<Criterion>, fpr: Option<f64>) -> Vec<(Criterion, f64)> {
    let mut out = Vec::new();
    for &c in &cfg.detection.criteria {
        for &f in &cfg.detection.fpr_levels {
            if criterion.is_none_or(|x| x == c) && fpr.is_none_or(|x| x == f) {
                out.push((c, f));
            }
        }
    }
    out
}

/// Calibrates every configured (criterion, FPR level) pair on the
/// calibration runs and writes them to `detectors.json`.
pub fn calibrate_stage(
    cfg: &PipelineConfig,
    criterion: Option<Criterion>,
    fpr: Option<f64>,
) -> Result<DetectorFile, PipelineError> {
    cfg.validate()?;
    let paths = cfg.paths();
    let model = load_model(&paths.model)?;
    let runs = load_runs(&paths.runs("calibrate"))?;
    if runs.iter().any(|r| r.antagonist().is_some()) {
        return Err(PipelineError::Data("calibration runs must contain only normal agents".into()));
    }
    let scored = scored_runs(&model, &runs)?;
    let agents: Vec<Vec<f64>> = scored.into_iter().flat_map(|r| r.log_probs).collect();
    let chosen = selection(cfg, criterion, fpr);
    if chosen.is_empty() {
        return Err(PipelineError::Config("no configured detector matches the filter".into()));
    }
    let mut detectors = Vec::new();
    for (c, f) in chosen {
        let mut d = calibrate(c, &agents, f)?;
        d.binomial_tail = cfg.detection.binomial_tail;
        info!("{c} @ {f}: h = {}, f_p = {}", d.threshold, d.f_p);
        detectors.push(d);
    }
    let file = DetectorFile {
        schema_version: CONFIG_SCHEMA_VERSION,
        config_hash: cfg.hash(),
        detectors,
    };
    write_json(&paths.detectors, &file)?;
    Ok(file)
}

/// Options of [`evaluate_stage`] that can also come from the command line.
#[derive(Debug, Clone, Default)]
pub struct EvaluateOptions {
    pub criterion: Option<Criterion>,
    pub fpr: Option<f64>,
    pub per_timestep: bool,
    pub success_filter: bool,
}

/// Scores the test runs, applies the calibrated detectors and writes the
/// report files.
pub fn evaluate_stage(cfg: &PipelineConfig, opts: &EvaluateOptions) -> Result<MetricsReport, PipelineError> {
    cfg.validate()?;
    let paths = cfg.paths();
    let model = load_model(&paths.model)?;
    let file = load_detectors(&paths.detectors)?;
    let detectors: Vec<DetectorConfig> = file
        .detectors
        .iter()
        .filter(|d| opts.criterion.is_none_or(|c| c == d.criterion) && opts.fpr.is_none_or(|f| f == d.fpr_max))
        .cloned()
        .collect();
    if detectors.is_empty() {
        return Err(PipelineError::Config("no calibrated detector matches the filter".into()));
    }
    let mut runs = load_runs(&paths.runs("test"))?;
    let success = opts.success_filter || cfg.evaluation.success_filter;
    if success {
        runs = success_filter(&runs, cfg.evaluation.success_radius);
    }
    let mut provenance = Provenance {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        success_filter: success.then_some(cfg.evaluation.success_radius),
        ..Provenance::default()
    };
    let mut sets = Vec::new();
    for kind in AgentKind::ANTAGONISTS {
        let of_kind: Vec<RunRecord> = runs
            .iter()
            .filter(|r| r.antagonist().map(|i| r.specs[i].kind()) == Some(kind))
            .cloned()
            .collect();
        provenance.runs.insert(kind.to_string(), of_kind.len());
        info!("scoring {} {kind} runs", of_kind.len());
        sets.push((kind, scored_runs(&model, &of_kind)?));
    }
    let per_timestep = (opts.per_timestep || cfg.evaluation.per_timestep).then_some(cfg.scenario.sim.max_steps);
    let report = evaluate(&sets, &detectors, per_timestep, provenance);
    emit_report(&report, &paths.report, ReportFormats::default())?;
    Ok(report)
}

/// Writes an SVG of step `step` of run `episode` from `runs_file`.
pub fn snapshot_stage(
    cfg: &PipelineConfig,
    runs_file: &Path,
    episode: usize,
    step: usize,
    criterion: Criterion,
    fpr: f64,
    out: &Path,
) -> Result<(), PipelineError> {
    cfg.validate()?;
    let paths = cfg.paths();
    let model = load_model(&paths.model)?;
    let file = load_detectors(&paths.detectors)?;
    let det = file
        .find(criterion, fpr)
        .ok_or_else(|| PipelineError::Config(format!("no calibrated {criterion} detector at {fpr}")))?;
    let runs = load_runs(runs_file)?;
    let run = runs
        .get(episode)
        .ok_or_else(|| PipelineError::Config(format!("run index {episode} out of range ({} runs)", runs.len())))?;
    let svg = snapshot_svg(run, &model, det, step, cfg.seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        create_dir(dir)?;
    }
    fs::write(out, svg).map_err(|e| PipelineError::io(out, e))
}
