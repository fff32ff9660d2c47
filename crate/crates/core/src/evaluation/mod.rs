//! Dataset generation, detection metrics and reports.

pub mod dataset;
pub mod metrics;
pub mod report;

pub use dataset::{
    generate_dataset, generate_episode, AntagonistParams, DatasetScale, Role, Scenario, ScenarioRanges,
};
pub use metrics::{
    antagonist_succeeded, count_runs, evaluate, per_timestep_rates, scored_runs, success_filter, Counts, MetricRow,
    MetricsReport, Provenance, ScoredRun, TimestepRates, SUCCESS_RADIUS,
};
pub use report::{emit_report, metrics_csv, rates_svg, report_json, snapshot_svg, timesteps_csv, ReportError, ReportFormats};
