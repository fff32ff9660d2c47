//! CSV, JSON and SVG output of metrics and run snapshots.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use super::metrics::{MetricRow, MetricsReport};
use crate::detector::{active_at, score_run, DetectorConfig, DetectorError, Verdict};
use crate::featurize::{context_at, decode_action, FeatureError};
use crate::flow::{FlowError, FlowModel};
use crate::geometry::{voronoi_cell, GeometryError, Vec2};
use crate::rng;
use crate::sim::RunRecord;

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("step {step} is beyond the run's {steps} actions")]
    Step { step: usize, steps: usize },
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

fn write_file(path: &Path, contents: &[u8]) -> Result<(), ReportError> {
    fs::write(path, contents).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Which artifacts [`emit_report`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReportFormats {
    pub csv: bool,
    pub json: bool,
    pub svg: bool,
}

impl Default for ReportFormats {
    fn default() -> Self {
        Self {
            csv: true,
            json: true,
            svg: true,
        }
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Metric rows as RFC-4180 CSV; undefined rates are empty fields.
pub fn metrics_csv(rows: &[MetricRow]) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "criterion",
        "fpr_max",
        "agent_type",
        "antagonists",
        "detected",
        "normals",
        "false_alarms",
        "tpr",
        "tnr",
        "ppv",
    ])?;
    for r in rows {
        w.write_record([
            r.criterion.as_str().to_string(),
            r.fpr_max.to_string(),
            r.agent_type.clone(),
            r.counts.antagonists.to_string(),
            r.counts.detected.to_string(),
            r.counts.normals.to_string(),
            r.counts.false_alarms.to_string(),
            opt(r.tpr),
            opt(r.tnr),
            opt(r.ppv),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

/// Per-timestep rates in long format: one line per detector, type and step.
pub fn timesteps_csv(report: &MetricsReport) -> Result<String, ReportError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["criterion", "fpr_max", "agent_type", "step", "tpr", "fpr"])?;
    for r in &report.timesteps {
        for (t, (tp, fp)) in r.tpr.iter().zip(&r.fpr).enumerate() {
            w.write_record([
                r.criterion.as_str().to_string(),
                r.fpr_max.to_string(),
                r.agent_type.clone(),
                t.to_string(),
                tp.to_string(),
                fp.to_string(),
            ])?;
        }
    }
    let bytes = w.into_inner().map_err(|e| ReportError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
}

pub fn report_json(report: &MetricsReport) -> Result<String, ReportError> {
    Ok(serde_json::to_string_pretty(report)? + "\n")
}

const PALETTE: [&str; 6] = ["#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948"];

/// Grouped bar chart: one panel per detector, bars for TPR of each antagonist
/// type and the pooled TNR and PPV.
pub fn rates_svg(report: &MetricsReport) -> String {
    let panel_w = 360.0;
    let panel_h = 220.0;
    let cols = 2usize;
    let n = report.detectors.len().max(1);
    let rows = n.div_ceil(cols);
    let width = panel_w * cols as f64;
    let height = panel_h * rows as f64;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" font-family="sans-serif" font-size="10">"#
    );
    for (k, d) in report.detectors.iter().enumerate() {
        let ox = (k % cols) as f64 * panel_w;
        let oy = (k / cols) as f64 * panel_h;
        let mut bars: Vec<(String, Option<f64>)> = report
            .rows
            .iter()
            .filter(|r| r.criterion == d.criterion && r.fpr_max == d.fpr_max)
            .map(|r| (format!("TPR {}", r.agent_type), r.tpr))
            .collect();
        if let Some(p) = report.row(d.criterion, d.fpr_max, "pooled") {
            bars.push(("TNR pooled".into(), p.tnr));
            bars.push(("PPV pooled".into(), p.ppv));
        }
        let (x0, y0, plot_h) = (ox + 40.0, oy + 30.0, panel_h - 90.0);
        let bw = (panel_w - 60.0) / bars.len().max(1) as f64;
        let _ = writeln!(
            s,
            r#"<text x="{}" y="{}" font-size="12">{} criterion, FPR_max {}</text>"#,
            ox + 10.0,
            oy + 18.0,
            d.criterion,
            d.fpr_max
        );
        let _ = writeln!(
            s,
            r#"<line x1="{x0}" y1="{}" x2="{}" y2="{}" stroke="black"/>"#,
            y0 + plot_h,
            x0 + bw * bars.len() as f64,
            y0 + plot_h
        );
        for tick in [0.0, 0.5, 1.0] {
            let y = y0 + plot_h * (1.0 - tick);
            let _ = writeln!(s, r#"<text x="{}" y="{}" text-anchor="end">{tick}</text>"#, x0 - 4.0, y + 3.0);
        }
        for (j, (label, v)) in bars.iter().enumerate() {
            let x = x0 + j as f64 * bw;
            if let Some(v) = v {
                let h = plot_h * v;
                let _ = writeln!(
                    s,
                    r#"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{h:.2}" fill="{}"/>"#,
                    x + 2.0,
                    y0 + plot_h - h,
                    bw - 4.0,
                    PALETTE[j % PALETTE.len()]
                );
            }
            let _ = writeln!(
                s,
                r#"<text transform="translate({:.2},{:.2}) rotate(45)">{label}</text>"#,
                x + bw / 2.0,
                y0 + plot_h + 10.0
            );
        }
    }
    s.push_str("</svg>\n");
    s
}

/// Writes `metrics.csv`, `metrics_pooled.csv`, `timesteps.csv` (if present),
/// `report.json` and `rates.svg` into `dir`. Returns the written paths.
pub fn emit_report(report: &MetricsReport, dir: &Path, formats: ReportFormats) -> Result<Vec<PathBuf>, ReportError> {
    fs::create_dir_all(dir).map_err(|source| ReportError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut out = Vec::new();
    let mut put = |name: &str, body: String| -> Result<(), ReportError> {
        let p = dir.join(name);
        write_file(&p, body.as_bytes())?;
        out.push(p);
        Ok(())
    };
    if formats.csv {
        put("metrics.csv", metrics_csv(&report.rows)?)?;
        put("metrics_pooled.csv", metrics_csv(&report.pooled)?)?;
        if !report.timesteps.is_empty() {
            put("timesteps.csv", timesteps_csv(report)?)?;
        }
    }
    if formats.json {
        put("report.json", report_json(report)?)?;
    }
    if formats.svg {
        put("rates.svg", rates_svg(report))?;
    }
    Ok(out)
}

/// Flow samples drawn per robot in a snapshot.
pub const SNAPSHOT_SAMPLES: usize = 50;

const SNAPSHOT_TAG: u64 = 0x534e_4150;

/// SVG of step `step` of a run: Voronoi cells of the listened-to agents,
/// observed actions (black), [`SNAPSHOT_SAMPLES`] flow samples per robot
/// (grey), the antagonist's ROI and a red square around every agent the
/// detector flags after this action.
pub fn snapshot_svg(
    run: &RunRecord,
    model: &FlowModel,
    detector: &DetectorConfig,
    step: usize,
    seed: u64,
) -> Result<String, ReportError> {
    if step >= run.steps {
        return Err(ReportError::Step {
            step,
            steps: run.steps,
        });
    }
    let a_max = run.config.a_max();
    let pos = &run.communicated[step];
    let active = active_at(run, step);
    let mask = active.iter().any(|a| !a).then_some(&active[..]);
    let log_probs = score_run(model, run)?;
    let flagged: Vec<bool> = log_probs
        .iter()
        .map(|lp| Verdict::from_log_probs(detector, lp).flagged_at(step + 1))
        .collect();

    let (lo, hi) = run.area.bounding_box();
    let pad = 0.1 * (hi - lo).norm().max(1.0);
    let scale = 600.0 / (hi.x - lo.x + 2.0 * pad).max(hi.y - lo.y + 2.0 * pad);
    let w = (hi.x - lo.x + 2.0 * pad) * scale;
    let h = (hi.y - lo.y + 2.0 * pad) * scale;
    let px = |p: Vec2| ((p.x - lo.x + pad) * scale, (hi.y - p.y + pad) * scale);
    let poly = |pts: &[Vec2]| {
        pts.iter()
            .map(|&p| {
                let (x, y) = px(p);
                format!("{x:.2},{y:.2}")
            })
            .collect::<Vec<_>>()
            .join(" ")
    };
    let arrow = |s: &mut String, from: Vec2, d: Vec2, color: &str, width: f64| {
        let (x1, y1) = px(from);
        let (x2, y2) = px(from + d);
        let _ = writeln!(
            s,
            r#"<line x1="{x1:.2}" y1="{y1:.2}" x2="{x2:.2}" y2="{y2:.2}" stroke="{color}" stroke-width="{width}" marker-end="url(#head)"/>"#
        );
    };

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{w:.0}" height="{h:.0}">"#
    );
    s.push_str(
        r#"<defs><marker id="head" markerWidth="6" markerHeight="6" refX="5" refY="3" orient="auto"><path d="M0,0 L6,3 L0,6 z" fill="context-stroke"/></marker></defs>"#,
    );
    s.push('\n');
    let _ = writeln!(
        s,
        r#"<polygon class="area" points="{}" fill="none" stroke="black" stroke-width="2"/>"#,
        poly(run.area.vertices())
    );
    let heard: Vec<usize> = (0..run.n_robots()).filter(|&j| active[j]).collect();
    for &i in &heard {
        let others: Vec<Vec2> = heard.iter().filter(|&&j| j != i).map(|&j| pos[j]).collect();
        let cell = voronoi_cell(pos[i], &others, &run.area)?;
        let _ = writeln!(
            s,
            r##"<polygon class="cell" points="{}" fill="none" stroke="#999" stroke-width="1"/>"##,
            poly(cell.vertices())
        );
    }
    let sample_seed = rng::derive_seed(seed, &[SNAPSHOT_TAG, run.episode, step as u64]);
    for i in 0..run.n_robots() {
        let ctx = context_at(run, step, i, mask, sample_seed)?;
        let mut r = rng::stream(sample_seed, &[i as u64]);
        for a in model.sample(&ctx, SNAPSHOT_SAMPLES, &mut r)? {
            arrow(&mut s, pos[i], decode_action(a, a_max), "#bbbbbb", 0.7);
        }
    }
    for i in 0..run.n_robots() {
        arrow(&mut s, pos[i], run.actions[step][i], "black", 2.0);
        let (x, y) = px(pos[i]);
        let fill = if run.specs[i].kind().is_antagonist() { "#e15759" } else { "#4e79a7" };
        let _ = writeln!(s, r#"<circle class="robot" cx="{x:.2}" cy="{y:.2}" r="4" fill="{fill}"/>"#);
        if flagged[i] {
            let _ = writeln!(
                s,
                r#"<rect class="flag" x="{:.2}" y="{:.2}" width="16" height="16" fill="none" stroke="red" stroke-width="2"/>"#,
                x - 8.0,
                y - 8.0
            );
        }
        if let Some(roi) = run.specs[i].x_roi {
            let (rx, ry) = px(roi);
            let _ = writeln!(
                s,
                r##"<path class="roi" d="M{:.2},{:.2} l8,8 m0,-8 l-8,8" stroke="#e15759" stroke-width="2"/>"##,
                rx - 4.0,
                ry - 4.0
            );
        }
    }
    s.push_str("</svg>\n");
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::Criterion;
    use crate::evaluation::metrics::{Counts, Provenance, REPORT_SCHEMA_VERSION};

    fn report() -> MetricsReport {
        let mut rows = Vec::new();
        let mut detectors = Vec::new();
        for c in Criterion::ALL {
            for f in [0.05, 0.01] {
                let d = DetectorConfig {
                    criterion: c,
                    fpr_max: f,
                    threshold: 0.1,
                    f_p: f,
                    binomial_tail: false,
                };
                for t in ["brute_force", "sneaky"] {
                    rows.push(MetricRow {
                        criterion: c,
                        fpr_max: f,
                        agent_type: t.into(),
                        counts: Counts::default(),
                        tpr: None,
                        tnr: Some(1.0 / 3.0),
                        ppv: None,
                    });
                }
                detectors.push(d);
            }
        }
        MetricsReport {
            schema_version: REPORT_SCHEMA_VERSION,
            provenance: Provenance::default(),
            detectors,
            rows,
            pooled: Vec::new(),
            timesteps: Vec::new(),
        }
    }

    #[test]
    fn csv_has_one_row_per_metric_row() {
        let r = report();
        let text = metrics_csv(&r.rows).unwrap();
        assert_eq!(text.lines().count(), 1 + 3 * 2 * 2);
        assert!(text.lines().nth(1).unwrap().ends_with(",,0.3333333333333333,"));
    }

    #[test]
    fn json_round_trips() {
        let r = report();
        let back: MetricsReport = serde_json::from_str(&report_json(&r).unwrap()).unwrap();
        assert_eq!(back, r);
    }
}
