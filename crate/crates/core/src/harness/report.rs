//! Experiment reports and their CSV / JSON / SVG files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bounds::{BoundConstants, OnlineBound};
use crate::error::Result;
use crate::expfam::TheoryConstants;
use crate::kernels::AlphaSup;

use super::config::ExperimentConfig;
use super::stats::{MeanEstimate, RateFit};
use super::svg;

pub const SCHEMA_VERSION: &str = "1";
pub const CSV_HEADER: [&str; 7] = ["n", "estimator", "stat", "value", "stderr", "replications", "seed"];

/// Constants computed once per experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConstantsSummary {
    pub theory: TheoryConstants,
    pub alpha: AlphaSup,
    /// `min(1, α̂ + 3·stderr)`, the value used for `m`, `C` and the bounds.
    pub alpha_upper: f64,
}

/// Everything measured at one sample size.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PointSummary {
    pub n: usize,
    pub m: usize,
    pub c: f64,
    pub mse_last: MeanEstimate,
    pub mse_average: MeanEstimate,
    /// `(epoch, δ̂)` for each configured checkpoint.
    pub checkpoints: Vec<(usize, MeanEstimate)>,
    pub boundary_fraction: MeanEstimate,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub variance_ratio: Option<MeanEstimate>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound_constants: Option<BoundConstants>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub online_bound: Option<OnlineBound>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FitSummary {
    pub stat: String,
    #[serde(flatten)]
    pub fit: RateFit,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub schema_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config: Option<ExperimentConfig>,
    pub estimator: String,
    pub replications: usize,
    pub root_seed: u64,
    pub inverse_fisher_trace: Option<f64>,
    pub constants: Option<ConstantsSummary>,
    pub points: Vec<PointSummary>,
    pub fits: Vec<FitSummary>,
    pub warnings: Vec<String>,
    /// Bound conditions that failed; reported, never fatal.
    pub condition_violations: Vec<String>,
    pub wall_clock_seconds: f64,
}

impl ExperimentReport {
    pub fn empty(estimator: &str, replications: usize, root_seed: u64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION.into(),
            config: None,
            estimator: estimator.into(),
            replications,
            root_seed,
            inverse_fisher_trace: None,
            constants: None,
            points: Vec::new(),
            fits: Vec::new(),
            warnings: Vec::new(),
            condition_violations: Vec::new(),
            wall_clock_seconds: 0.0,
        }
    }

    pub fn point(&self, n: usize) -> Option<&PointSummary> {
        self.points.iter().find(|p| p.n == n)
    }

    pub fn fit(&self, stat: &str) -> Option<&RateFit> {
        self.fits.iter().find(|f| f.stat == stat).map(|f| &f.fit)
    }

    /// One row per `(n, statistic)`, in `n` order.
    pub fn rows(&self) -> Vec<StatRow> {
        let mut rows = Vec::new();
        for p in &self.points {
            let mut push = |stat: String, value: f64, stderr: f64| {
                rows.push(StatRow {
                    n: p.n,
                    estimator: self.estimator.clone(),
                    stat,
                    value,
                    stderr,
                    replications: self.replications,
                    seed: self.root_seed,
                });
            };
            push("mse_last".into(), p.mse_last.value, p.mse_last.stderr);
            push("mse_average".into(), p.mse_average.value, p.mse_average.stderr);
            for (t, e) in &p.checkpoints {
                push(format!("mse_epoch_{t}"), e.value, e.stderr);
            }
            push("boundary_fraction".into(), p.boundary_fraction.value, p.boundary_fraction.stderr);
            if let Some(v) = p.variance_ratio {
                push("variance_ratio".into(), v.value, v.stderr);
            }
            if let Some(b) = p.online_bound {
                push("online_bound".into(), b.total, 0.0);
            }
            push("chain_length".into(), p.m as f64, 0.0);
            push("step_constant".into(), p.c, 0.0);
        }
        rows
    }
}

/// One CSV line. Deterministic quantities carry `stderr = 0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StatRow {
    pub n: usize,
    pub estimator: String,
    pub stat: String,
    pub value: f64,
    pub stderr: f64,
    pub replications: usize,
    pub seed: u64,
}

/// Output file locations; `svg = None` skips the plot.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ReportPaths {
    pub csv: PathBuf,
    pub json: PathBuf,
    pub svg: Option<PathBuf>,
}

impl ReportPaths {
    pub fn in_dir(dir: &Path, stem: &str, svg: bool) -> Self {
        Self {
            csv: dir.join(format!("{stem}.csv")),
            json: dir.join(format!("{stem}.json")),
            svg: svg.then(|| dir.join(format!("{stem}.svg"))),
        }
    }
}

/// 17 significant digits: enough to reproduce every `f64` exactly.
fn fmt_float(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn csv_string(report: &ExperimentReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    for r in report.rows() {
        w.write_record([
            r.n.to_string(),
            r.estimator,
            r.stat,
            fmt_float(r.value),
            fmt_float(r.stderr),
            r.replications.to_string(),
            r.seed.to_string(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn json_string(report: &ExperimentReport) -> Result<String> {
    Ok(serde_json::to_string_pretty(report)?)
}

/// Parses a CSV produced by [`emit_report`].
pub fn read_csv(path: &Path) -> Result<Vec<StatRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<std::result::Result<Vec<StatRow>, _>>()?;
    Ok(rows)
}

/// Writes the CSV, the JSON summary and optionally the SVG plot, creating
/// parent directories as needed.
pub fn emit_report(report: &ExperimentReport, paths: &ReportPaths) -> Result<()> {
    let mut targets = vec![&paths.csv, &paths.json];
    targets.extend(paths.svg.as_ref());
    for path in targets {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir)?;
        }
    }
    fs::write(&paths.csv, csv_string(report)?)?;
    fs::write(&paths.json, json_string(report)?)?;
    if let Some(svg_path) = &paths.svg {
        fs::write(svg_path, svg::render(report))?;
    }
    Ok(())
}
