//! Experiment harness: JSON configs, seeded Monte Carlo replications of CD
//! runs, rate fits, Cramér-Rao ratios and CSV / JSON / SVG reports.
//!
//! Replication `r` at sample size `n` draws its data from substream
//! `(DATA, n, r)` and its chains from the run seed `(RUN, n, r)`, and results
//! are reduced in `(n, r)` order, so reports do not depend on the worker count.

mod config;
mod experiment;
mod report;
mod stats;
mod svg;

pub use config::{
    AlphaModeChoice, AlphaSpec, ChainLength, ChainRule, DomainSpec, EstimatorKind, EstimatorSpec, ExperimentConfig,
    KernelChoice, ModelSpec, OutputSpec, Setup, StepConstant, INTERIOR_MARGIN,
};
pub use experiment::{
    constants_only, replication_cd_config, replication_data, resolve_constants, resolve_schedule, run_experiment,
    with_workers, Replication, ResolvedConstants, MAX_CHAIN_LENGTH,
};
pub use report::{
    csv_string, emit_report, json_string, read_csv, ConstantsSummary, ExperimentReport, FitSummary, PointSummary,
    ReportPaths, StatRow, CSV_HEADER, SCHEMA_VERSION,
};
pub use stats::{inverse_trace, rate_fit, variance_ratio, MeanEstimate, RateFit};
pub use svg::render as render_svg;
