//! Monte Carlo estimation of `δ_n` over an `n` grid with seeded replications.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::{logz_norms, online_bound_terms, BoundConstants, LogZNorms};
use crate::cd::{polyak_average, run_cd, m_schedule, Batching, CdConfig, StepSchedule, Storage};
use crate::error::{invalid, CdError, Result};
use crate::expfam::{theory_constants, ExactSampler, Exactness, Point};
use crate::kernels::{alpha_sup, AlphaMode, AlphaSup, MarkovKernel};
use crate::rng::{derive_seed, substream, tags};

use super::config::{AlphaModeChoice, ChainLength, ChainRule, ExperimentConfig, Setup, StepConstant};
use super::report::{emit_report, ConstantsSummary, ExperimentReport, FitSummary, PointSummary, ReportPaths, SCHEMA_VERSION};
use super::stats::{inverse_trace, rate_fit, MeanEstimate};

/// Longest chain considered when searching for `m` with `μ̃_m ≥ f μ`.
pub const MAX_CHAIN_LENGTH: usize = 100_000;

/// Boundary-hit fraction above which a warning is attached.
const BOUNDARY_WARNING: f64 = 0.1;

/// Standard errors added to `α̂` before it is used.
const ALPHA_Z: f64 = 3.0;

/// Constants plus the `log Z` norms needed for `σ̃`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ResolvedConstants {
    pub summary: ConstantsSummary,
    pub norms: LogZNorms,
}

impl ResolvedConstants {
    pub fn bound_constants(&self, m: usize) -> Result<BoundConstants> {
        BoundConstants::new(&self.summary.theory, self.summary.alpha_upper, m, self.norms)
    }
}

/// Runs `f` on a pool of `workers` threads, or on the global pool.
pub fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> Result<T> {
    match workers {
        None => Ok(f()),
        Some(0) => invalid("workers must be positive"),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CdError::InvalidInput(format!("cannot build a pool of {w} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// `theory_constants`, `alpha_sup` and `logz_norms` for the configured model,
/// kernel and domain. Monte Carlo alpha draws from the `ALPHA` substream.
pub fn resolve_constants(config: &ExperimentConfig, setup: &Setup) -> Result<ResolvedConstants> {
    let model = &setup.model;
    let kernel = MarkovKernel::new(model, setup.kernel)?;
    let theory = theory_constants(model, &setup.domain, &setup.psi_star, config.grid_resolution)?;
    let mode = match config.alpha.mode {
        Some(AlphaModeChoice::Exact) => AlphaMode::Exact,
        Some(AlphaModeChoice::MonteCarlo) => monte_carlo(config),
        None if model.exactness() == Exactness::Enumerable => AlphaMode::Exact,
        None => monte_carlo(config),
    };
    let alpha: AlphaSup = alpha_sup(&kernel, &setup.domain, config.grid_resolution, mode)?;
    let alpha_upper = (alpha.value + ALPHA_Z * alpha.std_error).min(1.0);
    let norms = logz_norms(model, &setup.domain, config.grid_resolution)?;
    Ok(ResolvedConstants { summary: ConstantsSummary { theory, alpha, alpha_upper }, norms })
}

fn monte_carlo(config: &ExperimentConfig) -> AlphaMode {
    AlphaMode::MonteCarlo {
        outer: config.alpha.outer,
        inner: config.alpha.inner,
        seed: derive_seed(config.root_seed, &[tags::ALPHA]),
    }
}

fn need<'a>(constants: &'a Option<ResolvedConstants>, what: &str) -> Result<&'a ResolvedConstants> {
    constants
        .as_ref()
        .ok_or_else(|| CdError::InvalidInput(format!("{what} needs the theory constants")))
}

fn positive_mu_tilde(k: &BoundConstants) -> Result<f64> {
    if k.mu_tilde > 0.0 {
        Ok(k.mu_tilde)
    } else {
        Err(CdError::ConditionViolated(format!(
            "mu_tilde = {} at m = {} is not positive, so C cannot be derived from it",
            k.mu_tilde, k.m
        )))
    }
}

/// Chain length and step constant used at sample size `n`.
pub fn resolve_schedule(config: &ExperimentConfig, constants: &Option<ResolvedConstants>, n: usize) -> Result<(usize, f64)> {
    let est = &config.estimator;
    let m = match est.m {
        ChainLength::Fixed(m) => m,
        ChainLength::Rule(ChainRule::Auto) => {
            let k = need(constants, "m = \"auto\"")?;
            m_schedule(n, est.beta, k.summary.alpha_upper)?
        }
        ChainLength::MuTildeFraction { mu_tilde_fraction: f } => {
            let k = need(constants, "mu_tilde_fraction")?;
            let t = &k.summary.theory;
            let alpha = k.summary.alpha_upper;
            (0..=MAX_CHAIN_LENGTH)
                .find(|&m| t.mu - alpha.powi(m as i32) * t.sigma * t.c_chi >= f * t.mu)
                .ok_or_else(|| {
                    CdError::ConditionViolated(format!(
                        "no m ≤ {MAX_CHAIN_LENGTH} reaches mu_tilde ≥ {f} mu with alpha = {alpha}"
                    ))
                })?
        }
    };
    let c = match est.c {
        StepConstant::Fixed(c) => c,
        StepConstant::InverseMuTilde { times_inverse_mu_tilde: k } => {
            let b = need(constants, "times_inverse_mu_tilde")?.bound_constants(m)?;
            k / positive_mu_tilde(&b)?
        }
        StepConstant::OfflineFraction { offline_fraction: f } => {
            let b = need(constants, "offline_fraction")?.bound_constants(m)?;
            f * positive_mu_tilde(&b)? / (4.0 * b.l * b.l)
        }
    };
    Ok((m, c))
}

/// Squared errors of one replication.
#[derive(Clone, Debug, PartialEq)]
pub struct Replication {
    pub last: f64,
    pub average: f64,
    pub checkpoints: Vec<f64>,
    pub boundary_fraction: f64,
}

/// Dataset `r` of size `n`: i.i.d. draws from `p_{ψ*}` on substream `(DATA, n, r)`.
pub fn replication_data(sampler: &ExactSampler, root_seed: u64, n: usize, r: usize) -> Vec<Point> {
    let mut rng = substream(root_seed, &[tags::DATA, n as u64, r as u64]);
    (0..n).map(|_| sampler.sample(&mut rng)).collect()
}

/// CD settings of replication `r` at sample size `n`.
pub fn replication_cd_config(config: &ExperimentConfig, setup: &Setup, n: usize, r: usize, m: usize, c: f64) -> Result<CdConfig> {
    let est = &config.estimator;
    let storage = if setup.batching == Batching::Online && est.burn_in > 0.0 {
        Storage::All
    } else {
        Storage::EpochEnds
    };
    Ok(CdConfig {
        m,
        schedule: StepSchedule::new(c, est.beta)?,
        batching: setup.batching,
        epochs: est.epochs,
        domain: setup.domain.clone(),
        psi0: setup.psi0.clone(),
        seed: derive_seed(config.root_seed, &[tags::RUN, n as u64, r as u64]),
        storage,
    })
}

fn replicate(
    config: &ExperimentConfig,
    setup: &Setup,
    sampler: &ExactSampler,
    n: usize,
    r: usize,
    m: usize,
    c: f64,
) -> Result<Replication> {
    let data = replication_data(sampler, config.root_seed, n, r);
    let kernel = MarkovKernel::new(&setup.model, setup.kernel)?;
    let cfg = replication_cd_config(config, setup, n, r, m, c)?;
    let traj = run_cd(&data, &kernel, &cfg)?;
    let sq = |v: &DVector<f64>| (v - &setup.psi_star).norm_squared();
    let average = if config.estimator.burn_in > 0.0 {
        polyak_average(&traj, config.estimator.burn_in)?
    } else {
        traj.average.clone()
    };
    Ok(Replication {
        last: sq(&traj.final_iterate),
        average: sq(&average),
        checkpoints: config.estimator.checkpoints.iter().map(|&t| sq(&traj.iterates[t - 1])).collect(),
        boundary_fraction: traj.boundary_fraction(),
    })
}

/// Runs every `(n, replication)` pair, aggregates in `(n, r)` order and
/// writes the configured outputs. Worker count never changes the numbers.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let setup = config.setup()?;
    let mut report = with_workers(config.workers, || run_inner(config, &setup))??;
    report.wall_clock_seconds = start.elapsed().as_secs_f64();
    if let Some(dir) = &config.outputs.dir {
        emit_report(&report, &ReportPaths::in_dir(dir, &config.outputs.stem, config.outputs.svg))?;
    }
    Ok(report)
}

fn run_inner(config: &ExperimentConfig, setup: &Setup) -> Result<ExperimentReport> {
    let est = &config.estimator;
    let constants = if config.bounds || est.needs_constants() {
        Some(resolve_constants(config, setup)?)
    } else {
        None
    };
    let mut report = ExperimentReport::empty(est.kind.label(), config.replications, config.root_seed);
    report.schema_version = SCHEMA_VERSION.into();
    report.config = Some(config.clone());
    report.constants = constants.as_ref().map(|k| k.summary.clone());

    let fisher = setup.model.fisher_information(&setup.psi_star)?;
    match inverse_trace(&fisher) {
        Ok(t) => report.inverse_fisher_trace = Some(t),
        Err(e @ CdError::LinearAlgebra(_)) => report.warnings.push(format!("variance ratio unavailable: {e}")),
        Err(e) => return Err(e),
    }

    let schedules: Vec<(usize, f64)> =
        config.n_grid.iter().map(|&n| resolve_schedule(config, &constants, n)).collect::<Result<_>>()?;
    let sampler = setup.model.exact_sampler(&setup.psi_star)?;
    let jobs: Vec<(usize, usize)> =
        (0..config.n_grid.len()).flat_map(|i| (0..config.replications).map(move |r| (i, r))).collect();
    let outcomes: Vec<Replication> = jobs
        .par_iter()
        .map(|&(i, r)| {
            let (m, c) = schedules[i];
            replicate(config, setup, &sampler, config.n_grid[i], r, m, c)
        })
        .collect::<Result<_>>()?;

    let delta0 = (&setup.psi0 - &setup.psi_star).norm_squared();
    for (i, (&n, &(m, c))) in config.n_grid.iter().zip(&schedules).enumerate() {
        let reps = &outcomes[i * config.replications..(i + 1) * config.replications];
        let summarise = |f: &dyn Fn(&Replication) -> f64| MeanEstimate::from_samples(&reps.iter().map(f).collect::<Vec<_>>());
        let mse_last = summarise(&|x| x.last)?;
        let mse_average = summarise(&|x| x.average)?;
        let checkpoints = est
            .checkpoints
            .iter()
            .enumerate()
            .map(|(j, &t)| Ok((t, summarise(&|x| x.checkpoints[j])?)))
            .collect::<Result<Vec<_>>>()?;
        let boundary_fraction = summarise(&|x| x.boundary_fraction)?;
        if boundary_fraction.value > BOUNDARY_WARNING {
            report.warnings.push(format!(
                "n = {n}: {:.1}% of updates were projected back onto the domain",
                100.0 * boundary_fraction.value
            ));
        }
        let variance_ratio = report.inverse_fisher_trace.map(|tr| MeanEstimate {
            value: n as f64 * mse_average.value / tr,
            stderr: n as f64 * mse_average.stderr / tr,
        });

        let bound_constants = constants.as_ref().map(|k| k.bound_constants(m)).transpose()?;
        let mut online_bound = None;
        if let Some(k) = &bound_constants {
            if setup.batching != Batching::Online && est.beta == 0.0 && !(k.mu_tilde > 4.0 * c * k.l * k.l) {
                report.condition_violations.push(format!(
                    "n = {n}: constant-step offline condition mu_tilde > 4 C L^2 fails ({} ≤ {})",
                    k.mu_tilde,
                    4.0 * c * k.l * k.l
                ));
            }
            if config.bounds && setup.batching == Batching::Online {
                match online_bound_terms(k, delta0, n, c, est.beta) {
                    Ok(b) => online_bound = Some(b),
                    Err(CdError::ConditionViolated(msg)) => report.condition_violations.push(format!("n = {n}: {msg}")),
                    Err(CdError::InvalidInput(msg)) => report.warnings.push(format!("n = {n}: no online bound: {msg}")),
                    Err(e) => return Err(e),
                }
            }
        }
        report.points.push(PointSummary {
            n,
            m,
            c,
            mse_last,
            mse_average,
            checkpoints,
            boundary_fraction,
            variance_ratio,
            bound_constants,
            online_bound,
        });
    }

    if report.points.len() >= 3 {
        let mut stats: Vec<(String, Box<dyn Fn(&PointSummary) -> f64>)> = vec![
            ("mse_last".into(), Box::new(|p: &PointSummary| p.mse_last.value)),
            ("mse_average".into(), Box::new(|p: &PointSummary| p.mse_average.value)),
        ];
        for (j, &t) in est.checkpoints.iter().enumerate() {
            stats.push((format!("mse_epoch_{t}"), Box::new(move |p: &PointSummary| p.checkpoints[j].1.value)));
        }
        for (stat, f) in stats {
            let pts: Vec<(f64, f64)> = report.points.iter().map(|p| (p.n as f64, f(p))).collect();
            match rate_fit(&pts) {
                Ok(fit) => report.fits.push(FitSummary { stat, fit }),
                Err(e) => report.warnings.push(format!("no rate fit for {stat}: {e}")),
            }
        }
    }
    Ok(report)
}

/// Validates `config` and computes its constants without running CD.
pub fn constants_only(config: &ExperimentConfig) -> Result<(Setup, ResolvedConstants)> {
    let setup = config.setup()?;
    let k = with_workers(config.workers, || resolve_constants(config, &setup))??;
    Ok((setup, k))
}
