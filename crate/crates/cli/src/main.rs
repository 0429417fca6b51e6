//! `cdest`: run CD experiments and evaluate the convergence bounds.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use cdest::bounds::{offline_bound, online_bound_terms, BoundConstants, LogZNorms};
use cdest::cd::run_cd;
use cdest::harness::{
    constants_only, replication_cd_config, replication_data, resolve_constants, resolve_schedule, run_experiment,
    with_workers, ExperimentConfig, ExperimentReport,
};
use cdest::{CdError, MarkovKernel};

const EXIT_INVALID: u8 = 2;
const EXIT_CONDITION: u8 = 3;

#[derive(Parser)]
#[command(name = "cdest", version, about = "Contrastive divergence estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    global: Global,
}

#[derive(Args)]
struct Global {
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `root_seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides `workers`.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Overrides `outputs.dir`.
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Write the SVG plot.
    #[arg(long, global = true, overrides_with = "no_svg")]
    svg: bool,
    /// Skip the SVG plot.
    #[arg(long, global = true, overrides_with = "svg")]
    no_svg: bool,
    /// Exit with status 3 when a bound condition fails.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand)]
enum Command {
    /// One CD run on one dataset.
    Fit {
        /// Sample size; the largest of `n_grid` by default.
        #[arg(long)]
        n: Option<usize>,
        #[arg(long, default_value_t = 0)]
        replication: usize,
    },
    /// Sweep `n_grid` and fit the log-log slope of the mean squared error.
    Rates,
    /// Sweep `n_grid` and report `n δ̂ / tr(ℐ⁻¹)` for the averaged iterate.
    Variance,
    /// Theory constants, restricted spectral gap and `log Z` norms.
    Constants {
        /// Chain length for the derived constants; resolved from the config at
        /// the largest `n` by default.
        #[arg(long)]
        m: Option<usize>,
    },
    /// Evaluate the online or offline bound.
    Bounds(BoundArgs),
}

#[derive(Args)]
struct BoundArgs {
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long)]
    l: Option<f64>,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    c_chi: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    norm1: Option<f64>,
    #[arg(long)]
    norm2: Option<f64>,
    #[arg(long)]
    m: Option<usize>,
    /// Step constant `C`.
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    /// Sample sizes (comma separated); `n_grid` by default.
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// `‖ψ₀ − ψ*‖²`; taken from the config by default.
    #[arg(long)]
    delta0: Option<f64>,
    /// Evaluate the offline bound instead.
    #[arg(long)]
    offline: bool,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, default_value_t = 0.0)]
    sigma_offline: f64,
}

enum Failure {
    Invalid(String),
    Condition(String),
    Other(String),
}

impl From<CdError> for Failure {
    fn from(e: CdError) -> Self {
        match e {
            CdError::InvalidInput(_) | CdError::Json(_) => Failure::Invalid(e.to_string()),
            CdError::ConditionViolated(_) => Failure::Condition(e.to_string()),
            _ => Failure::Other(e.to_string()),
        }
    }
}

type CliResult<T> = Result<T, Failure>;

fn load_config(g: &Global) -> CliResult<ExperimentConfig> {
    let path = g.config.as_ref().ok_or_else(|| Failure::Invalid("--config <file> is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|e| Failure::Invalid(format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(s) = g.seed {
        cfg.root_seed = s;
    }
    if g.workers.is_some() {
        cfg.workers = g.workers;
    }
    if let Some(dir) = &g.out_dir {
        cfg.outputs.dir = Some(dir.clone());
    }
    if g.svg {
        cfg.outputs.svg = true;
    }
    if g.no_svg {
        cfg.outputs.svg = false;
    }
    cfg.setup()?;
    Ok(cfg)
}

fn print(v: &Value) {
    println!("{}", serde_json::to_string_pretty(v).expect("json values serialise"));
}

/// JSON has no infinities; overflowing bounds are printed as strings.
fn number(x: f64) -> Value {
    if x.is_finite() {
        json!(x)
    } else {
        json!(x.to_string())
    }
}

fn check_strict(g: &Global, violations: &[String]) -> CliResult<()> {
    for v in violations {
        eprintln!("warning: condition violated: {v}");
    }
    if g.strict && !violations.is_empty() {
        return Err(Failure::Condition(format!("{} bound condition(s) failed", violations.len())));
    }
    Ok(())
}

fn sweep(g: &Global) -> CliResult<ExperimentReport> {
    let cfg = load_config(g)?;
    let report = run_experiment(&cfg)?;
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    check_strict(g, &report.condition_violations)?;
    Ok(report)
}

fn fit(g: &Global, n: Option<usize>, r: usize) -> CliResult<()> {
    let cfg = load_config(g)?;
    let setup = cfg.setup()?;
    let n = n.unwrap_or(*cfg.n_grid.last().expect("validated non-empty"));
    let run = || -> Result<Value, CdError> {
        let constants = if cfg.estimator.needs_constants() {
            Some(resolve_constants(&cfg, &setup)?)
        } else {
            None
        };
        let (m, c) = resolve_schedule(&cfg, &constants, n)?;
        let sampler = setup.model.exact_sampler(&setup.psi_star)?;
        let data = replication_data(&sampler, cfg.root_seed, n, r);
        let kernel = MarkovKernel::new(&setup.model, setup.kernel)?;
        let cd = replication_cd_config(&cfg, &setup, n, r, m, c)?;
        let traj = run_cd(&data, &kernel, &cd)?;
        let sq = |v: &[f64]| v.iter().zip(setup.psi_star.iter()).map(|(a, b)| (a - b).powi(2)).sum::<f64>();
        Ok(json!({
            "n": n,
            "replication": r,
            "m": m,
            "c": c,
            "updates": traj.update_count,
            "final_iterate": traj.final_iterate.as_slice(),
            "average": traj.average.as_slice(),
            "squared_error_last": sq(traj.final_iterate.as_slice()),
            "squared_error_average": sq(traj.average.as_slice()),
            "boundary_fraction": traj.boundary_fraction(),
        }))
    };
    print(&with_workers(cfg.workers, run)??);
    Ok(())
}

fn rates(g: &Global) -> CliResult<()> {
    let report = sweep(g)?;
    let points: Vec<Value> = report
        .points
        .iter()
        .map(|p| json!({ "n": p.n, "m": p.m, "c": p.c, "mse_last": p.mse_last, "mse_average": p.mse_average }))
        .collect();
    print(&json!({ "estimator": report.estimator, "points": points, "fits": report.fits }));
    Ok(())
}

fn variance(g: &Global) -> CliResult<()> {
    let report = sweep(g)?;
    let points: Vec<Value> = report
        .points
        .iter()
        .map(|p| json!({ "n": p.n, "mse_average": p.mse_average, "variance_ratio": p.variance_ratio }))
        .collect();
    print(&json!({ "inverse_fisher_trace": report.inverse_fisher_trace, "points": points }));
    Ok(())
}

fn constants(g: &Global, m: Option<usize>) -> CliResult<()> {
    let cfg = load_config(g)?;
    let (_, k) = constants_only(&cfg)?;
    let n = *cfg.n_grid.last().expect("validated non-empty");
    let m = match m {
        Some(m) => m,
        None => resolve_schedule(&cfg, &Some(k.clone()), n)?.0,
    };
    let derived = k.bound_constants(m)?;
    let mut violations = Vec::new();
    if derived.mu_tilde <= 0.0 {
        violations.push(format!("mu_tilde = {} ≤ 0 at m = {m}", derived.mu_tilde));
    }
    print(&json!({
        "theory": k.summary.theory,
        "alpha": k.summary.alpha,
        "alpha_upper": k.summary.alpha_upper,
        "logz_norms": k.norms,
        "bound_constants": derived,
    }));
    check_strict(g, &violations)
}

fn bounds(g: &Global, a: &BoundArgs) -> CliResult<()> {
    let cfg = g.config.as_ref().map(|_| load_config(g)).transpose()?;
    let resolved = cfg.as_ref().map(constants_only).transpose()?;
    let pick = |flag: Option<f64>, from: Option<f64>, name: &str| {
        flag.or(from).ok_or_else(|| Failure::Invalid(format!("--{name} is required without --config")))
    };
    let theory = resolved.as_ref().map(|(_, k)| k.summary.theory);
    let norms = resolved.as_ref().map(|(_, k)| k.norms);
    let est = cfg.as_ref().map(|c| &c.estimator);
    let n_grid = if a.n.is_empty() { cfg.as_ref().map(|c| c.n_grid.clone()).unwrap_or_default() } else { a.n.clone() };
    if n_grid.is_empty() {
        return Err(Failure::Invalid("--n is required without --config".into()));
    }
    let m = match (a.m, &cfg) {
        (Some(m), _) => m,
        (None, Some(c)) => resolve_schedule(c, &resolved.as_ref().map(|r| r.1.clone()), *n_grid.last().unwrap())?.0,
        (None, None) => return Err(Failure::Invalid("--m is required without --config".into())),
    };
    let k = BoundConstants::from_parts(
        pick(a.mu, theory.map(|t| t.mu), "mu")?,
        pick(a.l, theory.map(|t| t.l), "l")?,
        pick(a.sigma, theory.map(|t| t.sigma), "sigma")?,
        pick(a.c_chi, theory.map(|t| t.c_chi), "c-chi")?,
        pick(a.alpha, resolved.as_ref().map(|(_, k)| k.summary.alpha_upper), "alpha")?,
        m,
        LogZNorms::new(pick(a.norm1, norms.map(|x| x.norm1), "norm1")?, pick(a.norm2, norms.map(|x| x.norm2), "norm2")?),
    )?;
    let beta = pick(a.beta, est.map(|e| e.beta), "beta")?;
    let c = match a.c {
        Some(c) => c,
        None => match &cfg {
            Some(cfg) => resolve_schedule(cfg, &resolved.as_ref().map(|r| r.1.clone()), *n_grid.last().unwrap())?.1,
            None => return Err(Failure::Invalid("--c is required without --config".into())),
        },
    };
    let delta0 = match (a.delta0, &resolved) {
        (Some(d), _) => d,
        (None, Some((setup, _))) => (&setup.psi0 - &setup.psi_star).norm_squared(),
        (None, None) => return Err(Failure::Invalid("--delta0 is required without --config".into())),
    };

    let mut violations = Vec::new();
    let mut rows = Vec::new();
    for &n in &n_grid {
        let value = if a.offline {
            let b = a.batch_size.or(est.and_then(|e| e.batch_size)).unwrap_or(n);
            let t = a.epochs.or(est.map(|e| e.epochs)).unwrap_or(1);
            offline_bound(&k, delta0, a.sigma_offline, n, b, t, c, beta)
                .map(|v| json!({ "n": n, "sqrt_delta_bound": number(v) }))
        } else {
            online_bound_terms(&k, delta0, n, c, beta).map(|b| {
                json!({ "n": n, "bound": {
                    "transient": number(b.transient),
                    "stationary": number(b.stationary),
                    "total": number(b.total),
                } })
            })
        };
        match value {
            Ok(v) => rows.push(v),
            Err(CdError::ConditionViolated(msg)) => {
                violations.push(format!("n = {n}: {msg}"));
                rows.push(json!({ "n": n, "bound": null }));
            }
            Err(e) => return Err(e.into()),
        }
    }
    print(&json!({ "constants": k, "c": c, "beta": beta, "delta0": delta0, "offline": a.offline, "values": rows }));
    check_strict(g, &violations)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let g = &cli.global;
    let result = match &cli.command {
        Command::Fit { n, replication } => fit(g, *n, *replication),
        Command::Rates => rates(g),
        Command::Variance => variance(g),
        Command::Constants { m } => constants(g, *m),
        Command::Bounds(a) => bounds(g, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_INVALID)
        }
        Err(Failure::Condition(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_CONDITION)
        }
        Err(Failure::Other(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::FAILURE
        }
    }
}
