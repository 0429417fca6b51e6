//! Restricted spectral gap `α(f, ψ) = ‖P_ψ f̃‖ / ‖f̃‖` in `L²(p_ψ)`, where
//! `f̃ = f − E_{p_ψ} f` and `P_ψ f(x) = E[f(X′) | X = x]` for one kernel step.

use std::fmt;

use nalgebra::DVector;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, CdError, Result};
use crate::expfam::{lattice_grid, ParamDomain, Point};
use crate::rng::{substream, tags};

use super::{KernelKind, MarkovKernel};

/// How `α` is computed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum AlphaMode {
    /// Exact linear algebra over the enumerated state space.
    Exact,
    /// `outer` exact draws `X ~ p_ψ`, each followed by `inner ≥ 2` independent
    /// one-step moves `Y_1..Y_inner`. `‖P f̃‖²` is estimated by the average of
    /// `f̃(Y_a) f̃(Y_b)` over pairs `a < b`, which is unbiased given `X`.
    MonteCarlo { outer: usize, inner: usize, seed: u64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AlphaEstimate {
    pub value: f64,
    /// Zero in exact mode.
    pub std_error: f64,
    /// Component of the vector statistic attaining the maximum.
    pub component: usize,
}

/// Scalar statistics considered by [`alpha_sup`]: `φ_i` and `φ_i φ_j` (`i ≤ j`),
/// zero-based.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum TestFunction {
    Single(usize),
    Product(usize, usize),
}

impl TestFunction {
    pub fn all(p: usize) -> Vec<TestFunction> {
        let mut out: Vec<_> = (0..p).map(TestFunction::Single).collect();
        for i in 0..p {
            for j in i..p {
                out.push(TestFunction::Product(i, j));
            }
        }
        out
    }

    pub fn eval(&self, phi: &[f64]) -> f64 {
        match *self {
            TestFunction::Single(i) => phi[i],
            TestFunction::Product(i, j) => phi[i] * phi[j],
        }
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TestFunction::Single(i) => write!(f, "phi[{i}]"),
            TestFunction::Product(i, j) => write!(f, "phi[{i}]*phi[{j}]"),
        }
    }
}

/// Result of [`alpha_sup`] with the maximizing statistic and parameter.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AlphaSup {
    pub value: f64,
    pub std_error: f64,
    pub function: TestFunction,
    pub psi: Vec<f64>,
    pub grid_points: usize,
}

/// `Var_p(f)` below this fraction of `E_p f²` counts as a constant function.
const DEGENERACY_RATIO: f64 = 1e-20;

/// One step of the kernel as a linear operator on functions of the state.
enum Operator {
    Rows(Vec<Vec<(usize, f64)>>),
    /// `P f ≡ E_p f`.
    RankOne,
}

impl Operator {
    fn new(kernel: &MarkovKernel<'_>, psi: &DVector<f64>, states: usize) -> Result<Self> {
        if kernel.kind() == KernelKind::ExactSampler {
            return Ok(Operator::RankOne);
        }
        Ok(Operator::Rows((0..states).map(|s| kernel.transitions(psi, s)).collect::<Result<_>>()?))
    }

    fn apply(&self, probs: &[f64], f: &[f64]) -> Vec<f64> {
        match self {
            Operator::Rows(rows) => rows
                .iter()
                .map(|row| row.iter().map(|&(j, w)| w * f[j]).sum())
                .collect(),
            Operator::RankOne => {
                let mean: f64 = probs.iter().zip(f).map(|(p, v)| p * v).sum();
                vec![mean; f.len()]
            }
        }
    }
}

/// Exact `α` of `P^m` for one function given by its values on every state.
/// `None` when the function is constant under `p`.
fn exact_alpha(op: &Operator, probs: &[f64], f: &[f64], m: usize) -> Option<f64> {
    let mean: f64 = probs.iter().zip(f).map(|(p, v)| p * v).sum();
    let second: f64 = probs.iter().zip(f).map(|(p, v)| p * v * v).sum();
    let mut g: Vec<f64> = f.iter().map(|v| v - mean).collect();
    let den: f64 = probs.iter().zip(&g).map(|(p, v)| p * v * v).sum();
    if den <= DEGENERACY_RATIO * second {
        return None;
    }
    for _ in 0..m {
        g = op.apply(probs, &g);
    }
    let num: f64 = probs.iter().zip(&g).map(|(p, v)| p * v * v).sum();
    let alpha = (num / den).sqrt();
    debug_assert!(alpha <= 1.0 + 1e-9, "restricted alpha {alpha} exceeds 1");
    Some(alpha.min(1.0))
}

/// Samples for the Monte Carlo estimator: `f` at each outer draw and at its
/// `inner` one-step successors, component by component.
struct McSamples {
    /// `[outer][component]`
    base: Vec<Vec<f64>>,
    /// `[outer][inner][component]`
    moved: Vec<Vec<Vec<f64>>>,
}

fn draw_mc<F>(kernel: &MarkovKernel<'_>, psi: &DVector<f64>, outer: usize, inner: usize, seed: u64, path: &[u64], f: F) -> Result<McSamples>
where
    F: Fn(&Point) -> Vec<f64>,
{
    if outer < 2 {
        return invalid(format!("Monte Carlo alpha needs at least 2 outer draws, got {outer}"));
    }
    if inner < 2 {
        return invalid(format!(
            "Monte Carlo alpha needs at least 2 inner draws per outer draw, got {inner}"
        ));
    }
    let sampler = kernel.model().exact_sampler(psi)?;
    let at = kernel.at(psi)?;
    let mut rng = substream(seed, path);
    let mut base = Vec::with_capacity(outer);
    let mut moved = Vec::with_capacity(outer);
    for _ in 0..outer {
        let x = sampler.sample(&mut rng);
        base.push(f(&x));
        let ys = (0..inner)
            .map(|_| {
                let mut y = x.clone();
                at.step_in_place(&mut y, &mut rng);
                f(&y)
            })
            .collect();
        moved.push(ys);
    }
    Ok(McSamples { base, moved })
}

/// Ratio estimate of `α` and its delta-method standard error for one
/// component. `None` when the component looks constant.
fn mc_alpha(samples: &McSamples, k: usize) -> Option<(f64, f64)> {
    let n = samples.base.len() as f64;
    let mean = samples.base.iter().map(|b| b[k]).sum::<f64>() / n;
    let second = samples.base.iter().map(|b| b[k] * b[k]).sum::<f64>() / n;
    let mut nums = Vec::with_capacity(samples.base.len());
    let mut dens = Vec::with_capacity(samples.base.len());
    for (b, ys) in samples.base.iter().zip(&samples.moved) {
        let c: Vec<f64> = ys.iter().map(|y| y[k] - mean).collect();
        let mut acc = 0.0;
        let mut pairs = 0usize;
        for a in 0..c.len() {
            for b2 in a + 1..c.len() {
                acc += c[a] * c[b2];
                pairs += 1;
            }
        }
        nums.push(acc / pairs as f64);
        dens.push((b[k] - mean).powi(2));
    }
    let num = nums.iter().sum::<f64>() / n;
    let den = dens.iter().sum::<f64>() / n;
    if den <= DEGENERACY_RATIO * second {
        return None;
    }
    let ratio = num / den;
    let resid_var = nums
        .iter()
        .zip(&dens)
        .map(|(a, b)| (a - ratio * b).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    let se_ratio = resid_var.sqrt() / (den * n.sqrt());
    let alpha = ratio.clamp(0.0, 1.0).sqrt();
    // d√r/dr = 1/(2√r); near zero fall back to √se.
    let se = if alpha > se_ratio.sqrt() { se_ratio / (2.0 * alpha) } else { se_ratio.sqrt() };
    Some((alpha, se))
}

fn pick_max(values: impl IntoIterator<Item = (usize, Option<(f64, f64)>)>) -> Option<AlphaEstimate> {
    let mut best: Option<AlphaEstimate> = None;
    for (component, v) in values {
        if let Some((value, std_error)) = v {
            if best.is_none_or(|b| value > b.value) {
                best = Some(AlphaEstimate { value, std_error, component });
            }
        }
    }
    best
}

/// `α(f, ψ)` for a vector statistic `f`: the largest componentwise value,
/// ignoring components that are constant under `p_ψ`.
pub fn restricted_alpha<F>(kernel: &MarkovKernel<'_>, psi: &DVector<f64>, f: F, mode: AlphaMode) -> Result<AlphaEstimate>
where
    F: Fn(&Point) -> Vec<f64>,
{
    let best = match mode {
        AlphaMode::Exact => return restricted_alpha_m(kernel, psi, f, 1),
        AlphaMode::MonteCarlo { outer, inner, seed } => {
            let samples = draw_mc(kernel, psi, outer, inner, seed, &[tags::ALPHA], f)?;
            let k = samples.base[0].len();
            pick_max((0..k).map(|c| (c, mc_alpha(&samples, c))))
        }
    };
    best.ok_or_else(|| CdError::DegenerateStatistic("every component of f is constant under p_ψ".into()))
}

/// Exact `α` of the `m`-step kernel, `‖P^m f̃‖ / ‖f̃‖`, maximized over components.
pub fn restricted_alpha_m<F>(kernel: &MarkovKernel<'_>, psi: &DVector<f64>, f: F, m: usize) -> Result<AlphaEstimate>
where
    F: Fn(&Point) -> Vec<f64>,
{
    let model = kernel.model();
    let states = model.states()?;
    model.check_param(psi)?;
    let probs = model.enumeration().expect("states() succeeded").probabilities(psi);
    let values: Vec<Vec<f64>> = states.iter().map(&f).collect();
    let k = values.first().map_or(0, Vec::len);
    let op = Operator::new(kernel, psi, states.len())?;
    let best = pick_max((0..k).map(|c| {
        let col: Vec<f64> = values.iter().map(|v| v[c]).collect();
        (c, exact_alpha(&op, &probs, &col, m).map(|a| (a, 0.0)))
    }));
    best.ok_or_else(|| CdError::DegenerateStatistic("every component of f is constant under p_ψ".into()))
}

/// `sup α(f, ψ)` over `f ∈ {φ_i} ∪ {φ_i φ_j}` and `ψ` in the lattice grid of
/// `domain`. Ties keep the first point in grid order.
pub fn alpha_sup(kernel: &MarkovKernel<'_>, domain: &ParamDomain, grid_resolution: usize, mode: AlphaMode) -> Result<AlphaSup> {
    let model = kernel.model();
    model.check_param(domain.center())?;
    let grid = lattice_grid(domain, grid_resolution, &[])?;
    let functions = TestFunction::all(model.dim());
    let eval_all = |phi: &[f64]| -> Vec<f64> { functions.iter().map(|t| t.eval(phi)).collect() };

    let per_point: Vec<Option<AlphaEstimate>> = grid
        .par_iter()
        .enumerate()
        .map(|(g, psi)| -> Result<Option<AlphaEstimate>> {
            match mode {
                AlphaMode::Exact => {
                    let en = model.enumeration().ok_or_else(|| {
                        CdError::UnsupportedOracle(format!("exact alpha needs an enumerable model, got {}", model.name()))
                    })?;
                    let probs = en.probabilities(psi);
                    let op = Operator::new(kernel, psi, en.len())?;
                    Ok(pick_max(functions.iter().enumerate().map(|(c, t)| {
                        let col: Vec<f64> = (0..en.len()).map(|s| t.eval(en.stat(s))).collect();
                        (c, exact_alpha(&op, &probs, &col, 1).map(|a| (a, 0.0)))
                    })))
                }
                AlphaMode::MonteCarlo { outer, inner, seed } => {
                    let samples = draw_mc(kernel, psi, outer, inner, seed, &[tags::ALPHA, g as u64], |x| {
                        let mut phi = vec![0.0; model.dim()];
                        model.phi_into(x, &mut phi);
                        eval_all(&phi)
                    })?;
                    Ok(pick_max((0..functions.len()).map(|c| (c, mc_alpha(&samples, c)))))
                }
            }
        })
        .collect::<Result<_>>()?;

    let mut best: Option<(usize, AlphaEstimate)> = None;
    for (g, est) in per_point.into_iter().enumerate() {
        if let Some(est) = est {
            if best.is_none_or(|(_, b)| est.value > b.value) {
                best = Some((g, est));
            }
        }
    }
    let (g, est) = best.ok_or_else(|| {
        CdError::DegenerateStatistic("every test statistic is constant on the grid".into())
    })?;
    Ok(AlphaSup {
        value: est.value,
        std_error: est.std_error,
        function: functions[est.component],
        psi: grid[g].as_slice().to_vec(),
        grid_points: grid.len(),
    })
}
