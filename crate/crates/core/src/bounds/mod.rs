//! Closed-form rate bounds for projected CD and the constants they depend on.
//!
//! Everything here is a pure function of scalar inputs, except
//! [`logz_norms`], which sweeps a parameter grid with exact cumulant oracles.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, CdError, Result};
use crate::expfam::{boundary_points, lattice_grid, Model, ParamDomain, TheoryConstants};

/// `φ_γ(t) = (t^γ − 1)/γ` for `γ ≠ 0` and `log t` for `γ = 0` exactly.
pub fn varphi(gamma: f64, t: f64) -> Result<f64> {
    if !(t > 0.0 && t.is_finite()) || !gamma.is_finite() {
        return invalid(format!("varphi needs finite gamma and t > 0, got gamma = {gamma}, t = {t}"));
    }
    Ok(varphi_unchecked(gamma, t))
}

fn varphi_unchecked(gamma: f64, t: f64) -> f64 {
    if gamma == 0.0 {
        t.ln()
    } else {
        // expm1 keeps precision when γ log t is small.
        (gamma * t.ln()).exp_m1() / gamma
    }
}

/// Sup-over-grid norms of the coordinate derivatives of `log Z`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct LogZNorms {
    pub norm1: f64,
    pub norm2: f64,
    /// `2 · max(norm1, norm2)`.
    pub norm3: f64,
}

impl LogZNorms {
    pub fn new(norm1: f64, norm2: f64) -> Self {
        Self { norm1, norm2, norm3: 2.0 * norm1.max(norm2) }
    }
}

/// Per-point sums behind [`LogZNorms`], from the cumulants `κ_1..κ_6` of each
/// coordinate `φ_i`:
///
/// * `norm1` term: `sqrt(4κ₁²κ₂ + 2κ₂² + 4κ₁κ₃ + κ₄)`, i.e. the standard deviation of `φ_i²`;
/// * `norm2` term: `(F κ₂)^{1/4} + 2|κ₁| κ₂^{1/2}` with
///   `F = 15κ₂³ + 10κ₃² + 15κ₂κ₄ + κ₆`, the sixth central moment.
pub fn logz_norm_terms(cumulants: &[[f64; 6]]) -> (f64, f64) {
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for k in cumulants {
        let [k1, k2, k3, k4, _, k6] = *k;
        // Both are moments, hence non-negative; clip rounding noise.
        let var_sq = (4.0 * k1 * k1 * k2 + 2.0 * k2 * k2 + 4.0 * k1 * k3 + k4).max(0.0);
        let f = (15.0 * k2.powi(3) + 10.0 * k3 * k3 + 15.0 * k2 * k4 + k6).max(0.0);
        s1 += var_sq.sqrt();
        s2 += (f * k2.max(0.0)).powf(0.25) + 2.0 * k1.abs() * k2.max(0.0).sqrt();
    }
    (s1, s2)
}

/// The three `log Z` norms as maxima over the lattice grid of `domain` and its
/// boundary points.
pub fn logz_norms(model: &Model, domain: &ParamDomain, grid_resolution: usize) -> Result<LogZNorms> {
    model.check_param(domain.center())?;
    let mut grid = lattice_grid(domain, grid_resolution, &[])?;
    grid.extend(boundary_points(domain, grid_resolution)?);
    let terms: Vec<(f64, f64)> = grid
        .par_iter()
        .map(|psi| model.coordinate_cumulants(psi).map(|c| logz_norm_terms(&c)))
        .collect::<Result<_>>()?;
    let (n1, n2) = terms
        .into_iter()
        .fold((0.0f64, 0.0f64), |(a, b), (x, y)| (a.max(x), b.max(y)));
    Ok(LogZNorms::new(n1, n2))
}

/// Constants entering the online and offline bounds, with the derived
/// `μ̃ = μ − α^m σ C_χ`, `L̃ = (L² + α^{m/2})^{1/2}` and
/// `σ̃² = σ²(2 + 2α^{2m}) + α^{m/2} ‖log Z‖₃² C_χ²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundConstants {
    pub mu: f64,
    pub l: f64,
    pub sigma: f64,
    pub c_chi: f64,
    pub alpha: f64,
    pub m: usize,
    pub norms: LogZNorms,
    pub mu_tilde: f64,
    pub l_tilde: f64,
    pub sigma_tilde_sq: f64,
}

impl BoundConstants {
    pub fn new(theory: &TheoryConstants, alpha: f64, m: usize, norms: LogZNorms) -> Result<Self> {
        Self::from_parts(theory.mu, theory.l, theory.sigma, theory.c_chi, alpha, m, norms)
    }

    pub fn from_parts(mu: f64, l: f64, sigma: f64, c_chi: f64, alpha: f64, m: usize, norms: LogZNorms) -> Result<Self> {
        if !(0.0..=1.0).contains(&alpha) {
            return invalid(format!("alpha must lie in [0, 1], got {alpha}"));
        }
        for (name, x) in [("mu", mu), ("L", l), ("sigma", sigma), ("C_chi", c_chi)] {
            if !(x >= 0.0) {
                return invalid(format!("{name} must be non-negative, got {x}"));
            }
        }
        let am = alpha.powi(m as i32);
        let am_half = alpha.powf(m as f64 / 2.0);
        // 0 · ∞ is 0 here: a vanishing α^m removes the C_χ contribution entirely.
        let times = |a: f64, b: f64| if a == 0.0 { 0.0 } else { a * b };
        let mu_tilde = mu - times(am, sigma * c_chi);
        let l_tilde = (l * l + am_half).sqrt();
        let sigma_tilde_sq =
            sigma * sigma * (2.0 + 2.0 * am * am) + times(am_half, norms.norm3.powi(2) * c_chi * c_chi);
        Ok(Self { mu, l, sigma, c_chi, alpha, m, norms, mu_tilde, l_tilde, sigma_tilde_sq })
    }

    fn require_positive_mu_tilde(&self) -> Result<()> {
        if self.mu_tilde > 0.0 {
            Ok(())
        } else {
            Err(CdError::ConditionViolated(format!(
                "mu_tilde = mu - alpha^m sigma C_chi = {} - {}^{} * {} * {} = {} is not positive",
                self.mu, self.alpha, self.m, self.sigma, self.c_chi, self.mu_tilde
            )))
        }
    }
}

/// The online bound on `δ_n = E‖ψ_n − ψ*‖²`, split into the part that
/// forgets the initialization and the part driven by gradient noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct OnlineBound {
    pub transient: f64,
    pub stationary: f64,
    pub total: f64,
}

fn check_step(c: f64, beta: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return invalid(format!("C must be positive and finite, got {c}"));
    }
    if !(0.0..=1.0).contains(&beta) {
        return invalid(format!("beta must lie in [0, 1], got {beta}"));
    }
    Ok(())
}

/// Both terms of the online bound for `η_t = C t^{−β}` after `n` updates.
pub fn online_bound_terms(k: &BoundConstants, delta0: f64, n: usize, c: f64, beta: f64) -> Result<OnlineBound> {
    k.require_positive_mu_tilde()?;
    check_step(c, beta)?;
    if n == 0 {
        return invalid("online bound needs n ≥ 1");
    }
    if !(delta0 >= 0.0) {
        return invalid(format!("delta0 must be non-negative, got {delta0}"));
    }
    let nf = n as f64;
    let (mu_t, l_t, s2) = (k.mu_tilde, k.l_tilde, k.sigma_tilde_sq);
    // Products of huge and tiny exponentials are combined in log space.
    let log_init = (delta0 + s2 / (l_t * l_t)).ln();
    let (transient, stationary) = if beta < 1.0 {
        let log_t = std::f64::consts::LN_2 + 4.0 * l_t * c * c * varphi_unchecked(1.0 - 2.0 * beta, nf)
            - mu_t * c * nf.powf(1.0 - beta) / 4.0
            + log_init;
        (log_t.exp(), 4.0 * c * s2 / (mu_t * nf.powf(beta)))
    } else {
        let log_t = 2.0 * l_t * l_t * c * c - mu_t * c * nf.ln() + log_init;
        let g = mu_t * c / 2.0;
        (log_t.exp(), 2.0 * s2 * c * c * varphi_unchecked(g - 1.0, nf) / nf.powf(g))
    };
    Ok(OnlineBound { transient, stationary, total: transient + stationary })
}

/// Bound on `δ_n` after `n` online updates.
pub fn online_bound(k: &BoundConstants, delta0: f64, n: usize, c: f64, beta: f64) -> Result<f64> {
    online_bound_terms(k, delta0, n, c, beta).map(|b| b.total)
}

/// `(E₁, E₂)` after `T` epochs of `N` updates each.
pub fn offline_transients(mu_tilde: f64, l: f64, c: f64, beta: f64, t: usize, n_batches: usize) -> (f64, f64) {
    let nf = n_batches as f64;
    let t1 = t as f64 + 1.0;
    let a = nf * mu_tilde * c * varphi_unchecked(1.0 - beta, t1);
    let b = nf * l * l * c * c * varphi_unchecked(1.0 - 2.0 * beta, t1);
    ((1.0 - a + b / 2.0).exp(), (-a / 2.0 + 2.0 * b).exp())
}

/// Bound on `sqrt(δ_{T,N})` for offline CD with `N = ⌈n/B⌉` updates per
/// epoch. `sigma_offline` is the caller's aggregate noise level.
#[allow(clippy::too_many_arguments)]
pub fn offline_bound(
    k: &BoundConstants,
    delta00: f64,
    sigma_offline: f64,
    n: usize,
    batch_size: usize,
    epochs: usize,
    c: f64,
    beta: f64,
) -> Result<f64> {
    k.require_positive_mu_tilde()?;
    check_step(c, beta)?;
    if batch_size == 0 || batch_size > n {
        return invalid(format!("batch size must lie in [1, n = {n}], got {batch_size}"));
    }
    if !(delta00 >= 0.0 && sigma_offline >= 0.0) {
        return invalid("delta00 and sigma_offline must be non-negative");
    }
    let nb = n.div_ceil(batch_size);
    let nf = nb as f64;
    let t1 = epochs as f64 + 1.0;
    let (mu_t, l) = (k.mu_tilde, k.l);
    let mc = mu_t * c;
    let l2c2 = l * l * c * c;
    let (e1, e2) = offline_transients(mu_t, l, c, beta, epochs, nb);
    let bracket = if beta == 0.5 {
        4.0 * (mc * nf / t1.sqrt()).exp() / mc
            + 2.0 * nf * (1.0 + mc).powf(nf - 1.0) * varphi_unchecked(0.5 - l2c2 * nf, t1) * e2
    } else if beta == 1.0 {
        4.0 / mc
            + 3.0 * nf * (1.0 + l2c2 / 2.0).powf(nf - 1.0) * (2.0 * l2c2 * nf).exp() * t1.ln()
                / t1.powf(mc * nf / 2.0)
    } else {
        2f64.powf(2.0 * beta + 1.0) / mc * (mc / (2.0 * (1.0 - beta)) * nf / t1.powf(beta)).exp()
            + 3f64.powf(beta) * (1.0 + mc).powf(nf - 1.0) * (t1 + 1.0).powf(beta) / l2c2 * e2
    };
    let scaled = |coef: f64, x: f64| if coef == 0.0 { 0.0 } else { coef * x };
    Ok(scaled(delta00.sqrt(), e1) + scaled(c * sigma_offline, bracket))
}
