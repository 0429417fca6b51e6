use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, CdError, Result};

/// Gaussian family with unknown mean and known equicorrelation covariance.
///
/// The carrier is `N(0, Σ)` with unit diagonal and off-diagonal `ρ`, so that
/// `p_ψ = N(Σψ, Σ)`, `φ(x) = x` and `log Z(ψ) = ψᵀΣψ / 2` for every `ψ ∈ R^d`.
#[derive(Clone, Debug)]
pub struct GaussianMean {
    d: usize,
    rho: f64,
    cov: DMatrix<f64>,
    chol: DMatrix<f64>,
    precision: DMatrix<f64>,
}

impl GaussianMean {
    pub fn new(d: usize, rho: f64) -> Result<Self> {
        if d == 0 {
            return invalid("gaussian_mean needs d ≥ 1");
        }
        if !(rho > -1.0 && rho < 1.0) {
            return invalid(format!("correlation must lie in (-1, 1), got {rho}"));
        }
        let cov = DMatrix::from_fn(d, d, |i, j| if i == j { 1.0 } else { rho });
        let chol = cov.clone().cholesky().ok_or_else(|| {
            CdError::InvalidInput(format!(
                "equicorrelation matrix with d = {d}, rho = {rho} is not positive definite"
            ))
        })?;
        let precision = chol.inverse();
        Ok(Self { d, rho, chol: chol.l(), cov, precision })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    /// Lower Cholesky factor of `Σ`.
    pub fn cholesky_factor(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn precision(&self) -> &DMatrix<f64> {
        &self.precision
    }

    pub fn log_partition(&self, psi: &DVector<f64>) -> f64 {
        0.5 * psi.dot(&(&self.cov * psi))
    }

    pub fn mean(&self, psi: &DVector<f64>) -> DVector<f64> {
        &self.cov * psi
    }

    /// Marginal cumulants of `X_i`: mean, variance, and zeros beyond.
    pub fn coordinate_cumulants(&self, psi: &DVector<f64>) -> Vec<[f64; 6]> {
        let mean = self.mean(psi);
        (0..self.d)
            .map(|i| [mean[i], self.cov[(i, i)], 0.0, 0.0, 0.0, 0.0])
            .collect()
    }

    /// Mean and variance of `X_i` given the other coordinates under `N(m, Σ)`.
    pub fn conditional(&self, mean: &[f64], x: &[f64], i: usize) -> (f64, f64) {
        let q = &self.precision;
        let qii = q[(i, i)];
        let mut shift = 0.0;
        for j in 0..self.d {
            if j != i {
                shift += q[(i, j)] * (x[j] - mean[j]);
            }
        }
        (mean[i] - shift / qii, 1.0 / qii)
    }
}
