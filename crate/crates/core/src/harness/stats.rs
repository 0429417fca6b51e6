//! Replication summaries, log-log rate fits and the Cramér-Rao ratio.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, CdError, Result};

/// Mean of per-replication values and its standard error.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanEstimate {
    pub value: f64,
    /// `s / sqrt(R)` with the unbiased sample deviation; `0` for `R = 1`.
    pub stderr: f64,
}

impl MeanEstimate {
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return invalid("cannot summarise zero replications");
        }
        let r = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / r;
        if xs.len() == 1 {
            return Ok(Self { value: mean, stderr: 0.0 });
        }
        let ss: f64 = xs.iter().map(|x| (x - mean).powi(2)).sum();
        Ok(Self { value: mean, stderr: (ss / (r - 1.0) / r).sqrt() })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// Ordinary least squares of `ln δ` on `ln n`.
pub fn rate_fit(points: &[(f64, f64)]) -> Result<RateFit> {
    if points.len() < 3 {
        return invalid(format!("rate fit needs at least 3 points, got {}", points.len()));
    }
    if let Some(&(n, d)) = points.iter().find(|&&(n, d)| !(n > 0.0 && d > 0.0 && n.is_finite() && d.is_finite())) {
        return invalid(format!("rate fit needs positive finite n and delta, got ({n}, {d})"));
    }
    let k = points.len() as f64;
    let xs: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let xm = xs.iter().sum::<f64>() / k;
    let ym = ys.iter().sum::<f64>() / k;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    if sxx == 0.0 {
        return invalid("rate fit needs at least two distinct n");
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let rss: f64 = xs.iter().zip(&ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    Ok(RateFit { slope, intercept, slope_stderr: (rss / (k - 2.0) / sxx).sqrt() })
}

/// `tr(ℐ⁻¹)` through a Cholesky factorisation.
pub fn inverse_trace(fisher: &DMatrix<f64>) -> Result<f64> {
    if !fisher.is_square() || fisher.nrows() == 0 {
        return invalid("Fisher information must be a non-empty square matrix");
    }
    let chol = fisher
        .clone()
        .cholesky()
        .ok_or_else(|| CdError::LinearAlgebra("Fisher information is not positive definite".into()))?;
    let tr = chol.inverse().trace();
    if !(tr.is_finite() && tr > 0.0) {
        return Err(CdError::LinearAlgebra(format!("Fisher information is numerically singular (tr inverse = {tr})")));
    }
    Ok(tr)
}

/// `n · δ / tr(ℐ⁻¹)`: `1` at the Cramér-Rao limit.
pub fn variance_ratio(n: usize, delta_avg: f64, fisher: &DMatrix<f64>) -> Result<f64> {
    Ok(n as f64 * delta_avg / inverse_trace(fisher)?)
}
