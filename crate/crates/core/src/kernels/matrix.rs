use nalgebra::{DMatrix, DVector};

use crate::error::{CdError, Result};
use crate::expfam::Point;

use super::MarkovKernel;

/// Largest state space for which a dense matrix is assembled. Bigger
/// enumerable spaces are still handled by [`MarkovKernel::apply`].
pub const MAX_MATRIX_STATES: usize = 4096;

/// Dense one-step transition matrix over an enumerated state space.
#[derive(Clone, Debug)]
pub struct TransitionMatrix {
    pub states: Vec<Point>,
    pub matrix: DMatrix<f64>,
}

impl TransitionMatrix {
    pub(super) fn build(kernel: &MarkovKernel<'_>, psi: &DVector<f64>) -> Result<Self> {
        let model = kernel.model();
        let states = model.states()?;
        if states.len() > MAX_MATRIX_STATES {
            return Err(CdError::UnsupportedOracle(format!(
                "{} has {} states; dense matrices are limited to {MAX_MATRIX_STATES}",
                model.name(),
                states.len()
            )));
        }
        let n = states.len();
        let mut matrix = DMatrix::zeros(n, n);
        for s in 0..n {
            for (j, w) in kernel.transitions(psi, s)? {
                matrix[(s, j)] = w;
            }
        }
        Ok(Self { states, matrix })
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Largest `|Σ_j K(s, j) − 1|`.
    pub fn row_sum_error(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// `‖πᵀK − πᵀ‖_∞`.
    pub fn stationarity_residual(&self, pi: &[f64]) -> f64 {
        let pi = DVector::from_column_slice(pi);
        (self.matrix.tr_mul(&pi) - &pi).amax()
    }

    /// `K^m` by repeated squaring.
    pub fn power(&self, m: usize) -> DMatrix<f64> {
        let n = self.len();
        let mut result = DMatrix::identity(n, n);
        let mut base = self.matrix.clone();
        let mut e = m;
        while e > 0 {
            if e & 1 == 1 {
                result = &result * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        result
    }
}
