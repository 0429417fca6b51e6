use nalgebra::{DMatrix, DVector};

/// Sufficient statistics of every state of a finite sample space, stored row
/// by row, with log-sum-exp based oracles on top.
#[derive(Clone, Debug)]
pub struct Enumeration {
    p: usize,
    stats: Vec<f64>,
}

impl Enumeration {
    /// Builds the table by calling `phi(state, row)` for states `0..count`.
    pub fn build(count: usize, p: usize, mut phi: impl FnMut(u64, &mut [f64])) -> Self {
        let mut stats = vec![0.0; count * p];
        for (s, row) in stats.chunks_exact_mut(p).enumerate() {
            phi(s as u64, row);
        }
        Self { p, stats }
    }

    pub fn len(&self) -> usize {
        self.stats.len() / self.p
    }

    pub fn is_empty(&self) -> bool {
        self.stats.is_empty()
    }

    pub fn stat(&self, s: usize) -> &[f64] {
        &self.stats[s * self.p..(s + 1) * self.p]
    }

    /// `ψᵀφ(x)` for every state.
    pub fn energies(&self, psi: &DVector<f64>) -> Vec<f64> {
        self.stats
            .chunks_exact(self.p)
            .map(|row| row.iter().zip(psi.iter()).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn log_partition(&self, psi: &DVector<f64>) -> f64 {
        log_sum_exp(&self.energies(psi))
    }

    /// Probabilities `p_ψ(x)` of every state.
    pub fn probabilities(&self, psi: &DVector<f64>) -> Vec<f64> {
        let e = self.energies(psi);
        let lz = log_sum_exp(&e);
        e.into_iter().map(|v| (v - lz).exp()).collect()
    }

    /// Unnormalized cumulative weights, for inverse-CDF sampling.
    pub fn cdf(&self, psi: &DVector<f64>) -> Vec<f64> {
        let mut acc = 0.0;
        self.probabilities(psi)
            .into_iter()
            .map(|w| {
                acc += w;
                acc
            })
            .collect()
    }

    /// Mean and covariance of `φ(X^ψ)`.
    pub fn moments(&self, psi: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let probs = self.probabilities(psi);
        let p = self.p;
        let mut mean = DVector::zeros(p);
        for (w, row) in probs.iter().zip(self.stats.chunks_exact(p)) {
            for i in 0..p {
                mean[i] += w * row[i];
            }
        }
        // Centered accumulation keeps the covariance accurate when entries are large.
        let mut cov = DMatrix::zeros(p, p);
        let mut c = vec![0.0; p];
        for (w, row) in probs.iter().zip(self.stats.chunks_exact(p)) {
            for i in 0..p {
                c[i] = row[i] - mean[i];
            }
            for i in 0..p {
                for j in 0..=i {
                    cov[(i, j)] += w * c[i] * c[j];
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                cov[(j, i)] = cov[(i, j)];
            }
        }
        (mean, cov)
    }

    /// First six cumulants of each coordinate of `φ(X^ψ)`.
    pub fn coordinate_cumulants(&self, psi: &DVector<f64>) -> Vec<[f64; 6]> {
        let probs = self.probabilities(psi);
        let p = self.p;
        (0..p)
            .map(|i| {
                let mean: f64 = probs
                    .iter()
                    .zip(self.stats.chunks_exact(p))
                    .map(|(w, row)| w * row[i])
                    .sum();
                let mut m = [0.0; 7];
                for (w, row) in probs.iter().zip(self.stats.chunks_exact(p)) {
                    let c = row[i] - mean;
                    let mut pw = 1.0;
                    for mk in m.iter_mut() {
                        *mk += w * pw;
                        pw *= c;
                    }
                }
                cumulants_from_central(mean, &m)
            })
            .collect()
    }
}

/// `κ_1..κ_6` from the mean and central moments `m[k] = E[(X − EX)^k]`.
pub(crate) fn cumulants_from_central(mean: f64, m: &[f64; 7]) -> [f64; 6] {
    let (m2, m3, m4, m5, m6) = (m[2], m[3], m[4], m[5], m[6]);
    [
        mean,
        m2,
        m3,
        m4 - 3.0 * m2 * m2,
        m5 - 10.0 * m3 * m2,
        m6 - 15.0 * m4 * m2 - 10.0 * m3 * m3 + 30.0 * m2 * m2 * m2,
    ]
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
