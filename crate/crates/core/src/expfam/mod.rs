//! Exponential families `p_ψ(dx) = exp(ψᵀφ(x) − log Z(ψ)) c(dx)` and their exact oracles.
//!
//! Three concrete families are provided. All of them carry exact oracles for
//! small instances:
//!
//! | family                | sample space        | oracle                |
//! |-----------------------|---------------------|-----------------------|
//! | [`GaussianMean`]      | `R^d`               | closed form           |
//! | [`Boltzmann`]         | `{0,1}^d`           | enumeration, `d ≤ 12` |
//! | [`Ergm`]              | graphs on `k` nodes | enumeration, `k ≤ 6`  |
//!
//! Larger discrete instances can be built and sampled with MCMC kernels, but
//! report [`Exactness::None`] and refuse oracle calls.

mod boltzmann;
mod constants;
mod enumeration;
mod ergm;
mod gaussian;

pub use boltzmann::Boltzmann;
pub use constants::{boundary_points, lattice_grid, theory_constants, TheoryConstants, MAX_LATTICE_CANDIDATES};
pub use enumeration::Enumeration;
pub use ergm::Ergm;
pub use gaussian::GaussianMean;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, CdError, Result};

/// A point of the sample space.
///
/// Binary vectors and graphs are packed into a `u64`: bit `i` of a [`Point::Bits`]
/// is unit `x_{i+1}`, bit `e` of a [`Point::Graph`] is the `e`-th unordered node
/// pair in lexicographic order `(0,1), (0,2), …, (k−2,k−1)`. For enumerable
/// models the packed integer is also the state index.
#[derive(Clone, Debug, PartialEq)]
pub enum Point {
    Real(Vec<f64>),
    Bits(u64),
    Graph(u64),
}

impl Point {
    /// Packs a 0/1 vector, first entry in the lowest bit.
    pub fn bits(xs: &[u8]) -> Point {
        assert!(xs.len() <= 64, "at most 64 binary units");
        let mut mask = 0u64;
        for (i, &b) in xs.iter().enumerate() {
            if b != 0 {
                mask |= 1 << i;
            }
        }
        Point::Bits(mask)
    }

    pub fn real(xs: &[f64]) -> Point {
        Point::Real(xs.to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SampleSpace {
    Continuous { dim: usize },
    Hypercube { dim: usize },
    Graphs { nodes: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Exactness {
    Analytic,
    Enumerable,
    None,
}

/// Result of [`Model::chi2_divergence`]. `overflow` is set when the value is
/// too large for an `f64` and `value` has been replaced by `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Chi2 {
    pub value: f64,
    pub overflow: bool,
}

/// The model classes understood by the crate.
#[derive(Clone, Debug)]
pub enum Model {
    GaussianMean(GaussianMean),
    Boltzmann(Boltzmann),
    Ergm(Ergm),
}

impl From<GaussianMean> for Model {
    fn from(m: GaussianMean) -> Self {
        Model::GaussianMean(m)
    }
}

impl From<Boltzmann> for Model {
    fn from(m: Boltzmann) -> Self {
        Model::Boltzmann(m)
    }
}

impl From<Ergm> for Model {
    fn from(m: Ergm) -> Self {
        Model::Ergm(m)
    }
}

impl Model {
    pub fn gaussian_mean(d: usize, rho: f64) -> Result<Model> {
        GaussianMean::new(d, rho).map(Model::from)
    }

    pub fn boltzmann(d: usize) -> Result<Model> {
        Boltzmann::new(d).map(Model::from)
    }

    pub fn ergm(k: usize) -> Result<Model> {
        Ergm::new(k).map(Model::from)
    }

    /// Dimension `p` of the sufficient statistic.
    pub fn dim(&self) -> usize {
        match self {
            Model::GaussianMean(g) => g.dim(),
            Model::Boltzmann(b) => b.dim(),
            Model::Ergm(e) => e.dim(),
        }
    }

    pub fn sample_space(&self) -> SampleSpace {
        match self {
            Model::GaussianMean(g) => SampleSpace::Continuous { dim: g.d() },
            Model::Boltzmann(b) => SampleSpace::Hypercube { dim: b.units() },
            Model::Ergm(e) => SampleSpace::Graphs { nodes: e.nodes() },
        }
    }

    pub fn exactness(&self) -> Exactness {
        match self {
            Model::GaussianMean(_) => Exactness::Analytic,
            Model::Boltzmann(b) if b.enumeration().is_some() => Exactness::Enumerable,
            Model::Ergm(e) if e.enumeration().is_some() => Exactness::Enumerable,
            _ => Exactness::None,
        }
    }

    pub fn name(&self) -> String {
        match self {
            Model::GaussianMean(g) => format!("gaussian_mean(d={}, rho={})", g.d(), g.rho()),
            Model::Boltzmann(b) => format!("boltzmann(d={})", b.units()),
            Model::Ergm(e) => format!("ergm(k={})", e.nodes()),
        }
    }

    /// The state table of an enumerable model.
    pub fn enumeration(&self) -> Option<&Enumeration> {
        match self {
            Model::GaussianMean(_) => None,
            Model::Boltzmann(b) => b.enumeration(),
            Model::Ergm(e) => e.enumeration(),
        }
    }

    pub fn check_point(&self, x: &Point) -> Result<()> {
        match (self, x) {
            (Model::GaussianMean(g), Point::Real(v)) => {
                if v.len() != g.d() {
                    return invalid(format!("expected a point of R^{}, got length {}", g.d(), v.len()));
                }
                if v.iter().any(|c| !c.is_finite()) {
                    return invalid("non-finite coordinate");
                }
                Ok(())
            }
            (Model::Boltzmann(b), Point::Bits(mask)) => {
                if b.units() < 64 && mask >> b.units() != 0 {
                    return invalid(format!("bit pattern {mask:#x} has bits beyond d = {}", b.units()));
                }
                Ok(())
            }
            (Model::Ergm(e), Point::Graph(mask)) => {
                let pairs = e.pair_count();
                if pairs < 64 && mask >> pairs != 0 {
                    return invalid(format!("edge mask {mask:#x} has bits beyond {pairs} node pairs"));
                }
                Ok(())
            }
            _ => invalid(format!("point {x:?} does not belong to {}", self.name())),
        }
    }

    pub fn check_param(&self, psi: &DVector<f64>) -> Result<()> {
        if psi.len() != self.dim() {
            return invalid(format!("parameter has dimension {}, model expects {}", psi.len(), self.dim()));
        }
        if psi.iter().any(|c| !c.is_finite()) {
            return invalid("parameter has non-finite entries");
        }
        Ok(())
    }

    /// Sufficient statistic `φ(x)`.
    pub fn phi(&self, x: &Point) -> Result<DVector<f64>> {
        self.check_point(x)?;
        let mut out = DVector::zeros(self.dim());
        self.phi_into(x, out.as_mut_slice());
        Ok(out)
    }

    /// Unchecked variant of [`Model::phi`] writing into `out` (length `p`).
    pub fn phi_into(&self, x: &Point, out: &mut [f64]) {
        debug_assert_eq!(out.len(), self.dim());
        match (self, x) {
            (Model::GaussianMean(_), Point::Real(v)) => out.copy_from_slice(v),
            (Model::Boltzmann(b), Point::Bits(mask)) => b.phi_into(*mask, out),
            (Model::Ergm(e), Point::Graph(mask)) => e.phi_into(*mask, out),
            _ => panic!("point {x:?} does not belong to {}", self.name()),
        }
    }

    fn require_exact(&self) -> Result<()> {
        if self.exactness() == Exactness::None {
            return Err(CdError::UnsupportedOracle(format!(
                "{} is too large for exact oracles",
                self.name()
            )));
        }
        Ok(())
    }

    pub fn log_partition(&self, psi: &DVector<f64>) -> Result<f64> {
        self.require_exact()?;
        self.check_param(psi)?;
        Ok(match self {
            Model::GaussianMean(g) => g.log_partition(psi),
            _ => self.enumeration().expect("enumerable").log_partition(psi),
        })
    }

    /// `E[φ(X^ψ)] = ∇ log Z(ψ)`.
    pub fn mean_statistic(&self, psi: &DVector<f64>) -> Result<DVector<f64>> {
        self.require_exact()?;
        self.check_param(psi)?;
        Ok(match self {
            Model::GaussianMean(g) => g.mean(psi),
            _ => self.enumeration().expect("enumerable").moments(psi).0,
        })
    }

    /// `Cov[φ(X^ψ)] = ∇² log Z(ψ)`.
    pub fn fisher_information(&self, psi: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.require_exact()?;
        self.check_param(psi)?;
        Ok(match self {
            Model::GaussianMean(g) => g.covariance().clone(),
            _ => self.enumeration().expect("enumerable").moments(psi).1,
        })
    }

    /// `χ²(p_{ψ*}, p_ψ) = ∫ (dp_{ψ*}/dp_ψ − 1)² dp_ψ
    ///                  = exp(log Z(2ψ* − ψ) − 2 log Z(ψ*) + log Z(ψ)) − 1`.
    pub fn chi2_divergence(&self, psi_star: &DVector<f64>, psi: &DVector<f64>) -> Result<Chi2> {
        self.check_param(psi_star)?;
        let reflected = 2.0 * psi_star - psi;
        let exponent =
            self.log_partition(&reflected)? - 2.0 * self.log_partition(psi_star)? + self.log_partition(psi)?;
        if exponent > f64::MAX.ln() {
            return Ok(Chi2 { value: f64::INFINITY, overflow: true });
        }
        // exponent ≥ 0 by convexity of log Z; clip rounding noise.
        Ok(Chi2 { value: exponent.max(0.0).exp_m1(), overflow: false })
    }

    /// Cumulants `κ_1..κ_6` of each coordinate `φ_i(X^ψ)`, i.e. the pure partial
    /// derivatives `∂^k_i log Z(ψ)`. Entry `[i][k-1]` holds `κ_k` of coordinate `i`.
    pub fn coordinate_cumulants(&self, psi: &DVector<f64>) -> Result<Vec<[f64; 6]>> {
        self.require_exact()?;
        self.check_param(psi)?;
        Ok(match self {
            Model::GaussianMean(g) => g.coordinate_cumulants(psi),
            _ => self.enumeration().expect("enumerable").coordinate_cumulants(psi),
        })
    }

    /// A sampler drawing exactly from `p_ψ`.
    pub fn exact_sampler(&self, psi: &DVector<f64>) -> Result<ExactSampler> {
        self.require_exact()?;
        self.check_param(psi)?;
        Ok(match self {
            Model::GaussianMean(g) => ExactSampler::Gaussian {
                mean: g.mean(psi).as_slice().to_vec(),
                chol: g.cholesky_factor().clone(),
            },
            Model::Boltzmann(_) => ExactSampler::Table {
                cdf: self.enumeration().expect("enumerable").cdf(psi),
                graph: false,
            },
            Model::Ergm(_) => ExactSampler::Table {
                cdf: self.enumeration().expect("enumerable").cdf(psi),
                graph: true,
            },
        })
    }

    /// Enumerates every state of an enumerable model in index order.
    pub fn states(&self) -> Result<Vec<Point>> {
        let en = self.enumeration().ok_or_else(|| {
            CdError::UnsupportedOracle(format!("{} is not enumerable", self.name()))
        })?;
        let graph = matches!(self, Model::Ergm(_));
        Ok((0..en.len() as u64)
            .map(|s| if graph { Point::Graph(s) } else { Point::Bits(s) })
            .collect())
    }

    /// Index of `x` in [`Model::states`].
    pub fn state_index(&self, x: &Point) -> Option<usize> {
        let n = self.enumeration()?.len() as u64;
        match (self, x) {
            (Model::Boltzmann(_), Point::Bits(s)) | (Model::Ergm(_), Point::Graph(s)) if *s < n => {
                Some(*s as usize)
            }
            _ => None,
        }
    }
}

/// Draws i.i.d. samples from a fixed `p_ψ`.
#[derive(Clone, Debug)]
pub enum ExactSampler {
    /// `mean + L z` with `L Lᵀ = Σ` and `z` standard normal.
    Gaussian { mean: Vec<f64>, chol: DMatrix<f64> },
    /// Inverse-CDF lookup over the enumerated states.
    Table { cdf: Vec<f64>, graph: bool },
}

impl ExactSampler {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            ExactSampler::Gaussian { mean, chol } => {
                let d = mean.len();
                let z: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
                let x = (0..d)
                    .map(|i| mean[i] + (0..=i).map(|j| chol[(i, j)] * z[j]).sum::<f64>())
                    .collect();
                Point::Real(x)
            }
            ExactSampler::Table { cdf, graph } => {
                let u: f64 = rng.random::<f64>() * cdf[cdf.len() - 1];
                let s = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1) as u64;
                if *graph {
                    Point::Graph(s)
                } else {
                    Point::Bits(s)
                }
            }
        }
    }
}

/// The parameter set Ψ: a closed Euclidean ball.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamDomain {
    center: DVector<f64>,
    radius: f64,
}

impl ParamDomain {
    pub fn new(center: DVector<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0 && radius.is_finite()) {
            return invalid(format!("domain radius must be positive and finite, got {radius}"));
        }
        if center.iter().any(|c| !c.is_finite()) {
            return invalid("domain center has non-finite entries");
        }
        Ok(Self { center, radius })
    }

    pub fn ball(center: &[f64], radius: f64) -> Result<Self> {
        Self::new(DVector::from_column_slice(center), radius)
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn contains(&self, psi: &DVector<f64>) -> bool {
        (psi - &self.center).norm() <= self.radius
    }

    /// Whether `psi` is at least `margin` away from the boundary sphere.
    pub fn contains_interior(&self, psi: &DVector<f64>, margin: f64) -> bool {
        (psi - &self.center).norm() <= self.radius - margin
    }

    /// Euclidean projection onto the ball. Points inside are returned unchanged.
    pub fn project(&self, psi: &DVector<f64>) -> DVector<f64> {
        let offset = psi - &self.center;
        let dist = offset.norm();
        if dist <= self.radius {
            psi.clone()
        } else {
            &self.center + offset * (self.radius / dist)
        }
    }

    /// In-place projection; returns whether the point was moved.
    pub fn project_in_place(&self, psi: &mut DVector<f64>) -> bool {
        let dist = (&*psi - &self.center).norm();
        if dist <= self.radius {
            return false;
        }
        let scale = self.radius / dist;
        for (v, c) in psi.iter_mut().zip(self.center.iter()) {
            *v = c + (*v - c) * scale;
        }
        true
    }
}
