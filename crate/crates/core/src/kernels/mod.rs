//! Markov kernels `k_ψ` leaving `p_ψ` invariant, their exact transition
//! matrices on enumerable spaces, and the restricted spectral gap.

mod alpha;
mod matrix;

pub use alpha::{alpha_sup, restricted_alpha, restricted_alpha_m, AlphaEstimate, AlphaMode, AlphaSup, TestFunction};
pub use matrix::{TransitionMatrix, MAX_MATRIX_STATES};

use nalgebra::DVector;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid, CdError, Result};
use crate::expfam::{Boltzmann, Ergm, Exactness, ExactSampler, GaussianMean, Model, Point};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum KernelKind {
    /// Random-scan Gibbs: resample one uniformly chosen coordinate from its
    /// exact conditional. Gaussian and Boltzmann models.
    Gibbs,
    /// Toggle one uniformly chosen node pair, accept with
    /// `min(1, exp(ψᵀ(φ(g′) − φ(g))))`. ERGM only.
    EdgeToggleMetropolis,
    /// Ignore the current state and draw from `p_ψ` exactly.
    ExactSampler,
    /// Leave the state where it is. Useful as a reference in tests.
    Identity,
}

impl KernelKind {
    /// The MCMC kernel conventionally paired with a model family.
    pub fn default_for(model: &Model) -> KernelKind {
        match model {
            Model::Ergm(_) => KernelKind::EdgeToggleMetropolis,
            _ => KernelKind::Gibbs,
        }
    }
}

/// A kernel bound to a model. Cheap to copy.
#[derive(Clone, Copy, Debug)]
pub struct MarkovKernel<'m> {
    model: &'m Model,
    kind: KernelKind,
}

impl<'m> MarkovKernel<'m> {
    pub fn new(model: &'m Model, kind: KernelKind) -> Result<Self> {
        let ok = match (kind, model) {
            (KernelKind::Gibbs, Model::GaussianMean(_) | Model::Boltzmann(_)) => true,
            (KernelKind::EdgeToggleMetropolis, Model::Ergm(_)) => true,
            (KernelKind::ExactSampler, _) => model.exactness() != Exactness::None,
            (KernelKind::Identity, _) => true,
            _ => false,
        };
        if !ok {
            return invalid(format!("kernel {kind:?} is not available for {}", model.name()));
        }
        Ok(Self { model, kind })
    }

    pub fn model(&self) -> &'m Model {
        self.model
    }

    pub fn kind(&self) -> KernelKind {
        self.kind
    }

    /// Precomputes everything the kernel needs at a fixed `ψ`.
    pub fn at(&self, psi: &DVector<f64>) -> Result<KernelAt<'m>> {
        self.model.check_param(psi)?;
        let prepared = match (self.kind, self.model) {
            (KernelKind::Identity, _) => Prepared::Identity,
            (KernelKind::ExactSampler, m) => Prepared::Exact(m.exact_sampler(psi)?),
            (KernelKind::Gibbs, Model::GaussianMean(g)) => Prepared::Gaussian {
                model: g,
                mean: g.mean(psi).as_slice().to_vec(),
            },
            (KernelKind::Gibbs, Model::Boltzmann(b)) => Prepared::Boltzmann {
                model: b,
                psi: psi.as_slice().to_vec(),
            },
            (KernelKind::EdgeToggleMetropolis, Model::Ergm(e)) => Prepared::Ergm {
                model: e,
                psi: [psi[0], psi[1]],
            },
            _ => unreachable!("checked in MarkovKernel::new"),
        };
        Ok(KernelAt { prepared })
    }

    /// One transition from `x`.
    pub fn step<R: Rng + ?Sized>(&self, psi: &DVector<f64>, x: &Point, rng: &mut R) -> Result<Point> {
        self.m_steps(psi, x, 1, rng)
    }

    /// `m` sequential transitions from `x`; `m = 0` returns `x`.
    pub fn m_steps<R: Rng + ?Sized>(&self, psi: &DVector<f64>, x: &Point, m: usize, rng: &mut R) -> Result<Point> {
        self.model.check_point(x)?;
        let at = self.at(psi)?;
        let mut state = x.clone();
        at.run(&mut state, m, rng);
        Ok(state)
    }

    /// Nonzero entries `(j, k_ψ(s, j))` of row `s` of the transition matrix,
    /// in increasing `j` with duplicates merged.
    pub fn transitions(&self, psi: &DVector<f64>, s: usize) -> Result<Vec<(usize, f64)>> {
        let en = self.model.enumeration().ok_or_else(|| {
            CdError::UnsupportedOracle(format!("{} has no enumerable state space", self.model.name()))
        })?;
        self.model.check_param(psi)?;
        if s >= en.len() {
            return invalid(format!("state index {s} out of range"));
        }
        let mut row: Vec<(usize, f64)> = match (self.kind, self.model) {
            (KernelKind::Identity, _) => vec![(s, 1.0)],
            (KernelKind::ExactSampler, _) => en.probabilities(psi).into_iter().enumerate().collect(),
            (KernelKind::Gibbs, Model::Boltzmann(b)) => {
                let d = b.units();
                let mask = s as u64;
                let mut row = Vec::with_capacity(2 * d);
                for i in 0..d {
                    let q = logistic(b.conditional_logit(psi.as_slice(), mask, i));
                    let on = mask | (1 << i);
                    let off = mask & !(1 << i);
                    row.push((on as usize, q / d as f64));
                    row.push((off as usize, (1.0 - q) / d as f64));
                }
                row
            }
            (KernelKind::EdgeToggleMetropolis, Model::Ergm(e)) => {
                let pairs = e.pair_count();
                let mask = s as u64;
                let mut stay = 0.0;
                let mut row = Vec::with_capacity(pairs + 1);
                for edge in 0..pairs {
                    let delta = e.toggle_delta(mask, edge);
                    let accept = (psi[0] * delta[0] + psi[1] * delta[1]).exp().min(1.0);
                    row.push(((mask ^ (1 << edge)) as usize, accept / pairs as f64));
                    stay += (1.0 - accept) / pairs as f64;
                }
                row.push((s, stay));
                row
            }
            _ => unreachable!("kernel/model pairing checked in MarkovKernel::new"),
        };
        row.sort_by_key(|&(j, _)| j);
        row.dedup_by(|b, a| {
            if a.0 == b.0 {
                a.1 += b.1;
                true
            } else {
                false
            }
        });
        row.retain(|&(_, w)| w > 0.0);
        Ok(row)
    }

    /// `(K f)(s) = Σ_j k_ψ(s, j) f(j)` for a function given by its values on
    /// every enumerated state.
    pub fn apply(&self, psi: &DVector<f64>, f: &[f64]) -> Result<Vec<f64>> {
        let en = self.model.enumeration().ok_or_else(|| {
            CdError::UnsupportedOracle(format!("{} has no enumerable state space", self.model.name()))
        })?;
        if f.len() != en.len() {
            return invalid(format!("function has {} values, state space has {}", f.len(), en.len()));
        }
        if self.kind == KernelKind::ExactSampler {
            // Rank one: every row is p_ψ.
            let probs = en.probabilities(psi);
            let mean: f64 = probs.iter().zip(f).map(|(p, v)| p * v).sum();
            return Ok(vec![mean; f.len()]);
        }
        (0..en.len())
            .map(|s| Ok(self.transitions(psi, s)?.into_iter().map(|(j, w)| w * f[j]).sum()))
            .collect()
    }

    pub fn transition_matrix(&self, psi: &DVector<f64>) -> Result<TransitionMatrix> {
        TransitionMatrix::build(self, psi)
    }
}

enum Prepared<'m> {
    Gaussian { model: &'m GaussianMean, mean: Vec<f64> },
    Boltzmann { model: &'m Boltzmann, psi: Vec<f64> },
    Ergm { model: &'m Ergm, psi: [f64; 2] },
    Exact(ExactSampler),
    Identity,
}

/// A kernel frozen at one parameter value.
pub struct KernelAt<'m> {
    prepared: Prepared<'m>,
}

impl KernelAt<'_> {
    /// One transition, overwriting `x`. The point must belong to the model.
    pub fn step_in_place<R: Rng + ?Sized>(&self, x: &mut Point, rng: &mut R) {
        match (&self.prepared, x) {
            (Prepared::Identity, _) => {}
            (Prepared::Exact(sampler), x) => *x = sampler.sample(rng),
            (Prepared::Gaussian { model, mean }, Point::Real(v)) => {
                let i = rng.random_range(0..v.len());
                let (m, var) = model.conditional(mean, v, i);
                let z: f64 = rng.sample(StandardNormal);
                v[i] = m + var.sqrt() * z;
            }
            (Prepared::Boltzmann { model, psi }, Point::Bits(mask)) => {
                let i = rng.random_range(0..model.units());
                let q = logistic(model.conditional_logit(psi, *mask, i));
                if rng.random::<f64>() < q {
                    *mask |= 1 << i;
                } else {
                    *mask &= !(1 << i);
                }
            }
            (Prepared::Ergm { model, psi }, Point::Graph(mask)) => {
                let e = rng.random_range(0..model.pair_count());
                let delta = model.toggle_delta(*mask, e);
                let log_ratio = psi[0] * delta[0] + psi[1] * delta[1];
                // Always draw the uniform so the stream position does not depend on ψ.
                let u: f64 = rng.random();
                if log_ratio >= 0.0 || u < log_ratio.exp() {
                    *mask ^= 1 << e;
                }
            }
            (_, x) => panic!("point {x:?} does not match the kernel's sample space"),
        }
    }

    /// `m` transitions in place.
    pub fn run<R: Rng + ?Sized>(&self, x: &mut Point, m: usize, rng: &mut R) {
        for _ in 0..m {
            self.step_in_place(x, rng);
        }
    }
}

fn logistic(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}
