//! Contrastive divergence (CD) estimation for exponential families.
//!
//! The crate is organised bottom-up:
//!
//! * [`expfam`] holds the model class `p_ψ(dx) ∝ exp(ψᵀφ(x)) c(dx)`, exact oracles
//!   (log-partition, moments, Fisher information, χ² divergence) and the three
//!   built-in families (Gaussian mean, fully visible Boltzmann machine, ERGM).
//! * [`kernels`] provides Markov kernels leaving `p_ψ` invariant, exact transition
//!   matrices on enumerable spaces and restricted spectral gap estimates.
//! * [`cd`] implements the projected online and offline CD drivers together with
//!   Polyak-Ruppert averaging and the MCMC length schedule.
//! * [`bounds`] evaluates the closed-form rate bounds and their constants.
//! * [`harness`] runs seeded Monte Carlo experiments and writes reports.

pub mod bounds;
pub mod cd;
pub mod error;
pub mod expfam;
pub mod harness;
pub mod kernels;
pub mod rng;

pub use error::{CdError, Result};
pub use expfam::{Exactness, Model, ParamDomain, Point, SampleSpace};
pub use kernels::{KernelKind, MarkovKernel};
