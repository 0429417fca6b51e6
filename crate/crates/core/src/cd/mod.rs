//! Projected contrastive divergence.
//!
//! A CD update replaces the intractable `E_{p_ψ}[φ]` in the cross-entropy
//! gradient `∇ℒ(ψ) = E_{p_ψ}[φ] − (1/n) Σ φ(X_i)` by `φ` at the end of a short
//! Markov chain started at a data point:
//!
//! ```text
//! h = (1/B) Σ_{i ∈ batch} ( φ(X̃^m_i) − φ(X_i) ),   X̃^m_i ~ k_ψ^m(X_i, ·)
//! ψ ← Proj_Ψ(ψ − η h)
//! ```
//!
//! Every chain is fresh: it starts at its data point and draws from its own
//! substream `(CHAIN, update, data_index)` of the run seed, so results do not
//! depend on thread count or scheduling.

mod offline;
mod online;

pub use offline::{epoch_batches, offline_cd};
pub use online::online_cd;

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::expfam::{ParamDomain, Point};
use crate::kernels::{KernelAt, MarkovKernel};
use crate::rng::{substream, tags};

/// Learning rate `η_t = C t^{−β}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub c: f64,
    pub beta: f64,
}

impl StepSchedule {
    /// `C = 0` is accepted and freezes the iterate.
    pub fn new(c: f64, beta: f64) -> Result<Self> {
        if !(c >= 0.0 && c.is_finite()) {
            return invalid(format!("step constant C must be finite and non-negative, got {c}"));
        }
        if !(0.0..=1.0).contains(&beta) {
            return invalid(format!("step exponent beta must lie in [0, 1], got {beta}"));
        }
        Ok(Self { c, beta })
    }

    /// `η_t` for `t ≥ 1`.
    pub fn eta(&self, t: usize) -> f64 {
        self.c * (t as f64).powf(-self.beta)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Batching {
    /// One pass, one data point per update, in order.
    Online,
    /// Every update uses the whole dataset.
    FullBatch,
    /// Each update draws a uniform size-`B` subset, independently.
    WithReplacement { batch_size: usize },
    /// Each epoch partitions a fresh random permutation into batches of `B`;
    /// the last batch is short when `B` does not divide `n`.
    Reshuffle { batch_size: usize },
}

impl Batching {
    /// Effective batch size for a dataset of `n` points.
    pub fn batch_size(&self, n: usize) -> usize {
        match *self {
            Batching::Online => 1,
            Batching::FullBatch => n,
            Batching::WithReplacement { batch_size } | Batching::Reshuffle { batch_size } => batch_size,
        }
    }
}

/// Which iterates a [`Trajectory`] keeps.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Storage {
    #[default]
    All,
    /// Only the iterate at the end of each epoch. The running average still
    /// covers every update.
    EpochEnds,
}

#[derive(Clone, Debug)]
pub struct CdConfig {
    /// MCMC steps per negative sample. `0` makes every gradient vanish.
    pub m: usize,
    pub schedule: StepSchedule,
    pub batching: Batching,
    /// Passes over the data for offline runs; ignored online.
    pub epochs: usize,
    pub domain: ParamDomain,
    pub psi0: DVector<f64>,
    pub seed: u64,
    pub storage: Storage,
}

impl CdConfig {
    pub(crate) fn validate(&self, p: usize) -> Result<()> {
        if self.domain.dim() != p || self.psi0.len() != p {
            return invalid(format!(
                "model has dimension {p}, domain {} and psi0 {}",
                self.domain.dim(),
                self.psi0.len()
            ));
        }
        if !self.domain.contains_interior(&self.psi0, -1e-12) {
            return invalid("psi0 lies outside the parameter domain");
        }
        StepSchedule::new(self.schedule.c, self.schedule.beta)?;
        Ok(())
    }
}

/// Iterates of a CD run.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    /// `ψ_1, ψ_2, …` in update order (after projection), or one per epoch
    /// under [`Storage::EpochEnds`]. `ψ_0` is not included.
    pub iterates: Vec<DVector<f64>>,
    pub final_iterate: DVector<f64>,
    /// Mean of all post-update iterates `ψ_1..ψ_U`.
    pub average: DVector<f64>,
    pub update_count: usize,
    /// Updates whose raw step left the domain and were projected back.
    pub boundary_hits: usize,
    pub updates_per_epoch: usize,
}

impl Trajectory {
    pub fn boundary_fraction(&self) -> f64 {
        if self.update_count == 0 {
            0.0
        } else {
            self.boundary_hits as f64 / self.update_count as f64
        }
    }
}

/// Minimal read access to a dataset, so that tests can observe which points
/// are read and when.
pub trait Dataset {
    fn len(&self) -> usize;
    fn point(&self, i: usize) -> &Point;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl Dataset for [Point] {
    fn len(&self) -> usize {
        <[Point]>::len(self)
    }
    fn point(&self, i: usize) -> &Point {
        &self[i]
    }
}

impl Dataset for Vec<Point> {
    fn len(&self) -> usize {
        Vec::len(self)
    }
    fn point(&self, i: usize) -> &Point {
        &self[i]
    }
}

/// `Proj_Ψ(ψ)`.
pub fn project(psi: &DVector<f64>, domain: &ParamDomain) -> DVector<f64> {
    domain.project(psi)
}

/// CD estimate of `∇ℒ(ψ)` on an explicit batch, drawing all chains from one
/// stream in batch order.
pub fn cd_gradient<R: Rng + ?Sized>(
    kernel: &MarkovKernel<'_>,
    psi: &DVector<f64>,
    batch: &[Point],
    m: usize,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if batch.is_empty() {
        return invalid("CD gradient needs a non-empty batch");
    }
    let model = kernel.model();
    let at = kernel.at(psi)?;
    let p = model.dim();
    let mut h = vec![0.0; p];
    let mut buf = vec![0.0; p];
    for x in batch {
        model.check_point(x)?;
        let mut y = x.clone();
        at.run(&mut y, m, rng);
        accumulate_difference(kernel, x, &y, &mut h, &mut buf);
    }
    let scale = 1.0 / batch.len() as f64;
    Ok(DVector::from_iterator(p, h.into_iter().map(|v| v * scale)))
}

/// `acc += φ(y) − φ(x)` for a data point `x` and its chain end `y`.
fn accumulate_difference(kernel: &MarkovKernel<'_>, x: &Point, y: &Point, acc: &mut [f64], buf: &mut [f64]) {
    let model = kernel.model();
    model.phi_into(y, buf);
    for (a, b) in acc.iter_mut().zip(buf.iter()) {
        *a += b;
    }
    model.phi_into(x, buf);
    for (a, b) in acc.iter_mut().zip(buf.iter()) {
        *a -= b;
    }
}

/// Batches at least this large run their chains on the rayon pool.
const PARALLEL_BATCH: usize = 128;

/// CD gradient for update number `update` (1-based), chain `i` drawing from
/// `substream(seed, [CHAIN, update, i])`. Chain contributions are reduced in
/// batch order whether or not they ran in parallel.
pub(crate) fn streamed_gradient<D: Dataset + ?Sized + Sync>(
    kernel: &MarkovKernel<'_>,
    at: &KernelAt<'_>,
    data: &D,
    batch: &[usize],
    m: usize,
    seed: u64,
    update: usize,
) -> Result<Vec<f64>> {
    let model = kernel.model();
    let p = model.dim();
    let chain = |i: usize| -> Result<Vec<f64>> {
        let x = data.point(i);
        model.check_point(x)?;
        let mut y = x.clone();
        let mut rng = substream(seed, &[tags::CHAIN, update as u64, i as u64]);
        at.run(&mut y, m, &mut rng);
        let mut diff = vec![0.0; p];
        let mut buf = vec![0.0; p];
        accumulate_difference(kernel, x, &y, &mut diff, &mut buf);
        Ok(diff)
    };
    let mut h = vec![0.0; p];
    if batch.len() >= PARALLEL_BATCH {
        let parts: Vec<Vec<f64>> = batch.par_iter().map(|&i| chain(i)).collect::<Result<_>>()?;
        for part in parts {
            for (a, b) in h.iter_mut().zip(part) {
                *a += b;
            }
        }
    } else {
        for &i in batch {
            for (a, b) in h.iter_mut().zip(chain(i)?) {
                *a += b;
            }
        }
    }
    let scale = 1.0 / batch.len() as f64;
    h.iter_mut().for_each(|v| *v *= scale);
    Ok(h)
}

/// Accumulates iterates, the running sum for the average and boundary hits.
pub(crate) struct Recorder {
    storage: Storage,
    iterates: Vec<DVector<f64>>,
    /// First recorded iterate; `sum` accumulates deviations from it, so a
    /// constant trajectory averages to itself exactly.
    origin: Option<DVector<f64>>,
    sum: DVector<f64>,
    count: usize,
    boundary_hits: usize,
}

impl Recorder {
    pub(crate) fn new(p: usize, storage: Storage, capacity: usize) -> Self {
        let capacity = if storage == Storage::All { capacity } else { 0 };
        Self {
            storage,
            iterates: Vec::with_capacity(capacity),
            origin: None,
            sum: DVector::zeros(p),
            count: 0,
            boundary_hits: 0,
        }
    }

    pub(crate) fn record(&mut self, psi: &DVector<f64>, projected: bool) {
        let origin = self.origin.get_or_insert_with(|| psi.clone());
        self.sum += psi - &*origin;
        self.count += 1;
        self.boundary_hits += usize::from(projected);
        if self.storage == Storage::All {
            self.iterates.push(psi.clone());
        }
    }

    pub(crate) fn end_epoch(&mut self, psi: &DVector<f64>) {
        if self.storage == Storage::EpochEnds {
            self.iterates.push(psi.clone());
        }
    }

    pub(crate) fn finish(self, final_iterate: DVector<f64>, updates_per_epoch: usize) -> Trajectory {
        let average = match &self.origin {
            None => final_iterate.clone(),
            Some(origin) => origin + &self.sum / self.count as f64,
        };
        Trajectory {
            iterates: self.iterates,
            final_iterate,
            average,
            update_count: self.count,
            boundary_hits: self.boundary_hits,
            updates_per_epoch,
        }
    }
}

/// One projected step `ψ ← Proj(ψ − η h)`; returns whether projection moved it.
pub(crate) fn apply_update(psi: &mut DVector<f64>, eta: f64, h: &[f64], domain: &ParamDomain) -> bool {
    for (v, g) in psi.iter_mut().zip(h) {
        *v -= eta * g;
    }
    domain.project_in_place(psi)
}

/// Runs the driver selected by `cfg.batching`.
pub fn run_cd<D: Dataset + ?Sized + Sync>(data: &D, kernel: &MarkovKernel<'_>, cfg: &CdConfig) -> Result<Trajectory> {
    match cfg.batching {
        Batching::Online => online_cd(data, kernel, cfg),
        _ => offline_cd(data, kernel, cfg),
    }
}

/// Mean of the stored iterates after dropping the first
/// `⌊burn_in_fraction · count⌋`.
pub fn polyak_average(traj: &Trajectory, burn_in_fraction: f64) -> Result<DVector<f64>> {
    if !(0.0..1.0).contains(&burn_in_fraction) {
        return invalid(format!("burn-in fraction must lie in [0, 1), got {burn_in_fraction}"));
    }
    let skip = (burn_in_fraction * traj.iterates.len() as f64).floor() as usize;
    let window = &traj.iterates[skip.min(traj.iterates.len())..];
    let Some(first) = window.first() else {
        return invalid("no iterates left to average");
    };
    let mut sum = DVector::zeros(first.len());
    for psi in window {
        sum += psi;
    }
    Ok(sum / window.len() as f64)
}

/// Smallest integer `m` with `m > (1 − β) ln n / (2 |ln α|)`.
pub fn m_schedule(n: usize, beta: f64, alpha: f64) -> Result<usize> {
    if n == 0 {
        return invalid("m_schedule needs n ≥ 1");
    }
    if !(0.0..=1.0).contains(&beta) {
        return invalid(format!("beta must lie in [0, 1], got {beta}"));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return invalid(format!("alpha must lie in (0, 1) for a finite chain length, got {alpha}"));
    }
    let threshold = (1.0 - beta) * (n as f64).ln() / (2.0 * alpha.ln().abs());
    Ok(threshold.floor() as usize + 1)
}
