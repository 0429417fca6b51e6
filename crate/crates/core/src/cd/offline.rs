use rand::seq::{index, SliceRandom};

use crate::error::{invalid, Result};
use crate::kernels::MarkovKernel;
use crate::rng::{substream, tags};

use super::{apply_update, streamed_gradient, Batching, CdConfig, Dataset, Recorder, Trajectory};

/// The batches of epoch `epoch` (1-based) for a dataset of `n` points.
///
/// Indices inside a batch are sorted, so every schedule with `B = n` yields
/// the single batch `[0, n)` and the same trajectory as full-batch descent.
/// With-replacement batches of update `j` come from `(BATCH, epoch, j)`;
/// the reshuffling permutation of an epoch from `(BATCH, epoch)`.
pub fn epoch_batches(batching: Batching, n: usize, seed: u64, epoch: usize) -> Result<Vec<Vec<usize>>> {
    if n == 0 {
        return invalid("empty dataset");
    }
    let b = batching.batch_size(n);
    if b == 0 {
        return invalid("batch size must be at least 1");
    }
    if b > n {
        return invalid(format!("batch size {b} exceeds the {n} data points"));
    }
    let batches = match batching {
        Batching::Online => (0..n).map(|i| vec![i]).collect(),
        Batching::FullBatch => vec![(0..n).collect()],
        Batching::WithReplacement { .. } => (0..n.div_ceil(b))
            .map(|j| {
                let mut rng = substream(seed, &[tags::BATCH, epoch as u64, j as u64]);
                let mut batch = index::sample(&mut rng, n, b).into_vec();
                batch.sort_unstable();
                batch
            })
            .collect(),
        Batching::Reshuffle { .. } => {
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut substream(seed, &[tags::BATCH, epoch as u64]));
            perm.chunks(b)
                .map(|c| {
                    let mut batch = c.to_vec();
                    batch.sort_unstable();
                    batch
                })
                .collect()
        }
    };
    Ok(batches)
}

/// Multi-epoch projected CD with `N = ⌈n/B⌉` updates per epoch and step size
/// `η_t = C t^{−β}` held fixed within epoch `t`.
pub fn offline_cd<D: Dataset + ?Sized + Sync>(data: &D, kernel: &MarkovKernel<'_>, cfg: &CdConfig) -> Result<Trajectory> {
    if cfg.batching == Batching::Online {
        return invalid("offline_cd needs a full-batch, with-replacement or reshuffle schedule");
    }
    if cfg.epochs < 1 {
        return invalid("offline CD needs at least one epoch");
    }
    let n = data.len();
    let model = kernel.model();
    cfg.validate(model.dim())?;
    let per_epoch = n.div_ceil(cfg.batching.batch_size(n).max(1));

    let mut psi = cfg.psi0.clone();
    let mut rec = Recorder::new(model.dim(), cfg.storage, per_epoch * cfg.epochs);
    let mut update = 0usize;
    for epoch in 1..=cfg.epochs {
        let eta = cfg.schedule.eta(epoch);
        for batch in epoch_batches(cfg.batching, n, cfg.seed, epoch)? {
            update += 1;
            let at = kernel.at(&psi)?;
            let h = streamed_gradient(kernel, &at, data, &batch, cfg.m, cfg.seed, update)?;
            let projected = apply_update(&mut psi, eta, &h, &cfg.domain);
            rec.record(&psi, projected);
        }
        rec.end_epoch(&psi);
    }
    Ok(rec.finish(psi, per_epoch))
}
