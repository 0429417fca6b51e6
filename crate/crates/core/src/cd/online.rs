use crate::error::{invalid, Result};
use crate::kernels::MarkovKernel;

use super::{apply_update, streamed_gradient, Batching, CdConfig, Dataset, Recorder, Trajectory};

/// Single-pass projected CD: update `t` uses data point `t` only, with the
/// chain started at that point under `ψ_{t−1}`.
pub fn online_cd<D: Dataset + ?Sized + Sync>(data: &D, kernel: &MarkovKernel<'_>, cfg: &CdConfig) -> Result<Trajectory> {
    if cfg.batching != Batching::Online {
        return invalid(format!("online_cd needs online batching, got {:?}", cfg.batching));
    }
    let n = data.len();
    if n == 0 {
        return invalid("online CD needs at least one data point");
    }
    let model = kernel.model();
    cfg.validate(model.dim())?;

    let mut psi = cfg.psi0.clone();
    let mut rec = Recorder::new(model.dim(), cfg.storage, n);
    for t in 1..=n {
        let at = kernel.at(&psi)?;
        let h = streamed_gradient(kernel, &at, data, &[t - 1], cfg.m, cfg.seed, t)?;
        let projected = apply_update(&mut psi, cfg.schedule.eta(t), &h, &cfg.domain);
        rec.record(&psi, projected);
    }
    rec.end_epoch(&psi);
    Ok(rec.finish(psi, n))
}
