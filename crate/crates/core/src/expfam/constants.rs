use nalgebra::{DVector, SymmetricEigen};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{invalid, Result};

use super::{Model, ParamDomain};

/// Upper limit on `resolution^p`, the number of lattice nodes examined before
/// intersecting with the ball.
pub const MAX_LATTICE_CANDIDATES: u64 = 2_000_000;

/// Grid estimates of the constants governing CD convergence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct TheoryConstants {
    /// Smallest Fisher eigenvalue over the grid.
    pub mu: f64,
    /// Largest Fisher eigenvalue over the grid.
    pub l: f64,
    /// `sqrt` of the largest Fisher trace over the grid.
    pub sigma: f64,
    /// Largest `sqrt(χ²(p_{ψ*}, p_ψ)) / ‖ψ − ψ*‖` over the grid.
    pub c_chi: f64,
    /// Set when some χ² value overflowed, in which case `c_chi` is `+∞`.
    pub chi2_overflow: bool,
    pub grid_points: usize,
}

/// Lattice of `resolution` points per axis on the bounding cube of `domain`,
/// restricted to the ball, plus the ball center and every point of `extra`
/// (deduplicated). Points come out in lexicographic lattice order followed by
/// the extras.
pub fn lattice_grid(domain: &ParamDomain, resolution: usize, extra: &[DVector<f64>]) -> Result<Vec<DVector<f64>>> {
    if resolution < 2 {
        return invalid(format!("grid resolution must be at least 2, got {resolution}"));
    }
    let p = domain.dim();
    let candidates = (resolution as u64).checked_pow(p as u32).filter(|&n| n <= MAX_LATTICE_CANDIDATES);
    let Some(candidates) = candidates else {
        return invalid(format!(
            "a lattice with {resolution} points per axis in dimension {p} exceeds {MAX_LATTICE_CANDIDATES} nodes"
        ));
    };
    let c = domain.center();
    let r = domain.radius();
    let axis: Vec<f64> = (0..resolution)
        .map(|k| -r + 2.0 * r * k as f64 / (resolution - 1) as f64)
        .collect();
    // Slack so that nodes exactly on the sphere survive rounding.
    let tol = 1e-12 * r.max(1.0);
    let mut grid = Vec::new();
    let mut idx = vec![0usize; p];
    for _ in 0..candidates {
        let offset = DVector::from_iterator(p, idx.iter().map(|&k| axis[k]));
        if offset.norm() <= r + tol {
            grid.push(c + offset);
        }
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < resolution {
                break;
            }
            *slot = 0;
        }
    }
    let same = |a: &DVector<f64>, b: &DVector<f64>| (a - b).amax() <= tol;
    for point in std::iter::once(c).chain(extra.iter()) {
        if !grid.iter().any(|g| same(g, point)) {
            grid.push(point.clone());
        }
    }
    Ok(grid)
}

/// Radial projections onto the sphere `‖ψ − c‖ = r` of the lattice directions
/// of [`lattice_grid`], one point per distinct direction, in lexicographic
/// order of the primitive integer direction.
///
/// The lattice alone rarely touches the sphere, where χ² ratios and the logZ
/// norms peak.
pub fn boundary_points(domain: &ParamDomain, resolution: usize) -> Result<Vec<DVector<f64>>> {
    if resolution < 2 {
        return invalid(format!("grid resolution must be at least 2, got {resolution}"));
    }
    let p = domain.dim();
    let candidates = (resolution as u64).checked_pow(p as u32).filter(|&n| n <= MAX_LATTICE_CANDIDATES);
    let Some(candidates) = candidates else {
        return invalid(format!(
            "a lattice with {resolution} points per axis in dimension {p} exceeds {MAX_LATTICE_CANDIDATES} nodes"
        ));
    };
    // Offsets 2k − (resolution − 1) keep even resolutions on the integers.
    let mut dirs = std::collections::BTreeSet::new();
    let mut idx = vec![0i64; p];
    for _ in 0..candidates {
        let off: Vec<i64> = idx.iter().map(|&k| 2 * k - (resolution as i64 - 1)).collect();
        let g = off.iter().fold(0, |g, &x| gcd(g, x.abs()));
        if g > 0 {
            dirs.insert(off.iter().map(|x| x / g).collect::<Vec<_>>());
        }
        for slot in idx.iter_mut().rev() {
            *slot += 1;
            if *slot < resolution as i64 {
                break;
            }
            *slot = 0;
        }
    }
    let c = domain.center();
    let r = domain.radius();
    Ok(dirs
        .into_iter()
        .map(|d| {
            let u = DVector::from_iterator(p, d.into_iter().map(|x| x as f64));
            c + u.normalize() * r
        })
        .collect())
}

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 { a } else { gcd(b, a % b) }
}

/// Estimates `μ`, `L`, `σ` and `C_χ` by exhaustive evaluation on
/// [`lattice_grid`] (which always contains the center and `ψ*`) together with
/// [`boundary_points`].
pub fn theory_constants(
    model: &Model,
    domain: &ParamDomain,
    psi_star: &DVector<f64>,
    grid_resolution: usize,
) -> Result<TheoryConstants> {
    model.check_param(psi_star)?;
    model.check_param(domain.center())?;
    let mut grid = lattice_grid(domain, grid_resolution, std::slice::from_ref(psi_star))?;
    grid.extend(boundary_points(domain, grid_resolution)?);

    struct Local {
        lmin: f64,
        lmax: f64,
        trace: f64,
        ratio: Option<f64>,
        overflow: bool,
    }
    let locals: Vec<Local> = grid
        .par_iter()
        .map(|psi| -> Result<Local> {
            let fisher = model.fisher_information(psi)?;
            let trace = fisher.trace();
            let eig = SymmetricEigen::new(fisher).eigenvalues;
            let dist = (psi - psi_star).norm();
            let (ratio, overflow) = if dist > 0.0 {
                let chi2 = model.chi2_divergence(psi_star, psi)?;
                (Some(chi2.value.sqrt() / dist), chi2.overflow)
            } else {
                (None, false)
            };
            Ok(Local { lmin: eig.min(), lmax: eig.max(), trace, ratio, overflow })
        })
        .collect::<Result<_>>()?;

    let mut out = TheoryConstants {
        mu: f64::INFINITY,
        l: 0.0,
        sigma: 0.0,
        c_chi: 0.0,
        chi2_overflow: false,
        grid_points: grid.len(),
    };
    let mut max_trace: f64 = 0.0;
    for loc in &locals {
        out.mu = out.mu.min(loc.lmin);
        out.l = out.l.max(loc.lmax);
        max_trace = max_trace.max(loc.trace);
        if let Some(ratio) = loc.ratio {
            out.c_chi = out.c_chi.max(ratio);
        }
        out.chi2_overflow |= loc.overflow;
    }
    out.sigma = max_trace.sqrt();
    Ok(out)
}
