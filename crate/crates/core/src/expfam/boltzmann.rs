use crate::error::{invalid, Result};

use super::Enumeration;

/// Largest number of units for which the state table is built.
pub const BOLTZMANN_ENUM_MAX: usize = 12;

/// Fully visible Boltzmann machine on `{0,1}^d`.
///
/// `φ(x)` lists the singles `x_1..x_d` followed by the pairs `x_i x_j`, `i < j`,
/// in lexicographic order. The carrier is counting measure.
#[derive(Clone, Debug)]
pub struct Boltzmann {
    d: usize,
    table: Option<Enumeration>,
}

impl Boltzmann {
    pub fn new(d: usize) -> Result<Self> {
        if d == 0 || d > 64 {
            return invalid(format!("boltzmann needs 1 ≤ d ≤ 64, got {d}"));
        }
        let mut model = Self { d, table: None };
        if d <= BOLTZMANN_ENUM_MAX {
            let p = model.dim();
            let table = Enumeration::build(1 << d, p, |s, row| model.phi_into(s, row));
            model.table = Some(table);
        }
        Ok(model)
    }

    pub fn units(&self) -> usize {
        self.d
    }

    pub fn dim(&self) -> usize {
        self.d + self.d * (self.d - 1) / 2
    }

    pub fn enumeration(&self) -> Option<&Enumeration> {
        self.table.as_ref()
    }

    /// Position of the pair statistic `x_i x_j` (`i ≠ j`) in `φ`.
    pub fn pair_index(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        debug_assert!(j < self.d && i != j);
        self.d + i * self.d - i * (i + 1) / 2 + (j - i - 1)
    }

    pub fn phi_into(&self, mask: u64, out: &mut [f64]) {
        let d = self.d;
        let mut k = d;
        for i in 0..d {
            let xi = (mask >> i) & 1;
            out[i] = xi as f64;
            for j in i + 1..d {
                out[k] = (xi & (mask >> j) & 1) as f64;
                k += 1;
            }
        }
    }

    /// Log-odds of `x_i = 1` given the remaining units.
    pub fn conditional_logit(&self, psi: &[f64], mask: u64, i: usize) -> f64 {
        let mut eta = psi[i];
        for j in 0..self.d {
            if j != i && (mask >> j) & 1 == 1 {
                eta += psi[self.pair_index(i, j)];
            }
        }
        eta
    }
}
