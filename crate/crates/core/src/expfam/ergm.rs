use crate::error::{invalid, Result};

use super::Enumeration;

/// Largest node count for which the state table is built.
pub const ERGM_ENUM_MAX: usize = 6;

/// Random graph model on `k` labeled nodes with `φ(g) = (edges, triangles)`.
///
/// Graphs are edge bitmasks over the node pairs `(0,1), (0,2), …, (k−2,k−1)`.
#[derive(Clone, Debug)]
pub struct Ergm {
    k: usize,
    pairs: Vec<(usize, usize)>,
    /// `pair_id[i * k + j]` for `i ≠ j`.
    pair_id: Vec<usize>,
    table: Option<Enumeration>,
}

impl Ergm {
    pub fn new(k: usize) -> Result<Self> {
        // 11 nodes is the largest graph whose 55 edges fit a u64 mask.
        if !(2..=11).contains(&k) {
            return invalid(format!("ergm needs 2 ≤ k ≤ 11, got {k}"));
        }
        let mut pairs = Vec::new();
        let mut pair_id = vec![usize::MAX; k * k];
        for i in 0..k {
            for j in i + 1..k {
                pair_id[i * k + j] = pairs.len();
                pair_id[j * k + i] = pairs.len();
                pairs.push((i, j));
            }
        }
        let mut model = Self { k, pairs, pair_id, table: None };
        if k <= ERGM_ENUM_MAX {
            let table = Enumeration::build(1 << model.pair_count(), 2, |s, row| model.phi_into(s, row));
            model.table = Some(table);
        }
        Ok(model)
    }

    pub fn nodes(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        2
    }

    pub fn pair_count(&self) -> usize {
        self.pairs.len()
    }

    pub fn pair(&self, e: usize) -> (usize, usize) {
        self.pairs[e]
    }

    pub fn enumeration(&self) -> Option<&Enumeration> {
        self.table.as_ref()
    }

    fn has_edge(&self, mask: u64, i: usize, j: usize) -> bool {
        (mask >> self.pair_id[i * self.k + j]) & 1 == 1
    }

    /// Number of nodes adjacent to both ends of pair `e`.
    pub fn common_neighbors(&self, mask: u64, e: usize) -> usize {
        let (i, j) = self.pairs[e];
        (0..self.k)
            .filter(|&v| v != i && v != j && self.has_edge(mask, i, v) && self.has_edge(mask, j, v))
            .count()
    }

    pub fn phi_into(&self, mask: u64, out: &mut [f64]) {
        let edges = mask.count_ones();
        let mut triangles = 0u32;
        for a in 0..self.k {
            for b in a + 1..self.k {
                if !self.has_edge(mask, a, b) {
                    continue;
                }
                for c in b + 1..self.k {
                    if self.has_edge(mask, a, c) && self.has_edge(mask, b, c) {
                        triangles += 1;
                    }
                }
            }
        }
        out[0] = edges as f64;
        out[1] = triangles as f64;
    }

    /// Change in `φ` from toggling pair `e`.
    pub fn toggle_delta(&self, mask: u64, e: usize) -> [f64; 2] {
        let sign = if (mask >> e) & 1 == 1 { -1.0 } else { 1.0 };
        [sign, sign * self.common_neighbors(mask, e) as f64]
    }
}
