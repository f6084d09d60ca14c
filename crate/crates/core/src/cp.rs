//! Rank-K multilinear heads: every domain's head is a sum over rank terms of
//! Hadamard products of per-mode factor rows,
//! `w_t = Σ_k ⊙_m α[k][m][t_m]`.

use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::grid::{DomainGrid, MultiIndex};

/// Per-mode factor matrices of a rank-`K` head tensor.
///
/// Block `(k, m)` is a `d_m × q` row-major matrix; its row `l` is the
/// factor vector for level `l` of mode `m` in rank term `k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CPFactors {
    grid: DomainGrid,
    rank: usize,
    width: usize,
    blocks: Vec<Vec<f64>>,
}

/// Dense `D × q` array of per-domain heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadTensor {
    grid: DomainGrid,
    width: usize,
    values: Vec<f64>,
}

impl CPFactors {
    pub fn zeros(grid: DomainGrid, rank: usize, width: usize) -> Result<Self> {
        if rank == 0 || width == 0 {
            bail!(Shape, "rank and head width must be positive (got K={rank}, q={width})");
        }
        let blocks = (0..rank)
            .flat_map(|_| grid.dims().iter().map(|&d| vec![0.0; d * width]))
            .collect();
        Ok(Self { grid, rank, width, blocks })
    }

    /// Builds factors from explicit blocks ordered `[k][m]`.
    pub fn from_blocks(grid: DomainGrid, rank: usize, width: usize, blocks: Vec<Vec<f64>>) -> Result<Self> {
        let f = Self::zeros(grid, rank, width)?;
        if blocks.len() != f.blocks.len() {
            bail!(Shape, "expected {} factor blocks, got {}", f.blocks.len(), blocks.len());
        }
        for (i, (b, want)) in blocks.iter().zip(&f.blocks).enumerate() {
            if b.len() != want.len() {
                bail!(Shape, "factor block {i} has {} entries, expected {}", b.len(), want.len());
            }
            if b.iter().any(|v| !v.is_finite()) {
                bail!(Data, "factor block {i} has non-finite entries");
            }
        }
        Ok(Self { blocks, ..f })
    }

    /// Factors with iid `uniform(lo, hi)` entries.
    pub fn random_uniform<R: Rng>(grid: DomainGrid, rank: usize, width: usize, lo: f64, hi: f64, rng: &mut R) -> Result<Self> {
        let mut f = Self::zeros(grid, rank, width)?;
        for b in &mut f.blocks {
            for v in b.iter_mut() {
                *v = rng.random_range(lo..hi);
            }
        }
        Ok(f)
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    /// Head width `q`.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn block(&self, k: usize, m: usize) -> &[f64] {
        &self.blocks[k * self.grid.modes() + m]
    }

    pub fn block_mut(&mut self, k: usize, m: usize) -> &mut [f64] {
        let modes = self.grid.modes();
        &mut self.blocks[k * modes + m]
    }

    pub fn blocks(&self) -> &[Vec<f64>] {
        &self.blocks
    }

    pub fn blocks_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.blocks
    }

    pub fn row(&self, k: usize, m: usize, level: usize) -> &[f64] {
        let q = self.width;
        &self.block(k, m)[level * q..(level + 1) * q]
    }

    /// Iterates over every factor row `α[k][m][l]`.
    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.blocks.iter().flat_map(move |b| b.chunks_exact(self.width))
    }

    /// Head for one domain.
    pub fn reconstruct(&self, idx: &MultiIndex) -> Result<Vec<f64>> {
        self.grid.flat_index(idx)?;
        let mut out = vec![0.0; self.width];
        self.accumulate_head(idx.levels(), &mut out);
        Ok(out)
    }

    /// Adds `Σ_k ⊙_m α[k][m][levels[m]]` into `out`.
    pub(crate) fn accumulate_head(&self, levels: &[usize], out: &mut [f64]) {
        let q = self.width;
        let mut term = vec![0.0; q];
        for k in 0..self.rank {
            term.copy_from_slice(self.row(k, 0, levels[0]));
            for (m, &l) in levels.iter().enumerate().skip(1) {
                for (t, a) in term.iter_mut().zip(&self.block(k, m)[l * q..(l + 1) * q]) {
                    *t *= a;
                }
            }
            for (o, t) in out.iter_mut().zip(&term) {
                *o += t;
            }
        }
    }

    /// Heads for every domain.
    pub fn materialize(&self) -> HeadTensor {
        let q = self.width;
        let mut values = vec![0.0; self.grid.len() * q];
        for (t, row) in values.chunks_exact_mut(q).enumerate() {
            let levels = self.grid.levels_unchecked(t);
            self.accumulate_head(&levels, row);
        }
        HeadTensor { grid: self.grid.clone(), width: q, values }
    }

    /// Multiplies every entry of block `(k, m)` by `c`.
    pub fn scale_block(&mut self, k: usize, m: usize, c: f64) {
        for v in self.block_mut(k, m) {
            *v *= c;
        }
    }

    pub fn is_finite(&self) -> bool {
        self.blocks.iter().flatten().all(|v| v.is_finite())
    }
}

/// Ones-padded rank-`(M+1)` factors for the additive head
/// `w_t = u + Σ_m β_m[t_m]`.
///
/// Term `m < M` carries `β_m` on mode `m` and all-ones rows elsewhere; the last
/// term carries `u` on mode 0 and ones on the remaining modes.
pub fn additive_to_cp(grid: &DomainGrid, shared: &[f64], per_mode: &[Vec<f64>]) -> Result<CPFactors> {
    let q = shared.len();
    let modes = grid.modes();
    if per_mode.len() != modes {
        bail!(Shape, "expected {modes} per-mode matrices, got {}", per_mode.len());
    }
    for (m, (b, &d)) in per_mode.iter().zip(grid.dims()).enumerate() {
        if b.len() != d * q {
            bail!(Shape, "per-mode matrix {m} has {} entries, expected {d}×{q}", b.len());
        }
    }
    let mut f = CPFactors::zeros(grid.clone(), modes + 1, q)?;
    for k in 0..=modes {
        for (m, &d) in grid.dims().iter().enumerate() {
            let block = f.block_mut(k, m);
            if k == m {
                block.copy_from_slice(&per_mode[m]);
            } else if k == modes && m == 0 {
                for row in block.chunks_exact_mut(q) {
                    row.copy_from_slice(shared);
                }
            } else {
                debug_assert_eq!(block.len(), d * q);
                block.fill(1.0);
            }
        }
    }
    Ok(f)
}

impl HeadTensor {
    pub fn new(grid: DomainGrid, width: usize, values: Vec<f64>) -> Result<Self> {
        if width == 0 {
            bail!(Shape, "head width must be positive");
        }
        if values.len() != grid.len() * width {
            bail!(Shape, "head tensor has {} values, expected {}×{}", values.len(), grid.len(), width);
        }
        if values.iter().any(|v| !v.is_finite()) {
            bail!(Data, "head tensor has non-finite entries");
        }
        Ok(Self { grid, width, values })
    }

    pub fn zeros(grid: DomainGrid, width: usize) -> Self {
        let values = vec![0.0; grid.len() * width];
        Self { grid, width, values }
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.values[t * self.width..(t + 1) * self.width]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.values[t * self.width..(t + 1) * self.width]
    }

    pub fn rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.width)
    }

    /// Frobenius norm of the whole tensor.
    pub fn norm(&self) -> f64 {
        libm::sqrt(self.values.iter().map(|v| v * v).sum())
    }

    /// `‖self − other‖_F / ‖other‖_F`, or the absolute distance when `other` is zero.
    pub fn relative_error(&self, other: &HeadTensor) -> f64 {
        let diff: f64 = self.values.iter().zip(&other.values).map(|(a, b)| (a - b) * (a - b)).sum();
        let base = other.norm();
        if base == 0.0 {
            libm::sqrt(diff)
        } else {
            libm::sqrt(diff) / base
        }
    }
}
