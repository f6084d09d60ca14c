//! Domain lattice and row-major addressing.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// The `d_1 × … × d_M` lattice of domains.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct DomainGrid {
    dims: Vec<usize>,
    len: usize,
}

/// Address of one domain: one level per mode.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MultiIndex(pub Vec<usize>);

impl DomainGrid {
    pub fn new(dims: Vec<usize>) -> Result<Self> {
        if dims.is_empty() {
            bail!(Shape, "domain grid needs at least one mode");
        }
        if let Some(m) = dims.iter().position(|&d| d == 0) {
            bail!(Shape, "mode {m} has zero levels");
        }
        let len = dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| crate::Error::Shape(alloc::format!("grid {dims:?} overflows")))?;
        Ok(Self { dims, len })
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    /// Number of modes `M`.
    pub fn modes(&self) -> usize {
        self.dims.len()
    }

    /// Total number of domains `D`.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn max_levels(&self) -> usize {
        self.dims.iter().copied().max().unwrap_or(1)
    }

    /// Sum of levels over modes, the length of a concatenated one-hot descriptor.
    pub fn total_levels(&self) -> usize {
        self.dims.iter().sum()
    }

    /// Row-major flat index; the last mode varies fastest.
    pub fn flat_index(&self, idx: &MultiIndex) -> Result<usize> {
        if idx.0.len() != self.dims.len() {
            bail!(
                Bounds,
                "multi-index has {} entries, grid has {} modes",
                idx.0.len(),
                self.dims.len()
            );
        }
        let mut t = 0;
        for (m, (&i, &d)) in idx.0.iter().zip(&self.dims).enumerate() {
            if i >= d {
                bail!(Bounds, "level {i} of mode {m} outside [0, {d})");
            }
            t = t * d + i;
        }
        Ok(t)
    }

    pub fn multi_index(&self, t: usize) -> Result<MultiIndex> {
        if t >= self.len {
            bail!(Bounds, "flat index {t} outside [0, {})", self.len);
        }
        Ok(MultiIndex(self.levels_unchecked(t)))
    }

    /// Levels of flat index `t` without the bounds check.
    pub(crate) fn levels_unchecked(&self, mut t: usize) -> Vec<usize> {
        let mut out = alloc::vec![0; self.dims.len()];
        for (slot, &d) in out.iter_mut().zip(&self.dims).rev() {
            *slot = t % d;
            t /= d;
        }
        out
    }

    /// Iterates over all multi-indices in flat order.
    pub fn iter(&self) -> impl Iterator<Item = MultiIndex> + '_ {
        (0..self.len).map(move |t| MultiIndex(self.levels_unchecked(t)))
    }

    /// Sum over modes of absolute level differences.
    pub fn manhattan(&self, a: usize, b: usize) -> usize {
        let la = self.levels_unchecked(a);
        let lb = self.levels_unchecked(b);
        la.iter().zip(&lb).map(|(&x, &y)| x.abs_diff(y)).sum()
    }
}

impl TryFrom<Vec<usize>> for DomainGrid {
    type Error = crate::Error;
    fn try_from(dims: Vec<usize>) -> Result<Self> {
        Self::new(dims)
    }
}

impl From<DomainGrid> for Vec<usize> {
    fn from(g: DomainGrid) -> Self {
        g.dims
    }
}

impl MultiIndex {
    pub fn levels(&self) -> &[usize] {
        &self.0
    }
}

impl From<Vec<usize>> for MultiIndex {
    fn from(v: Vec<usize>) -> Self {
        Self(v)
    }
}
