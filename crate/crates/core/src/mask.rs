//! Observation masks: which domains have training data.

use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::grid::DomainGrid;

/// Sorted set of seen flat domain indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObservationMask {
    grid: DomainGrid,
    seen: Vec<usize>,
}

impl ObservationMask {
    pub fn new(grid: DomainGrid, mut seen: Vec<usize>) -> Result<Self> {
        seen.sort_unstable();
        if seen.is_empty() {
            bail!(Argument, "mask must contain at least one domain");
        }
        if seen.windows(2).any(|w| w[0] == w[1]) {
            bail!(Argument, "mask indices must be distinct");
        }
        if let Some(&t) = seen.last().filter(|&&t| t >= grid.len()) {
            bail!(Bounds, "mask index {t} outside [0, {})", grid.len());
        }
        Ok(Self { grid, seen })
    }

    pub fn all(grid: DomainGrid) -> Self {
        let seen = (0..grid.len()).collect();
        Self { grid, seen }
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn seen(&self) -> &[usize] {
        &self.seen
    }

    /// Number of seen domains `T`.
    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }

    pub fn contains(&self, t: usize) -> bool {
        self.seen.binary_search(&t).is_ok()
    }

    pub fn unseen(&self) -> Vec<usize> {
        (0..self.grid.len()).filter(|&t| !self.contains(t)).collect()
    }

    /// True when every level of every mode appears in some seen domain.
    pub fn covers_all_levels(&self) -> bool {
        let dims = self.grid.dims();
        let mut hit: Vec<Vec<bool>> = dims.iter().map(|&d| alloc::vec![false; d]).collect();
        for &t in &self.seen {
            for (m, l) in self.grid.levels_unchecked(t).into_iter().enumerate() {
                hit[m][l] = true;
            }
        }
        hit.iter().flatten().all(|&h| h)
    }

    /// Smallest and mean Manhattan distance from `t` to the seen set.
    pub fn distances(&self, t: usize) -> (usize, f64) {
        let mut min = usize::MAX;
        let mut sum = 0usize;
        for &s in &self.seen {
            let d = self.grid.manhattan(t, s);
            min = min.min(d);
            sum += d;
        }
        (min, sum as f64 / self.seen.len() as f64)
    }
}

/// `T` domains drawn uniformly without replacement.
pub fn sample_mask<R: rand::Rng>(grid: &DomainGrid, count: usize, rng: &mut R) -> Result<ObservationMask> {
    if count == 0 || count > grid.len() {
        bail!(Argument, "T must lie in [1, {}], got {count}", grid.len());
    }
    let seen = rand::seq::index::sample(rng, grid.len(), count).into_vec();
    ObservationMask::new(grid.clone(), seen)
}

/// The diagonal cells `(i, i)` of a square two-mode grid.
pub fn diagonal_mask(grid: &DomainGrid) -> Result<ObservationMask> {
    match grid.dims() {
        &[a, b] if a == b => {
            let seen = (0..a).map(|i| i * b + i).collect();
            ObservationMask::new(grid.clone(), seen)
        }
        dims => bail!(UnsupportedDesign, "diagonal design needs a square two-mode grid, got {dims:?}"),
    }
}
