//! Labelled samples grouped by domain.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};
use crate::grid::DomainGrid;
use crate::mask::ObservationMask;
use crate::model::{Example, LossKind, LossSpec};

/// Shape of one input: a plain vector or a row-major raster.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputShape {
    Vector(usize),
    Raster { height: usize, width: usize },
}

impl InputShape {
    pub fn len(&self) -> usize {
        match *self {
            Self::Vector(r) => r,
            Self::Raster { height, width } => height * width,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub x: Vec<f64>,
    pub y: f64,
}

/// Free-form generator description carried along with a dataset.
pub type Provenance = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainDataset {
    grid: DomainGrid,
    input: InputShape,
    loss: LossSpec,
    /// Samples per stored domain.
    n: usize,
    /// Set when some non-empty domain holds a count other than `n`.
    partial: bool,
    provenance: Provenance,
    domains: Vec<Vec<Sample>>,
}

impl DomainDataset {
    /// Empty dataset; fill it with [`Self::set_domain`].
    pub fn new(grid: DomainGrid, input: InputShape, loss: LossSpec, n: usize, provenance: Provenance) -> Result<Self> {
        loss.validate()?;
        if input.is_empty() {
            bail!(Shape, "input dimension must be positive");
        }
        let domains = (0..grid.len()).map(|_| Vec::new()).collect();
        Ok(Self { grid, input, loss, n, partial: false, provenance, domains })
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn input(&self) -> InputShape {
        self.input
    }

    pub fn input_dim(&self) -> usize {
        self.input.len()
    }

    pub fn loss(&self) -> LossSpec {
        self.loss
    }

    pub fn task(&self) -> LossKind {
        self.loss.kind
    }

    pub fn classes(&self) -> usize {
        self.loss.classes
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn is_partial(&self) -> bool {
        self.partial
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn provenance_mut(&mut self) -> &mut Provenance {
        &mut self.provenance
    }

    pub fn domain(&self, t: usize) -> &[Sample] {
        &self.domains[t]
    }

    pub fn domains(&self) -> &[Vec<Sample>] {
        &self.domains
    }

    /// Domains holding at least one sample.
    pub fn stored_domains(&self) -> Vec<usize> {
        (0..self.domains.len()).filter(|&t| !self.domains[t].is_empty()).collect()
    }

    pub fn total_samples(&self) -> usize {
        self.domains.iter().map(Vec::len).sum()
    }

    /// Replaces the samples of domain `t` after validating shapes and labels.
    pub fn set_domain(&mut self, t: usize, samples: Vec<Sample>) -> Result<()> {
        if t >= self.grid.len() {
            bail!(Bounds, "domain {t} outside [0, {})", self.grid.len());
        }
        for (i, s) in samples.iter().enumerate() {
            self.check_sample(s).map_err(|e| crate::Error::Data(alloc::format!("domain {t} sample {i}: {e}")))?;
        }
        self.domains[t] = samples;
        self.partial = self.domains.iter().any(|d| !d.is_empty() && d.len() != self.n);
        Ok(())
    }

    pub fn push(&mut self, t: usize, sample: Sample) -> Result<()> {
        if t >= self.grid.len() {
            bail!(Bounds, "domain {t} outside [0, {})", self.grid.len());
        }
        self.check_sample(&sample)?;
        self.domains[t].push(sample);
        self.partial = self.domains.iter().any(|d| !d.is_empty() && d.len() != self.n);
        Ok(())
    }

    fn check_sample(&self, s: &Sample) -> Result<()> {
        if s.x.len() != self.input.len() {
            bail!(Shape, "input has {} values, expected {}", s.x.len(), self.input.len());
        }
        if s.x.iter().any(|v| !v.is_finite()) {
            bail!(Data, "input contains a non-finite value");
        }
        if !self.loss.check_label(s.y) {
            bail!(Data, "label {} is invalid for {} with C = {}", s.y, self.loss.kind.name(), self.loss.classes);
        }
        Ok(())
    }

    /// Examples of the given domains, in domain then sample order.
    pub fn examples(&self, domains: &[usize]) -> Vec<Example<'_>> {
        domains
            .iter()
            .flat_map(|&t| self.domains[t].iter().map(move |s| Example { domain: t, x: &s.x, y: s.y }))
            .collect()
    }

    /// Examples of the masked domains; fails when a masked domain is empty.
    pub fn masked_examples(&self, mask: &ObservationMask) -> Result<Vec<Example<'_>>> {
        if mask.grid() != &self.grid {
            bail!(Shape, "mask grid {:?} differs from dataset grid {:?}", mask.grid().dims(), self.grid.dims());
        }
        if let Some(&t) = mask.seen().iter().find(|&&t| self.domains[t].is_empty()) {
            bail!(Data, "seen domain {t} has no samples");
        }
        Ok(self.examples(mask.seen()))
    }
}
