//! The predictor `w_t ∘ φ`: a shared network followed by a per-domain linear head.

mod bank;
mod gradcheck;
mod loss;
mod net;

use alloc::vec;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

pub use gradcheck::{check_gradients, GradCheck};
pub use bank::{head_norms, regularizer, BankKind, BankVariant, HeadBank};
pub use loss::{argmax, log_sum_exp, sigmoid, softplus, LossKind, LossSpec};
pub use net::{Activation, ArchConfig, Dense, LayerGrads, RepresentationNet};

use crate::error::{bail, Error, Result};
use net::Trace;

/// One labelled input from domain `domain`.
#[derive(Debug, Clone, Copy)]
pub struct Example<'a> {
    pub domain: usize,
    pub x: &'a [f64],
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub net: RepresentationNet,
    pub bank: HeadBank,
}

/// Gradients of every trainable array, in the order of [`Model::param_slices_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub net: Vec<LayerGrads>,
    pub bank: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.net
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .chain(self.bank.iter().map(|b| b.as_slice()))
            .collect()
    }

    pub fn norm(&self) -> f64 {
        libm::sqrt(self.slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum())
    }
}

impl Model {
    pub fn new(net: RepresentationNet, bank: HeadBank) -> Result<Self> {
        if net.output_dim() != bank.repr_dim() {
            bail!(Shape, "network emits {} features, heads expect {}", net.output_dim(), bank.repr_dim());
        }
        Ok(Self { net, bank })
    }

    /// Gaussian-initialized network and bank for the given architecture.
    #[allow(clippy::too_many_arguments)]
    pub fn init<R: rand::Rng>(
        variant: BankVariant,
        grid: crate::DomainGrid,
        input_dim: usize,
        arch: &ArchConfig,
        classes: usize,
        rank: usize,
        seen: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let net = RepresentationNet::init_gaussian(&arch.widths(input_dim), &arch.activations(), rng)?;
        let bank = HeadBank::init(variant, grid, arch.repr_dim, classes, rank, seen, rng)?;
        Self::new(net, bank)
    }

    pub fn classes(&self) -> usize {
        self.bank.classes()
    }

    /// Logits `headᵀ·φ(x)` for flat domain `t`.
    pub fn forward(&self, t: usize, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.net.input_dim() {
            bail!(Shape, "input has {} features, network expects {}", x.len(), self.net.input_dim());
        }
        let head = self.bank.head(t)?;
        Ok(apply_head(&head, &self.net.forward(x), self.classes()))
    }

    /// Parameter arrays: network layers first (weights then bias), then the bank.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = self.net.layers().iter().flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()]).collect();
        out.extend(self.bank.param_slices());
        out
    }

    /// Names aligned with [`Self::param_slices`].
    pub fn param_names(&self) -> Vec<alloc::string::String> {
        let mut names: Vec<alloc::string::String> = (0..self.net.layers().len())
            .flat_map(|i| [alloc::format!("net.{i}.weights"), alloc::format!("net.{i}.bias")])
            .collect();
        names.extend(self.bank.param_names());
        names
    }

    /// Logical shape of every parameter array; the product matches its length.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let mut out: Vec<Vec<usize>> = self
            .net
            .layers()
            .iter()
            .flat_map(|l| [vec![l.outputs, l.inputs], vec![l.outputs]])
            .collect();
        let (p, c) = (self.bank.repr_dim(), self.classes());
        let dims = self.bank.grid().dims();
        match self.bank.kind() {
            BankKind::Free { seen, .. } => out.extend(seen.iter().map(|_| vec![p, c])),
            BankKind::Factorized(f) => {
                for _ in 0..f.rank() {
                    out.extend(dims.iter().map(|&d| vec![d, p, c]));
                }
            }
            BankKind::Additive { .. } => {
                out.extend(dims.iter().map(|&d| vec![d, p, c]));
                out.push(vec![p, c]);
            }
            BankKind::SharedOnly { .. } => out.push(vec![p, c]),
            BankKind::Descriptor { basis, .. } => {
                out.extend(basis.iter().map(|_| vec![p, c]));
                out.push(vec![basis.len(), self.bank.grid().total_levels()]);
            }
        }
        out
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = self.net.param_slices_mut().collect();
        out.extend(self.bank.param_slices_mut());
        out
    }

    pub fn param_count(&mut self) -> usize {
        self.param_slices_mut().iter().map(|s| s.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.net.is_finite() && self.bank.is_finite()
    }

    pub fn zero_grads(&self) -> Gradients {
        Gradients { net: self.net.zero_grads(), bank: self.bank.zero_grads() }
    }
}

/// Logits for a flattened `p × C` head.
pub fn apply_head(head: &[f64], phi: &[f64], classes: usize) -> Vec<f64> {
    let mut z = vec![0.0; classes];
    for (row, &f) in head.chunks_exact(classes).zip(phi) {
        for (zc, &w) in z.iter_mut().zip(row) {
            *zc += w * f;
        }
    }
    z
}

/// Mean per-sample loss plus `regularizer(bank, lambda)`, with exact gradients.
pub fn loss_and_grads(model: &Model, batch: &[Example<'_>], spec: &LossSpec, lambda: f64) -> Result<(f64, Gradients)> {
    if batch.is_empty() {
        bail!(Argument, "batch is empty");
    }
    if spec.classes != model.classes() {
        bail!(Shape, "loss expects {} classes, model emits {}", spec.classes, model.classes());
    }
    if lambda < 0.0 || !lambda.is_finite() {
        bail!(Argument, "lambda must be finite and non-negative, got {lambda}");
    }
    let q = model.bank.width();
    let c = model.classes();
    let grid_len = model.bank.grid().len();
    let mut grads = model.zero_grads();
    let mut heads: Vec<Option<Vec<f64>>> = vec![None; grid_len];
    let mut head_grads: Vec<Option<Vec<f64>>> = vec![None; grid_len];
    let mut trace = Trace::default();
    let mut scratch = Vec::new();
    let mut dz = vec![0.0; c];
    let mut dphi = vec![0.0; model.net.output_dim()];
    let scale = 1.0 / batch.len() as f64;
    let mut total = 0.0;

    for (i, ex) in batch.iter().enumerate() {
        if ex.x.len() != model.net.input_dim() {
            bail!(Shape, "sample {i} has {} features, network expects {}", ex.x.len(), model.net.input_dim());
        }
        if !spec.check_label(ex.y) {
            bail!(Data, "sample {i} has label {} invalid for {} loss", ex.y, spec.kind.name());
        }
        if ex.domain >= grid_len {
            bail!(Bounds, "sample {i} domain {} outside [0, {grid_len})", ex.domain);
        }
        if heads[ex.domain].is_none() {
            heads[ex.domain] = Some(model.bank.head(ex.domain)?);
        }
        let head = heads[ex.domain].as_deref().expect("cached");
        model.net.forward_trace(ex.x, &mut trace);
        let phi = model.net.output(&trace);
        let z = apply_head(head, phi, c);
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric { sample: i });
        }
        let l = spec.value_and_grad(&z, ex.y, &mut dz);
        if !l.is_finite() {
            return Err(Error::Numeric { sample: i });
        }
        total += l;
        dz.iter_mut().for_each(|g| *g *= scale);

        let hg = head_grads[ex.domain].get_or_insert_with(|| vec![0.0; q]);
        for (a, (&f, (row_g, row_w))) in phi
            .iter()
            .zip(hg.chunks_exact_mut(c).zip(head.chunks_exact(c)))
            .enumerate()
        {
            let mut s = 0.0;
            for ((g, &w), &d) in row_g.iter_mut().zip(row_w).zip(&dz) {
                *g += d * f;
                s += d * w;
            }
            dphi[a] = s;
        }
        model.net.backward(ex.x, &trace, &dphi, &mut grads.net, &mut scratch);
    }

    for (t, hg) in head_grads.iter().enumerate() {
        if let Some(hg) = hg {
            model.bank.backward(t, hg, &mut grads.bank);
        }
    }
    let (reg, reg_grads) = regularizer(&model.bank, lambda);
    for (g, r) in grads.bank.iter_mut().zip(&reg_grads) {
        for (a, b) in g.iter_mut().zip(r) {
            *a += b;
        }
    }
    Ok((total * scale + reg, grads))
}

/// Mean loss without gradients.
pub fn mean_loss(model: &Model, batch: &[Example<'_>], spec: &LossSpec) -> Result<f64> {
    if batch.is_empty() {
        bail!(Argument, "batch is empty");
    }
    let mut total = 0.0;
    let mut heads: Vec<Option<Vec<f64>>> = vec![None; model.bank.grid().len()];
    for (i, ex) in batch.iter().enumerate() {
        if heads[ex.domain].is_none() {
            heads[ex.domain] = Some(model.bank.head(ex.domain)?);
        }
        let z = apply_head(heads[ex.domain].as_deref().expect("cached"), &model.net.forward(ex.x), spec.classes);
        let l = spec.value(&z, ex.y);
        if !l.is_finite() {
            return Err(Error::Numeric { sample: i });
        }
        total += l;
    }
    Ok(total / batch.len() as f64)
}

/// Mean loss plus the regularizer, the quantity [`loss_and_grads`] differentiates.
pub fn objective(model: &Model, batch: &[Example<'_>], spec: &LossSpec, lambda: f64) -> Result<f64> {
    Ok(mean_loss(model, batch, spec)? + regularizer(&model.bank, lambda).0)
}

/// `max_x ‖φ(x)‖` over the given inputs; 0 for an empty set.
pub fn representation_norm_bound<'a, I>(net: &RepresentationNet, xs: I) -> f64
where
    I: IntoIterator<Item = &'a [f64]>,
{
    xs.into_iter()
        .map(|x| libm::sqrt(net.forward(x).iter().map(|v| v * v).sum()))
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests;
