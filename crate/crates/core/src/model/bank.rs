//! Per-domain linear heads.
//!
//! A head is a `p × C` matrix flattened row-major into `q = p·C` coordinates,
//! so the logit of class `c` is `Σ_a head[a·C + c]·φ_a`.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cp::{additive_to_cp, CPFactors, HeadTensor};
use crate::error::{bail, Error, Result};
use crate::grid::DomainGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankVariant {
    Free,
    Factorized,
    Additive,
    SharedOnly,
    Descriptor,
}

impl BankVariant {
    pub const ALL: [BankVariant; 5] = [Self::Free, Self::Factorized, Self::Additive, Self::SharedOnly, Self::Descriptor];

    pub fn name(self) -> &'static str {
        match self {
            Self::Free => "free",
            Self::Factorized => "factorized",
            Self::Additive => "additive",
            Self::SharedOnly => "shared_only",
            Self::Descriptor => "descriptor",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|v| v.name() == s || v.name().replace('_', "-") == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum BankKind {
    /// One head per seen domain (`seen` is sorted).
    Free { seen: Vec<usize>, heads: Vec<Vec<f64>> },
    Factorized(CPFactors),
    /// `w_t = shared + Σ_m per_mode[m][t_m]`; `per_mode[m]` is `d_m × q`.
    Additive { shared: Vec<f64>, per_mode: Vec<Vec<f64>> },
    SharedOnly { head: Vec<f64> },
    /// `w_t = Σ_b relu((W·desc_t)_b)·basis_b` where `desc_t` concatenates
    /// one-hot encodings of every mode level. `coef` is `B × Σd_m` row-major.
    Descriptor { basis: Vec<Vec<f64>>, coef: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadBank {
    grid: DomainGrid,
    repr_dim: usize,
    classes: usize,
    kind: BankKind,
}

impl HeadBank {
    pub fn new(grid: DomainGrid, repr_dim: usize, classes: usize, kind: BankKind) -> Result<Self> {
        let bank = Self { grid, repr_dim, classes, kind };
        bank.check_shapes()?;
        Ok(bank)
    }

    fn check_shapes(&self) -> Result<()> {
        let q = self.width();
        if q == 0 {
            bail!(Shape, "repr_dim and classes must be positive");
        }
        let check = |what: &str, got: usize, want: usize| -> Result<()> {
            if got != want {
                return Err(Error::Shape(format!("{what} has {got} entries, expected {want}")));
            }
            Ok(())
        };
        match &self.kind {
            BankKind::Free { seen, heads } => {
                check("free head list", heads.len(), seen.len())?;
                if seen.windows(2).any(|w| w[0] >= w[1]) || seen.last().is_some_and(|&t| t >= self.grid.len()) {
                    bail!(Shape, "free-head domains must be sorted, distinct and inside the grid");
                }
                for h in heads {
                    check("free head", h.len(), q)?;
                }
            }
            BankKind::Factorized(f) => {
                if f.grid() != &self.grid {
                    bail!(Shape, "factor grid differs from bank grid");
                }
                check("factorized head width", f.width(), q)?;
            }
            BankKind::Additive { shared, per_mode } => {
                check("shared head", shared.len(), q)?;
                check("per-mode list", per_mode.len(), self.grid.modes())?;
                for (b, &d) in per_mode.iter().zip(self.grid.dims()) {
                    check("per-mode matrix", b.len(), d * q)?;
                }
            }
            BankKind::SharedOnly { head } => check("shared head", head.len(), q)?,
            BankKind::Descriptor { basis, coef } => {
                let levels = self.grid.total_levels();
                check("basis list", basis.len(), levels + 1)?;
                for b in basis {
                    check("basis head", b.len(), q)?;
                }
                check("coefficient matrix", coef.len(), basis.len() * levels)?;
            }
        }
        if self.param_slices().iter().any(|s| s.iter().any(|v| !v.is_finite())) {
            bail!(Data, "head bank has non-finite parameters");
        }
        Ok(())
    }

    /// Randomly initialized bank of the requested variant.
    ///
    /// Free and shared heads are iid `N(0, 1/p)`; additive starts at a random
    /// shared head with zero per-mode offsets; factorized rows are Gaussian
    /// scaled so heads have the same variance; descriptor bases are Gaussian
    /// and coefficients uniform on `(0, 2/M)` so every unit starts active.
    pub fn init<R: rand::Rng>(
        variant: BankVariant,
        grid: DomainGrid,
        repr_dim: usize,
        classes: usize,
        rank: usize,
        seen: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        let q = repr_dim * classes;
        let sd = 1.0 / libm::sqrt(repr_dim as f64);
        let mut gauss = |n: usize, s: f64| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    s * z
                })
                .collect()
        };
        let kind = match variant {
            BankVariant::Free => {
                let mut seen = seen.to_vec();
                seen.sort_unstable();
                seen.dedup();
                let heads = seen.iter().map(|_| gauss(q, sd)).collect();
                BankKind::Free { seen, heads }
            }
            BankVariant::SharedOnly => BankKind::SharedOnly { head: gauss(q, sd) },
            BankVariant::Additive => BankKind::Additive {
                shared: gauss(q, sd),
                per_mode: grid.dims().iter().map(|&d| vec![0.0; d * q]).collect(),
            },
            BankVariant::Factorized => {
                let mut f = CPFactors::zeros(grid.clone(), rank, q)?;
                let s = libm::pow(sd * sd / rank as f64, 0.5 / grid.modes() as f64);
                for b in f.blocks_mut() {
                    *b = gauss(b.len(), s);
                }
                BankKind::Factorized(f)
            }
            BankVariant::Descriptor => {
                let levels = grid.total_levels();
                let count = levels + 1;
                let basis = (0..count).map(|_| gauss(q, sd / libm::sqrt(count as f64))).collect();
                let hi = 2.0 / grid.modes() as f64;
                let coef = (0..count * levels).map(|_| rng.random_range(0.0..hi)).collect();
                BankKind::Descriptor { basis, coef }
            }
        };
        Self::new(grid, repr_dim, classes, kind)
    }

    pub fn grid(&self) -> &DomainGrid {
        &self.grid
    }

    pub fn repr_dim(&self) -> usize {
        self.repr_dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn width(&self) -> usize {
        self.repr_dim * self.classes
    }

    pub fn kind(&self) -> &BankKind {
        &self.kind
    }

    pub fn kind_mut(&mut self) -> &mut BankKind {
        &mut self.kind
    }

    pub fn variant(&self) -> BankVariant {
        match self.kind {
            BankKind::Free { .. } => BankVariant::Free,
            BankKind::Factorized(_) => BankVariant::Factorized,
            BankKind::Additive { .. } => BankVariant::Additive,
            BankKind::SharedOnly { .. } => BankVariant::SharedOnly,
            BankKind::Descriptor { .. } => BankVariant::Descriptor,
        }
    }

    /// Whether the bank produces a head for domain `t`.
    pub fn has_head(&self, t: usize) -> bool {
        match &self.kind {
            BankKind::Free { seen, .. } => seen.binary_search(&t).is_ok(),
            _ => t < self.grid.len(),
        }
    }

    /// Head of flat domain `t`.
    pub fn head(&self, t: usize) -> Result<Vec<f64>> {
        if t >= self.grid.len() {
            bail!(Bounds, "domain {t} outside [0, {})", self.grid.len());
        }
        let q = self.width();
        let mut out = vec![0.0; q];
        match &self.kind {
            BankKind::Free { seen, heads } => {
                let pos = seen.binary_search(&t).map_err(|_| Error::NoHead { domain: t })?;
                out.copy_from_slice(&heads[pos]);
            }
            BankKind::Factorized(f) => f.accumulate_head(&self.grid.levels_unchecked(t), &mut out),
            BankKind::Additive { shared, per_mode } => {
                out.copy_from_slice(shared);
                for (b, l) in per_mode.iter().zip(self.grid.levels_unchecked(t)) {
                    for (o, v) in out.iter_mut().zip(&b[l * q..(l + 1) * q]) {
                        *o += v;
                    }
                }
            }
            BankKind::SharedOnly { head } => out.copy_from_slice(head),
            BankKind::Descriptor { basis, .. } => {
                for (c, b) in self.descriptor_coefficients(t).iter().zip(basis) {
                    if *c != 0.0 {
                        for (o, v) in out.iter_mut().zip(b) {
                            *o += c * v;
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Positions of the active one-hot entries of domain `t`'s descriptor.
    fn descriptor_support(&self, t: usize) -> Vec<usize> {
        let mut offset = 0;
        let mut out = Vec::with_capacity(self.grid.modes());
        for (&d, l) in self.grid.dims().iter().zip(self.grid.levels_unchecked(t)) {
            out.push(offset + l);
            offset += d;
        }
        out
    }

    /// Pre-activation combination weights `W·desc_t`; zero-length for other variants.
    fn descriptor_preactivations(&self, t: usize) -> Vec<f64> {
        let BankKind::Descriptor { basis, coef } = &self.kind else {
            return Vec::new();
        };
        let levels = self.grid.total_levels();
        let support = self.descriptor_support(t);
        (0..basis.len())
            .map(|b| support.iter().map(|&i| coef[b * levels + i]).sum())
            .collect()
    }

    /// `relu(W·desc_t)` for the descriptor variant.
    pub fn descriptor_coefficients(&self, t: usize) -> Vec<f64> {
        self.descriptor_preactivations(t).into_iter().map(|z| z.max(0.0)).collect()
    }

    /// Heads of all domains. Fails for free banks that lack some domain.
    pub fn materialize(&self) -> Result<HeadTensor> {
        if let BankKind::Factorized(f) = &self.kind {
            return Ok(f.materialize());
        }
        let mut values = Vec::with_capacity(self.grid.len() * self.width());
        for t in 0..self.grid.len() {
            values.extend(self.head(t)?);
        }
        HeadTensor::new(self.grid.clone(), self.width(), values)
    }

    /// Equivalent factorized bank for additive banks (ones padding).
    pub fn to_factorized(&self) -> Result<Self> {
        match &self.kind {
            BankKind::Additive { shared, per_mode } => {
                let f = additive_to_cp(&self.grid, shared, per_mode)?;
                Self::new(self.grid.clone(), self.repr_dim, self.classes, BankKind::Factorized(f))
            }
            BankKind::Factorized(_) => Ok(self.clone()),
            _ => bail!(Unsupported, "{} bank has no factorized form", self.variant().name()),
        }
    }

    /// Trainable parameter arrays in a fixed order.
    pub fn param_slices(&self) -> Vec<&[f64]> {
        match &self.kind {
            BankKind::Free { heads, .. } => heads.iter().map(|h| h.as_slice()).collect(),
            BankKind::Factorized(f) => f.blocks().iter().map(|b| b.as_slice()).collect(),
            BankKind::Additive { shared, per_mode } => {
                per_mode.iter().map(|b| b.as_slice()).chain([shared.as_slice()]).collect()
            }
            BankKind::SharedOnly { head } => vec![head.as_slice()],
            BankKind::Descriptor { basis, coef } => {
                basis.iter().map(|b| b.as_slice()).chain([coef.as_slice()]).collect()
            }
        }
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        match &mut self.kind {
            BankKind::Free { heads, .. } => heads.iter_mut().map(|h| h.as_mut_slice()).collect(),
            BankKind::Factorized(f) => f.blocks_mut().iter_mut().map(|b| b.as_mut_slice()).collect(),
            BankKind::Additive { shared, per_mode } => per_mode
                .iter_mut()
                .map(|b| b.as_mut_slice())
                .chain([shared.as_mut_slice()])
                .collect(),
            BankKind::SharedOnly { head } => vec![head.as_mut_slice()],
            BankKind::Descriptor { basis, coef } => basis
                .iter_mut()
                .map(|b| b.as_mut_slice())
                .chain([coef.as_mut_slice()])
                .collect(),
        }
    }

    /// Short names of the parameter arrays, aligned with [`Self::param_slices`].
    pub fn param_names(&self) -> Vec<String> {
        match &self.kind {
            BankKind::Free { seen, .. } => seen.iter().map(|t| format!("head.{t}")).collect(),
            BankKind::Factorized(f) => (0..f.rank())
                .flat_map(|k| (0..self.grid.modes()).map(move |m| format!("factor.{k}.{m}")))
                .collect(),
            BankKind::Additive { per_mode, .. } => (0..per_mode.len())
                .map(|m| format!("mode.{m}"))
                .chain([String::from("shared")])
                .collect(),
            BankKind::SharedOnly { .. } => vec![String::from("shared")],
            BankKind::Descriptor { basis, .. } => (0..basis.len())
                .map(|b| format!("basis.{b}"))
                .chain([String::from("coef")])
                .collect(),
        }
    }

    pub(crate) fn zero_grads(&self) -> Vec<Vec<f64>> {
        self.param_slices().iter().map(|s| vec![0.0; s.len()]).collect()
    }

    /// Adds the gradient contribution of `∂loss/∂w_t = head_grad` to `grads`.
    pub(crate) fn backward(&self, t: usize, head_grad: &[f64], grads: &mut [Vec<f64>]) {
        let q = self.width();
        let add = |dst: &mut [f64], src: &[f64], scale: f64| {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        };
        match &self.kind {
            BankKind::Free { seen, .. } => {
                if let Ok(pos) = seen.binary_search(&t) {
                    add(&mut grads[pos], head_grad, 1.0);
                }
            }
            BankKind::SharedOnly { .. } => add(&mut grads[0], head_grad, 1.0),
            BankKind::Additive { per_mode, .. } => {
                for (m, l) in self.grid.levels_unchecked(t).into_iter().enumerate() {
                    add(&mut grads[m][l * q..(l + 1) * q], head_grad, 1.0);
                }
                add(&mut grads[per_mode.len()], head_grad, 1.0);
            }
            BankKind::Factorized(f) => {
                let levels = self.grid.levels_unchecked(t);
                let modes = levels.len();
                for k in 0..f.rank() {
                    for m in 0..modes {
                        let g = &mut grads[k * modes + m][levels[m] * q..(levels[m] + 1) * q];
                        for (j, (gj, &hg)) in g.iter_mut().zip(head_grad).enumerate() {
                            let mut p = hg;
                            for (m2, &l2) in levels.iter().enumerate() {
                                if m2 != m {
                                    p *= f.block(k, m2)[l2 * q + j];
                                }
                            }
                            *gj += p;
                        }
                    }
                }
            }
            BankKind::Descriptor { basis, .. } => {
                let pre = self.descriptor_preactivations(t);
                let support = self.descriptor_support(t);
                let levels = self.grid.total_levels();
                let coef_slot = basis.len();
                for (b, (&z, basis_b)) in pre.iter().zip(basis).enumerate() {
                    if z <= 0.0 {
                        continue;
                    }
                    add(&mut grads[b], head_grad, z);
                    let dz: f64 = basis_b.iter().zip(head_grad).map(|(x, g)| x * g).sum();
                    for &i in &support {
                        grads[coef_slot][b * levels + i] += dz;
                    }
                }
            }
        }
    }

    /// Vectors pulled toward their mean by the regularizer: all per-mode rows
    /// and the shared head (additive), or all factor rows (factorized).
    pub fn regularized_vectors(&self) -> Vec<&[f64]> {
        let q = self.width();
        match &self.kind {
            BankKind::Additive { shared, per_mode } => per_mode
                .iter()
                .flat_map(|b| b.chunks_exact(q))
                .chain([shared.as_slice()])
                .collect(),
            BankKind::Factorized(f) => f.rows().collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

/// `(λ/n)·Σ_i ‖v_i − μ‖²` over the bank's regularized vectors, and its
/// gradient aligned with [`HeadBank::param_slices`]. Zero for variants without
/// regularized vectors.
pub fn regularizer(bank: &HeadBank, lambda: f64) -> (f64, Vec<Vec<f64>>) {
    let mut grads = bank.zero_grads();
    let vectors = bank.regularized_vectors();
    if vectors.is_empty() || lambda == 0.0 {
        return (0.0, grads);
    }
    let q = bank.width();
    let n = vectors.len() as f64;
    let mut mean = vec![0.0; q];
    for v in &vectors {
        for (m, x) in mean.iter_mut().zip(v.iter()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let value: f64 = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| (x - m) * (x - m)).sum::<f64>())
        .sum::<f64>()
        * lambda
        / n;
    // Σ_i (v_i − μ) = 0, so the μ-dependence drops out of the gradient.
    let scale = 2.0 * lambda / n;
    let fill = |g: &mut [f64], src: &[f64]| {
        for (row_g, row) in g.chunks_exact_mut(q).zip(src.chunks_exact(q)) {
            for ((gi, x), m) in row_g.iter_mut().zip(row).zip(&mean) {
                *gi = scale * (x - m);
            }
        }
    };
    match &bank.kind {
        BankKind::Additive { shared, per_mode } => {
            for (g, b) in grads.iter_mut().zip(per_mode) {
                fill(g, b);
            }
            fill(&mut grads[per_mode.len()], shared);
        }
        BankKind::Factorized(f) => {
            for (g, b) in grads.iter_mut().zip(f.blocks()) {
                fill(g, b);
            }
        }
        _ => {}
    }
    (value, grads)
}

/// Euclidean norm of every available head, as `(domain, ‖w_t‖)`.
pub fn head_norms(bank: &HeadBank) -> Vec<(usize, f64)> {
    (0..bank.grid().len())
        .filter(|&t| bank.has_head(t))
        .map(|t| {
            let h = bank.head(t).expect("head exists");
            (t, libm::sqrt(h.iter().map(|v| v * v).sum()))
        })
        .collect()
}
