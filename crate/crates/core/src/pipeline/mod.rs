//! Training: joint ERM with free heads, the two-stage ERM → completion
//! procedure, end-to-end training of structured head banks, and the pooled
//! baseline.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::completion::{complete, CompletionConfig};
use crate::cp::HeadTensor;
use crate::data::DomainDataset;
use crate::error::{bail, Error, Result};
use crate::mask::ObservationMask;
use crate::model::{loss_and_grads, mean_loss, regularizer, ArchConfig, BankKind, BankVariant, Example, HeadBank, Model};
use crate::optim::{Optimizer, OptimizerConfig};
use crate::rng::{child_rng, stream};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampling {
    /// Minibatches drawn uniformly with replacement over (seen domain, sample) pairs.
    Uniform,
    /// Iteration `i` draws its whole batch from seen domain `i mod T`.
    RoundRobin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub optimizer: OptimizerConfig,
    pub lr: f64,
    pub batch_size: usize,
    pub max_iters: usize,
    /// Early stopping fires once the mean of the last `window` minibatch
    /// losses falls below `threshold`.
    pub window: usize,
    pub threshold: f64,
    pub lambda: f64,
    pub sampling: Sampling,
    /// Record a held-out loss every this many iterations (0 disables).
    pub heldout_every: usize,
    /// Parameter arrays kept at their initial values, matched by name prefix
    /// (`net.0.weights`, `mode.1`, `factor.0.2`, `shared`, `basis.3`, `coef`, `head.7`).
    pub freeze: Vec<String>,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            optimizer: OptimizerConfig::default(),
            lr: 1e-3,
            batch_size: 64,
            max_iters: 3000,
            window: 50,
            threshold: 0.05,
            lambda: 0.05,
            sampling: Sampling::Uniform,
            heldout_every: 0,
            freeze: Vec::new(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self, errors: &mut Vec<String>) {
        self.optimizer.validate(errors);
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            errors.push(format!("train.lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            errors.push("train.batch_size must be positive".to_string());
        }
        if self.window == 0 {
            errors.push("train.window must be at least 1".to_string());
        }
        if !self.threshold.is_finite() {
            errors.push("train.threshold must be finite".to_string());
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            errors.push(format!("train.lambda must be non-negative, got {}", self.lambda));
        }
    }

    fn check(&self) -> Result<()> {
        let mut errors = Vec::new();
        self.validate(&mut errors);
        if errors.is_empty() {
            Ok(())
        } else {
            Err(Error::Argument(errors.join("; ")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "variant", rename_all = "snake_case")]
pub enum Method {
    Erm,
    TwoStage,
    EndToEnd(BankVariant),
    Pooled,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Self::Erm => "erm".into(),
            Self::TwoStage => "two_stage".into(),
            Self::EndToEnd(v) => format!("end_to_end_{}", v.name()),
            Self::Pooled => "pooled".into(),
        }
    }
}

/// What the completion stage of a two-stage run saw and produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage2Record {
    /// ERM heads; rows of unseen domains are zero.
    pub learned_heads: HeadTensor,
    /// `(1/T) Σ_{t seen} Σ_j |ŵ_{t,j} − T̂_{t,j}|`.
    pub residual_l1: f64,
    /// `(1/T) Σ_{t seen} Σ_j (ŵ_{t,j} − T̂_{t,j})²`.
    pub residual_l2: f64,
    pub rank: usize,
    pub sweeps_used: usize,
    pub converged: bool,
    pub fully_identified: bool,
    pub underdetermined: bool,
    pub completion: CompletionConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub method: Method,
    pub model: Model,
    pub mask: ObservationMask,
    /// Minibatch data loss (without the regularizer) per iteration.
    pub curve: Vec<f64>,
    /// `(iteration, mean loss)` on held-out seen-domain data.
    pub heldout: Vec<(usize, f64)>,
    /// Iteration count at which early stopping fired.
    pub stopped_at: Option<usize>,
    pub config: TrainConfig,
    pub arch: ArchConfig,
    pub stage2: Option<Stage2Record>,
    pub warnings: Vec<String>,
    /// Seconds; filled in by callers that can read a clock.
    pub wall_time: Option<f64>,
}

/// Index of the first iteration count `i ≥ window` with
/// `mean(curve[i−window..i]) < threshold`.
pub fn early_stop_index(curve: &[f64], window: usize, threshold: f64) -> Option<usize> {
    if window == 0 {
        return None;
    }
    (window..=curve.len()).find(|&i| curve[i - window..i].iter().sum::<f64>() / (window as f64) < threshold)
}


/// Runs the optimization loop on an already initialized model.
pub fn fit(
    mut model: Model,
    method: Method,
    ds: &DomainDataset,
    mask: &ObservationMask,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    heldout: Option<&DomainDataset>,
) -> Result<TrainedModel> {
    cfg.check()?;
    let spec = ds.loss();
    if spec.classes != model.classes() {
        bail!(Shape, "dataset has {} classes, model emits {}", spec.classes, model.classes());
    }
    let mut warnings = Vec::new();
    let ignored: Vec<usize> = ds.stored_domains().into_iter().filter(|&t| !mask.contains(t)).collect();
    if !ignored.is_empty() {
        warnings.push(format!("ignored data of {} unmasked domains: {ignored:?}", ignored.len()));
    }
    let examples = ds.masked_examples(mask)?;
    let per_domain: Vec<Vec<Example>> = mask.seen().iter().map(|&t| ds.examples(&[t])).collect();
    let held: Option<Vec<Example>> = match heldout {
        Some(h) if cfg.heldout_every > 0 => Some(h.masked_examples(mask)?),
        _ => None,
    };

    let names = model.param_names();
    let frozen: Vec<bool> = names.iter().map(|n| cfg.freeze.iter().any(|f| n.starts_with(f.as_str()))).collect();
    for f in &cfg.freeze {
        if !names.iter().any(|n| n.starts_with(f.as_str())) {
            warnings.push(format!("freeze pattern {f:?} matches no parameter"));
        }
    }

    let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
    let mut rng = child_rng(cfg.seed, stream::BATCH);
    let mut curve = Vec::with_capacity(cfg.max_iters);
    let mut held_curve = Vec::new();
    let mut stopped_at = None;
    let mut batch = Vec::with_capacity(cfg.batch_size);
    for it in 0..cfg.max_iters {
        batch.clear();
        match cfg.sampling {
            Sampling::Uniform => {
                for _ in 0..cfg.batch_size {
                    batch.push(examples[rng.random_range(0..examples.len())]);
                }
            }
            Sampling::RoundRobin => {
                let pool = &per_domain[it % per_domain.len()];
                for _ in 0..cfg.batch_size {
                    batch.push(pool[rng.random_range(0..pool.len())]);
                }
            }
        }
        let (total, grads) = loss_and_grads(&model, &batch, &spec, cfg.lambda).map_err(|e| match e {
            Error::Numeric { .. } => Error::Diverged { iteration: it },
            other => other,
        })?;
        let data_loss = total - regularizer(&model.bank, cfg.lambda).0;
        curve.push(data_loss);
        {
            let g = grads.slices();
            let mut p = model.param_slices_mut();
            opt.step(&mut p, &g, &frozen)?;
        }
        if !model.is_finite() {
            return Err(Error::Diverged { iteration: it });
        }
        if let Some(h) = &held {
            if (it + 1) % cfg.heldout_every == 0 {
                held_curve.push((it + 1, mean_loss(&model, h, &spec)?));
            }
        }
        if curve.len() >= cfg.window {
            let w = &curve[curve.len() - cfg.window..];
            if w.iter().sum::<f64>() / (cfg.window as f64) < cfg.threshold {
                stopped_at = Some(curve.len());
                break;
            }
        }
    }
    Ok(TrainedModel {
        method,
        model,
        mask: mask.clone(),
        curve,
        heldout: held_curve,
        stopped_at,
        config: cfg.clone(),
        arch: arch.clone(),
        stage2: None,
        warnings,
        wall_time: None,
    })
}

/// Fresh model for `variant`; network and bank share the `INIT` stream.
pub fn init_model(variant: BankVariant, ds: &DomainDataset, mask: &ObservationMask, arch: &ArchConfig, rank: usize, seed: u64) -> Result<Model> {
    let mut rng = child_rng(seed, stream::INIT);
    Model::init(variant, ds.grid().clone(), ds.input_dim(), arch, ds.classes(), rank, mask.seen(), &mut rng)
}

/// Joint ERM over the shared network and one free head per seen domain.
pub fn train_erm(ds: &DomainDataset, mask: &ObservationMask, arch: &ArchConfig, cfg: &TrainConfig, heldout: Option<&DomainDataset>) -> Result<TrainedModel> {
    let model = init_model(BankVariant::Free, ds, mask, arch, 1, cfg.seed)?;
    fit(model, Method::Erm, ds, mask, arch, cfg, heldout)
}

/// ERM, then rank-`K` completion of the learned heads, then a factorized bank
/// that covers every domain.
pub fn two_stage(
    ds: &DomainDataset,
    mask: &ObservationMask,
    arch: &ArchConfig,
    cfg: &TrainConfig,
    completion: &CompletionConfig,
    heldout: Option<&DomainDataset>,
) -> Result<TrainedModel> {
    let mut erm = train_erm(ds, mask, arch, cfg, heldout)?;
    complete_heads(&mut erm, completion)?;
    Ok(erm)
}

/// Replaces the free heads of an ERM model with completed factorized heads.
pub fn complete_heads(erm: &mut TrainedModel, completion: &CompletionConfig) -> Result<()> {
    let bank = &erm.model.bank;
    let BankKind::Free { seen, heads } = bank.kind() else {
        bail!(Unsupported, "completion needs a model with free heads, got {}", bank.variant().name());
    };
    let mut learned = HeadTensor::zeros(bank.grid().clone(), bank.width());
    for (&t, h) in seen.iter().zip(heads) {
        learned.row_mut(t).copy_from_slice(h);
    }
    let res = complete(&learned, &erm.mask, completion)?;
    let completed = res.factors.materialize();
    let (l1, l2) = residuals(&learned, &completed, erm.mask.seen());
    let new_bank = HeadBank::new(bank.grid().clone(), bank.repr_dim(), bank.classes(), BankKind::Factorized(res.factors))?;
    if !res.fully_identified {
        erm.warnings.push("some factor level is unobserved; heads touching it are not identified".into());
    }
    erm.stage2 = Some(Stage2Record {
        learned_heads: learned,
        residual_l1: l1,
        residual_l2: l2,
        rank: completion.rank,
        sweeps_used: res.sweeps_used,
        converged: res.converged,
        fully_identified: res.fully_identified,
        underdetermined: res.underdetermined,
        completion: completion.clone(),
    });
    erm.model.bank = new_bank;
    erm.method = Method::TwoStage;
    Ok(())
}

/// `(1/T) Σ_t Σ_j |a − b|` and the squared counterpart over rows `seen`.
pub fn residuals(a: &HeadTensor, b: &HeadTensor, seen: &[usize]) -> (f64, f64) {
    let (mut l1, mut l2) = (0.0, 0.0);
    for &t in seen {
        for (x, y) in a.row(t).iter().zip(b.row(t)) {
            l1 += (x - y).abs();
            l2 += (x - y) * (x - y);
        }
    }
    let n = seen.len() as f64;
    (l1 / n, l2 / n)
}

/// One optimization loop over a structured bank that predicts every domain.
pub fn train_end_to_end(
    ds: &DomainDataset,
    mask: &ObservationMask,
    arch: &ArchConfig,
    variant: BankVariant,
    rank: usize,
    cfg: &TrainConfig,
    heldout: Option<&DomainDataset>,
) -> Result<TrainedModel> {
    if variant == BankVariant::Free {
        bail!(Argument, "free heads cannot predict unseen domains; use ERM or two-stage training");
    }
    let model = init_model(variant, ds, mask, arch, rank, cfg.seed)?;
    fit(model, Method::EndToEnd(variant), ds, mask, arch, cfg, heldout)
}

/// One shared head trained on the pooled data of all seen domains.
pub fn train_pooled_baseline(ds: &DomainDataset, mask: &ObservationMask, arch: &ArchConfig, cfg: &TrainConfig, heldout: Option<&DomainDataset>) -> Result<TrainedModel> {
    let model = init_model(BankVariant::SharedOnly, ds, mask, arch, 1, cfg.seed)?;
    let cfg = TrainConfig { sampling: Sampling::Uniform, ..cfg.clone() };
    fit(model, Method::Pooled, ds, mask, arch, &cfg, heldout)
}
