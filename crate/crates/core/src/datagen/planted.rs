use alloc::format;
use alloc::string::ToString;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cp::CPFactors;
use crate::data::{DomainDataset, InputShape, Provenance, Sample};
use crate::error::{bail, Result};
use crate::grid::DomainGrid;
use crate::model::{ArchConfig, BankKind, HeadBank, LossSpec, Model, RepresentationNet};
use crate::rng::{child_rng, derive_seed, stream};

/// How labels are drawn from the planted logits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Link {
    Logistic,
    Softmax,
    Gaussian { sigma: f64 },
}

impl Link {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Logistic => "logistic",
            Self::Softmax => "softmax",
            Self::Gaussian { .. } => "gaussian",
        }
    }

    pub fn loss(&self, classes: usize) -> Result<LossSpec> {
        match self {
            Self::Logistic => LossSpec::new(crate::model::LossKind::Logistic, classes),
            Self::Softmax => LossSpec::softmax(classes),
            Self::Gaussian { .. } => LossSpec::new(crate::model::LossKind::Squared, classes),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlantedConfig {
    pub dims: Vec<usize>,
    pub input_dim: usize,
    pub arch: ArchConfig,
    pub classes: usize,
    pub rank: usize,
    pub link: Link,
    /// Target RMS of the planted head norms.
    pub head_scale: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            dims: alloc::vec![3, 3],
            input_dim: 10,
            arch: ArchConfig { hidden: alloc::vec![32], repr_dim: 8, ..ArchConfig::default() },
            classes: 1,
            rank: 2,
            link: Link::Logistic,
            head_scale: 1.0,
            seed: 0,
        }
    }
}

impl PlantedConfig {
    pub fn validate(&self, errors: &mut Vec<alloc::string::String>) {
        if let Err(e) = DomainGrid::new(self.dims.clone()) {
            errors.push(format!("planted.dims: {e}"));
        }
        if self.input_dim == 0 {
            errors.push("planted.input_dim must be positive".to_string());
        }
        if self.arch.repr_dim == 0 || self.arch.hidden.contains(&0) {
            errors.push("planted.arch widths must be positive".to_string());
        }
        if self.rank == 0 {
            errors.push("planted.rank must be positive".to_string());
        }
        if let Err(e) = self.link.loss(self.classes) {
            errors.push(format!("planted.classes: {e}"));
        }
        if let Link::Gaussian { sigma } = self.link {
            if !(sigma >= 0.0 && sigma.is_finite()) {
                errors.push(format!("planted.link.sigma must be finite and non-negative, got {sigma}"));
            }
        }
        if !(self.head_scale > 0.0 && self.head_scale.is_finite()) {
            errors.push(format!("planted.head_scale must be positive, got {}", self.head_scale));
        }
    }
}

/// Ground truth `(φ*, w*_t)` with exactly rank-`K` heads.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedModel {
    pub config: PlantedConfig,
    pub model: Model,
    pub link: Link,
}

impl PlantedModel {
    pub fn grid(&self) -> &DomainGrid {
        self.model.bank.grid()
    }

    pub fn loss(&self) -> LossSpec {
        self.link.loss(self.model.classes()).expect("validated at construction")
    }

    pub fn factors(&self) -> &CPFactors {
        match self.model.bank.kind() {
            BankKind::Factorized(f) => f,
            _ => unreachable!("planted banks are factorized"),
        }
    }

    /// One domain's samples; `x ~ N(0, I)` and `y` from the link.
    pub fn sample_domain<R: Rng>(&self, t: usize, n: usize, rng: &mut R) -> Result<Vec<Sample>> {
        let r = self.model.net.input_dim();
        let head = self.model.bank.head(t)?;
        let c = self.model.classes();
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..r).map(|_| StandardNormal.sample(rng)).collect();
            let z = crate::model::apply_head(&head, &self.model.net.forward(&x), c);
            let y = match self.link {
                Link::Gaussian { sigma } => {
                    let e: f64 = StandardNormal.sample(rng);
                    z[0] + sigma * e
                }
                Link::Logistic => {
                    let p = crate::model::sigmoid(z[0]);
                    if Bernoulli::new(p).expect("probability in [0,1]").sample(rng) {
                        1.0
                    } else {
                        0.0
                    }
                }
                Link::Softmax => {
                    let lse = crate::model::log_sum_exp(&z);
                    let u: f64 = rng.random();
                    let mut acc = 0.0;
                    let mut label = c - 1;
                    for (k, &zk) in z.iter().enumerate() {
                        acc += libm::exp(zk - lse);
                        if u < acc {
                            label = k;
                            break;
                        }
                    }
                    label as f64
                }
            };
            out.push(Sample { x, y });
        }
        Ok(out)
    }

    /// Samples for the listed domains. Domain `t` draws from the stream
    /// `derive_seed(derive_seed(seed, purpose), t)`, so any subset of domains
    /// reproduces the same per-domain data.
    pub fn dataset(&self, domains: &[usize], n: usize, seed: u64, purpose: u64) -> Result<DomainDataset> {
        let mut prov = self.provenance();
        prov.insert("data_seed".into(), seed.to_string());
        prov.insert("data_stream".into(), format!("{purpose:#x}"));
        let mut ds = DomainDataset::new(self.grid().clone(), InputShape::Vector(self.model.net.input_dim()), self.loss(), n, prov)?;
        let base = derive_seed(seed, purpose);
        for &t in domains {
            let samples = self.sample_domain(t, n, &mut child_rng(base, t as u64))?;
            ds.set_domain(t, samples)?;
        }
        Ok(ds)
    }

    pub fn provenance(&self) -> Provenance {
        let mut p = Provenance::new();
        p.insert("generator".into(), "planted".into());
        p.insert("model_seed".into(), self.config.seed.to_string());
        p.insert("link".into(), self.link.name().into());
        if let Link::Gaussian { sigma } = self.link {
            p.insert("sigma".into(), format!("{sigma:?}"));
        }
        p.insert("rank".into(), self.config.rank.to_string());
        p.insert("head_scale".into(), format!("{:?}", self.config.head_scale));
        p.insert("head_scaling".into(), "factors uniform(-1,1), rescaled to the target head-norm RMS".into());
        p
    }
}

/// Draws a planted model. φ* weights are `N(0, 1/fan_in)`; factor entries are
/// `uniform(−1, 1)` and then every block is multiplied by the same constant so
/// that `sqrt(mean_t ‖w*_t‖²)` equals `head_scale`.
pub fn plant_model(cfg: &PlantedConfig) -> Result<PlantedModel> {
    let mut errors = Vec::new();
    cfg.validate(&mut errors);
    if !errors.is_empty() {
        bail!(Argument, "{}", errors.join("; "));
    }
    let grid = DomainGrid::new(cfg.dims.clone())?;
    let mut rng = child_rng(cfg.seed, stream::MODEL);
    let net = RepresentationNet::init_gaussian(&cfg.arch.widths(cfg.input_dim), &cfg.arch.activations(), &mut rng)?;
    let q = cfg.arch.repr_dim * cfg.classes;
    let mut factors = CPFactors::random_uniform(grid.clone(), cfg.rank, q, -1.0, 1.0, &mut rng)?;
    let heads = factors.materialize();
    let rms = libm::sqrt(heads.values().iter().map(|v| v * v).sum::<f64>() / grid.len() as f64);
    if rms > 0.0 {
        let c = libm::pow(cfg.head_scale / rms, 1.0 / grid.modes() as f64);
        for b in factors.blocks_mut() {
            b.iter_mut().for_each(|v| *v *= c);
        }
    }
    let bank = HeadBank::new(grid, cfg.arch.repr_dim, cfg.classes, BankKind::Factorized(factors))?;
    Ok(PlantedModel { config: cfg.clone(), model: Model::new(net, bank)?, link: cfg.link })
}
