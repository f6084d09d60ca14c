use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use super::{distance_analysis, evaluate, excess_risk, split_means, DistanceAnalysis, DomainMetric, ExcessRisk};
use crate::bounds::{bound_diagnostic, BoundDiagnostic, BoundParams, CompletionRunSummary};
use crate::completion::CompletionConfig;
use crate::data::DomainDataset;
use crate::datagen::{grid_transform_dataset, plant_model, GridTransformConfig, PlantedConfig, PlantedModel};
use crate::error::{bail, Result};
use crate::grid::DomainGrid;
use crate::mask::{diagonal_mask, sample_mask, ObservationMask};
use crate::model::{head_norms, representation_norm_bound, ArchConfig, BankVariant};
use crate::pipeline::{train_end_to_end, train_pooled_baseline, two_stage, TrainConfig, TrainedModel};
use crate::rng::{child_rng, derive_seed, stream};

/// Source of synthetic data. The run seed replaces the generator's own seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Generator {
    Planted(PlantedConfig),
    GridTransform(GridTransformConfig),
}

enum Source {
    Planted(PlantedModel),
    Grid(GridTransformConfig),
}

impl Source {
    fn dataset(&self, domains: &[usize], n: usize, seed: u64, purpose: u64) -> Result<DomainDataset> {
        match self {
            Self::Planted(m) => m.dataset(domains, n, seed, purpose),
            Self::Grid(cfg) => grid_transform_dataset(cfg, domains, n, seed, purpose),
        }
    }
}

impl Generator {
    pub fn grid(&self) -> Result<DomainGrid> {
        match self {
            Self::Planted(c) => DomainGrid::new(c.dims.clone()),
            Self::GridTransform(c) => c.grid(),
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut g = self.clone();
        match &mut g {
            Self::Planted(c) => c.seed = seed,
            Self::GridTransform(c) => c.seed = seed,
        }
        g
    }

    pub fn validate(&self, errors: &mut Vec<String>) {
        match self {
            Self::Planted(c) => c.validate(errors),
            Self::GridTransform(c) => c.validate(errors),
        }
    }

    /// The planted ground truth, if this is a planted generator.
    pub fn oracle(&self) -> Result<Option<PlantedModel>> {
        match self {
            Self::Planted(c) => plant_model(c).map(Some),
            Self::GridTransform(_) => Ok(None),
        }
    }

    /// `n` samples for each of `domains`, drawn as [`run_experiment`] draws them.
    pub fn dataset(&self, domains: &[usize], n: usize, seed: u64, purpose: u64) -> Result<DomainDataset> {
        self.source()?.dataset(domains, n, seed, purpose)
    }

    fn source(&self) -> Result<Source> {
        Ok(match self {
            Self::Planted(c) => Source::Planted(plant_model(c)?),
            Self::GridTransform(c) => Source::Grid(c.clone()),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaskDesign {
    /// `count` domains uniformly without replacement.
    Uniform { count: usize },
    /// Cells `(i, i)` of a square two-mode grid.
    Diagonal,
    All,
    Explicit { seen: Vec<usize> },
}

impl MaskDesign {
    pub fn build(&self, grid: &DomainGrid, seed: u64) -> Result<ObservationMask> {
        match self {
            Self::Uniform { count } => sample_mask(grid, *count, &mut child_rng(seed, stream::MASK)),
            Self::Diagonal => diagonal_mask(grid),
            Self::All => Ok(ObservationMask::all(grid.clone())),
            Self::Explicit { seen } => ObservationMask::new(grid.clone(), seen.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Trainer {
    TwoStage {
        #[serde(default)]
        completion: CompletionConfig,
    },
    EndToEnd {
        #[serde(default = "default_variant")]
        variant: BankVariant,
        #[serde(default = "default_rank")]
        rank: usize,
    },
    Pooled,
}

fn default_variant() -> BankVariant {
    BankVariant::Factorized
}

fn default_rank() -> usize {
    2
}

impl Trainer {
    pub fn name(&self) -> String {
        match self {
            Self::TwoStage { .. } => "two_stage".into(),
            Self::EndToEnd { variant, .. } => alloc::format!("end_to_end_{}", variant.name()),
            Self::Pooled => "pooled".into(),
        }
    }

    pub fn train(&self, ds: &DomainDataset, mask: &ObservationMask, arch: &ArchConfig, cfg: &TrainConfig, seed: u64) -> Result<TrainedModel> {
        let cfg = TrainConfig { seed, ..cfg.clone() };
        match self {
            Self::TwoStage { completion } => {
                let cc = CompletionConfig { seed, ..completion.clone() };
                two_stage(ds, mask, arch, &cfg, &cc, None)
            }
            Self::EndToEnd { variant, rank } => train_end_to_end(ds, mask, arch, *variant, *rank, &cfg, None),
            Self::Pooled => train_pooled_baseline(ds, mask, arch, &cfg, None),
        }
    }
}

/// One train-and-evaluate recipe; a run is this recipe plus a seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Experiment {
    pub generator: Generator,
    pub mask: MaskDesign,
    pub arch: ArchConfig,
    pub train: TrainConfig,
    pub trainer: Trainer,
    /// Training samples per seen domain.
    pub n_train: usize,
    /// Test samples per domain for accuracy.
    pub n_test: usize,
    /// Fresh samples per domain for excess risk; 0 skips it.
    #[serde(default)]
    pub n_excess: usize,
    #[serde(default)]
    pub bound: BoundParams,
}

impl Experiment {
    /// Every problem with the recipe, one message each.
    pub fn violations(&self) -> Vec<String> {
        let mut errors = Vec::new();
        self.generator.validate(&mut errors);
        self.train.validate(&mut errors);
        if self.n_train == 0 || self.n_test == 0 {
            errors.push("n_train and n_test must be positive".into());
        }
        if self.n_excess == 1 {
            errors.push("n_excess must be 0 or at least 2".into());
        }
        match &self.trainer {
            Trainer::TwoStage { completion } => {
                if let Err(e) = completion.validate() {
                    errors.push(alloc::format!("{e}"));
                }
            }
            Trainer::EndToEnd { variant: BankVariant::Free, .. } => {
                errors.push("end-to-end training needs a bank that covers unseen domains".into())
            }
            Trainer::EndToEnd { rank: 0, .. } => errors.push("trainer rank must be positive".into()),
            _ => {}
        }
        if let Err(e) = self.bound.validate() {
            errors.push(alloc::format!("{e}"));
        }
        if let Ok(grid) = self.generator.grid() {
            match &self.mask {
                MaskDesign::Uniform { count } if *count == 0 || *count > grid.len() => {
                    errors.push(alloc::format!("mask count {count} must lie in [1, {}]", grid.len()))
                }
                MaskDesign::Diagonal if grid.modes() != 2 || grid.dims()[0] != grid.dims()[1] => {
                    errors.push("diagonal mask needs a square two-mode grid".into())
                }
                MaskDesign::Explicit { seen } if seen.iter().any(|&t| t >= grid.len()) => {
                    errors.push(alloc::format!("explicit mask names a domain outside [0, {})", grid.len()))
                }
                _ => {}
            }
        }
        errors
    }

    pub fn validate(&self) -> Result<()> {
        let errors = self.violations();
        if errors.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Argument(errors.join("; ")))
        }
    }
}

/// Everything a run reports; wall-clock time is deliberately absent so records
/// are reproducible bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub trainer: String,
    pub observed: usize,
    pub lambda: f64,
    pub metrics: Vec<DomainMetric>,
    pub seen_mean: Option<f64>,
    pub unseen_mean: Option<f64>,
    pub distance: Option<DistanceAnalysis>,
    pub excess: Option<ExcessRisk>,
    pub bound: Option<BoundDiagnostic>,
    pub stage2_residual_l1: Option<f64>,
    pub iterations: usize,
    pub stopped_at: Option<usize>,
    pub warnings: Vec<String>,
}

/// Generates data, trains and evaluates one seed of `exp`.
pub fn run_experiment(exp: &Experiment, seed: u64) -> Result<(RunRecord, TrainedModel)> {
    exp.validate()?;
    let generator = exp.generator.with_seed(seed);
    let grid = generator.grid()?;
    let mask = exp.mask.build(&grid, seed)?;
    let source = generator.source()?;
    let train = source.dataset(mask.seen(), exp.n_train, seed, stream::TRAIN_DATA)?;
    let all: Vec<usize> = (0..grid.len()).collect();
    let test = source.dataset(&all, exp.n_test, seed, stream::TEST_DATA)?;
    let trained = exp.trainer.train(&train, &mask, &exp.arch, &exp.train, seed)?;
    let oracle = match &source {
        Source::Planted(m) => Some(m),
        Source::Grid(_) => None,
    };
    let record = assess(exp, &trained, &test, oracle, seed)?;
    Ok((record, trained))
}

/// Evaluates a trained model: per-domain metrics on `test`, the distance
/// analysis, excess risk on `exp.n_excess` fresh draws from `oracle`, and the
/// bound diagnostic for two-stage models.
pub fn assess(exp: &Experiment, trained: &TrainedModel, test: &DomainDataset, oracle: Option<&PlantedModel>, seed: u64) -> Result<RunRecord> {
    let mask = &trained.mask;
    let grid = mask.grid().clone();
    let all: Vec<usize> = (0..grid.len()).collect();
    let metrics = evaluate(&trained.model, mask, test)?;
    let (seen_mean, unseen_mean) = split_means(&metrics);
    let distance = distance_analysis(&metrics).ok();

    let excess = match oracle {
        Some(oracle) if exp.n_excess > 0 => {
            let fresh = oracle.dataset(&all, exp.n_excess, derive_seed(seed, stream::EVAL), stream::TEST_DATA)?;
            Some(excess_risk(&trained.model, mask, oracle, &fresh)?)
        }
        _ => None,
    };

    let bound = match &trained.stage2 {
        Some(s2) => {
            let (head_norm, hsrc) = match exp.bound.head_norm {
                Some(w) => (w, "given"),
                None => (head_norms(&trained.model.bank).iter().map(|&(_, n)| n).fold(0.0, f64::max), "max completed head norm"),
            };
            let (repr_norm, rsrc) = match exp.bound.repr_norm {
                Some(d) => (d, "given"),
                None => (
                    representation_norm_bound(&trained.model.net, test.domains().iter().flatten().map(|s| s.x.as_slice())),
                    "max representation norm on test inputs",
                ),
            };
            let run = CompletionRunSummary {
                rank: s2.rank,
                max_levels: grid.max_levels(),
                modes: grid.modes(),
                width: trained.model.bank.width(),
                observed: mask.len(),
                residual_l1: s2.residual_l1,
            };
            let prov = alloc::format!("W: {hsrc}; D_X: {rsrc}");
            Some(bound_diagnostic(&exp.bound, &run, head_norm, repr_norm, prov, excess.as_ref().map(|e| e.average))?)
        }
        None => None,
    };

    if metrics.iter().any(|m| m.seen != mask.contains(m.flat_index)) {
        bail!(Data, "seen flags of the report do not match the training mask");
    }
    let record = RunRecord {
        seed,
        trainer: trained.method.name(),
        observed: mask.len(),
        lambda: trained.config.lambda,
        metrics,
        seen_mean,
        unseen_mean,
        distance,
        excess,
        bound,
        stage2_residual_l1: trained.stage2.as_ref().map(|s| s.residual_l1),
        iterations: trained.curve.len(),
        stopped_at: trained.stopped_at,
        warnings: trained.warnings.clone(),
    };
    Ok(record)
}

/// Mean and sample standard deviation (`n − 1`; zero for a single value).
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() == 1 {
        return (mean, 0.0);
    }
    let ss = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>();
    (mean, libm::sqrt(ss / (n - 1.0)))
}

/// Aggregate of all runs at one sweep value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub runs: usize,
    pub seen_mean: Option<f64>,
    pub seen_std: Option<f64>,
    /// `None` when no run had an unseen domain.
    pub unseen_mean: Option<f64>,
    pub unseen_std: Option<f64>,
}

/// Groups `(value, record)` pairs by value, in first-appearance order.
pub fn summarize_sweep(values: &[f64], runs: &[(f64, RunRecord)]) -> Vec<SweepPoint> {
    values
        .iter()
        .map(|&value| {
            let at: Vec<&RunRecord> = runs.iter().filter(|(v, _)| *v == value).map(|(_, r)| r).collect();
            let stat = |f: &dyn Fn(&RunRecord) -> Option<f64>| {
                let v: Vec<f64> = at.iter().filter_map(|r| f(r)).collect();
                if v.is_empty() {
                    (None, None)
                } else {
                    let (m, s) = mean_std(&v);
                    (Some(m), Some(s))
                }
            };
            let (seen_mean, seen_std) = stat(&|r| r.seen_mean);
            let (unseen_mean, unseen_std) = stat(&|r| r.unseen_mean);
            SweepPoint { value, runs: at.len(), seen_mean, seen_std, unseen_mean, unseen_std }
        })
        .collect()
}
