//! Run configuration: a TOML file layered over a named preset, then dotted
//! `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};
use toml::{Table, Value};
use zsda_core::completion::CompletionConfig;
use zsda_core::datagen::{GridTransformConfig, Link, PlantedConfig};
use zsda_core::eval::{Experiment, Generator, MaskDesign, Trainer};
use zsda_core::model::{ArchConfig, BankVariant};
use zsda_core::pipeline::TrainConfig;

use crate::error::{Error, Result};

/// What a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Vary {
    /// Number of observed domains, drawn uniformly per seed.
    #[serde(rename = "T", alias = "t")]
    T,
    #[serde(rename = "lambda")]
    Lambda,
    /// Repeat the configured design over seeds only.
    #[serde(rename = "none")]
    None,
}

impl Vary {
    pub fn name(self) -> &'static str {
        match self {
            Self::T => "T",
            Self::Lambda => "lambda",
            Self::None => "none",
        }
    }
}

impl std::str::FromStr for Vary {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "T" | "t" => Ok(Self::T),
            "lambda" => Ok(Self::Lambda),
            "none" => Ok(Self::None),
            _ => Err(Error::Usage(format!("cannot vary {s:?}; expected T, lambda or none"))),
        }
    }
}

pub const DEFAULT_LAMBDAS: [f64; 7] = [0.005, 0.01, 0.03, 0.05, 0.1, 0.5, 1.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub vary: Vary,
    pub values: Vec<f64>,
    /// Runs per value, with seeds `seed, seed + 1, …`.
    pub seeds: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Preset the file was layered over.
    pub preset: String,
    /// Master seed.
    pub seed: u64,
    /// Worker threads for independent runs.
    pub threads: usize,
    pub experiment: Experiment,
    pub sweep: SweepConfig,
}

pub const PRESETS: [&str; 4] = ["planted_small", "fiber", "grid_transform", "planted_grid"];

/// Built-in configurations.
///
/// * `planted_small`: planted logistic heads on a 3×3 grid, two-stage; quick.
/// * `fiber`: the 2×3×3×2 design with 16 observed domains, two-stage, and a
///   sweep over 5, 10, 15, 20 observed domains.
/// * `grid_transform`: rotated and translated patterns on a 5×5 grid with the
///   diagonal observed, additive heads.
/// * `planted_grid`: planted logistic heads on a 5×5 grid with the diagonal
///   observed, additive heads, swept over the regularization weight.
pub fn preset(name: &str) -> Option<RunConfig> {
    let planted = |dims: Vec<usize>, input_dim: usize, arch: &ArchConfig, head_scale: f64| {
        Generator::Planted(PlantedConfig {
            dims,
            input_dim,
            arch: arch.clone(),
            rank: 2,
            link: Link::Logistic,
            head_scale,
            ..Default::default()
        })
    };
    let two_stage = |restarts| Trainer::TwoStage { completion: CompletionConfig { rank: 2, restarts, ..Default::default() } };
    let cfg = match name {
        "planted_small" => {
            let arch = ArchConfig { hidden: vec![16], repr_dim: 4, ..Default::default() };
            RunConfig {
                preset: name.into(),
                seed: 0,
                threads: 1,
                experiment: Experiment {
                    generator: planted(vec![3, 3], 6, &arch, 3.0),
                    mask: MaskDesign::Uniform { count: 6 },
                    arch,
                    train: TrainConfig { max_iters: 1000, ..Default::default() },
                    trainer: two_stage(5),
                    n_train: 200,
                    n_test: 200,
                    n_excess: 500,
                    bound: Default::default(),
                },
                sweep: SweepConfig { vary: Vary::T, values: vec![3.0, 5.0, 7.0, 9.0], seeds: 3 },
            }
        }
        "fiber" => {
            let arch = ArchConfig { hidden: vec![32], repr_dim: 8, ..Default::default() };
            RunConfig {
                preset: name.into(),
                seed: 0,
                threads: 1,
                experiment: Experiment {
                    generator: planted(vec![2, 3, 3, 2], 10, &arch, 1.0),
                    mask: MaskDesign::Uniform { count: 16 },
                    arch,
                    train: TrainConfig { max_iters: 3000, window: 100, ..Default::default() },
                    trainer: two_stage(20),
                    n_train: 500,
                    n_test: 500,
                    n_excess: 0,
                    bound: Default::default(),
                },
                sweep: SweepConfig { vary: Vary::T, values: vec![5.0, 10.0, 15.0, 20.0], seeds: 10 },
            }
        }
        "grid_transform" => RunConfig {
            preset: name.into(),
            seed: 0,
            threads: 1,
            experiment: Experiment {
                generator: Generator::GridTransform(GridTransformConfig::default()),
                mask: MaskDesign::Diagonal,
                arch: ArchConfig::default(),
                train: TrainConfig { max_iters: 3000, ..Default::default() },
                trainer: Trainer::EndToEnd { variant: BankVariant::Additive, rank: 3 },
                n_train: 1000,
                n_test: 200,
                n_excess: 0,
                bound: Default::default(),
            },
            sweep: SweepConfig { vary: Vary::None, values: vec![], seeds: 10 },
        },
        "planted_grid" => {
            let arch = ArchConfig { hidden: vec![32], repr_dim: 8, ..Default::default() };
            RunConfig {
                preset: name.into(),
                seed: 0,
                threads: 1,
                experiment: Experiment {
                    generator: planted(vec![5, 5], 10, &arch, 1.0),
                    mask: MaskDesign::Diagonal,
                    arch,
                    train: TrainConfig { max_iters: 3000, ..Default::default() },
                    trainer: Trainer::EndToEnd { variant: BankVariant::Additive, rank: 3 },
                    n_train: 1000,
                    n_test: 500,
                    n_excess: 0,
                    bound: Default::default(),
                },
                sweep: SweepConfig { vary: Vary::Lambda, values: DEFAULT_LAMBDAS.to_vec(), seeds: 3 },
            }
        }
        _ => return None,
    };
    Some(cfg)
}

/// Keys that may be set although the preset leaves them unset.
const OPTIONAL_KEYS: [&str; 3] = ["head_norm", "repr_norm", "init_scale"];

/// Resolves `source` (a file path, or a preset name when no such file
/// exists; `None` means `planted_small`) and applies `overrides`.
///
/// Every problem found is reported: unknown keys, a type error if the merged
/// document does not parse, and each semantic violation.
pub fn load_config(source: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
    let mut user = match source {
        None => Table::new(),
        Some(s) if Path::new(s).is_file() => {
            let text = std::fs::read_to_string(s).map_err(|e| Error::io(s, e))?;
            text.parse::<Table>().map_err(|e| Error::ConfigInvalid(vec![format!("{s}: {e}")]))?
        }
        Some(s) if preset(s).is_some() => {
            let mut t = Table::new();
            t.insert("preset".into(), Value::String(s.into()));
            t
        }
        Some(s) => return Err(Error::ConfigNotFound(s.into())),
    };
    let mut errors = Vec::new();
    for o in overrides {
        if let Err(e) = apply_override(&mut user, o) {
            errors.push(e);
        }
    }
    let name = match user.get("preset") {
        None => "planted_small".to_string(),
        Some(Value::String(s)) => s.clone(),
        Some(v) => return Err(Error::ConfigInvalid(vec![format!("preset must be a string, got {v}")])),
    };
    let Some(base) = preset(&name) else {
        return Err(Error::ConfigInvalid(vec![format!("unknown preset {name:?}; known: {}", PRESETS.join(", "))]));
    };
    let mut merged = Table::try_from(&base).expect("presets serialize");
    merge(&mut merged, user, "", &mut errors);
    match RunConfig::deserialize(Value::Table(merged)) {
        Ok(cfg) => {
            errors.extend(cfg.violations());
            if errors.is_empty() {
                Ok(cfg)
            } else {
                Err(Error::ConfigInvalid(errors))
            }
        }
        Err(e) => {
            errors.push(e.to_string().trim().replace('\n', " "));
            Err(Error::ConfigInvalid(errors))
        }
    }
}

fn merge(base: &mut Table, user: Table, path: &str, unknown: &mut Vec<String>) {
    for (k, v) in user {
        let key = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
        match base.get_mut(&k) {
            None if OPTIONAL_KEYS.contains(&k.as_str()) => {
                base.insert(k, v);
            }
            None => unknown.push(format!("unknown key {key}")),
            Some(Value::Table(bt)) => match v {
                // a different variant of a tagged section replaces it whole
                Value::Table(ut) if ut.get("kind").is_some_and(|kind| Some(kind) != bt.get("kind")) => {
                    *bt = ut;
                }
                Value::Table(ut) => merge(bt, ut, &key, unknown),
                other => unknown.push(format!("{key} must be a table, got {other}")),
            },
            Some(slot) => *slot = v,
        }
    }
}

/// Applies one `a.b.c=value` override; the value is read as a TOML literal,
/// falling back to a bare string.
pub fn apply_override(table: &mut Table, spec: &str) -> std::result::Result<(), String> {
    let (key, raw) = spec.split_once('=').ok_or_else(|| format!("override {spec:?} is not KEY=VALUE"))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key {key:?} is malformed"));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.into()));
    let mut at = table;
    for p in &parts[..parts.len() - 1] {
        let slot = at.entry(p.to_string()).or_insert_with(|| Value::Table(Table::new()));
        at = match slot {
            Value::Table(t) => t,
            _ => return Err(format!("override {key}: {p} is not a table")),
        };
    }
    at.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    pub fn violations(&self) -> Vec<String> {
        let mut errors: Vec<String> = self.experiment.violations();
        if self.threads == 0 {
            errors.push("threads must be at least 1".into());
        }
        if self.sweep.seeds == 0 {
            errors.push("sweep.seeds must be at least 1".into());
        }
        errors.extend(self.sweep_value_errors(&self.sweep.values));
        errors
    }

    /// Problems with `values` as sweep values for `self.sweep.vary`.
    pub fn sweep_value_errors(&self, values: &[f64]) -> Vec<String> {
        let mut errors = Vec::new();
        let domains = self.experiment.generator.grid().map(|g| g.len()).unwrap_or(0);
        for &v in values {
            match self.sweep.vary {
                Vary::T if !(v >= 1.0 && v.fract() == 0.0 && v <= domains as f64) => {
                    errors.push(format!("sweep value T = {v} must be an integer in [1, {domains}]"))
                }
                Vary::Lambda if !(v >= 0.0 && v.is_finite()) => {
                    errors.push(format!("sweep value lambda = {v} must be finite and non-negative"))
                }
                _ => {}
            }
        }
        errors
    }

    /// The resolved configuration as TOML, as echoed into every run directory.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configurations serialize")
    }
}
