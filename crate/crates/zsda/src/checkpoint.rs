//! Checkpoint container: a header describing the model and training run, then
//! one line per array as `{"name", "shape", "values"}`.
//!
//! Arrays are the model parameters in their fixed order (`net.{i}.weights`,
//! `net.{i}.bias`, then the bank), followed by `curve`, `heldout` and, for
//! two-stage models, `stage2.learned_heads`.

use std::path::Path;

use serde::{Deserialize, Serialize};
use zsda_core::completion::CompletionConfig;
use zsda_core::datagen::{PlantedConfig, PlantedModel};
use zsda_core::model::{ArchConfig, BankKind, BankVariant, Model};
use zsda_core::pipeline::{Method, Stage2Record, TrainConfig, TrainedModel};
use zsda_core::{DomainGrid, HeadTensor, ObservationMask};

use crate::error::Result;
use crate::lines::{Reader, Writer};

pub const CHECKPOINT_VERSION: u64 = 1;
const FORMAT: &str = "checkpoint";

#[derive(Serialize, Deserialize)]
struct Header {
    version: u64,
    format: String,
    dims: Vec<usize>,
    input_dim: usize,
    classes: usize,
    variant: BankVariant,
    rank: usize,
    /// Domains owning a free head.
    free_seen: Vec<usize>,
    arch: ArchConfig,
    method: Method,
    seen: Vec<usize>,
    config: TrainConfig,
    stopped_at: Option<usize>,
    warnings: Vec<String>,
    stage2: Option<Stage2Meta>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    planted: Option<PlantedConfig>,
}

#[derive(Serialize, Deserialize)]
struct Stage2Meta {
    residual_l1: f64,
    residual_l2: f64,
    rank: usize,
    sweeps_used: usize,
    converged: bool,
    fully_identified: bool,
    underdetermined: bool,
    completion: CompletionConfig,
}

#[derive(Serialize)]
struct ArrayRef<'a> {
    name: &'a str,
    shape: &'a [usize],
    values: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Array {
    name: String,
    shape: Vec<usize>,
    values: Vec<f64>,
}

pub fn write_checkpoint(tm: &TrainedModel, path: &Path) -> Result<()> {
    write(tm, None, path)
}

pub fn read_checkpoint(path: &Path) -> Result<TrainedModel> {
    read(path).map(|(tm, _)| tm)
}

/// Stores a planted ground truth so that later evaluations can measure
/// excess risk against it.
pub fn write_oracle(pm: &PlantedModel, path: &Path) -> Result<()> {
    let tm = TrainedModel {
        method: Method::EndToEnd(BankVariant::Factorized),
        model: pm.model.clone(),
        mask: ObservationMask::all(pm.grid().clone()),
        curve: Vec::new(),
        heldout: Vec::new(),
        stopped_at: None,
        config: TrainConfig::default(),
        arch: pm.config.arch.clone(),
        stage2: None,
        warnings: Vec::new(),
        wall_time: None,
    };
    write(&tm, Some(&pm.config), path)
}

pub fn read_oracle(path: &Path) -> Result<PlantedModel> {
    let (tm, planted) = read(path)?;
    let Some(config) = planted else {
        return Err(crate::Error::Usage(format!("{} is a checkpoint without a planted configuration", path.display())));
    };
    Ok(PlantedModel { link: config.link, config, model: tm.model })
}

fn write(tm: &TrainedModel, planted: Option<&PlantedConfig>, path: &Path) -> Result<()> {
    let model = &tm.model;
    let (rank, free_seen) = match model.bank.kind() {
        BankKind::Factorized(f) => (f.rank(), Vec::new()),
        BankKind::Free { seen, .. } => (1, seen.clone()),
        _ => (1, Vec::new()),
    };
    let header = Header {
        version: CHECKPOINT_VERSION,
        format: FORMAT.into(),
        dims: model.bank.grid().dims().to_vec(),
        input_dim: model.net.input_dim(),
        classes: model.classes(),
        variant: model.bank.variant(),
        rank,
        free_seen,
        arch: tm.arch.clone(),
        method: tm.method,
        seen: tm.mask.seen().to_vec(),
        config: tm.config.clone(),
        stopped_at: tm.stopped_at,
        warnings: tm.warnings.clone(),
        stage2: tm.stage2.as_ref().map(|s| Stage2Meta {
            residual_l1: s.residual_l1,
            residual_l2: s.residual_l2,
            rank: s.rank,
            sweeps_used: s.sweeps_used,
            converged: s.converged,
            fully_identified: s.fully_identified,
            underdetermined: s.underdetermined,
            completion: s.completion.clone(),
        }),
        planted: planted.cloned(),
    };
    let mut w = Writer::create(path)?;
    w.line(&header)?;
    let names = model.param_names();
    let shapes = model.param_shapes();
    for ((name, shape), values) in names.iter().zip(&shapes).zip(model.param_slices()) {
        w.line(&ArrayRef { name, shape, values })?;
    }
    w.line(&ArrayRef { name: "curve", shape: &[tm.curve.len()], values: &tm.curve })?;
    let heldout: Vec<f64> = tm.heldout.iter().flat_map(|&(i, l)| [i as f64, l]).collect();
    w.line(&ArrayRef { name: "heldout", shape: &[tm.heldout.len(), 2], values: &heldout })?;
    if let Some(s) = &tm.stage2 {
        let h = &s.learned_heads;
        w.line(&ArrayRef { name: "stage2.learned_heads", shape: &[h.grid().len(), h.width()], values: h.values() })?;
    }
    w.finish()
}

fn read(path: &Path) -> Result<(TrainedModel, Option<PlantedConfig>)> {
    let mut rd = Reader::open(path)?;
    let h: Header = rd.header(CHECKPOINT_VERSION)?;
    if h.format != FORMAT {
        return Err(rd.error(format!("expected a {FORMAT} file, found {:?}", h.format)));
    }
    let grid = DomainGrid::new(h.dims).map_err(|e| rd.error(e))?;
    // any initialization will do: every parameter is overwritten below
    let mut rng = zsda_core::rng::rng(0);
    let seen_for_bank = if h.variant == BankVariant::Free { &h.free_seen } else { &h.seen };
    let mut model = Model::init(h.variant, grid.clone(), h.input_dim, &h.arch, h.classes, h.rank, seen_for_bank, &mut rng)
        .map_err(|e| rd.error(e))?;
    let names = model.param_names();
    let shapes = model.param_shapes();
    let next = |rd: &mut Reader, name: &str, shape: &[usize]| -> Result<Vec<f64>> {
        let Some(a) = rd.record::<Array>()? else {
            return Err(rd.error(format!("file ends before array {name}")));
        };
        if a.name != name || a.shape != shape || a.values.len() != shape.iter().product::<usize>() {
            return Err(rd.error(format!(
                "expected array {name} with shape {shape:?}, found {} with shape {:?} and {} values",
                a.name,
                a.shape,
                a.values.len()
            )));
        }
        Ok(a.values)
    };
    let mut params = Vec::with_capacity(names.len());
    for (name, shape) in names.iter().zip(&shapes) {
        params.push(next(&mut rd, name, shape)?);
    }
    for (dst, src) in model.param_slices_mut().into_iter().zip(params) {
        dst.copy_from_slice(&src);
    }

    let curve = {
        let Some(a) = rd.record::<Array>()? else { return Err(rd.error("file ends before array curve")) };
        if a.name != "curve" || a.shape != [a.values.len()] {
            return Err(rd.error("malformed curve array"));
        }
        a.values
    };
    let heldout = {
        let Some(a) = rd.record::<Array>()? else { return Err(rd.error("file ends before array heldout")) };
        if a.name != "heldout" || a.shape.len() != 2 || a.shape[1] != 2 || a.values.len() != 2 * a.shape[0] {
            return Err(rd.error("malformed heldout array"));
        }
        a.values.chunks_exact(2).map(|c| (c[0] as usize, c[1])).collect()
    };
    let stage2 = match h.stage2 {
        None => None,
        Some(m) => {
            let width = model.bank.width();
            let values = next(&mut rd, "stage2.learned_heads", &[grid.len(), width])?;
            Some(Stage2Record {
                learned_heads: HeadTensor::new(grid.clone(), width, values).map_err(|e| rd.error(e))?,
                residual_l1: m.residual_l1,
                residual_l2: m.residual_l2,
                rank: m.rank,
                sweeps_used: m.sweeps_used,
                converged: m.converged,
                fully_identified: m.fully_identified,
                underdetermined: m.underdetermined,
                completion: m.completion,
            })
        }
    };
    if rd.record::<serde_json::Value>()?.is_some() {
        return Err(rd.error("unexpected trailing record"));
    }
    let mask = ObservationMask::new(grid, h.seen).map_err(|e| rd.error(e))?;
    let tm = TrainedModel {
        method: h.method,
        model,
        mask,
        curve,
        heldout,
        stopped_at: h.stopped_at,
        config: h.config,
        arch: h.arch,
        stage2,
        warnings: h.warnings,
        wall_time: None,
    };
    Ok((tm, h.planted))
}
