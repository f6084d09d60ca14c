//! Per-domain metrics, excess risk against a planted oracle, rank correlation
//! with grid distance, and seed aggregates.

mod experiment;

use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};

use crate::data::DomainDataset;
use crate::datagen::PlantedModel;
use crate::error::{bail, Error, Result};
use crate::mask::ObservationMask;
use crate::model::{apply_head, LossKind, Model};

pub use experiment::{
    assess, mean_std, run_experiment, summarize_sweep, Experiment, Generator, MaskDesign, RunRecord, SweepPoint, Trainer,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainMetric {
    pub flat_index: usize,
    pub multi_index: Vec<usize>,
    pub seen: bool,
    pub n_test: usize,
    /// Top-1 accuracy for classification, mean loss for regression.
    pub accuracy_or_loss: f64,
    pub min_manhattan: usize,
    pub mean_manhattan: f64,
}

/// Metrics for every domain that has test data, in flat-index order.
pub fn evaluate(model: &Model, mask: &ObservationMask, test: &DomainDataset) -> Result<Vec<DomainMetric>> {
    if mask.grid() != test.grid() || model.bank.grid() != test.grid() {
        bail!(Shape, "model, mask and test data disagree on the domain grid");
    }
    let spec = test.loss();
    spec.validate()?;
    if model.net.input_dim() != test.input_dim() || model.classes() != spec.classes {
        bail!(Shape, "model expects {} inputs and {} outputs, test data has {} and {}", model.net.input_dim(), model.classes(), test.input_dim(), spec.classes);
    }
    let mut out = Vec::new();
    for t in test.stored_domains() {
        let head = model.bank.head(t)?;
        let samples = test.domain(t);
        let mut acc = 0.0;
        for s in samples {
            let phi = model.net.forward(&s.x);
            let z = apply_head(&head, &phi, spec.classes);
            acc += match spec.kind {
                LossKind::Squared => spec.value(&z, s.y),
                _ => (spec.predict(&z) == s.y) as u8 as f64,
            };
        }
        let (min, mean) = mask.distances(t);
        out.push(DomainMetric {
            flat_index: t,
            multi_index: test.grid().multi_index(t)?.0,
            seen: mask.contains(t),
            n_test: samples.len(),
            accuracy_or_loss: acc / samples.len() as f64,
            min_manhattan: min,
            mean_manhattan: mean,
        });
    }
    Ok(out)
}

/// Mean metric over seen and unseen domains; `None` for an empty side.
pub fn split_means(metrics: &[DomainMetric]) -> (Option<f64>, Option<f64>) {
    let mean = |seen: bool| {
        let v: Vec<f64> = metrics.iter().filter(|m| m.seen == seen).map(|m| m.accuracy_or_loss).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    (mean(true), mean(false))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DomainExcess {
    pub flat_index: usize,
    pub estimate: f64,
    pub std_error: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcessRisk {
    pub domains: Vec<DomainExcess>,
    /// Average over all grid domains.
    pub average: f64,
    pub average_std_error: f64,
    /// `(1/T) Σ_{t seen} ‖ŵ_t − w*_t‖`; only meaningful when both heads act on
    /// comparable representations.
    pub head_recovery: Option<f64>,
}

/// Monte-Carlo excess risk `E[ℓ(ŵ_t∘φ̂) − ℓ(w*_t∘φ*)]` on every grid domain,
/// using paired per-sample differences on `test`.
pub fn excess_risk(model: &Model, mask: &ObservationMask, oracle: &PlantedModel, test: &DomainDataset) -> Result<ExcessRisk> {
    let grid = oracle.grid();
    if test.grid() != grid || model.bank.grid() != grid {
        bail!(Shape, "model, oracle and test data disagree on the domain grid");
    }
    let spec = test.loss();
    if model.net.input_dim() != test.input_dim() || oracle.model.net.input_dim() != test.input_dim() {
        bail!(Shape, "input dimension of model, oracle and test data differ");
    }
    let mut domains = Vec::with_capacity(grid.len());
    for t in 0..grid.len() {
        let samples = test.domain(t);
        if samples.len() < 2 {
            bail!(Data, "excess risk needs at least two test samples on domain {t}");
        }
        let head = model.bank.head(t)?;
        let star = oracle.model.bank.head(t)?;
        let diffs = samples
            .iter()
            .map(|s| {
                let z = apply_head(&head, &model.net.forward(&s.x), spec.classes);
                let zs = apply_head(&star, &oracle.model.net.forward(&s.x), spec.classes);
                spec.value(&z, s.y) - spec.value(&zs, s.y)
            })
            .collect::<Vec<f64>>();
        let (mean, sd) = mean_std(&diffs);
        domains.push(DomainExcess { flat_index: t, estimate: mean, std_error: sd / libm::sqrt(diffs.len() as f64), n: diffs.len() });
    }
    let d = domains.len() as f64;
    let average = domains.iter().map(|e| e.estimate).sum::<f64>() / d;
    let average_std_error = libm::sqrt(domains.iter().map(|e| e.std_error * e.std_error).sum::<f64>()) / d;
    let head_recovery = if model.bank.repr_dim() == oracle.model.bank.repr_dim() && !mask.is_empty() {
        let mut sum = 0.0;
        for &t in mask.seen() {
            let a = model.bank.head(t)?;
            let b = oracle.model.bank.head(t)?;
            sum += libm::sqrt(a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>());
        }
        Some(sum / mask.len() as f64)
    } else {
        None
    };
    Ok(ExcessRisk { domains, average, average_std_error, head_recovery })
}

/// Ranks starting at 1, ties sharing their average rank.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = alloc::vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman rank correlation; `None` when either column is constant or the
/// lengths differ or are below two.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let (ra, rb) = (average_ranks(a), average_ranks(b));
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in ra.iter().zip(&rb) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / libm::sqrt(saa * sbb))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceAnalysis {
    /// Number of unseen domains that entered the correlations.
    pub n: usize,
    pub rho_min: Option<f64>,
    pub rho_mean: Option<f64>,
    pub caveat: String,
}

pub const NOMINAL_CAVEAT: &str = "distances use raw level indices and assume ordered factor levels";

/// Spearman correlation of unseen-domain accuracy with the min and mean
/// Manhattan distance to the seen cells.
pub fn distance_analysis(metrics: &[DomainMetric]) -> Result<DistanceAnalysis> {
    let unseen: Vec<&DomainMetric> = metrics.iter().filter(|m| !m.seen).collect();
    if unseen.len() < 3 {
        return Err(Error::Data(alloc::format!("distance analysis needs at least 3 unseen domains, got {}", unseen.len())));
    }
    let acc: Vec<f64> = unseen.iter().map(|m| m.accuracy_or_loss).collect();
    let min: Vec<f64> = unseen.iter().map(|m| m.min_manhattan as f64).collect();
    let mean: Vec<f64> = unseen.iter().map(|m| m.mean_manhattan).collect();
    Ok(DistanceAnalysis { n: unseen.len(), rho_min: spearman(&acc, &min), rho_mean: spearman(&acc, &mean), caveat: NOMINAL_CAVEAT.into() })
}
