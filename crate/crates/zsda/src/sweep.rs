//! Repeated runs over seeds and one varied setting, in parallel.

use std::time::Instant;

use rayon::prelude::*;
use zsda_core::eval::{run_experiment, summarize_sweep, Experiment, MaskDesign, SweepPoint};

use crate::config::{RunConfig, Vary};
use crate::error::{Error, Result};
use crate::report::RunRow;

#[derive(Debug, Clone)]
pub struct SweepOutcome {
    /// Sorted by sweep value, then seed.
    pub runs: Vec<RunRow>,
    pub points: Vec<SweepPoint>,
    /// Seconds per run, aligned with `runs`.
    pub wall_times: Vec<f64>,
}

/// The recipe for one sweep value.
pub fn experiment_at(base: &Experiment, vary: Vary, value: f64) -> Experiment {
    let mut exp = base.clone();
    match vary {
        Vary::T => exp.mask = MaskDesign::Uniform { count: value as usize },
        Vary::Lambda => exp.train.lambda = value,
        Vary::None => {}
    }
    exp
}

/// Runs `seeds` seeds (`cfg.seed`, `cfg.seed + 1`, …) at every value on
/// `cfg.threads` workers. With [`Vary::None`] the configured design is run
/// once per seed and summarized as a single point with value 0.
pub fn run_sweep(cfg: &RunConfig, vary: Vary, values: &[f64], seeds: usize) -> Result<SweepOutcome> {
    let probe = RunConfig { sweep: crate::config::SweepConfig { vary, values: values.to_vec(), seeds }, ..cfg.clone() };
    let errors = probe.violations();
    if !errors.is_empty() {
        return Err(Error::ConfigInvalid(errors));
    }
    let values: Vec<f64> = if vary == Vary::None { vec![0.0] } else { values.to_vec() };
    let jobs: Vec<(f64, u64)> =
        values.iter().flat_map(|&v| (0..seeds as u64).map(move |i| (v, cfg.seed + i))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| Error::Usage(format!("cannot start {} worker threads: {e}", cfg.threads)))?;
    let results: Vec<Result<(RunRow, f64)>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(value, seed)| {
                let start = Instant::now();
                let exp = experiment_at(&cfg.experiment, vary, value);
                let (record, _) = run_experiment(&exp, seed)?;
                let value = (vary != Vary::None).then_some(value);
                Ok((RunRow { value, record }, start.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let mut runs = Vec::with_capacity(results.len());
    let mut wall_times = Vec::with_capacity(results.len());
    for r in results {
        let (row, secs) = r?;
        runs.push(row);
        wall_times.push(secs);
    }
    let points = summarize(&values, &runs);
    Ok(SweepOutcome { runs, points, wall_times })
}

/// Aggregates run rows by sweep value; rows without a value count as 0.
pub fn summarize(values: &[f64], runs: &[RunRow]) -> Vec<SweepPoint> {
    let pairs: Vec<(f64, zsda_core::eval::RunRecord)> =
        runs.iter().map(|r| (r.value.unwrap_or(0.0), r.record.clone())).collect();
    summarize_sweep(values, &pairs)
}
