use alloc::vec::Vec;

use super::{loss_and_grads, objective, Example, LossSpec, Model};
use crate::error::Result;

/// Worst disagreement between analytic and central-difference gradients.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Largest `|a − n| / max(|a|, |n|)` over compared coordinates.
    pub max_rel_error: f64,
    /// Flat parameter position of that coordinate.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub compared: usize,
    pub skipped: usize,
}

/// Compares every gradient coordinate against `(f(θ+h) − f(θ−h)) / 2h`.
/// Coordinates where both values are below `floor` in magnitude are skipped.
pub fn check_gradients(
    model: &Model,
    batch: &[Example<'_>],
    spec: &LossSpec,
    lambda: f64,
    h: f64,
    floor: f64,
) -> Result<GradCheck> {
    let (_, grads) = loss_and_grads(model, batch, spec, lambda)?;
    let analytic: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();
    let mut probe = model.clone();
    let mut out = GradCheck { max_rel_error: 0.0, worst_index: 0, analytic: 0.0, numeric: 0.0, compared: 0, skipped: 0 };
    let mut flat = 0;
    let lens: Vec<usize> = probe.param_slices_mut().iter().map(|s| s.len()).collect();
    for (slice, len) in lens.into_iter().enumerate() {
        for i in 0..len {
            let orig = probe.param_slices_mut()[slice][i];
            probe.param_slices_mut()[slice][i] = orig + h;
            let up = objective(&probe, batch, spec, lambda)?;
            probe.param_slices_mut()[slice][i] = orig - h;
            let down = objective(&probe, batch, spec, lambda)?;
            probe.param_slices_mut()[slice][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[flat];
            if a.abs() < floor && numeric.abs() < floor {
                out.skipped += 1;
            } else {
                out.compared += 1;
                let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
                if rel > out.max_rel_error {
                    out = GradCheck { max_rel_error: rel, worst_index: flat, analytic: a, numeric, ..out };
                }
            }
            flat += 1;
        }
    }
    Ok(out)
}
