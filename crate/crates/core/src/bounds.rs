//! Capacity formulas for the rank-K head class and the computable parts of the
//! excess-risk bound. Logarithms are natural.

use alloc::string::String;
use serde::{Deserialize, Serialize};

use crate::error::{bail, Result};

/// Pseudo-dimension bound `K·d·M²·ln(8·e·d)` of rank-`K` tensors of shape `d^M`.
pub fn pdim_bound(rank: usize, levels: usize, modes: usize) -> Result<f64> {
    if rank == 0 || levels == 0 || modes == 0 {
        bail!(Argument, "pdim_bound needs K, d, M ≥ 1 (got {rank}, {levels}, {modes})");
    }
    let (k, d, m) = (rank as f64, levels as f64, modes as f64);
    Ok(k * d * m * m * libm::log(8.0 * core::f64::consts::E * d))
}

/// Uniform-convergence term for completion from `T` uniformly observed domains:
/// `q·sqrt((pdim_bound(K, d, M) + ln(q/δ)) / T)`.
pub fn completion_generalization_term(
    rank: usize,
    max_levels: usize,
    modes: usize,
    width: usize,
    observed: usize,
    delta: f64,
) -> Result<f64> {
    if width == 0 || observed == 0 {
        bail!(Argument, "q and T must be positive (got q={width}, T={observed})");
    }
    if !(delta > 0.0 && delta < 1.0) {
        bail!(Argument, "delta must lie in (0, 1), got {delta}");
    }
    let pdim = pdim_bound(rank, max_levels, modes)?;
    let q = width as f64;
    Ok(q * libm::sqrt((pdim + libm::log(q / delta)) / observed as f64))
}

/// Regularity constants of the excess-risk bound.
///
/// `lambda_sc`, `nu` and `eps` cannot be estimated from data and are carried
/// only as user inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundParams {
    /// Loss bound `B`.
    pub loss_bound: f64,
    /// Lipschitz constant of the loss in its first argument.
    pub lipschitz: f64,
    /// Head norm bound `W`; `None` means estimate from the trained heads.
    pub head_norm: Option<f64>,
    /// Representation norm bound `D_X`; `None` means estimate from data.
    pub repr_norm: Option<f64>,
    pub lambda_sc: f64,
    pub nu: f64,
    pub eps: f64,
    pub delta: f64,
}

impl Default for BoundParams {
    fn default() -> Self {
        Self {
            loss_bound: 1.0,
            lipschitz: 1.0,
            head_norm: None,
            repr_norm: None,
            lambda_sc: 1.0,
            nu: 1.0,
            eps: 0.0,
            delta: 0.05,
        }
    }
}

impl BoundParams {
    pub fn validate(&self) -> Result<()> {
        let mut bad = alloc::vec::Vec::new();
        for (name, v) in [
            ("loss_bound", self.loss_bound),
            ("lipschitz", self.lipschitz),
            ("lambda_sc", self.lambda_sc),
            ("nu", self.nu),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad.push(alloc::format!("{name} must be positive"));
            }
        }
        if self.nu > 1.0 {
            bad.push("nu must be ≤ 1".into());
        }
        if !(self.eps >= 0.0) {
            bad.push("eps must be non-negative".into());
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            bad.push("delta must lie in (0, 1)".into());
        }
        for (name, v) in [("head_norm", self.head_norm), ("repr_norm", self.repr_norm)] {
            if let Some(v) = v {
                if !(v >= 0.0 && v.is_finite()) {
                    bad.push(alloc::format!("{name} must be non-negative"));
                }
            }
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Argument(bad.join("; ")))
        }
    }
}

/// Inputs of the bound diagnostic taken from a two-stage run.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionRunSummary {
    pub rank: usize,
    pub max_levels: usize,
    pub modes: usize,
    pub width: usize,
    pub observed: usize,
    /// `(1/T) Σ_{t seen} Σ_j |ŵ_{t,j} − T̂_{t,j}|`.
    pub residual_l1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundDiagnostic {
    pub lipschitz: f64,
    pub repr_norm: f64,
    pub head_norm: f64,
    /// Empirical completion residual scaled by `L·D_X·W`.
    pub completion_residual_term: f64,
    /// Uniform-convergence term scaled by `L·D_X·W`.
    pub generalization_term: f64,
    /// Symbolic form of the representation-learning term, which is not estimated.
    pub unestimated: String,
    pub measured_excess_risk: Option<f64>,
    /// Where `W` and `D_X` came from.
    pub provenance: String,
}

pub const UNESTIMATED_TERM: &str = "O~((C(W)/n + C(Phi)/(nT))^(1/4))";

/// Evaluates the two computable terms of the bound.
pub fn bound_diagnostic(
    params: &BoundParams,
    run: &CompletionRunSummary,
    head_norm: f64,
    repr_norm: f64,
    provenance: String,
    measured_excess_risk: Option<f64>,
) -> Result<BoundDiagnostic> {
    params.validate()?;
    let scale = params.lipschitz * repr_norm * head_norm;
    let gen = completion_generalization_term(run.rank, run.max_levels, run.modes, run.width, run.observed, params.delta)?;
    Ok(BoundDiagnostic {
        lipschitz: params.lipschitz,
        repr_norm,
        head_norm,
        completion_residual_term: scale * run.residual_l1,
        generalization_term: scale * gen,
        unestimated: UNESTIMATED_TERM.into(),
        measured_excess_risk,
        provenance,
    })
}
