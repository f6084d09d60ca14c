//! Rank-K completion of a partially observed head tensor.
//!
//! The rank-constrained absolute-residual problem has no tractable exact
//! solver, so the squared residual is minimized by alternating least squares
//! with ridge damping over several random restarts; both the absolute and
//! squared residuals are reported and restarts are ranked by the absolute one.
//! ALS stalls in the long flat valleys typical of CP fits near the
//! identifiability limit, so each restart ends with Levenberg–Marquardt steps
//! on the same damped objective.
//!
//! Each coordinate `j` of the head decouples under the Hadamard form, so a
//! single ALS block update solves one `K × K` system per
//! `(mode, level, coordinate)`.

use alloc::vec;
use alloc::vec::Vec;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::cp::{CPFactors, HeadTensor};
use crate::error::{bail, Result};
use crate::linalg::cholesky_solve;
use crate::mask::ObservationMask;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CompletionConfig {
    pub rank: usize,
    pub max_sweeps: usize,
    /// Stop when the relative change of the damped objective drops below this.
    pub tol: f64,
    pub restarts: usize,
    /// Standard deviation of the Gaussian factor initialization; `None` uses
    /// `(RMS of observed entries)^(1/M)`.
    pub init_scale: Option<f64>,
    pub ridge: f64,
    /// Levenberg–Marquardt iterations per coordinate after the ALS sweeps;
    /// 0 leaves the ALS solution as is.
    pub refine_iters: usize,
    pub seed: u64,
}

impl Default for CompletionConfig {
    fn default() -> Self {
        Self {
            rank: 2,
            max_sweeps: 500,
            tol: 1e-9,
            restarts: 5,
            init_scale: None,
            ridge: 1e-10,
            refine_iters: 200,
            seed: 0,
        }
    }
}

impl CompletionConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if self.rank == 0 {
            bad.push("rank must be ≥ 1");
        }
        if !(self.tol > 0.0) {
            bad.push("tol must be positive");
        }
        if self.restarts == 0 {
            bad.push("restarts must be ≥ 1");
        }
        if !(self.ridge >= 0.0 && self.ridge.is_finite()) {
            bad.push("ridge must be non-negative");
        }
        if matches!(self.init_scale, Some(s) if !(s >= 0.0 && s.is_finite())) {
            bad.push("init_scale must be non-negative");
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(crate::Error::Argument(bad.join("; ")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResult {
    pub factors: CPFactors,
    /// `(1/T) Σ_{t seen} Σ_j |T̂_{t,j} − T̃_{t,j}|`.
    pub objective_l1: f64,
    /// `(1/T) Σ_{t seen} Σ_j (T̂_{t,j} − T̃_{t,j})²`.
    pub objective_l2: f64,
    pub sweeps_used: usize,
    /// Accepted Levenberg–Marquardt steps, summed over coordinates.
    pub refine_steps: usize,
    pub converged: bool,
    /// False when some level of some mode is never observed; heads touching
    /// that level are then set by the ridge term alone.
    pub fully_identified: bool,
    /// True when the per-coordinate parameter count `K·(Σd_m − M + 1)` exceeds `T`.
    pub underdetermined: bool,
    /// Index of the restart kept for each coordinate.
    pub restarts: Vec<usize>,
    /// `objective_l2` after every sweep of the restart kept for coordinate 0,
    /// with a final entry after refinement.
    pub history: Vec<f64>,
}

struct Observed<'a> {
    levels: Vec<Vec<usize>>,
    rows: Vec<&'a [f64]>,
    /// `by_level[m][l]`: positions in `levels`/`rows` with level `l` on mode `m`.
    by_level: Vec<Vec<Vec<usize>>>,
}

/// Fits rank-`K` factors to the seen rows of `observed`; other rows are ignored.
pub fn complete(observed: &HeadTensor, mask: &ObservationMask, cfg: &CompletionConfig) -> Result<CompletionResult> {
    cfg.validate()?;
    let grid = observed.grid();
    if mask.grid() != grid {
        bail!(Shape, "mask grid {:?} differs from tensor grid {:?}", mask.grid().dims(), grid.dims());
    }
    let q = observed.width();
    let mut obs = Observed {
        levels: Vec::with_capacity(mask.len()),
        rows: Vec::with_capacity(mask.len()),
        by_level: grid.dims().iter().map(|&d| vec![Vec::new(); d]).collect(),
    };
    for (pos, &t) in mask.seen().iter().enumerate() {
        let row = observed.row(t);
        if row.iter().any(|v| !v.is_finite()) {
            bail!(Data, "observed head for domain {t} is not finite");
        }
        let levels = grid.levels_unchecked(t);
        for (m, &l) in levels.iter().enumerate() {
            obs.by_level[m][l].push(pos);
        }
        obs.levels.push(levels);
        obs.rows.push(row);
    }
    let count = obs.rows.len() * q;
    let rms = libm::sqrt(obs.rows.iter().flat_map(|r| r.iter()).map(|v| v * v).sum::<f64>() / count as f64);
    let scale = cfg
        .init_scale
        .unwrap_or_else(|| libm::pow(rms, 1.0 / grid.modes() as f64));

    let floor = 1e-18 * rms * rms;
    let mut runs = Vec::with_capacity(cfg.restarts);
    for restart in 0..cfg.restarts {
        let mut rng = crate::rng::child_rng(cfg.seed, restart as u64);
        let mut factors = CPFactors::zeros(grid.clone(), cfg.rank, q)?;
        for b in factors.blocks_mut() {
            for v in b.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *v = scale * z;
            }
        }
        let mut run = als(&obs, factors, cfg, floor);
        if cfg.refine_iters > 0 {
            let (steps, done) = refine(&obs, &mut run.factors, cfg, floor);
            run.refine_steps = steps;
            run.converged |= done;
            run.history.push(residuals(&obs, &run.factors).1);
        }
        runs.push(run);
    }
    // coordinates decouple, so each keeps the restart with its lowest L1
    let per_coord: Vec<Vec<f64>> = runs.iter().map(|r| coordinate_l1(&obs, &r.factors)).collect();
    let chosen: Vec<usize> = (0..q)
        .map(|j| (0..runs.len()).fold(0, |b, r| if per_coord[r][j] < per_coord[b][j] { r } else { b }))
        .collect();
    let mut factors = runs[chosen[0]].factors.clone();
    for (j, &r) in chosen.iter().enumerate().skip(1) {
        for k in 0..cfg.rank {
            for m in 0..grid.modes() {
                for l in 0..grid.dims()[m] {
                    factors.block_mut(k, m)[l * q + j] = runs[r].factors.block(k, m)[l * q + j];
                }
            }
        }
    }
    let (l1, l2) = residuals(&obs, &factors);
    let mut best = CompletionResult {
        factors,
        objective_l1: l1,
        objective_l2: l2,
        sweeps_used: chosen.iter().map(|&r| runs[r].sweeps_used).max().unwrap_or(0),
        refine_steps: chosen.iter().map(|&r| runs[r].refine_steps).sum(),
        converged: chosen.iter().all(|&r| runs[r].converged),
        fully_identified: true,
        underdetermined: false,
        history: core::mem::take(&mut runs[chosen[0]].history),
        restarts: chosen,
    };
    best.fully_identified = mask.covers_all_levels();
    let dof = cfg.rank * (grid.total_levels() + 1 - grid.modes());
    best.underdetermined = dof > mask.len();
    Ok(best)
}

/// `floor`: mean squared residual per entry below which the fit counts as exact.
fn als(obs: &Observed<'_>, mut factors: CPFactors, cfg: &CompletionConfig, floor: f64) -> CompletionResult {
    let modes = factors.grid().modes();
    let dims = factors.grid().dims().to_vec();
    let (rank, q) = (factors.rank(), factors.width());
    let mut gram = vec![0.0; rank * rank];
    let mut rhs = vec![0.0; rank];
    let mut z = vec![0.0; rank];
    let mut history = Vec::new();
    let mut prev = damped_objective(obs, &factors, cfg.ridge);
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < cfg.max_sweeps {
        sweeps += 1;
        for m in 0..modes {
            for l in 0..dims[m] {
                let members = &obs.by_level[m][l];
                for j in 0..q {
                    gram.fill(0.0);
                    rhs.fill(0.0);
                    for &pos in members {
                        let levels = &obs.levels[pos];
                        for (k, zk) in z.iter_mut().enumerate() {
                            let mut p = 1.0;
                            for (m2, &l2) in levels.iter().enumerate() {
                                if m2 != m {
                                    p *= factors.block(k, m2)[l2 * q + j];
                                }
                            }
                            *zk = p;
                        }
                        let y = obs.rows[pos][j];
                        for a in 0..rank {
                            rhs[a] += z[a] * y;
                            for b in 0..rank {
                                gram[a * rank + b] += z[a] * z[b];
                            }
                        }
                    }
                    let solution = solve_damped(&mut gram, &mut rhs, rank, cfg.ridge);
                    if solution {
                        for (k, &a) in rhs.iter().enumerate() {
                            factors.block_mut(k, m)[l * q + j] = a;
                        }
                    }
                }
            }
        }
        let cur = damped_objective(obs, &factors, cfg.ridge);
        let l2 = residuals(obs, &factors).1;
        history.push(l2);
        let change = libm::fabs(prev - cur);
        prev = cur;
        let exact = l2 <= floor * factors.width() as f64;
        if change <= cfg.tol * prev.max(f64::MIN_POSITIVE) || exact {
            converged = true;
            break;
        }
    }
    let (l1, l2) = residuals(obs, &factors);
    CompletionResult {
        factors,
        objective_l1: l1,
        objective_l2: l2,
        sweeps_used: sweeps,
        refine_steps: 0,
        converged,
        fully_identified: true,
        underdetermined: false,
        restarts: Vec::new(),
        history,
    }
}

/// Adds `ridge` to the diagonal and solves; on a failed factorization retries
/// with a damping proportional to the Gram trace. Leaves the block unchanged
/// (returns false) when the system is identically zero and undamped.
fn solve_damped(gram: &mut [f64], rhs: &mut [f64], rank: usize, ridge: f64) -> bool {
    let trace: f64 = (0..rank).map(|i| gram[i * rank + i]).sum();
    let saved: Vec<f64> = gram.to_vec();
    let saved_rhs: Vec<f64> = rhs.to_vec();
    for i in 0..rank {
        gram[i * rank + i] += ridge;
    }
    if cholesky_solve(gram, rhs, rank) {
        return true;
    }
    let jitter = 1e-12 * (trace / rank as f64) + ridge;
    if jitter == 0.0 {
        return false;
    }
    gram.copy_from_slice(&saved);
    rhs.copy_from_slice(&saved_rhs);
    for i in 0..rank {
        gram[i * rank + i] += jitter;
    }
    cholesky_solve(gram, rhs, rank)
}

/// Levenberg–Marquardt on `Σ_t r_t² + ridge·‖θ‖²` for each coordinate, where
/// `θ` collects `α_{k,m,l}[j]`. Returns the accepted step count and whether
/// every coordinate converged.
fn refine(obs: &Observed<'_>, factors: &mut CPFactors, cfg: &CompletionConfig, floor: f64) -> (usize, bool) {
    let dims = factors.grid().dims().to_vec();
    let (rank, q) = (factors.rank(), factors.width());
    let mut offsets = Vec::with_capacity(dims.len());
    let mut total = 0;
    for &d in &dims {
        offsets.push(total);
        total += d;
    }
    let np = rank * total;
    let at = |k: usize, m: usize, l: usize| k * total + offsets[m] + l;
    let count = obs.rows.len();
    let mut steps = 0;
    let mut all_done = true;
    let mut theta = vec![0.0; np];
    let mut jtj = vec![0.0; np * np];
    let mut grad = vec![0.0; np];
    let mut row = vec![0.0; np];
    let mut a = vec![0.0; np * np];
    let mut delta = vec![0.0; np];
    let mut cand = vec![0.0; np];
    let mut r = vec![0.0; count];
    let mut rc = vec![0.0; count];

    let residual = |th: &[f64], out: &mut [f64], j: usize| -> f64 {
        let mut cost = 0.0;
        for (i, levels) in obs.levels.iter().enumerate() {
            let mut s = 0.0;
            for k in 0..rank {
                let mut p = 1.0;
                for (m, &l) in levels.iter().enumerate() {
                    p *= th[at(k, m, l)];
                }
                s += p;
            }
            out[i] = s - obs.rows[i][j];
            cost += out[i] * out[i];
        }
        cost
    };
    let penalty = |th: &[f64]| cfg.ridge * th.iter().map(|v| v * v).sum::<f64>();

    for j in 0..q {
        for k in 0..rank {
            for (m, &d) in dims.iter().enumerate() {
                for l in 0..d {
                    theta[at(k, m, l)] = factors.block(k, m)[l * q + j];
                }
            }
        }
        let mut sq = residual(&theta, &mut r, j);
        let mut cost = sq + penalty(&theta);
        let mut mu = 1e-3;
        let mut done = sq <= floor * count as f64;
        let mut it = 0;
        while !done && it < cfg.refine_iters {
            it += 1;
            jtj.fill(0.0);
            for (g, t) in grad.iter_mut().zip(&theta) {
                *g = cfg.ridge * t;
            }
            for (i, levels) in obs.levels.iter().enumerate() {
                row.fill(0.0);
                for k in 0..rank {
                    for m in 0..levels.len() {
                        let mut p = 1.0;
                        for (m2, &l2) in levels.iter().enumerate() {
                            if m2 != m {
                                p *= theta[at(k, m2, l2)];
                            }
                        }
                        row[at(k, m, levels[m])] = p;
                    }
                }
                for x in 0..np {
                    if row[x] == 0.0 {
                        continue;
                    }
                    grad[x] += row[x] * r[i];
                    for y in 0..np {
                        jtj[x * np + y] += row[x] * row[y];
                    }
                }
            }
            let accepted = loop {
                a.copy_from_slice(&jtj);
                for x in 0..np {
                    a[x * np + x] += mu * (1.0 + jtj[x * np + x]) + cfg.ridge;
                }
                for (d, g) in delta.iter_mut().zip(&grad) {
                    *d = -g;
                }
                if cholesky_solve(&mut a, &mut delta, np) {
                    for x in 0..np {
                        cand[x] = theta[x] + delta[x];
                    }
                    let csq = residual(&cand, &mut rc, j);
                    let ccost = csq + penalty(&cand);
                    if ccost < cost {
                        theta.copy_from_slice(&cand);
                        r.copy_from_slice(&rc);
                        let change = cost - ccost;
                        cost = ccost;
                        sq = csq;
                        mu = (mu / 3.0).max(1e-12);
                        break Some(change);
                    }
                }
                mu *= 4.0;
                if mu > 1e12 {
                    break None;
                }
            };
            match accepted {
                Some(change) => {
                    steps += 1;
                    done = sq <= floor * count as f64 || change <= cfg.tol * cost.max(f64::MIN_POSITIVE);
                }
                None => {
                    done = true;
                }
            }
        }
        all_done &= done;
        for k in 0..rank {
            for (m, &d) in dims.iter().enumerate() {
                for l in 0..d {
                    factors.block_mut(k, m)[l * q + j] = theta[at(k, m, l)];
                }
            }
        }
    }
    (steps, all_done)
}

fn coordinate_l1(obs: &Observed<'_>, factors: &CPFactors) -> Vec<f64> {
    let q = factors.width();
    let mut head = vec![0.0; q];
    let mut out = vec![0.0; q];
    for (levels, row) in obs.levels.iter().zip(&obs.rows) {
        head.fill(0.0);
        factors.accumulate_head(levels, &mut head);
        for ((o, h), y) in out.iter_mut().zip(&head).zip(row.iter()) {
            *o += libm::fabs(h - y);
        }
    }
    out
}

fn residuals(obs: &Observed<'_>, factors: &CPFactors) -> (f64, f64) {
    let q = factors.width();
    let mut head = vec![0.0; q];
    let (mut l1, mut l2) = (0.0, 0.0);
    for (levels, row) in obs.levels.iter().zip(&obs.rows) {
        head.fill(0.0);
        factors.accumulate_head(levels, &mut head);
        for (h, y) in head.iter().zip(row.iter()) {
            let r = h - y;
            l1 += libm::fabs(r);
            l2 += r * r;
        }
    }
    let t = obs.rows.len() as f64;
    (l1 / t, l2 / t)
}

fn damped_objective(obs: &Observed<'_>, factors: &CPFactors, ridge: f64) -> f64 {
    let (_, l2) = residuals(obs, factors);
    let penalty: f64 = factors.blocks().iter().flatten().map(|v| v * v).sum();
    l2 * obs.rows.len() as f64 + ridge * penalty
}
