//! Acceptance run: every criterion prints one PASS/FAIL line.
//!
//! `cargo test -p zsda --test acceptance -- 3 8` runs only criteria 3 and 8.
//! Failed criteria are listed at the end; the process exits non-zero on a
//! failure only when `ZSDA_ACCEPTANCE_STRICT=1`, so the rest of the workspace
//! suite still runs.

use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng;
use zsda::report::{load_report, Report};
use zsda_core::eval::{excess_risk, DomainMetric};
use zsda_core::model::{
    loss_and_grads, objective, Activation, ArchConfig, BankVariant, Example, LossKind, LossSpec, Model,
};
use zsda_core::rng::{rng, stream};
use zsda_core::{
    bound_diagnostic, complete, completion_generalization_term, pdim_bound, sample_mask, BoundParams, CPFactors,
    CompletionConfig, DomainGrid, ObservationMask,
};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

type Check = fn() -> Outcome;

fn main() {
    let picked: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let checks: [(usize, &str, Check); 10] = [
        (1, "CP oracle equivalence", cp_oracle),
        (2, "gradient correctness", gradients),
        (3, "noiseless completion recovery", completion_recovery),
        (4, "two-stage zero-shot extrapolation", two_stage_extrapolation),
        (5, "unseen accuracy rises with T", t_trend),
        (6, "grid-transform structure", grid_structure),
        (7, "lambda insensitivity", lambda_insensitivity),
        (8, "formula diagnostics", formulas),
        (9, "deterministic reproducibility", reproducibility),
        (10, "oracle excess risk", oracle_excess),
    ];
    let mut failed = Vec::new();
    for (id, name, check) in checks {
        if !picked.is_empty() && !picked.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let out = check();
        let secs = start.elapsed().as_secs_f64();
        let tag = if out.pass { "PASS" } else { "FAIL" };
        println!("criterion {id}: {tag} {name}: {} [{secs:.1}s]", out.detail);
        if !out.pass {
            failed.push(id);
        }
    }
    if failed.is_empty() {
        println!("all selected criteria passed");
    } else {
        println!("FAILED criteria: {failed:?}");
        if std::env::var("ZSDA_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}

fn scratch() -> &'static Path {
    static DIR: OnceLock<tempfile::TempDir> = OnceLock::new();
    DIR.get_or_init(|| tempfile::tempdir().expect("temp dir")).path()
}

fn zsda(args: &[&str]) -> String {
    let mut full = vec!["zsda"];
    full.extend_from_slice(args);
    zsda::cli::run(full).unwrap_or_else(|e| panic!("zsda {}: {e}", args.join(" ")))
}

/// Runs a sweep command into `dir` and loads its report.
fn sweep_report(dir: &Path, args: &[&str]) -> Report {
    let out = dir.to_str().unwrap();
    let mut full = vec!["sweep", "--out", out, "--threads", "1"];
    full.extend_from_slice(args);
    zsda(&full);
    load_report(&dir.join("report.jsonl")).expect("report")
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..v.len()).collect();
    order.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && v[order[j + 1]] == v[order[i]] {
            j += 1;
        }
        for &k in &order[i..=j] {
            r[k] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    let (ra, rb) = (ranks(a), ranks(b));
    let (ma, mb) = (mean(&ra), mean(&rb));
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma) * (x - ma)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb) * (y - mb)).sum();
    cov / (va * vb).sqrt()
}

// ---- 1 ----

fn cp_oracle() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut entries = 0usize;
    for seed in 0..100u64 {
        let mut r = rng(seed);
        let modes = r.random_range(1..=4usize);
        let dims: Vec<usize> = (0..modes).map(|_| r.random_range(1..=5)).collect();
        let rank = r.random_range(1..=3usize);
        let q = r.random_range(1..=8usize);
        let grid = DomainGrid::new(dims.clone()).unwrap();
        let f = CPFactors::random_uniform(grid, rank, q, -1.0, 1.0, &mut r).unwrap();
        let got = f.materialize();

        // row-major enumeration, last mode fastest
        let mut idx = vec![0usize; modes];
        let mut diff = 0.0;
        let mut norm = 0.0;
        for t in 0..dims.iter().product::<usize>() {
            for j in 0..q {
                let mut want = 0.0;
                for k in 0..rank {
                    let mut prod = 1.0;
                    for (m, &i) in idx.iter().enumerate() {
                        prod *= f.block(k, m)[i * q + j];
                    }
                    want += prod;
                }
                let g = got.values()[t * q + j];
                diff += (g - want) * (g - want);
                norm += want * want;
                entries += 1;
            }
            for m in (0..modes).rev() {
                idx[m] += 1;
                if idx[m] < dims[m] {
                    break;
                }
                idx[m] = 0;
            }
        }
        worst = worst.max(if norm > 0.0 { (diff / norm).sqrt() } else { diff.sqrt() });
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-12 && secs < 5.0,
        format!("100 factor sets, {entries} entries, worst relative error {worst:.1e}, {secs:.2}s"),
    )
}

// ---- 2 ----

fn fd_case(variant: BankVariant, kind: LossKind, seed: u64) -> f64 {
    let mut r = rng(seed);
    let modes = r.random_range(1..=3usize);
    let dims: Vec<usize> = (0..modes).map(|_| r.random_range(2..=3)).collect();
    let grid = DomainGrid::new(dims).unwrap();
    let d = grid.len();
    let classes = if kind == LossKind::SoftmaxCrossEntropy { r.random_range(2..=4) } else { 1 };
    let spec = LossSpec::new(kind, classes).unwrap();
    let input_dim = r.random_range(2..=4usize);
    let arch = ArchConfig {
        hidden: vec![r.random_range(2..=5)],
        repr_dim: r.random_range(2..=4),
        hidden_activation: Activation::Tanh,
        output_activation: if r.random_bool(0.5) { Activation::Tanh } else { Activation::Identity },
    };
    let seen: Vec<usize> = (0..d).filter(|_| r.random_bool(0.6)).collect();
    let seen = if seen.is_empty() { vec![0] } else { seen };
    let rank = r.random_range(1..=3);
    let mut model = Model::init(variant, grid, input_dim, &arch, classes, rank, &seen, &mut r).unwrap();
    if variant != BankVariant::Descriptor {
        // move away from structured starting points such as zero offsets
        for s in model.param_slices_mut() {
            for v in s.iter_mut() {
                *v += r.random_range(-0.3..0.3);
            }
        }
    }
    let n = 12;
    let xs: Vec<Vec<f64>> = (0..n).map(|_| (0..input_dim).map(|_| r.random_range(-1.5..1.5)).collect()).collect();
    let batch: Vec<Example> = xs
        .iter()
        .map(|x| {
            let domain = if variant == BankVariant::Free { seen[r.random_range(0..seen.len())] } else { r.random_range(0..d) };
            let y = match kind {
                LossKind::Squared => r.random_range(-2.0..2.0),
                LossKind::Logistic => r.random_range(0..2) as f64,
                LossKind::SoftmaxCrossEntropy => r.random_range(0..classes) as f64,
            };
            Example { domain, x, y }
        })
        .collect();
    let lambda = r.random_range(0.0..0.2);
    let (_, grads) = loss_and_grads(&model, &batch, &spec, lambda).unwrap();
    let analytic: Vec<f64> = grads.slices().iter().flat_map(|s| s.iter().copied()).collect();

    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut pos = 0;
    let blocks = model.param_slices().len();
    for b in 0..blocks {
        let len = model.param_slices()[b].len();
        for i in 0..len {
            let orig = model.param_slices()[b][i];
            model.param_slices_mut()[b][i] = orig + h;
            let up = objective(&model, &batch, &spec, lambda).unwrap();
            model.param_slices_mut()[b][i] = orig - h;
            let down = objective(&model, &batch, &spec, lambda).unwrap();
            model.param_slices_mut()[b][i] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[pos];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
            pos += 1;
        }
    }
    assert_eq!(pos, analytic.len(), "gradient layout differs from parameter layout");
    worst
}

fn gradients() -> Outcome {
    let start = Instant::now();
    let kinds = [LossKind::Squared, LossKind::Logistic, LossKind::SoftmaxCrossEntropy];
    let mut worst = 0.0f64;
    let mut bad = Vec::new();
    let mut cases = 0;
    for (vi, variant) in BankVariant::ALL.into_iter().enumerate() {
        for (ki, kind) in kinds.into_iter().enumerate() {
            for c in 0..10u64 {
                let e = fd_case(variant, kind, 1000 * vi as u64 + 100 * ki as u64 + c);
                cases += 1;
                worst = worst.max(e);
                if !(e <= 1e-4) {
                    bad.push(format!("{}/{}#{c}", variant.name(), kind.name()));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let mut detail = format!("{cases} configurations, worst relative error {worst:.1e}, {secs:.1}s");
    if !bad.is_empty() {
        detail.push_str(&format!(", failing: {}", bad.join(" ")));
    }
    outcome(bad.is_empty() && secs < 60.0, detail)
}

// ---- 3 ----

fn completion_recovery() -> Outcome {
    let grid = DomainGrid::new(vec![4, 4, 4]).unwrap();
    let mut ok = 0;
    let mut slowest = 0.0f64;
    let mut errs = Vec::new();
    for seed in 0..10u64 {
        let mut r = rng(seed);
        let truth = CPFactors::random_uniform(grid.clone(), 2, 1, -1.0, 1.0, &mut r).unwrap().materialize();
        let mask = sample_mask(&grid, 40, &mut r).unwrap();
        let start = Instant::now();
        let res = complete(&truth, &mask, &CompletionConfig { rank: 2, seed, ..Default::default() }).unwrap();
        let secs = start.elapsed().as_secs_f64();
        slowest = slowest.max(secs);
        let got = res.factors.materialize();
        let diff: f64 = got.values().iter().zip(truth.values()).map(|(a, b)| (a - b) * (a - b)).sum();
        let norm: f64 = truth.values().iter().map(|b| b * b).sum();
        let rel = (diff / norm).sqrt();
        errs.push(format!("{rel:.0e}"));
        if rel <= 1e-3 && secs < 10.0 {
            ok += 1;
        }
    }
    outcome(
        ok >= 9,
        format!("{ok}/10 seeds recovered to 1e-3, slowest run {slowest:.2}s, errors [{}]", errs.join(" ")),
    )
}

// ---- 4 ----

fn fiber_two_stage_dir() -> &'static PathBuf {
    static RUN: OnceLock<PathBuf> = OnceLock::new();
    RUN.get_or_init(|| {
        let dir = scratch().join("c4");
        sweep_report(&dir, &["--config", "fiber", "--vary", "none", "--seeds", "5"]);
        dir
    })
}

fn two_stage_extrapolation() -> Outcome {
    let start = Instant::now();
    let report = load_report(&fiber_two_stage_dir().join("report.jsonl")).expect("report");
    let secs = start.elapsed().as_secs_f64();
    let cfg = &report.config["experiment"];
    assert_eq!(cfg["trainer"]["kind"], "two_stage");
    assert_eq!(cfg["mask"]["count"], 16);
    let seen: Vec<f64> = report.runs.iter().map(|r| r.record.seen_mean.unwrap()).collect();
    let unseen: Vec<f64> = report.runs.iter().map(|r| r.record.unseen_mean.unwrap()).collect();
    let (s, u) = (mean(&seen), mean(&unseen));
    outcome(
        (u - s).abs() <= 0.05 && secs < 300.0,
        format!("{} seeds, seen {s:.3}, unseen {u:.3}, gap {:.3} (limit 0.05)", seen.len(), u - s),
    )
}

// ---- 5 ----

fn t_trend_args() -> Vec<&'static str> {
    vec![
        "--config",
        "fiber",
        "--set",
        "experiment.trainer={kind=\"end_to_end\", variant=\"factorized\", rank=2}",
        "--vary",
        "T",
        "--values",
        "4,8,12,16,20",
        "--seeds",
        "5",
    ]
}

fn t_trend() -> Outcome {
    let start = Instant::now();
    let report = sweep_report(&scratch().join("c5"), &t_trend_args());
    let secs = start.elapsed().as_secs_f64();
    let ts: Vec<f64> = report.sweep.iter().map(|p| p.value).collect();
    let unseen: Vec<f64> = report.sweep.iter().map(|p| p.unseen_mean.unwrap()).collect();
    let rho = spearman(&ts, &unseen);
    let curve: Vec<String> = ts.iter().zip(&unseen).map(|(t, u)| format!("T={t}:{u:.3}")).collect();
    outcome(rho >= 0.8 && secs < 1200.0, format!("Spearman {rho:.2} (need >= 0.8), {}", curve.join(" ")))
}

// ---- 6 ----

/// Mean accuracy per unseen cell over the runs of a report, with its min distance.
fn unseen_cells(report: &Report) -> Vec<(usize, f64, usize)> {
    let first: &Vec<DomainMetric> = &report.runs[0].record.metrics;
    first
        .iter()
        .filter(|m| !m.seen)
        .map(|m| {
            let acc: Vec<f64> = report
                .runs
                .iter()
                .map(|r| r.record.metrics.iter().find(|x| x.flat_index == m.flat_index).unwrap().accuracy_or_loss)
                .collect();
            (m.flat_index, mean(&acc), m.min_manhattan)
        })
        .collect()
}

fn grid_structure() -> Outcome {
    let start = Instant::now();
    let base = ["--config", "grid_transform", "--vary", "none", "--seeds", "10"];
    let run = |name: &str, trainer: &str| {
        let mut args = base.to_vec();
        let set = format!("experiment.trainer={trainer}");
        args.extend(["--set", set.as_str()]);
        let report = sweep_report(&scratch().join(name), &args);
        unseen_cells(&report)
    };
    let pooled = run("c6-pooled", "{kind=\"pooled\"}");
    let pooled_mean = mean(&pooled.iter().map(|c| c.1).collect::<Vec<_>>());
    let mut lines = vec![format!("pooled {pooled_mean:.3}")];
    let mut any = false;
    for variant in ["additive", "factorized"] {
        let cells = run(&format!("c6-{variant}"), &format!("{{kind=\"end_to_end\", variant=\"{variant}\", rank=3}}"));
        let acc: Vec<f64> = cells.iter().map(|c| c.1).collect();
        let m = mean(&acc);
        let wins = cells.iter().zip(&pooled).filter(|(a, p)| a.0 == p.0 && a.1 > p.1).count();
        let frac = wins as f64 / cells.len() as f64;
        let dist: Vec<f64> = cells.iter().map(|c| c.2 as f64).collect();
        let rho = spearman(&acc, &dist);
        let a = m >= pooled_mean - 0.005 && frac >= 0.6;
        let b = rho <= -0.5;
        any |= a && b;
        lines.push(format!(
            "{variant} {m:.3}, higher on {wins}/{} cells (a {}), rho_min {rho:.2} (b {})",
            cells.len(),
            if a { "ok" } else { "fails" },
            if b { "ok" } else { "fails" },
        ));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(any && secs < 1800.0, lines.join("; "))
}

// ---- 7 ----

fn lambda_args() -> Vec<&'static str> {
    vec!["--config", "planted_grid", "--vary", "lambda", "--seeds", "3"]
}

fn lambda_insensitivity() -> Outcome {
    let start = Instant::now();
    let report = sweep_report(&scratch().join("c7"), &lambda_args());
    let secs = start.elapsed().as_secs_f64();
    let lambdas: Vec<f64> = report.sweep.iter().map(|p| p.value).collect();
    assert_eq!(lambdas, [0.005, 0.01, 0.03, 0.05, 0.1, 0.5, 1.0]);
    let unseen: Vec<f64> = report.sweep.iter().map(|p| p.unseen_mean.unwrap()).collect();
    let hi = unseen.iter().copied().fold(f64::MIN, f64::max);
    let lo = unseen.iter().copied().fold(f64::MAX, f64::min);
    let curve: Vec<String> = lambdas.iter().zip(&unseen).map(|(l, u)| format!("{l}:{u:.3}")).collect();
    outcome(
        hi - lo <= 0.05 && secs < 1800.0,
        format!("range {:.3} (limit 0.05), {}", hi - lo, curve.join(" ")),
    )
}

// ---- 8 ----

fn formulas() -> Outcome {
    use std::f64::consts::LN_2;
    let mut notes = Vec::new();
    let mut ok = true;
    let mut near = |what: &str, got: f64, want: f64| {
        let rel = (got - want).abs() / want.abs();
        if rel > 1e-12 {
            ok = false;
            notes.push(format!("{what}: {got} vs {want}"));
        }
    };
    // ln(8e·d) = 3 ln 2 + 1 + ln d
    near("pdim(1,1,1)", pdim_bound(1, 1, 1).unwrap(), 3.0 * LN_2 + 1.0);
    let p243 = 72.0 * (5.0 * LN_2 + 1.0);
    near("pdim(2,4,3)", pdim_bound(2, 4, 3).unwrap(), p243);
    near("pdim(3,5,4)", pdim_bound(3, 5, 4).unwrap(), 240.0 * (3.0 * LN_2 + 1.0 + 5f64.ln()));
    near("pdim(2,2,2)", pdim_bound(2, 2, 2).unwrap(), 16.0 * (4.0 * LN_2 + 1.0));
    near(
        "gen(2,4,3,q=1,T=40)",
        completion_generalization_term(2, 4, 3, 1, 40, 0.05).unwrap(),
        ((p243 + 20f64.ln()) / 40.0).sqrt(),
    );
    near(
        "gen(2,4,3,q=4,T=10)",
        completion_generalization_term(2, 4, 3, 4, 10, 0.05).unwrap(),
        4.0 * ((p243 + 80f64.ln()) / 10.0).sqrt(),
    );
    let g = completion_generalization_term(2, 4, 3, 1, 40, 0.05).unwrap();
    if (g - 2.85).abs() > 0.01 {
        ok = false;
        notes.push(format!("gen(2,4,3,1,40) = {g}, expected about 2.85"));
    }

    let params = BoundParams { lipschitz: 1.7, ..Default::default() };
    let run = zsda_core::bounds::CompletionRunSummary {
        rank: 2,
        max_levels: 4,
        modes: 3,
        width: 3,
        observed: 17,
        residual_l1: 0.123,
    };
    let (w, dx) = (2.5, 3.25);
    let diag = bound_diagnostic(&params, &run, w, dx, "given".into(), None).unwrap();
    let composed = 1.7 * dx * w * completion_generalization_term(2, 4, 3, 3, 17, 0.05).unwrap();
    if diag.generalization_term != composed {
        ok = false;
        notes.push(format!("term (ii) {} vs composition {composed}", diag.generalization_term));
    }
    let detail = if ok {
        format!("pdim and generalization terms match to 1e-12, gen(2,4,3,1,40) = {g:.4}, composed term exact")
    } else {
        notes.join("; ")
    };
    outcome(ok, detail)
}

// ---- 9 ----

fn same_bytes(a: &Path, b: &Path, files: &[&str], diffs: &mut Vec<String>) {
    for f in files {
        let x = std::fs::read(a.join(f)).unwrap_or_else(|e| panic!("{}: {e}", a.join(f).display()));
        let y = std::fs::read(b.join(f)).unwrap_or_else(|e| panic!("{}: {e}", b.join(f).display()));
        if x != y {
            diffs.push(format!("{} differs", b.join(f).display()));
        }
    }
}

fn reproducibility() -> Outcome {
    let mut diffs = Vec::new();
    let mut compared = 0;

    // criterion 4's command, re-run into a fresh directory
    let first = fiber_two_stage_dir();
    let again = scratch().join("c9-fiber");
    sweep_report(&again, &["--config", "fiber", "--vary", "none", "--seeds", "5"]);
    same_bytes(first, &again, &["report.jsonl", "runs.csv", "sweep.csv", "sweep.config.toml"], &mut diffs);
    compared += 1;

    // a full generate, train, evaluate and complete chain, twice
    let chain = |dir: &Path| {
        let out = dir.to_str().unwrap();
        for cmd in ["generate", "train", "evaluate"] {
            zsda(&[cmd, "--config", "planted_small", "--out", out, "--threads", "1"]);
        }
        let heads = dir.join("heads.jsonl");
        let truth = dir.join("heads_full.jsonl");
        let cdir = dir.join("completion");
        zsda(&[
            "complete",
            "--config",
            "planted_small",
            "--input",
            heads.to_str().unwrap(),
            "--truth",
            truth.to_str().unwrap(),
            "--out",
            cdir.to_str().unwrap(),
        ]);
    };
    let (a, b) = (scratch().join("c9-chain-a"), scratch().join("c9-chain-b"));
    chain(&a);
    chain(&b);
    same_bytes(
        &a,
        &b,
        &[
            "train.jsonl",
            "test.jsonl",
            "oracle.jsonl",
            "checkpoint.jsonl",
            "curve.csv",
            "report.jsonl",
            "domains.csv",
            "completion/completed.jsonl",
            "completion/report.jsonl",
        ],
        &mut diffs,
    );
    compared += 1;

    outcome(
        diffs.is_empty(),
        if diffs.is_empty() {
            format!("{compared} command sets re-run, all report files bit-identical")
        } else {
            diffs.join("; ")
        },
    )
}

// ---- 10 ----

fn oracle_excess() -> Outcome {
    let cfg = zsda::config::load_config(Some("planted_small"), &[]).unwrap();
    let exp = &cfg.experiment;
    let oracle = exp.generator.oracle().unwrap().expect("planted generator");
    let grid = oracle.grid().clone();
    let all: Vec<usize> = (0..grid.len()).collect();
    let test = exp.generator.dataset(&all, 1000, cfg.seed, stream::EVAL).unwrap();
    let ex = excess_risk(&oracle.model, &ObservationMask::all(grid), &oracle, &test).unwrap();
    let off: Vec<String> = ex
        .domains
        .iter()
        .filter(|d| d.estimate.abs() > 2.0 * d.std_error)
        .map(|d| format!("domain {}: {:.2e} ± {:.2e}", d.flat_index, d.estimate, d.std_error))
        .collect();
    outcome(
        off.is_empty(),
        if off.is_empty() {
            format!("{} domains within 2 SE of zero, average {:.1e}", ex.domains.len(), ex.average)
        } else {
            off.join("; ")
        },
    )
}
