//! The `zsda` command line.
//!
//! Every command writes `<command>.config.toml` (the resolved configuration)
//! into `--out` before doing any work, never overwrites an existing file, and
//! keeps wall-clock times in a separate `<command>.timing.json` so that the
//! other outputs are reproducible byte for byte.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use zsda_core::eval::{assess, Generator};
use zsda_core::rng::stream;
use zsda_core::{complete, CompletionConfig, ObservationMask};

use crate::checkpoint::{read_checkpoint, read_oracle, write_checkpoint, write_oracle};
use crate::config::{load_config, RunConfig, Vary};
use crate::dataset::{read_dataset, write_dataset};
use crate::error::{Error, Result};
use crate::heads::{read_heads, write_heads};
use crate::lines::create_new;
use crate::report::{
    emit_report, grid_table, write_curve, write_domain_table, write_grid_table, write_run_table, write_sweep_table,
    CompletionSummary, Report, RunRow,
};
use crate::sweep::run_sweep;

#[derive(Parser, Debug)]
#[command(name = "zsda", version, about = "Zero-shot domain adaptation over a multiway grid of domains")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Config file, or a preset name (planted_small, fiber, grid_transform, planted_grid).
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<String>,
    /// Override a config value, e.g. `experiment.train.lr=0.01`; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads for independent runs.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    TwoStage,
    EndToEnd,
    Pooled,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Write training and test data (and, for planted generators, the oracle and its heads).
    Generate,
    /// Train a model and write its checkpoint and training curve.
    Train {
        #[arg(long, value_enum)]
        mode: Option<Mode>,
        /// Head bank for end-to-end training (factorized, additive, shared_only, descriptor).
        #[arg(long)]
        variant: Option<String>,
        /// CP rank of factorized heads or of the completion.
        #[arg(long)]
        rank: Option<usize>,
        /// Training data; defaults to `<out>/train.jsonl` when present, else fresh draws.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Complete a head-tensor file from its stored rows.
    Complete {
        #[arg(long)]
        input: PathBuf,
        /// Reference tensor for the relative error.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Per-domain metrics, distance analysis, excess risk and bound diagnostics.
    Evaluate {
        /// Defaults to `<out>/checkpoint.jsonl`.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Defaults to `<out>/test.jsonl` when present, else fresh draws.
        #[arg(long)]
        test: Option<PathBuf>,
        /// Planted ground truth; defaults to `<out>/oracle.jsonl` when present.
        #[arg(long)]
        oracle: Option<PathBuf>,
    },
    /// Repeat runs over seeds while varying T (observed domains) or lambda.
    Sweep {
        #[arg(long)]
        vary: Option<String>,
        #[arg(long, value_delimiter = ',')]
        values: Vec<f64>,
        /// Runs per value.
        #[arg(long)]
        seeds: Option<usize>,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Self::Generate => "generate",
            Self::Train { .. } => "train",
            Self::Complete { .. } => "complete",
            Self::Evaluate { .. } => "evaluate",
            Self::Sweep { .. } => "sweep",
        }
    }
}

/// Parses `args` (including the program name) and runs the command. Returns
/// a short human-readable summary.
pub fn run<I, T>(args: I) -> Result<String>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| match e.kind() {
        clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => e.exit(),
        _ => Error::Usage(e.to_string().lines().next().unwrap_or_default().trim_start_matches("error: ").to_string()),
    })?;
    execute(cli)
}

pub fn execute(cli: Cli) -> Result<String> {
    let mut overrides = cli.common.set.clone();
    if let Some(seed) = cli.common.seed {
        overrides.push(format!("seed={seed}"));
    }
    if let Some(threads) = cli.common.threads {
        overrides.push(format!("threads={threads}"));
    }
    match &cli.command {
        Command::Train { mode, variant, rank, .. } => {
            match mode {
                Some(Mode::TwoStage) => overrides.push("experiment.trainer.kind=\"two_stage\"".into()),
                Some(Mode::EndToEnd) => overrides.push("experiment.trainer.kind=\"end_to_end\"".into()),
                Some(Mode::Pooled) => overrides.push("experiment.trainer.kind=\"pooled\"".into()),
                None => {}
            }
            if let Some(v) = variant {
                overrides.push(format!("experiment.trainer.variant=\"{}\"", v.replace('-', "_")));
            }
            if let Some(k) = rank {
                let key = if *mode == Some(Mode::TwoStage) { "completion.rank" } else { "rank" };
                overrides.push(format!("experiment.trainer.{key}={k}"));
            }
        }
        Command::Sweep { vary, values, seeds } => {
            if let Some(v) = vary {
                let v: Vary = v.parse()?;
                overrides.push(format!("sweep.vary=\"{}\"", v.name()));
            }
            if !values.is_empty() {
                let list: Vec<String> = values.iter().map(|v| format!("{v:?}")).collect();
                overrides.push(format!("sweep.values=[{}]", list.join(",")));
            }
            if let Some(s) = seeds {
                overrides.push(format!("sweep.seeds={s}"));
            }
        }
        _ => {}
    }
    let cfg = load_config(cli.common.config.as_deref(), &overrides)?;
    let out = cli.common.out.clone();
    let name = cli.command.name();
    write_text(&out.join(format!("{name}.config.toml")), &cfg.to_toml())?;
    let start = Instant::now();
    let (summary, run_times) = match cli.command {
        Command::Generate => (cmd_generate(&cfg, &out)?, Vec::new()),
        Command::Train { data, .. } => (cmd_train(&cfg, &out, data)?, Vec::new()),
        Command::Complete { input, truth } => (cmd_complete(&cfg, &out, &input, truth.as_deref())?, Vec::new()),
        Command::Evaluate { checkpoint, test, oracle } => (cmd_evaluate(&cfg, &out, checkpoint, test, oracle)?, Vec::new()),
        Command::Sweep { .. } => cmd_sweep(&cfg, &out)?,
    };
    let timing = serde_json::json!({ "wall_seconds": start.elapsed().as_secs_f64(), "runs": run_times });
    write_text(&out.join(format!("{name}.timing.json")), &format!("{timing}\n"))?;
    Ok(summary)
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    use std::io::Write;
    let mut f = create_new(path)?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Uses `given`, else `<out>/<default>` if it exists.
fn input_path(given: Option<PathBuf>, out: &Path, default: &str) -> Option<PathBuf> {
    given.or_else(|| Some(out.join(default)).filter(|p| p.is_file()))
}

fn seeded(cfg: &RunConfig) -> Generator {
    cfg.experiment.generator.with_seed(cfg.seed)
}

fn mask_of(cfg: &RunConfig) -> Result<ObservationMask> {
    let grid = seeded(cfg).grid()?;
    Ok(cfg.experiment.mask.build(&grid, cfg.seed)?)
}

fn cmd_generate(cfg: &RunConfig, out: &Path) -> Result<String> {
    let generator = seeded(cfg);
    let mask = mask_of(cfg)?;
    let exp = &cfg.experiment;
    let all: Vec<usize> = (0..mask.grid().len()).collect();
    let train = generator.dataset(mask.seen(), exp.n_train, cfg.seed, stream::TRAIN_DATA)?;
    write_dataset(&train, &out.join("train.jsonl"))?;
    let test = generator.dataset(&all, exp.n_test, cfg.seed, stream::TEST_DATA)?;
    write_dataset(&test, &out.join("test.jsonl"))?;
    let mut summary = format!(
        "generated {} training samples on {} seen domains and {} test samples on {} domains",
        train.total_samples(),
        mask.len(),
        test.total_samples(),
        all.len()
    );
    if let Some(oracle) = generator.oracle()? {
        write_oracle(&oracle, &out.join("oracle.jsonl"))?;
        let heads = oracle.model.bank.materialize()?;
        write_heads(&heads, &all, &out.join("heads_full.jsonl"))?;
        write_heads(&heads, mask.seen(), &out.join("heads.jsonl"))?;
        summary.push_str("; wrote the planted oracle and its head tensor");
    }
    Ok(summary)
}

fn cmd_train(cfg: &RunConfig, out: &Path, data: Option<PathBuf>) -> Result<String> {
    let exp = &cfg.experiment;
    let mask = mask_of(cfg)?;
    let ds = match input_path(data, out, "train.jsonl") {
        Some(p) => read_dataset(&p)?,
        None => seeded(cfg).dataset(mask.seen(), exp.n_train, cfg.seed, stream::TRAIN_DATA)?,
    };
    let start = Instant::now();
    let mut trained = exp.trainer.train(&ds, &mask, &exp.arch, &exp.train, cfg.seed)?;
    trained.wall_time = Some(start.elapsed().as_secs_f64());
    write_checkpoint(&trained, &out.join("checkpoint.jsonl"))?;
    write_curve(&trained.curve, &trained.heldout, &out.join("curve.csv"))?;
    for w in &trained.warnings {
        eprintln!("warning: {w}");
    }
    let last = trained.curve.last().copied().unwrap_or(f64::NAN);
    let mut summary = format!("trained {} for {} iterations, final loss {last:.4}", trained.method.name(), trained.curve.len());
    if let Some(s2) = &trained.stage2 {
        summary.push_str(&format!("; completion residual {:.4e}", s2.residual_l1));
    }
    Ok(summary)
}

fn completion_config(cfg: &RunConfig) -> CompletionConfig {
    match &cfg.experiment.trainer {
        zsda_core::eval::Trainer::TwoStage { completion } => CompletionConfig { seed: cfg.seed, ..completion.clone() },
        _ => CompletionConfig { seed: cfg.seed, ..CompletionConfig::default() },
    }
}

fn cmd_complete(cfg: &RunConfig, out: &Path, input: &Path, truth: Option<&Path>) -> Result<String> {
    let (observed, mask) = read_heads(input)?;
    let cc = completion_config(cfg);
    let res = complete(&observed, &mask, &cc)?;
    let completed = res.factors.materialize();
    let all: Vec<usize> = (0..completed.grid().len()).collect();
    write_heads(&completed, &all, &out.join("completed.jsonl"))?;
    let relative_error = match truth {
        Some(p) => {
            let (reference, present) = read_heads(p)?;
            if reference.grid() != completed.grid() || reference.width() != completed.width() || present.len() != all.len() {
                return Err(Error::Usage(format!("{} must hold every row of a tensor shaped like the input", p.display())));
            }
            Some(completed.relative_error(&reference))
        }
        None => None,
    };
    let summary = CompletionSummary {
        rank: cc.rank,
        observed: mask.len(),
        residual_l1: res.objective_l1,
        residual_l2: res.objective_l2,
        sweeps_used: res.sweeps_used,
        refine_steps: res.refine_steps,
        converged: res.converged,
        fully_identified: res.fully_identified,
        underdetermined: res.underdetermined,
        relative_error,
    };
    let report = Report {
        command: "complete".into(),
        seed: cfg.seed,
        vary: None,
        config: serde_json::to_value(cfg).expect("configurations serialize"),
        runs: Vec::new(),
        sweep: Vec::new(),
        completion: Some(summary.clone()),
    };
    emit_report(&report, &out.join("report.jsonl"))?;
    let mut line = format!("completed {} of {} rows at rank {}, residual {:.3e}", mask.len(), all.len(), cc.rank, summary.residual_l1);
    if let Some(e) = relative_error {
        line.push_str(&format!(", relative error {e:.3e}"));
    }
    Ok(line)
}

fn cmd_evaluate(cfg: &RunConfig, out: &Path, checkpoint: Option<PathBuf>, test: Option<PathBuf>, oracle: Option<PathBuf>) -> Result<String> {
    let ckpt = checkpoint.unwrap_or_else(|| out.join("checkpoint.jsonl"));
    let trained = read_checkpoint(&ckpt)?;
    let test = match input_path(test, out, "test.jsonl") {
        Some(p) => read_dataset(&p)?,
        None => {
            let all: Vec<usize> = (0..trained.mask.grid().len()).collect();
            seeded(cfg).dataset(&all, cfg.experiment.n_test, cfg.seed, stream::TEST_DATA)?
        }
    };
    let oracle = match input_path(oracle, out, "oracle.jsonl") {
        Some(p) => Some(read_oracle(&p)?),
        None => None,
    };
    let record = assess(&cfg.experiment, &trained, &test, oracle.as_ref(), cfg.seed)?;
    write_domain_table(&record.metrics, &out.join("domains.csv"))?;
    let mut summary = format!(
        "seen mean {}, unseen mean {}",
        fmt_opt(record.seen_mean),
        fmt_opt(record.unseen_mean)
    );
    if let Some(e) = &record.excess {
        summary.push_str(&format!(", excess risk {:.4} ± {:.4}", e.average, e.average_std_error));
    }
    let report = Report {
        command: "evaluate".into(),
        seed: cfg.seed,
        vary: None,
        config: serde_json::to_value(cfg).expect("configurations serialize"),
        runs: vec![RunRow { value: None, record }],
        sweep: Vec::new(),
        completion: None,
    };
    emit_report(&report, &out.join("report.jsonl"))?;
    Ok(summary)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.4}")).unwrap_or_else(|| "n/a".into())
}

fn cmd_sweep(cfg: &RunConfig, out: &Path) -> Result<(String, Vec<f64>)> {
    let sw = &cfg.sweep;
    let outcome = run_sweep(cfg, sw.vary, &sw.values, sw.seeds)?;
    let report = Report {
        command: "sweep".into(),
        seed: cfg.seed,
        vary: Some(sw.vary.name().into()),
        config: serde_json::to_value(cfg).expect("configurations serialize"),
        runs: outcome.runs.clone(),
        sweep: outcome.points.clone(),
        completion: None,
    };
    emit_report(&report, &out.join("report.jsonl"))?;
    write_run_table(&outcome.runs, &out.join("runs.csv"))?;
    write_sweep_table(&outcome.points, &out.join("sweep.csv"))?;
    for row in &outcome.runs {
        let tag = match row.value {
            Some(v) => format!("{}={v}-seed{}", sw.vary.name(), row.record.seed),
            None => format!("seed{}", row.record.seed),
        };
        write_domain_table(&row.record.metrics, &out.join("domains").join(format!("{tag}.csv")))?;
    }
    let grid = cfg.experiment.generator.grid()?;
    if grid.modes() == 2 && outcome.points.len() == 1 {
        let (rows, cols) = level_labels(&cfg.experiment.generator, grid.dims());
        let records: Vec<_> = outcome.runs.iter().map(|r| &r.record).collect();
        write_grid_table(&grid_table(grid.dims(), &records, &rows, &cols)?, &out.join("table.csv"))?;
    }
    let lines: Vec<String> = outcome
        .points
        .iter()
        .map(|p| format!("{}={}: unseen {} (sd {}) over {} runs", sw.vary.name(), p.value, fmt_opt(p.unseen_mean), fmt_opt(p.unseen_std), p.runs))
        .collect();
    Ok((lines.join("\n"), outcome.wall_times))
}

/// Row and column labels for a two-mode grid: rotation angles and offsets for
/// the transform generator, level indices otherwise.
fn level_labels(generator: &Generator, dims: &[usize]) -> (Vec<String>, Vec<String>) {
    match generator {
        Generator::GridTransform(g) => (
            g.rotations.iter().map(|r| format!("{r}")).collect(),
            g.translations.iter().map(|[x, y]| format!("({x}, {y})")).collect(),
        ),
        _ => ((0..dims[0]).map(|i| i.to_string()).collect(), (0..dims[1]).map(|i| i.to_string()).collect()),
    }
}
