//! Report files and flat CSV exports.
//!
//! A report is a header object followed by section-tagged lines:
//!
//! ```text
//! {"format":"report","version":1,"command":"sweep","seed":0,"vary":"T"}
//! {"section":"config","config":{...}}
//! {"section":"run","value":4.0,"record":{...}}
//! {"section":"sweep","point":{...}}
//! ```
//!
//! Run rows keep everything needed to recompute the sweep aggregates.

use std::path::Path;

use serde::{Deserialize, Serialize};
use zsda_core::eval::{mean_std, DomainMetric, RunRecord, SweepPoint};

use crate::error::{Error, Result};
use crate::lines::{create_new, Reader, Writer};

pub const REPORT_VERSION: u64 = 1;
const FORMAT: &str = "report";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRow {
    /// Sweep value this run belongs to, if any.
    pub value: Option<f64>,
    pub record: RunRecord,
}

/// Outcome of a standalone completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionSummary {
    pub rank: usize,
    pub observed: usize,
    pub residual_l1: f64,
    pub residual_l2: f64,
    pub sweeps_used: usize,
    pub refine_steps: usize,
    pub converged: bool,
    pub fully_identified: bool,
    pub underdetermined: bool,
    /// Relative Frobenius error against a reference tensor, when one is given.
    pub relative_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub command: String,
    pub seed: u64,
    pub vary: Option<String>,
    /// Resolved configuration of the run.
    pub config: serde_json::Value,
    pub runs: Vec<RunRow>,
    pub sweep: Vec<SweepPoint>,
    pub completion: Option<CompletionSummary>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format: String,
    version: u64,
    command: String,
    seed: u64,
    vary: Option<String>,
}

#[derive(Serialize)]
#[serde(tag = "section", rename_all = "snake_case")]
enum SectionRef<'a> {
    Config { config: &'a serde_json::Value },
    Run { value: Option<f64>, record: &'a RunRecord },
    Sweep { point: &'a SweepPoint },
    Completion { completion: &'a CompletionSummary },
}

#[derive(Deserialize)]
#[serde(tag = "section", rename_all = "snake_case")]
enum Section {
    Config { config: serde_json::Value },
    Run { value: Option<f64>, record: RunRecord },
    Sweep { point: SweepPoint },
    Completion { completion: CompletionSummary },
}

pub fn emit_report(report: &Report, path: &Path) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.line(&Header {
        format: FORMAT.into(),
        version: REPORT_VERSION,
        command: report.command.clone(),
        seed: report.seed,
        vary: report.vary.clone(),
    })?;
    w.line(&SectionRef::Config { config: &report.config })?;
    for row in &report.runs {
        w.line(&SectionRef::Run { value: row.value, record: &row.record })?;
    }
    for point in &report.sweep {
        w.line(&SectionRef::Sweep { point })?;
    }
    if let Some(completion) = &report.completion {
        w.line(&SectionRef::Completion { completion })?;
    }
    w.finish()
}

pub fn load_report(path: &Path) -> Result<Report> {
    let mut rd = Reader::open(path)?;
    let h: Header = rd.header(REPORT_VERSION)?;
    if h.format != FORMAT {
        return Err(rd.error(format!("expected a {FORMAT} file, found {:?}", h.format)));
    }
    let mut report =
        Report { command: h.command, seed: h.seed, vary: h.vary, config: serde_json::Value::Null, runs: vec![], sweep: vec![], completion: None };
    let mut config_seen = false;
    while let Some(section) = rd.record::<Section>()? {
        match section {
            Section::Config { config } if !config_seen => {
                report.config = config;
                config_seen = true;
            }
            Section::Config { .. } => return Err(rd.error("second config section")),
            Section::Run { value, record } => report.runs.push(RunRow { value, record }),
            Section::Sweep { point } => report.sweep.push(point),
            Section::Completion { completion } => report.completion = Some(completion),
        }
    }
    if !config_seen {
        return Err(rd.error("report has no config section"));
    }
    Ok(report)
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    Ok(csv::Writer::from_writer(create_new(path)?))
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> Error + '_ {
    move |e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::parse(path, 0, format!("{other:?}")),
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const DOMAIN_COLUMNS: [&str; 7] =
    ["flat_index", "multi_index", "seen", "n_test", "accuracy_or_loss", "min_manhattan", "mean_manhattan"];

/// Per-domain table in [`DOMAIN_COLUMNS`] order.
pub fn write_domain_table(metrics: &[DomainMetric], path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv_writer(path)?;
    w.write_record(DOMAIN_COLUMNS).map_err(&err)?;
    for m in metrics {
        let idx: Vec<String> = m.multi_index.iter().map(|l| l.to_string()).collect();
        w.write_record([
            m.flat_index.to_string(),
            idx.join("-"),
            m.seen.to_string(),
            m.n_test.to_string(),
            m.accuracy_or_loss.to_string(),
            m.min_manhattan.to_string(),
            m.mean_manhattan.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_domain_table(path: &Path) -> Result<Vec<DomainMetric>> {
    let mut rd = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let headers = rd.headers().map_err(csv_err(path))?.clone();
    if headers.iter().ne(DOMAIN_COLUMNS) {
        return Err(Error::parse(path, 1, format!("expected columns {}", DOMAIN_COLUMNS.join(","))));
    }
    let mut out = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let line = i + 2;
        let rec = rec.map_err(csv_err(path))?;
        let bad = |what: &str| Error::parse(path, line, format!("bad {what}"));
        let int = |j: usize, what: &str| rec[j].parse::<usize>().map_err(|_| bad(what));
        let multi_index = if rec[1].is_empty() {
            Vec::new()
        } else {
            rec[1].split('-').map(|s| s.parse().map_err(|_| bad("multi_index"))).collect::<Result<_>>()?
        };
        out.push(DomainMetric {
            flat_index: int(0, "flat_index")?,
            multi_index,
            seen: rec[2].parse().map_err(|_| bad("seen"))?,
            n_test: int(3, "n_test")?,
            accuracy_or_loss: rec[4].parse().map_err(|_| bad("accuracy_or_loss"))?,
            min_manhattan: int(5, "min_manhattan")?,
            mean_manhattan: rec[6].parse().map_err(|_| bad("mean_manhattan"))?,
        });
    }
    Ok(out)
}

/// Training curve: `iteration,loss,heldout` with iterations counted from 1 and
/// the held-out column empty where it was not measured.
pub fn write_curve(curve: &[f64], heldout: &[(usize, f64)], path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv_writer(path)?;
    w.write_record(["iteration", "loss", "heldout"]).map_err(&err)?;
    let mut held = heldout.iter().peekable();
    for (i, loss) in curve.iter().enumerate() {
        let it = i + 1;
        let h = held.next_if(|(j, _)| *j == it).map(|&(_, l)| l);
        w.write_record([it.to_string(), loss.to_string(), opt(h)]).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const SWEEP_COLUMNS: [&str; 7] = ["value", "runs", "seen_mean", "seen_std", "unseen_mean", "unseen_std", "note"];

/// One row per sweep point. Points without unseen domains carry the note
/// `not applicable` and empty unseen columns.
pub fn write_sweep_table(points: &[SweepPoint], path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv_writer(path)?;
    w.write_record(SWEEP_COLUMNS).map_err(&err)?;
    for p in points {
        let note = if p.unseen_mean.is_none() { "not applicable: no unseen domains" } else { "" };
        w.write_record([
            p.value.to_string(),
            p.runs.to_string(),
            opt(p.seen_mean),
            opt(p.seen_std),
            opt(p.unseen_mean),
            opt(p.unseen_std),
            note.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub const RUN_COLUMNS: [&str; 13] = [
    "value",
    "seed",
    "trainer",
    "observed",
    "lambda",
    "seen_mean",
    "unseen_mean",
    "rho_min",
    "rho_mean",
    "excess_average",
    "excess_std_error",
    "stage2_residual_l1",
    "iterations",
];

/// One row per run, sorted as given.
pub fn write_run_table(rows: &[RunRow], path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv_writer(path)?;
    w.write_record(RUN_COLUMNS).map_err(&err)?;
    for RunRow { value, record: r } in rows {
        w.write_record([
            opt(*value),
            r.seed.to_string(),
            r.trainer.clone(),
            r.observed.to_string(),
            r.lambda.to_string(),
            opt(r.seen_mean),
            opt(r.unseen_mean),
            opt(r.distance.as_ref().and_then(|d| d.rho_min)),
            opt(r.distance.as_ref().and_then(|d| d.rho_mean)),
            opt(r.excess.as_ref().map(|e| e.average)),
            opt(r.excess.as_ref().map(|e| e.average_std_error)),
            opt(r.stage2_residual_l1),
            r.iterations.to_string(),
        ])
        .map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Per-domain `mean(std)` across runs laid out on a two-mode grid: rows are
/// levels of the first mode, columns levels of the second. Cells seen in every
/// run are left blank, as are cells no run measured.
pub fn grid_table(dims: &[usize], runs: &[&RunRecord], row_labels: &[String], col_labels: &[String]) -> Result<Vec<Vec<String>>> {
    if dims.len() != 2 || row_labels.len() != dims[0] || col_labels.len() != dims[1] {
        return Err(Error::Usage("grid table needs a two-mode grid with one label per level".into()));
    }
    let mut table = vec![std::iter::once(String::new()).chain(col_labels.iter().cloned()).collect::<Vec<_>>()];
    for (i, label) in row_labels.iter().enumerate() {
        let mut row = vec![label.clone()];
        for j in 0..dims[1] {
            let t = i * dims[1] + j;
            let cell: Vec<&DomainMetric> = runs.iter().filter_map(|r| r.metrics.iter().find(|m| m.flat_index == t)).collect();
            if cell.is_empty() || cell.iter().all(|m| m.seen) {
                row.push(String::new());
            } else {
                let v: Vec<f64> = cell.iter().map(|m| m.accuracy_or_loss).collect();
                let (mean, sd) = mean_std(&v);
                row.push(format!("{mean:.3}({sd:.3})"));
            }
        }
        table.push(row);
    }
    Ok(table)
}

pub fn write_grid_table(table: &[Vec<String>], path: &Path) -> Result<()> {
    let err = csv_err(path);
    let mut w = csv_writer(path)?;
    for row in table {
        w.write_record(row).map_err(&err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
