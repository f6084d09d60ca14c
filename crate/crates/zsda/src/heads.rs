//! Head-tensor files: `{"version":1,"format":"heads","dims":[..],"width":q}`
//! followed by one `{"t", "w"}` line per stored row. The rows present are the
//! observed entries.

use std::path::Path;

use serde::{Deserialize, Serialize};
use zsda_core::{DomainGrid, HeadTensor, ObservationMask};

use crate::error::Result;
use crate::lines::{Reader, Writer};

pub const HEADS_VERSION: u64 = 1;
const FORMAT: &str = "heads";

#[derive(Serialize, Deserialize)]
struct Header {
    version: u64,
    format: String,
    dims: Vec<usize>,
    width: usize,
}

#[derive(Serialize)]
struct RowRef<'a> {
    t: usize,
    w: &'a [f64],
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Row {
    t: usize,
    w: Vec<f64>,
}

/// Writes the rows of `heads` listed in `rows`.
pub fn write_heads(heads: &HeadTensor, rows: &[usize], path: &Path) -> Result<()> {
    let mut w = Writer::create(path)?;
    w.line(&Header { version: HEADS_VERSION, format: FORMAT.into(), dims: heads.grid().dims().to_vec(), width: heads.width() })?;
    for &t in rows {
        w.line(&RowRef { t, w: heads.row(t) })?;
    }
    w.finish()
}

/// The stored rows (others zero) and the mask of rows present.
pub fn read_heads(path: &Path) -> Result<(HeadTensor, ObservationMask)> {
    let mut rd = Reader::open(path)?;
    let h: Header = rd.header(HEADS_VERSION)?;
    if h.format != FORMAT {
        return Err(rd.error(format!("expected a {FORMAT} file, found {:?}", h.format)));
    }
    let grid = DomainGrid::new(h.dims).map_err(|e| rd.error(e))?;
    if h.width == 0 {
        return Err(rd.error("width must be positive"));
    }
    let mut values = vec![0.0; grid.len() * h.width];
    let mut seen = Vec::new();
    while let Some(row) = rd.record::<Row>()? {
        if row.t >= grid.len() || seen.contains(&row.t) {
            return Err(rd.error(format!("row {} is outside the grid or repeated", row.t)));
        }
        if row.w.len() != h.width {
            return Err(rd.error(format!("row has {} values, expected {}", row.w.len(), h.width)));
        }
        values[row.t * h.width..(row.t + 1) * h.width].copy_from_slice(&row.w);
        seen.push(row.t);
    }
    let tensor = HeadTensor::new(grid.clone(), h.width, values)?;
    Ok((tensor, ObservationMask::new(grid, seen)?))
}
