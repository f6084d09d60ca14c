//! Dataset files.
//!
//! ```text
//! {"version":1,"dims":[3,3],"r":6,"task":"logistic","C":1,"n":200,"provenance":{...}}
//! {"t":0,"x":[0.12,-1.3,...],"y":1.0}
//! ```
//!
//! Rasters carry `"raster":[height,width]` instead of `r`. Unknown header
//! fields are ignored.

use std::path::Path;

use serde::{Deserialize, Serialize};
use zsda_core::data::{DomainDataset, InputShape, Provenance, Sample};
use zsda_core::model::{LossKind, LossSpec};
use zsda_core::DomainGrid;

use crate::error::Result;
use crate::lines::{Reader, Writer};

pub const DATASET_VERSION: u64 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    version: u64,
    dims: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    r: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    raster: Option<[usize; 2]>,
    task: LossKind,
    #[serde(rename = "C")]
    classes: usize,
    n: usize,
    #[serde(default)]
    provenance: Provenance,
}

#[derive(Serialize)]
struct SampleRef<'a> {
    t: usize,
    x: &'a [f64],
    y: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SampleLine {
    t: usize,
    x: Vec<f64>,
    y: f64,
}

pub fn write_dataset(ds: &DomainDataset, path: &Path) -> Result<()> {
    let (r, raster) = match ds.input() {
        InputShape::Vector(r) => (Some(r), None),
        InputShape::Raster { height, width } => (None, Some([height, width])),
    };
    let header = Header {
        version: DATASET_VERSION,
        dims: ds.grid().dims().to_vec(),
        r,
        raster,
        task: ds.task(),
        classes: ds.classes(),
        n: ds.n(),
        provenance: ds.provenance().clone(),
    };
    let mut w = Writer::create(path)?;
    w.line(&header)?;
    for (t, samples) in ds.domains().iter().enumerate() {
        for s in samples {
            w.line(&SampleRef { t, x: &s.x, y: s.y })?;
        }
    }
    w.finish()
}

pub fn read_dataset(path: &Path) -> Result<DomainDataset> {
    let mut rd = Reader::open(path)?;
    let h: Header = rd.header(DATASET_VERSION)?;
    let input = match (h.r, h.raster) {
        (Some(r), None) => InputShape::Vector(r),
        (None, Some([height, width])) => InputShape::Raster { height, width },
        _ => return Err(rd.error("header needs exactly one of r and raster")),
    };
    let grid = DomainGrid::new(h.dims).map_err(|e| rd.error(e))?;
    let loss = LossSpec::new(h.task, h.classes).map_err(|e| rd.error(e))?;
    let mut ds = DomainDataset::new(grid, input, loss, h.n, h.provenance).map_err(|e| rd.error(e))?;
    while let Some(line) = rd.record::<SampleLine>()? {
        ds.push(line.t, Sample { x: line.x, y: line.y }).map_err(|e| rd.error(e))?;
    }
    Ok(ds)
}
