use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DomainDataset, InputShape, Provenance, Sample};
use crate::error::{bail, Result};
use crate::grid::DomainGrid;
use crate::model::LossSpec;
use crate::rng::{child_rng, derive_seed, stream};

/// Synthetic base patterns that the domain transforms act on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BasePatterns {
    /// `size × size` rasters built from a few Gaussian blobs per class,
    /// scaled to a peak intensity of 1.
    Raster { size: usize, blobs: usize },
    /// Constellations of 2-d points, flattened as `[x0, y0, x1, y1, …]`.
    PointSet { points: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridTransformConfig {
    /// Rotation angles in degrees, counter-clockwise; mode 0 of the grid.
    pub rotations: Vec<f64>,
    /// Offsets `(dx, dy)` in pixels, `dx` along columns and `dy` along rows; mode 1.
    pub translations: Vec<[f64; 2]>,
    pub base: BasePatterns,
    pub classes: usize,
    /// Standard deviation of per-sample displacement of the prototype parts.
    pub jitter: f64,
    /// Standard deviation of iid noise added after the transform.
    pub noise: f64,
    pub seed: u64,
}

impl Default for GridTransformConfig {
    fn default() -> Self {
        Self {
            rotations: vec![-30.0, -15.0, 0.0, 15.0, 30.0],
            translations: vec![[-3.0, 0.0], [0.0, -3.0], [0.0, 0.0], [0.0, 3.0], [3.0, 0.0]],
            base: BasePatterns::Raster { size: 20, blobs: 3 },
            classes: 10,
            jitter: 0.6,
            noise: 0.05,
            seed: 0,
        }
    }
}

impl GridTransformConfig {
    pub fn validate(&self, errors: &mut Vec<String>) {
        if self.rotations.is_empty() {
            errors.push("transform.rotations must not be empty".to_string());
        }
        if self.translations.is_empty() {
            errors.push("transform.translations must not be empty".to_string());
        }
        if self.rotations.iter().chain(self.translations.iter().flatten()).any(|v| !v.is_finite()) {
            errors.push("transform angles and offsets must be finite".to_string());
        }
        if self.classes < 2 {
            errors.push(format!("transform.classes must be at least 2, got {}", self.classes));
        }
        match self.base {
            BasePatterns::Raster { size, blobs } if size < 2 || blobs == 0 => {
                errors.push("transform.base raster needs size >= 2 and blobs >= 1".to_string())
            }
            BasePatterns::PointSet { points: 0 } => errors.push("transform.base needs at least one point".to_string()),
            _ => {}
        }
        for (name, v) in [("jitter", self.jitter), ("noise", self.noise)] {
            if !(v >= 0.0 && v.is_finite()) {
                errors.push(format!("transform.{name} must be finite and non-negative, got {v}"));
            }
        }
    }

    pub fn grid(&self) -> Result<DomainGrid> {
        DomainGrid::new(vec![self.rotations.len(), self.translations.len()])
    }

    pub fn input_shape(&self) -> InputShape {
        match self.base {
            BasePatterns::Raster { size, .. } => InputShape::Raster { height: size, width: size },
            BasePatterns::PointSet { points } => InputShape::Vector(2 * points),
        }
    }
}

/// Bilinear sample of a row-major raster at fractional `(row, col)`, zero outside.
fn bilinear(img: &[f64], h: usize, w: usize, row: f64, col: f64) -> f64 {
    let r0 = libm::floor(row);
    let c0 = libm::floor(col);
    let fr = row - r0;
    let fc = col - c0;
    let at = |r: f64, c: f64| -> f64 {
        if r < 0.0 || c < 0.0 || r >= h as f64 || c >= w as f64 {
            0.0
        } else {
            img[r as usize * w + c as usize]
        }
    };
    (1.0 - fr) * ((1.0 - fc) * at(r0, c0) + fc * at(r0, c0 + 1.0)) + fr * ((1.0 - fc) * at(r0 + 1.0, c0) + fc * at(r0 + 1.0, c0 + 1.0))
}

/// Rotates a raster counter-clockwise by `degrees` about its center.
pub fn rotate_raster(img: &[f64], h: usize, w: usize, degrees: f64) -> Vec<f64> {
    let th = degrees.to_radians();
    let (s, c) = (libm::sin(th), libm::cos(th));
    let cy = (h as f64 - 1.0) / 2.0;
    let cx = (w as f64 - 1.0) / 2.0;
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for col in 0..w {
            // inverse map; rows grow downward, so counter-clockwise on screen
            // flips the sign of the row component
            let x = col as f64 - cx;
            let y = cy - r as f64;
            let sx = c * x + s * y;
            let sy = -s * x + c * y;
            out[r * w + col] = bilinear(img, h, w, cy - sy, sx + cx);
        }
    }
    out
}

/// Shifts a raster by `dx` columns and `dy` rows; vacated pixels become 0.
pub fn translate_raster(img: &[f64], h: usize, w: usize, dx: f64, dy: f64) -> Vec<f64> {
    let mut out = vec![0.0; h * w];
    for r in 0..h {
        for c in 0..w {
            out[r * w + c] = bilinear(img, h, w, r as f64 - dy, c as f64 - dx);
        }
    }
    out
}

/// Rotates flattened 2-d points about the origin, then translates them.
pub fn transform_points(points: &[f64], degrees: f64, offset: [f64; 2]) -> Vec<f64> {
    let th = degrees.to_radians();
    let (s, c) = (libm::sin(th), libm::cos(th));
    points
        .chunks_exact(2)
        .flat_map(|p| [c * p[0] - s * p[1] + offset[0], s * p[0] + c * p[1] + offset[1]])
        .collect()
}

/// Class prototypes: blob centers for rasters, point coordinates for point sets.
#[derive(Debug, Clone, PartialEq)]
struct Prototypes {
    parts: Vec<Vec<[f64; 2]>>,
}

fn prototypes<R: Rng>(cfg: &GridTransformConfig, rng: &mut R) -> Prototypes {
    let parts = (0..cfg.classes)
        .map(|_| match cfg.base {
            BasePatterns::Raster { size, blobs } => {
                // keep blobs near the center so rotations stay inside the frame
                let c = (size as f64 - 1.0) / 2.0;
                let radius = size as f64 / 4.0;
                (0..blobs)
                    .map(|_| {
                        let a = rng.random_range(0.0..core::f64::consts::TAU);
                        let d = radius * libm::sqrt(rng.random::<f64>());
                        [c + d * libm::cos(a), c + d * libm::sin(a)]
                    })
                    .collect()
            }
            BasePatterns::PointSet { points } => {
                (0..points).map(|_| [rng.random_range(-4.0..4.0), rng.random_range(-4.0..4.0)]).collect()
            }
        })
        .collect();
    Prototypes { parts }
}

fn render_blobs(centers: &[[f64; 2]], size: usize, amplitude: &[f64]) -> Vec<f64> {
    let s = size as f64 / 8.0;
    let sigma2 = 2.0 * (s * s).max(1.0);
    let mut img = vec![0.0; size * size];
    for (cidx, ctr) in centers.iter().enumerate() {
        for r in 0..size {
            for c in 0..size {
                let (dr, dc) = (r as f64 - ctr[0], c as f64 - ctr[1]);
                let d2 = dr * dr + dc * dc;
                img[r * size + c] += amplitude[cidx] * libm::exp(-d2 / sigma2);
            }
        }
    }
    // intensities in [0, 1] like scanned digits
    let peak = img.iter().copied().fold(0.0, f64::max);
    if peak > 0.0 {
        img.iter_mut().for_each(|v| *v /= peak);
    }
    img
}

/// Untransformed base sample of class `label`.
fn base_sample<R: Rng>(cfg: &GridTransformConfig, protos: &Prototypes, label: usize, rng: &mut R) -> Vec<f64> {
    let jitter = Normal::new(0.0, cfg.jitter).expect("validated");
    let parts: Vec<[f64; 2]> = protos.parts[label]
        .iter()
        .map(|p| [p[0] + jitter.sample(rng), p[1] + jitter.sample(rng)])
        .collect();
    match cfg.base {
        BasePatterns::Raster { size, .. } => {
            let amp: Vec<f64> = parts.iter().map(|_| rng.random_range(0.8..1.2)).collect();
            render_blobs(&parts, size, &amp)
        }
        BasePatterns::PointSet { .. } => parts.into_iter().flatten().collect(),
    }
}

/// Applies domain `(rotation, translation)` and additive noise.
fn apply_domain<R: Rng>(shape: InputShape, x: &[f64], degrees: f64, offset: [f64; 2], noise: f64, rng: &mut R) -> Vec<f64> {
    let mut out = match shape {
        InputShape::Raster { height, width } => {
            let rotated = rotate_raster(x, height, width, degrees);
            translate_raster(&rotated, height, width, offset[0], offset[1])
        }
        InputShape::Vector(_) => transform_points(x, degrees, offset),
    };
    if noise > 0.0 {
        for v in &mut out {
            let e: f64 = StandardNormal.sample(rng);
            *v += noise * e;
        }
    }
    out
}

/// Offsets clipped to the raster, and whether clipping happened.
fn clip_offsets(cfg: &GridTransformConfig, shape: InputShape) -> (Vec<[f64; 2]>, bool) {
    let InputShape::Raster { height, width } = shape else {
        return (cfg.translations.clone(), false);
    };
    let mut clipped = false;
    let offs = cfg
        .translations
        .iter()
        .map(|o| {
            let cx = o[0].clamp(-(width as f64 - 1.0), width as f64 - 1.0);
            let cy = o[1].clamp(-(height as f64 - 1.0), height as f64 - 1.0);
            clipped |= cx != o[0] || cy != o[1];
            [cx, cy]
        })
        .collect();
    (offs, clipped)
}

fn provenance(cfg: &GridTransformConfig, base: &str, clipped: bool, seed: u64, purpose: u64) -> Provenance {
    let mut p = Provenance::new();
    p.insert("generator".into(), "grid_transform".into());
    p.insert("base".into(), base.into());
    p.insert("rotations".into(), format!("{:?}", cfg.rotations));
    p.insert("translations".into(), format!("{:?}", cfg.translations));
    p.insert("order".into(), "rotate_then_translate".into());
    p.insert("noise".into(), format!("{:?}", cfg.noise));
    p.insert("jitter".into(), format!("{:?}", cfg.jitter));
    p.insert("pattern_seed".into(), cfg.seed.to_string());
    p.insert("data_seed".into(), seed.to_string());
    p.insert("data_stream".into(), format!("{purpose:#x}"));
    if clipped {
        p.insert("warning".into(), "translation clipped to raster bounds".into());
    }
    p
}

/// Rotation × translation dataset over synthetic class prototypes.
///
/// Prototypes depend only on `cfg.seed`, so train and test splits drawn with
/// different `seed`/`purpose` share classes. Domain `(i, j)` rotates by
/// `rotations[i]` then shifts by `translations[j]`. Labels are uniform.
pub fn grid_transform_dataset(cfg: &GridTransformConfig, domains: &[usize], n: usize, seed: u64, purpose: u64) -> Result<DomainDataset> {
    let mut errors = Vec::new();
    cfg.validate(&mut errors);
    if !errors.is_empty() {
        bail!(Argument, "{}", errors.join("; "));
    }
    let grid = cfg.grid()?;
    let shape = cfg.input_shape();
    let protos = prototypes(cfg, &mut child_rng(cfg.seed, stream::MODEL));
    let (offsets, clipped) = clip_offsets(cfg, shape);
    let base_name = match cfg.base {
        BasePatterns::Raster { .. } => "synthetic_raster",
        BasePatterns::PointSet { .. } => "synthetic_point_set",
    };
    let prov = provenance(cfg, base_name, clipped, seed, purpose);
    let mut ds = DomainDataset::new(grid.clone(), shape, LossSpec::softmax(cfg.classes)?, n, prov)?;
    let stream_seed = derive_seed(seed, purpose);
    for &t in domains {
        let lv = grid.multi_index(t)?;
        let (deg, off) = (cfg.rotations[lv.0[0]], offsets[lv.0[1]]);
        let mut rng = child_rng(stream_seed, t as u64);
        let samples = (0..n)
            .map(|_| {
                let y = rng.random_range(0..cfg.classes);
                let x = base_sample(cfg, &protos, y, &mut rng);
                Sample { x: apply_domain(shape, &x, deg, off, cfg.noise, &mut rng), y: y as f64 }
            })
            .collect();
        ds.set_domain(t, samples)?;
    }
    Ok(ds)
}

/// Same construction over externally supplied base rasters (for example real
/// digits). Each domain resamples `n` base items uniformly with replacement.
pub fn grid_transform_from_base(cfg: &GridTransformConfig, base: &DomainDataset, domains: &[usize], n: usize, seed: u64, purpose: u64) -> Result<DomainDataset> {
    let InputShape::Raster { .. } = base.input() else {
        bail!(Argument, "external base data must be rasters");
    };
    let pool: Vec<&Sample> = base.domains().iter().flatten().collect();
    if pool.is_empty() {
        bail!(Data, "external base dataset is empty");
    }
    let classes = base.classes();
    if classes < 2 {
        bail!(Argument, "external base data needs at least 2 classes");
    }
    let mut errors = Vec::new();
    cfg.validate(&mut errors);
    errors.retain(|e| !e.starts_with("transform.classes") && !e.starts_with("transform.base"));
    if !errors.is_empty() {
        bail!(Argument, "{}", errors.join("; "));
    }
    let grid = cfg.grid()?;
    let shape = base.input();
    let (offsets, clipped) = clip_offsets(cfg, shape);
    let mut prov = provenance(cfg, "external_raster", clipped, seed, purpose);
    for (k, v) in base.provenance() {
        prov.insert(format!("base.{k}"), v.clone());
    }
    let mut ds = DomainDataset::new(grid.clone(), shape, base.loss(), n, prov)?;
    let stream_seed = derive_seed(seed, purpose);
    for &t in domains {
        let lv = grid.multi_index(t)?;
        let (deg, off) = (cfg.rotations[lv.0[0]], offsets[lv.0[1]]);
        let mut rng = child_rng(stream_seed, t as u64);
        let samples = (0..n)
            .map(|_| {
                let s = pool[rng.random_range(0..pool.len())];
                Sample { x: apply_domain(shape, &s.x, deg, off, cfg.noise, &mut rng), y: s.y }
            })
            .collect();
        ds.set_domain(t, samples)?;
    }
    Ok(ds)
}
