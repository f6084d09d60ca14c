//! Synthetic data: planted realizable models and rotation × translation grids.

mod planted;
mod transform;

pub use planted::{plant_model, Link, PlantedConfig, PlantedModel};
pub use transform::{
    grid_transform_dataset, grid_transform_from_base, rotate_raster, transform_points, translate_raster, BasePatterns,
    GridTransformConfig,
};

#[cfg(test)]
mod tests;
