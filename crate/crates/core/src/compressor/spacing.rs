//! Batch-level target grid spacing.

use super::CompressError;
use crate::model::ObjectImage;

/// Object densities (objects per µm²) of every image in a compression batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    densities: Vec<f64>,
}

impl BatchStats {
    pub fn new(densities: Vec<f64>) -> Result<Self, CompressError> {
        if densities.is_empty() {
            return Err(CompressError::EmptyBatch);
        }
        if let Some((index, &density)) = densities
            .iter()
            .enumerate()
            .find(|(_, &r)| !(r.is_finite() && r > 0.0))
        {
            return Err(CompressError::NonPositiveDensity { index, density });
        }
        Ok(Self { densities })
    }

    pub fn from_images(images: &[ObjectImage]) -> Result<Self, CompressError> {
        Self::new(images.iter().map(ObjectImage::density).collect())
    }

    pub fn densities(&self) -> &[f64] {
        &self.densities
    }

    pub fn n(&self) -> usize {
        self.densities.len()
    }
}

/// Half the batch mean of the per-image object extent `sqrt(1 / ρ)`.
///
/// With `round_to_int` the result is rounded to the nearest whole µm (never
/// below 1 µm).
pub fn estimate_grid_spacing(stats: &BatchStats, round_to_int: bool) -> f64 {
    let mean_extent = stats
        .densities
        .iter()
        .map(|r| (1.0 / r).sqrt())
        .sum::<f64>()
        / stats.n() as f64;
    let d = 0.5 * mean_extent;
    if round_to_int {
        d.round().max(1.0)
    } else {
        d
    }
}
