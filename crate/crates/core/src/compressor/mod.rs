//! Object lists to grid images.
//!
//! A batch shares one grid spacing `d`. Each image is binned onto its own
//! `ceil(width/d) × ceil(height/d)` grid, conflicts are resolved with
//! [`priority_shift`], and every placed object's property vector is written
//! to its node.

mod binning;
mod priority_shift;
mod spacing;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

pub use binning::{bin_objects, grid_node, round_coordinate, Bins};
pub use priority_shift::{
    distance_to_node, octant, priority_shift, Assignment, Disposition, DIRECTIONS, PRIORITY,
};
pub use spacing::{estimate_grid_spacing, BatchStats};

use crate::model::{C2GImage, C2GMeta, GridSpec, ModelError, ObjectImage};

#[derive(Debug, Error)]
pub enum CompressError {
    #[error("batch is empty")]
    EmptyBatch,
    #[error("image {index} has non-positive object density {density}")]
    NonPositiveDensity { index: usize, density: f64 },
    #[error("image {index} has {found} channels, batch has {expected}")]
    MixedChannelCounts {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Per-image outcome counts.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CompressionStats {
    pub id: String,
    pub objects: usize,
    pub kept_in_place: usize,
    pub shifted: usize,
    pub deleted: usize,
    pub conflicted_nodes: usize,
}

impl CompressionStats {
    pub fn kept(&self) -> usize {
        self.kept_in_place + self.shifted
    }
}

/// Compresses one image at spacing `d_um`.
pub fn compress(img: &ObjectImage, d_um: f64) -> Result<C2GImage, CompressError> {
    compress_detailed(img, d_um).map(|(c, _)| c)
}

pub fn compress_detailed(
    img: &ObjectImage,
    d_um: f64,
) -> Result<(C2GImage, CompressionStats), CompressError> {
    let spec = GridSpec::for_extent(img.width_um(), img.height_um(), d_um, img.channels())?;
    let bins = bin_objects(img, d_um, spec.kx, spec.ky);
    let coords: Vec<(f64, f64)> = img.objects().iter().map(|o| (o.x, o.y)).collect();
    let assignments = priority_shift(&bins, &coords);

    let p = spec.channels;
    let mut data = vec![0.0f32; spec.len()];
    let mut occupancy = vec![false; spec.nodes()];
    let mut stats = CompressionStats {
        id: img.id().to_owned(),
        objects: img.len(),
        conflicted_nodes: bins.conflicted_nodes(),
        ..Default::default()
    };
    for a in &assignments {
        match a.disposition {
            Disposition::KeptInPlace => stats.kept_in_place += 1,
            Disposition::Shifted => stats.shifted += 1,
            Disposition::Deleted => stats.deleted += 1,
        }
        if let Some((x, y)) = a.node {
            let n = spec.node_index(x, y);
            debug_assert!(!occupancy[n], "node ({x}, {y}) assigned twice");
            occupancy[n] = true;
            data[n * p..(n + 1) * p].copy_from_slice(&img.objects()[a.object].props);
        }
    }
    let meta = C2GMeta {
        source_id: img.id().to_owned(),
        kept: stats.kept(),
        deleted: stats.deleted,
        label: img.label(),
    };
    Ok((C2GImage::new(spec, data, occupancy, meta)?, stats))
}

/// Aggregate report over a compressed batch.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchReport {
    pub d_um: f64,
    pub estimated: bool,
    pub images: Vec<CompressionStats>,
    pub total_objects: usize,
    pub total_kept: usize,
    pub total_shifted: usize,
    pub total_deleted: usize,
    pub total_conflicted_nodes: usize,
}

impl BatchReport {
    pub fn deleted_fraction(&self) -> f64 {
        if self.total_objects == 0 {
            0.0
        } else {
            self.total_deleted as f64 / self.total_objects as f64
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchOutput {
    pub images: Vec<C2GImage>,
    pub report: BatchReport,
}

/// Options for [`compress_batch`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BatchOptions {
    /// Fixed spacing; estimated from the batch densities when `None`.
    pub d_override: Option<f64>,
    /// Round an estimated spacing to whole µm.
    pub round_to_int: bool,
}

/// Compresses a batch with one shared grid spacing. Images are processed
/// independently (in parallel on the current rayon pool); outputs keep the
/// input order and do not depend on the thread count.
pub fn compress_batch(
    imgs: &[ObjectImage],
    opts: BatchOptions,
) -> Result<BatchOutput, CompressError> {
    let first = imgs.first().ok_or(CompressError::EmptyBatch)?;
    let p = first.channels();
    if let Some((index, img)) = imgs.iter().enumerate().find(|(_, i)| i.channels() != p) {
        return Err(CompressError::MixedChannelCounts {
            index,
            expected: p,
            found: img.channels(),
        });
    }
    let (d_um, estimated) = match opts.d_override {
        Some(d) => (d, false),
        None => (
            estimate_grid_spacing(&BatchStats::from_images(imgs)?, opts.round_to_int),
            true,
        ),
    };
    let results: Vec<(C2GImage, CompressionStats)> = imgs
        .par_iter()
        .map(|img| compress_detailed(img, d_um))
        .collect::<Result<_, _>>()?;
    let (images, stats): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let report = BatchReport {
        d_um,
        estimated,
        total_objects: stats.iter().map(|s| s.objects).sum(),
        total_kept: stats.iter().map(CompressionStats::kept).sum(),
        total_shifted: stats.iter().map(|s| s.shifted).sum(),
        total_deleted: stats.iter().map(|s| s.deleted).sum(),
        total_conflicted_nodes: stats.iter().map(|s| s.conflicted_nodes).sum(),
        images: stats,
    };
    Ok(BatchOutput { images, report })
}
