use std::path::Path;

use serde::Serialize;

use super::TrainError;
use crate::nn::{LayerSpec, Model};
use crate::preview::RgbRaster;

/// Default flagging threshold for first-layer weights.
pub const DEFAULT_THRESHOLD: f32 = 0.004;

/// Weights of the leading 1×1 convolution, one row per filter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FirstLayerWeights {
    /// `weights[filter][channel]`.
    pub weights: Vec<Vec<f32>>,
    pub threshold: f32,
    /// Filters with at least one weight strictly above the threshold.
    pub flagged: Vec<usize>,
}

pub fn inspect_first_layer(model: &Model, threshold: f32) -> Result<FirstLayerWeights, TrainError> {
    let mismatch = |found: String| TrainError::ArchitectureMismatch {
        expected: "first layer 1x1 convolution".into(),
        found,
    };
    let filters = match model.spec.layers.first() {
        Some(&LayerSpec::Conv {
            kernel: 1, filters, ..
        }) => filters,
        Some(l) => return Err(mismatch(format!("first layer {}", l.kind_name()))),
        None => return Err(mismatch("no layers".into())),
    };
    let channels = model.spec.input.c;
    let w = &model.params[..channels * filters];
    let weights: Vec<Vec<f32>> = (0..filters)
        .map(|f| (0..channels).map(|c| w[c * filters + f]).collect())
        .collect();
    let flagged = weights
        .iter()
        .enumerate()
        .filter(|(_, row)| row.iter().any(|&v| v > threshold))
        .map(|(i, _)| i)
        .collect();
    Ok(FirstLayerWeights {
        weights,
        threshold,
        flagged,
    })
}

impl FirstLayerWeights {
    /// One row per filter, one column per channel, no header.
    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(path)?;
        for row in &self.weights {
            w.write_record(row.iter().map(|v| v.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }

    /// Filters as rows, channels as columns, `cell` pixels per weight.
    /// Non-negative weights go from white (0) to red (largest weight); all
    /// negative weights share one grey.
    pub fn heatmap(&self, cell: u32) -> RgbRaster {
        let rows = self.weights.len() as u32;
        let cols = self.weights.first().map_or(0, Vec::len) as u32;
        let max = self
            .weights
            .iter()
            .flatten()
            .copied()
            .fold(0.0f32, f32::max);
        let mut r = RgbRaster::new(cols * cell, rows * cell);
        for (f, row) in self.weights.iter().enumerate() {
            for (c, &v) in row.iter().enumerate() {
                let rgb = if v < 0.0 {
                    [128, 128, 128]
                } else {
                    let t = if max > 0.0 { v / max } else { 0.0 };
                    let fade = (255.0 * (1.0 - t)).round() as u8;
                    [255, fade, fade]
                };
                for dy in 0..cell {
                    for dx in 0..cell {
                        r.set(c as u32 * cell + dx, f as u32 * cell + dy, rgb);
                    }
                }
            }
        }
        r
    }
}
