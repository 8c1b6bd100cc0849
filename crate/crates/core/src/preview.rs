//! False-color PNG previews, one display pixel per grid node.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use thiserror::Error;

use crate::model::C2GImage;

#[derive(Debug, Error)]
pub enum PreviewError {
    #[error("channel index {index} out of range for {channels} channels")]
    BadChannelIndex { index: usize, channels: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("png: {0}")]
    Png(#[from] png::EncodingError),
}

/// An 8-bit RGB raster, rows top to bottom.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RgbRaster {
    pub fn new(width: u32, height: u32) -> Self {
        Self {
            width,
            height,
            pixels: vec![0; width as usize * height as usize * 3],
        }
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn write_png(&self, path: &Path) -> Result<(), PreviewError> {
        let w = BufWriter::new(File::create(path)?);
        let mut enc = png::Encoder::new(w, self.width, self.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut writer = enc.write_header()?;
        writer.write_image_data(&self.pixels)?;
        writer.finish()?;
        Ok(())
    }
}

/// Maps three channels onto R, G and B, each min-max scaled over the whole
/// image. Grid x runs along raster columns.
pub fn render_preview(img: &C2GImage, channel_map: [usize; 3]) -> Result<RgbRaster, PreviewError> {
    let spec = img.spec();
    for &index in &channel_map {
        if index >= spec.channels {
            return Err(PreviewError::BadChannelIndex {
                index,
                channels: spec.channels,
            });
        }
    }
    let ranges = channel_map.map(|c| {
        img.data()
            .iter()
            .skip(c)
            .step_by(spec.channels)
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    });
    let mut raster = RgbRaster::new(spec.kx as u32, spec.ky as u32);
    for x in 0..spec.kx {
        for y in 0..spec.ky {
            let px = img.pixel(x, y);
            let rgb = std::array::from_fn(|k| {
                let (lo, hi) = ranges[k];
                if hi > lo {
                    ((px[channel_map[k]] - lo) / (hi - lo) * 255.0).round() as u8
                } else {
                    0
                }
            });
            raster.set(x as u32, y as u32, rgb);
        }
    }
    Ok(raster)
}

pub fn export_preview(
    img: &C2GImage,
    channel_map: [usize; 3],
    path: &Path,
) -> Result<(), PreviewError> {
    render_preview(img, channel_map)?.write_png(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{C2GMeta, GridSpec};

    fn spec(k: usize) -> GridSpec {
        GridSpec {
            d_um: 5.0,
            kx: k,
            ky: k,
            channels: 6,
        }
    }

    #[test]
    fn empty_image_is_black() {
        let img = C2GImage::empty(spec(10), C2GMeta::default());
        let r = render_preview(&img, [0, 1, 2]).unwrap();
        assert_eq!((r.width, r.height), (10, 10));
        assert!(r.pixels.iter().all(|&p| p == 0));
    }

    #[test]
    fn single_node_lights_single_pixel() {
        let s = spec(10);
        let mut data = vec![0.0; s.len()];
        let mut occ = vec![false; s.nodes()];
        let n = s.node_index(3, 7);
        data[n * 6] = 2.0;
        occ[n] = true;
        let img = C2GImage::new(s, data, occ, C2GMeta::default()).unwrap();
        let r = render_preview(&img, [0, 1, 2]).unwrap();
        for x in 0..10 {
            for y in 0..10 {
                let expect = if (x, y) == (3, 7) {
                    [255, 0, 0]
                } else {
                    [0, 0, 0]
                };
                assert_eq!(r.get(x, y), expect);
            }
        }
    }

    #[test]
    fn bad_channel() {
        let img = C2GImage::empty(spec(2), C2GMeta::default());
        assert!(matches!(
            render_preview(&img, [0, 6, 1]),
            Err(PreviewError::BadChannelIndex { index: 6, .. })
        ));
    }

    #[test]
    fn png_is_written() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("p.png");
        export_preview(&C2GImage::empty(spec(4), C2GMeta::default()), [0, 1, 2], &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[1..4], b"PNG");
    }
}
