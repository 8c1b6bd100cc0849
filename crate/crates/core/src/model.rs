//! Domain types shared by every stage of the pipeline.
//!
//! Coordinates are physical (µm). A [`C2GImage`] stores its tensor in
//! `kx × ky × P` row-major order, i.e. the value for node `(x, y)` and
//! channel `c` lives at `(x * ky + y) * P + c`. The same layout doubles as
//! the height-width-channel layout used by the network.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("object {index} at ({x}, {y}) lies outside the {width} x {height} µm extent")]
    OutOfBounds {
        index: usize,
        x: f64,
        y: f64,
        width: f64,
        height: f64,
    },
    #[error("object {index} has a non-finite coordinate or property")]
    NonFinite { index: usize },
    #[error("object {index} has {found} properties, expected {expected}")]
    ChannelCount {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("invalid extent: {0}")]
    BadExtent(String),
    #[error("label must be 0 or 1, got {0}")]
    BadLabel(u8),
    #[error("grid spacing must be positive and finite, got {0}")]
    BadSpacing(f64),
    #[error("tensor length {found} does not match grid {kx}x{ky}x{channels}")]
    TensorShape {
        kx: usize,
        ky: usize,
        channels: usize,
        found: usize,
    },
    #[error("tensor holds a non-finite value at flat index {0}")]
    NonFiniteValue(usize),
    #[error("node ({x}, {y}) is unoccupied but holds nonzero values")]
    OccupancyViolation { x: usize, y: usize },
}

/// One identified object: a point location plus its property vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectRecord {
    pub x: f64,
    pub y: f64,
    pub props: Vec<f32>,
}

impl ObjectRecord {
    pub fn new(x: f64, y: f64, props: Vec<f32>) -> Self {
        Self { x, y, props }
    }
}

/// All objects segmented from one source image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectImage {
    id: String,
    width_um: f64,
    height_um: f64,
    resolution_um_per_px: f64,
    label: Option<u8>,
    channels: usize,
    objects: Vec<ObjectRecord>,
}

impl ObjectImage {
    /// Validates every object against the extent. `channels` fixes P even
    /// when the object list is empty.
    pub fn new(
        id: impl Into<String>,
        width_um: f64,
        height_um: f64,
        resolution_um_per_px: f64,
        label: Option<u8>,
        channels: usize,
        objects: Vec<ObjectRecord>,
    ) -> Result<Self, ModelError> {
        for (name, v) in [
            ("width_um", width_um),
            ("height_um", height_um),
            ("resolution_um_per_px", resolution_um_per_px),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ModelError::BadExtent(format!("{name} = {v}")));
            }
        }
        if let Some(l) = label {
            if l > 1 {
                return Err(ModelError::BadLabel(l));
            }
        }
        for (index, o) in objects.iter().enumerate() {
            if !o.x.is_finite() || !o.y.is_finite() || o.props.iter().any(|p| !p.is_finite()) {
                return Err(ModelError::NonFinite { index });
            }
            if !(0.0..width_um).contains(&o.x) || !(0.0..height_um).contains(&o.y) {
                return Err(ModelError::OutOfBounds {
                    index,
                    x: o.x,
                    y: o.y,
                    width: width_um,
                    height: height_um,
                });
            }
            if o.props.len() != channels {
                return Err(ModelError::ChannelCount {
                    index,
                    expected: channels,
                    found: o.props.len(),
                });
            }
        }
        Ok(Self {
            id: id.into(),
            width_um,
            height_um,
            resolution_um_per_px,
            label,
            channels,
            objects,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn width_um(&self) -> f64 {
        self.width_um
    }

    pub fn height_um(&self) -> f64 {
        self.height_um
    }

    pub fn resolution_um_per_px(&self) -> f64 {
        self.resolution_um_per_px
    }

    pub fn label(&self) -> Option<u8> {
        self.label
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn objects(&self) -> &[ObjectRecord] {
        &self.objects
    }

    pub fn len(&self) -> usize {
        self.objects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.objects.is_empty()
    }

    pub fn area_um2(&self) -> f64 {
        self.width_um * self.height_um
    }

    /// Objects per µm².
    pub fn density(&self) -> f64 {
        self.objects.len() as f64 / self.area_um2()
    }
}

/// Target grid: spacing plus node counts along each axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d_um: f64,
    pub kx: usize,
    pub ky: usize,
    pub channels: usize,
}

impl GridSpec {
    /// Grid covering a `width_um × height_um` extent at spacing `d_um`:
    /// `kx = ceil(width / d)`, `ky = ceil(height / d)`.
    pub fn for_extent(
        width_um: f64,
        height_um: f64,
        d_um: f64,
        channels: usize,
    ) -> Result<Self, ModelError> {
        if !(d_um.is_finite() && d_um > 0.0) {
            return Err(ModelError::BadSpacing(d_um));
        }
        let kx = (width_um / d_um).ceil().max(1.0) as usize;
        let ky = (height_um / d_um).ceil().max(1.0) as usize;
        Ok(Self {
            d_um,
            kx,
            ky,
            channels,
        })
    }

    pub fn nodes(&self) -> usize {
        self.kx * self.ky
    }

    pub fn len(&self) -> usize {
        self.kx * self.ky * self.channels
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn node_index(&self, x: usize, y: usize) -> usize {
        x * self.ky + y
    }
}

/// Provenance carried alongside a compressed image.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct C2GMeta {
    pub source_id: String,
    pub kept: usize,
    pub deleted: usize,
    pub label: Option<u8>,
}

/// A compressed image: each occupied node holds exactly one object's properties.
#[derive(Debug, Clone, PartialEq)]
pub struct C2GImage {
    spec: GridSpec,
    data: Vec<f32>,
    occupancy: Vec<bool>,
    meta: C2GMeta,
}

impl C2GImage {
    pub fn new(
        spec: GridSpec,
        data: Vec<f32>,
        occupancy: Vec<bool>,
        meta: C2GMeta,
    ) -> Result<Self, ModelError> {
        if !(spec.d_um.is_finite() && spec.d_um > 0.0) {
            return Err(ModelError::BadSpacing(spec.d_um));
        }
        if data.len() != spec.len() || occupancy.len() != spec.nodes() {
            return Err(ModelError::TensorShape {
                kx: spec.kx,
                ky: spec.ky,
                channels: spec.channels,
                found: data.len(),
            });
        }
        if let Some(l) = meta.label {
            if l > 1 {
                return Err(ModelError::BadLabel(l));
            }
        }
        let img = Self {
            spec,
            data,
            occupancy,
            meta,
        };
        img.check_invariants()?;
        Ok(img)
    }

    /// All-zero, fully unoccupied image.
    pub fn empty(spec: GridSpec, meta: C2GMeta) -> Self {
        Self {
            data: vec![0.0; spec.len()],
            occupancy: vec![false; spec.nodes()],
            spec,
            meta,
        }
    }

    /// Finite values and the occupancy/zero coupling.
    pub fn check_invariants(&self) -> Result<(), ModelError> {
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(ModelError::NonFiniteValue(i));
        }
        let p = self.spec.channels;
        for (node, &occ) in self.occupancy.iter().enumerate() {
            if !occ
                && self.data[node * p..(node + 1) * p]
                    .iter()
                    .any(|&v| v != 0.0)
            {
                return Err(ModelError::OccupancyViolation {
                    x: node / self.spec.ky,
                    y: node % self.spec.ky,
                });
            }
        }
        Ok(())
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn occupancy(&self) -> &[bool] {
        &self.occupancy
    }

    pub fn meta(&self) -> &C2GMeta {
        &self.meta
    }

    pub fn label(&self) -> Option<u8> {
        self.meta.label
    }

    pub fn with_label(mut self, label: Option<u8>) -> Self {
        self.meta.label = label;
        self
    }

    pub fn occupied_count(&self) -> usize {
        self.occupancy.iter().filter(|&&o| o).count()
    }

    pub fn pixel(&self, x: usize, y: usize) -> &[f32] {
        let p = self.spec.channels;
        let n = self.spec.node_index(x, y);
        &self.data[n * p..(n + 1) * p]
    }

    pub fn is_occupied(&self, x: usize, y: usize) -> bool {
        self.occupancy[self.spec.node_index(x, y)]
    }

    pub(crate) fn parts_mut(&mut self) -> (&GridSpec, &mut Vec<f32>, &mut Vec<bool>) {
        (&self.spec, &mut self.data, &mut self.occupancy)
    }

    pub fn into_parts(self) -> (GridSpec, Vec<f32>, Vec<bool>, C2GMeta) {
        (self.spec, self.data, self.occupancy, self.meta)
    }
}
