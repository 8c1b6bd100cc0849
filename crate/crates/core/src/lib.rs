//! Cell2Grid: compress images of many similar objects into small
//! multi-channel grids, and train a compact, L1-sparsified CNN on them.
//!
//! Pipeline stages:
//!
//! 1. [`ingest`] – per-object CSV tables (location in µm + properties).
//! 2. [`compressor`] – grid spacing estimate, binning, conflict resolution.
//! 3. [`container`] / [`preview`] – lossless binary container and PNG previews.
//! 4. [`augment`] – pixel-preserving augmentations for grid images.
//! 5. [`nn`] – conv/pool/dense kernels with exact gradients, DeepLNiNo and
//!    DeepCNet builders, Adadelta, checkpoints.
//! 6. [`train`] – stratified split, oversampling, weighted training loop,
//!    balanced accuracy, repeated runs, first-layer inspection.
//! 7. [`synth`] – synthetic object images with planted labels.

pub mod augment;
pub mod compressor;
pub mod container;
pub mod ingest;
pub mod model;
pub mod nn;
pub mod preview;
pub mod seed;
pub mod synth;
pub mod train;

pub use model::{C2GImage, C2GMeta, GridSpec, ObjectImage, ObjectRecord};
