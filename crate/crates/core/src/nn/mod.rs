//! Small convolutional networks on grid images.
//!
//! Everything is generic over [`Scalar`] so the same code trains in `f32`
//! and runs finite-difference gradient checks in `f64`.

mod adadelta;
mod checkpoint;
mod kernels;
mod network;
mod spec;

use std::fmt::Debug;
use std::ops::{AddAssign, SubAssign};

use thiserror::Error;

pub use adadelta::{Adadelta, AdadeltaState};
pub use checkpoint::{decode_model, encode_model, read_model, write_model, Model, MODEL_MAGIC};
pub use network::{argmax, LossOutput, Mode, Network, Sample, Trace};
pub use spec::{
    build_deepcnet, build_deeplnino, LayerSpec, NetworkSpec, Padding, ParamRange, PoolEdge, Shape,
    DEFAULT_L1,
};

/// Floating-point element type of the network buffers.
pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + AddAssign
    + SubAssign
    + Send
    + Sync
    + Debug
    + Default
    + 'static
{
}

impl<T> Scalar for T where
    T: num_traits::Float
        + num_traits::FromPrimitive
        + AddAssign
        + SubAssign
        + Send
        + Sync
        + Debug
        + Default
        + 'static
{
}

#[derive(Debug, Error)]
pub enum NnError {
    #[error("invalid network: {0}")]
    InvalidSpec(String),
    #[error("layer {layer} cannot be applied to a {input} activation")]
    ShapeUnderflow { layer: usize, input: Shape },
    #[error("{what}: expected length {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("batch is empty")]
    EmptyBatch,
    #[error("label {0} is out of range")]
    BadLabel(usize),
    #[error("model expects {expected} input, data is {found}")]
    ArchitectureMismatch { expected: String, found: String },
    #[error("not a model checkpoint")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u8),
    #[error("checkpoint is inconsistent: {0}")]
    Corrupt(String),
    #[error("checkpoint truncated: needed {needed} bytes, found {found}")]
    TruncatedFile { needed: usize, found: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
