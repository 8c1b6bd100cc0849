//! Layer stacks, shape propagation and parameter layout.

use serde::{Deserialize, Serialize};

use super::NnError;

/// Height × width × channels of an activation. Height runs along the grid
/// x axis, width along y, matching the grid tensor layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub h: usize,
    pub w: usize,
    pub c: usize,
}

impl Shape {
    pub const fn new(h: usize, w: usize, c: usize) -> Self {
        Self { h, w, c }
    }

    pub fn len(&self) -> usize {
        self.h * self.w * self.c
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn is_flat(&self) -> bool {
        self.h == 1 && self.w == 1
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.h, self.w, self.c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Padding {
    /// No padding; output shrinks by `kernel - 1`.
    Valid,
    /// Zero padding, `(k-1)/2` before and the rest after; output keeps the size.
    Same,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolEdge {
    /// Drop a trailing partial window (`floor(n / k)` outputs).
    Drop,
    /// Keep a trailing partial window (`ceil(n / k)` outputs).
    Partial,
}

/// One layer. Convolutions and hidden dense layers are followed by a
/// rectifier; `Softmax` is a dense layer producing class probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv {
        kernel: usize,
        filters: usize,
        padding: Padding,
    },
    MaxPool {
        window: usize,
        edge: PoolEdge,
    },
    Flatten,
    Dense {
        units: usize,
    },
    Dropout {
        rate: f32,
    },
    Softmax {
        classes: usize,
    },
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv { .. } => "conv",
            LayerSpec::MaxPool { .. } => "maxpool",
            LayerSpec::Flatten => "flatten",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::Softmax { .. } => "softmax",
        }
    }

    /// Output shape for `input`, or `None` if a dimension would vanish.
    fn output_shape(&self, input: Shape) -> Option<Shape> {
        let out = match *self {
            LayerSpec::Conv {
                kernel,
                filters,
                padding,
            } => match padding {
                Padding::Valid => Shape::new(
                    (input.h + 1).checked_sub(kernel)?,
                    (input.w + 1).checked_sub(kernel)?,
                    filters,
                ),
                Padding::Same => Shape::new(input.h, input.w, filters),
            },
            LayerSpec::MaxPool { window, edge } => {
                let f = |n: usize| match edge {
                    PoolEdge::Drop => n / window,
                    PoolEdge::Partial => n.div_ceil(window),
                };
                Shape::new(f(input.h), f(input.w), input.c)
            }
            LayerSpec::Flatten => Shape::new(1, 1, input.len()),
            LayerSpec::Dense { units } => Shape::new(1, 1, units),
            LayerSpec::Dropout { .. } => input,
            LayerSpec::Softmax { classes } => Shape::new(1, 1, classes),
        };
        (!out.is_empty()).then_some(out)
    }

    /// Weight and bias counts for a layer fed with `input`.
    pub fn param_counts(&self, input: Shape) -> (usize, usize) {
        match *self {
            LayerSpec::Conv {
                kernel, filters, ..
            } => (kernel * kernel * input.c * filters, filters),
            LayerSpec::Dense { units } => (input.len() * units, units),
            LayerSpec::Softmax { classes } => (input.len() * classes, classes),
            _ => (0, 0),
        }
    }
}

/// A full network: input plane, layer stack, and the L1 coefficient applied
/// to the first convolution's weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub input: Shape,
    pub layers: Vec<LayerSpec>,
    pub l1: f64,
}

/// Location of one layer's parameters in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRange {
    pub weights: usize,
    pub weights_len: usize,
    pub bias: usize,
    pub bias_len: usize,
}

impl ParamRange {
    pub fn len(&self) -> usize {
        self.weights_len + self.bias_len
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl NetworkSpec {
    /// Checks the stack and returns each layer's output shape.
    pub fn shapes(&self) -> Result<Vec<Shape>, NnError> {
        if !(self.l1.is_finite() && self.l1 >= 0.0) {
            return Err(NnError::InvalidSpec(format!(
                "l1 = {} must be >= 0",
                self.l1
            )));
        }
        if self.input.is_empty() {
            return Err(NnError::InvalidSpec(format!("empty input {}", self.input)));
        }
        match self.layers.last() {
            Some(LayerSpec::Softmax { .. }) => {}
            _ => return Err(NnError::InvalidSpec("last layer must be softmax".into())),
        }
        let mut shape = self.input;
        let mut flattened = false;
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                LayerSpec::Conv {
                    kernel, filters, ..
                } => {
                    if kernel == 0 || filters == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: empty conv")));
                    }
                    if flattened {
                        return Err(NnError::InvalidSpec(format!(
                            "layer {i}: conv after flatten"
                        )));
                    }
                }
                LayerSpec::MaxPool { window, .. } => {
                    if window == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: empty pool")));
                    }
                    if flattened {
                        return Err(NnError::InvalidSpec(format!(
                            "layer {i}: pool after flatten"
                        )));
                    }
                }
                LayerSpec::Dense { units } | LayerSpec::Softmax { classes: units } => {
                    if units == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: no units")));
                    }
                    if !flattened && !shape.is_flat() {
                        return Err(NnError::InvalidSpec(format!(
                            "layer {i}: dense input {shape} must be flattened"
                        )));
                    }
                    if matches!(layer, LayerSpec::Softmax { .. }) && i + 1 != self.layers.len() {
                        return Err(NnError::InvalidSpec("softmax must be last".into()));
                    }
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(&rate) {
                        return Err(NnError::InvalidSpec(format!(
                            "layer {i}: dropout rate {rate} not in [0, 1)"
                        )));
                    }
                }
                LayerSpec::Flatten => flattened = true,
            }
            shape = layer.output_shape(shape).ok_or(NnError::ShapeUnderflow {
                layer: i,
                input: shape,
            })?;
            shapes.push(shape);
        }
        Ok(shapes)
    }

    /// Input shape of every layer.
    pub fn input_shapes(&self) -> Result<Vec<Shape>, NnError> {
        let outs = self.shapes()?;
        Ok(std::iter::once(self.input)
            .chain(outs.iter().copied())
            .take(self.layers.len())
            .collect())
    }

    /// Trainable parameters per layer (weights + biases).
    pub fn param_counts(&self) -> Result<Vec<usize>, NnError> {
        Ok(self
            .layers
            .iter()
            .zip(self.input_shapes()?)
            .map(|(l, s)| {
                let (w, b) = l.param_counts(s);
                w + b
            })
            .collect())
    }

    pub fn total_params(&self) -> Result<usize, NnError> {
        Ok(self.param_counts()?.iter().sum())
    }

    /// Offsets of each layer's weights and biases in the flat vector; layers
    /// are laid out in order, weights before bias.
    pub fn layout(&self) -> Result<Vec<ParamRange>, NnError> {
        let mut off = 0;
        let mut out = Vec::with_capacity(self.layers.len());
        for (l, s) in self.layers.iter().zip(self.input_shapes()?) {
            let (w, b) = l.param_counts(s);
            out.push(ParamRange {
                weights: off,
                weights_len: w,
                bias: off + w,
                bias_len: b,
            });
            off += w + b;
        }
        Ok(out)
    }

    /// Index of the first convolution, the layer that carries the L1 penalty.
    pub fn first_conv(&self) -> Option<usize> {
        self.layers
            .iter()
            .position(|l| matches!(l, LayerSpec::Conv { .. }))
    }

    pub fn classes(&self) -> usize {
        match self.layers.last() {
            Some(LayerSpec::Softmax { classes }) => *classes,
            _ => 0,
        }
    }
}

/// Default L1 coefficient on the first convolution.
pub const DEFAULT_L1: f64 = 1e-3;

/// The compact 1×1-first network for grid images. On a 135×101×6 input it
/// has 9,762 trainable parameters.
pub fn build_deeplnino(input: Shape, classes: usize) -> Result<NetworkSpec, NnError> {
    use LayerSpec::*;
    use Padding::*;
    let conv = |kernel, padding| Conv {
        kernel,
        filters: 16,
        padding,
    };
    let pool = |window, edge| MaxPool { window, edge };
    let spec = NetworkSpec {
        name: "DeepLNiNo".into(),
        input,
        layers: vec![
            conv(1, Valid),
            conv(2, Valid),
            pool(2, PoolEdge::Drop),
            conv(3, Valid),
            pool(3, PoolEdge::Drop),
            conv(3, Valid),
            pool(3, PoolEdge::Drop),
            conv(3, Same),
            pool(3, PoolEdge::Partial),
            conv(2, Same),
            pool(2, PoolEdge::Drop),
            Flatten,
            Dense { units: 32 },
            Dropout { rate: 0.33 },
            Softmax { classes },
        ],
        l1: DEFAULT_L1,
    };
    spec.shapes()?;
    Ok(spec)
}

/// `layers` conv + 2×2 max-pool stages with `n·growth` filters at stage `n`
/// (3×3 kernel first, 2×2 after, same padding), then a dense layer and the
/// softmax output. No L1 penalty.
pub fn build_deepcnet(
    layers: usize,
    growth: usize,
    input: Shape,
    dense_units: usize,
    classes: usize,
) -> Result<NetworkSpec, NnError> {
    if layers < 2 {
        return Err(NnError::InvalidSpec(format!(
            "DeepCNet needs at least 2 layers, got {layers}"
        )));
    }
    let mut stack = Vec::with_capacity(2 * layers + 3);
    for n in 1..=layers {
        stack.push(LayerSpec::Conv {
            kernel: if n == 1 { 3 } else { 2 },
            filters: n * growth,
            padding: Padding::Same,
        });
        stack.push(LayerSpec::MaxPool {
            window: 2,
            edge: PoolEdge::Drop,
        });
    }
    stack.push(LayerSpec::Flatten);
    stack.push(LayerSpec::Dense { units: dense_units });
    stack.push(LayerSpec::Softmax { classes });
    let spec = NetworkSpec {
        name: format!("DeepCNet(l={layers},k={growth})"),
        input,
        layers: stack,
        l1: 0.0,
    };
    spec.shapes()?;
    Ok(spec)
}
