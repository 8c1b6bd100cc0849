//! Forward pass, backpropagation and the regularized weighted loss.

use rand::Rng;
use rayon::prelude::*;

use super::kernels::{self, ConvGeom};
use super::spec::{LayerSpec, NetworkSpec, ParamRange, Shape};
use super::{NnError, Scalar};
use crate::seed;

/// A validated [`NetworkSpec`] with its shapes and parameter layout
/// resolved. Parameters live outside, in one flat vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    spec: NetworkSpec,
    inputs: Vec<Shape>,
    outputs: Vec<Shape>,
    layout: Vec<ParamRange>,
    total: usize,
}

/// Cached activations of one forward pass.
#[derive(Debug, Clone)]
pub struct Trace<T> {
    /// `acts[i]` is the input of layer `i`; the last entry holds the
    /// class probabilities.
    pub acts: Vec<Vec<T>>,
    pub logits: Vec<T>,
    argmax: Vec<Vec<u32>>,
    masks: Vec<Vec<T>>,
}

impl<T: Scalar> Trace<T> {
    pub fn probabilities(&self) -> &[T] {
        self.acts.last().expect("trace has output")
    }

    /// Input of layer `i` (equivalently the output of layer `i - 1`).
    pub fn activation(&self, i: usize) -> &[T] {
        &self.acts[i]
    }

    /// Flat input index selected by each output of pooling layer `i`;
    /// empty for other layers.
    pub fn pool_switches(&self, i: usize) -> &[u32] {
        &self.argmax[i]
    }
}

/// Loss value and its gradient for one batch.
#[derive(Debug, Clone)]
pub struct LossOutput<T> {
    pub loss: T,
    pub data_loss: T,
    pub l1_loss: T,
    pub grads: Vec<T>,
    pub correct: usize,
}

/// One labelled input.
#[derive(Debug, Clone, Copy)]
pub struct Sample<'a, T> {
    pub input: &'a [T],
    pub label: usize,
}

/// Dropout behaviour of a forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Eval,
    /// Dropout active; masks drawn from a generator seeded with the value.
    Train(u64),
}

impl Network {
    pub fn new(spec: NetworkSpec) -> Result<Self, NnError> {
        let outputs = spec.shapes()?;
        let inputs = spec.input_shapes()?;
        let layout = spec.layout()?;
        let total = layout.iter().map(ParamRange::len).sum();
        Ok(Self {
            spec,
            inputs,
            outputs,
            layout,
            total,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn input_shape(&self) -> Shape {
        self.spec.input
    }

    pub fn output_shapes(&self) -> &[Shape] {
        &self.outputs
    }

    pub fn layout(&self) -> &[ParamRange] {
        &self.layout
    }

    pub fn param_count(&self) -> usize {
        self.total
    }

    pub fn classes(&self) -> usize {
        self.spec.classes()
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init_params<T: Scalar>(&self, seed: u64) -> Vec<T> {
        let mut rng = seed::rng(seed);
        let mut params = vec![T::zero(); self.total];
        for (layer, (r, input)) in self
            .spec
            .layers
            .iter()
            .zip(self.layout.iter().zip(&self.inputs))
        {
            let (fan_in, fan_out) = match *layer {
                LayerSpec::Conv {
                    kernel, filters, ..
                } => (kernel * kernel * input.c, kernel * kernel * filters),
                LayerSpec::Dense { units } | LayerSpec::Softmax { classes: units } => {
                    (input.len(), units)
                }
                _ => continue,
            };
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            for w in &mut params[r.weights..r.weights + r.weights_len] {
                *w = T::from_f64(rng.random_range(-limit..limit)).expect("finite");
            }
        }
        params
    }

    fn check(&self, params_len: usize, input_len: usize) -> Result<(), NnError> {
        if params_len != self.total {
            return Err(NnError::ShapeMismatch {
                what: "parameters",
                expected: self.total,
                found: params_len,
            });
        }
        if input_len != self.spec.input.len() {
            return Err(NnError::ShapeMismatch {
                what: "input",
                expected: self.spec.input.len(),
                found: input_len,
            });
        }
        Ok(())
    }

    pub fn forward<T: Scalar>(
        &self,
        params: &[T],
        input: &[T],
        mode: Mode,
    ) -> Result<Trace<T>, NnError> {
        self.check(params.len(), input.len())?;
        let n = self.spec.layers.len();
        let mut acts: Vec<Vec<T>> = Vec::with_capacity(n + 1);
        acts.push(input.to_vec());
        let mut argmax = vec![Vec::new(); n];
        let mut masks = vec![Vec::new(); n];
        let mut logits = Vec::new();
        let mut rng = match mode {
            Mode::Train(s) => Some(seed::rng(s)),
            Mode::Eval => None,
        };

        for (i, layer) in self.spec.layers.iter().enumerate() {
            let (ins, outs, r) = (self.inputs[i], self.outputs[i], self.layout[i]);
            let x = acts.last().expect("input present");
            let mut out = vec![T::zero(); outs.len()];
            let w = &params[r.weights..r.weights + r.weights_len];
            let b = &params[r.bias..r.bias + r.bias_len];
            match *layer {
                LayerSpec::Conv {
                    kernel, padding, ..
                } => {
                    let g = ConvGeom::new(ins, outs, kernel, padding);
                    kernels::conv_forward(&g, x, w, b, &mut out);
                }
                LayerSpec::MaxPool { window, .. } => {
                    let mut am = vec![0u32; outs.len()];
                    kernels::pool_forward(ins, outs, window, x, &mut out, &mut am);
                    argmax[i] = am;
                }
                LayerSpec::Flatten => out.copy_from_slice(x),
                LayerSpec::Dense { .. } => kernels::dense_forward(x, w, b, true, &mut out),
                LayerSpec::Dropout { rate } => match rng.as_mut() {
                    Some(rng) if rate > 0.0 => {
                        let keep = 1.0 - rate as f64;
                        let scale = T::from_f64(1.0 / keep).expect("finite");
                        let mask: Vec<T> = (0..outs.len())
                            .map(|_| {
                                if rng.random_bool(keep) {
                                    scale
                                } else {
                                    T::zero()
                                }
                            })
                            .collect();
                        for ((o, &v), &m) in out.iter_mut().zip(x).zip(&mask) {
                            *o = v * m;
                        }
                        masks[i] = mask;
                    }
                    _ => out.copy_from_slice(x),
                },
                LayerSpec::Softmax { .. } => {
                    let mut z = vec![T::zero(); outs.len()];
                    kernels::dense_forward(x, w, b, false, &mut z);
                    kernels::softmax(&z, &mut out);
                    logits = z;
                }
            }
            acts.push(out);
        }
        Ok(Trace {
            acts,
            logits,
            argmax,
            masks,
        })
    }

    /// Class probabilities with dropout disabled.
    pub fn predict<T: Scalar>(&self, params: &[T], input: &[T]) -> Result<Vec<T>, NnError> {
        let mut t = self.forward(params, input, Mode::Eval)?;
        Ok(t.acts.pop().expect("output"))
    }

    /// Accumulates into `grads` the gradient of a loss whose derivative with
    /// respect to the output logits is `dlogits`.
    pub fn backward<T: Scalar>(
        &self,
        params: &[T],
        trace: &Trace<T>,
        dlogits: &[T],
        grads: &mut [T],
    ) -> Result<(), NnError> {
        if grads.len() != self.total {
            return Err(NnError::ShapeMismatch {
                what: "gradients",
                expected: self.total,
                found: grads.len(),
            });
        }
        let mut g: Vec<T> = dlogits.to_vec();
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let (ins, outs, r) = (self.inputs[i], self.outputs[i], self.layout[i]);
            let x = &trace.acts[i];
            let out = &trace.acts[i + 1];
            let w = &params[r.weights..r.weights + r.weights_len];
            let need_input_grad = i > 0;
            let mut gin = vec![T::zero(); if need_input_grad { ins.len() } else { 0 }];
            let (gw, gb) = grads[r.weights..r.bias + r.bias_len].split_at_mut(r.weights_len);
            match *layer {
                LayerSpec::Conv {
                    kernel, padding, ..
                } => {
                    let geom = ConvGeom::new(ins, outs, kernel, padding);
                    let gin = need_input_grad.then_some(gin.as_mut_slice());
                    kernels::conv_backward(&geom, x, w, out, &g, gw, gb, gin);
                }
                LayerSpec::MaxPool { .. } => {
                    if need_input_grad {
                        kernels::pool_backward(&trace.argmax[i], &g, &mut gin);
                    }
                }
                LayerSpec::Flatten => {
                    if need_input_grad {
                        gin.copy_from_slice(&g);
                    }
                }
                LayerSpec::Dense { .. } => {
                    let gz: Vec<T> = g
                        .iter()
                        .zip(out)
                        .map(|(&gv, &o)| if o > T::zero() { gv } else { T::zero() })
                        .collect();
                    let mut tmp;
                    let gin_ref = if need_input_grad {
                        gin.as_mut_slice()
                    } else {
                        tmp = vec![T::zero(); ins.len()];
                        tmp.as_mut_slice()
                    };
                    kernels::dense_backward(x, w, &gz, gw, gb, gin_ref);
                }
                LayerSpec::Dropout { .. } => {
                    if need_input_grad {
                        let mask = &trace.masks[i];
                        if mask.is_empty() {
                            gin.copy_from_slice(&g);
                        } else {
                            for ((gi, &gv), &m) in gin.iter_mut().zip(&g).zip(mask) {
                                *gi = gv * m;
                            }
                        }
                    }
                }
                LayerSpec::Softmax { .. } => {
                    let mut tmp;
                    let gin_ref = if need_input_grad {
                        gin.as_mut_slice()
                    } else {
                        tmp = vec![T::zero(); ins.len()];
                        tmp.as_mut_slice()
                    };
                    kernels::dense_backward(x, w, &g, gw, gb, gin_ref);
                }
            }
            g = gin;
        }
        Ok(())
    }

    /// Class-weighted mean cross entropy plus `l1 · Σ|w|` over the first
    /// convolution's weights, with its exact gradient.
    ///
    /// The data term is `(1/N) Σᵢ weight[yᵢ] · CEᵢ`. The L1 subgradient at
    /// zero is taken as zero. In [`Mode::Train`] sample `i` draws its dropout
    /// masks from `derive_index(seed, i)`. Per-sample work runs on the
    /// current rayon pool and is summed in sample order, so the result does
    /// not depend on the thread count.
    pub fn loss_and_grads<T: Scalar>(
        &self,
        params: &[T],
        batch: &[Sample<'_, T>],
        class_weights: &[T],
        l1: T,
        mode: Mode,
    ) -> Result<LossOutput<T>, NnError> {
        if batch.is_empty() {
            return Err(NnError::EmptyBatch);
        }
        let classes = self.classes();
        if class_weights.len() != classes {
            return Err(NnError::ShapeMismatch {
                what: "class weights",
                expected: classes,
                found: class_weights.len(),
            });
        }
        if let Some(s) = batch.iter().find(|s| s.label >= classes) {
            return Err(NnError::BadLabel(s.label));
        }
        let inv_n = T::one() / T::from_usize(batch.len()).expect("batch size");

        let per_sample: Vec<(T, Vec<T>, bool)> = batch
            .par_iter()
            .enumerate()
            .map(|(i, s)| {
                let m = match mode {
                    Mode::Eval => Mode::Eval,
                    Mode::Train(seed) => Mode::Train(seed::derive_index(seed, i as u64)),
                };
                let trace = self.forward(params, s.input, m)?;
                let wy = class_weights[s.label];
                let ce = kernels::cross_entropy(&trace.logits, s.label);
                let probs = trace.probabilities();
                let dlogits: Vec<T> = probs
                    .iter()
                    .enumerate()
                    .map(|(c, &p)| {
                        let y = if c == s.label { T::one() } else { T::zero() };
                        wy * inv_n * (p - y)
                    })
                    .collect();
                let mut g = vec![T::zero(); self.total];
                self.backward(params, &trace, &dlogits, &mut g)?;
                let correct = argmax(probs) == s.label;
                Ok((wy * ce, g, correct))
            })
            .collect::<Result<_, NnError>>()?;

        let mut grads = vec![T::zero(); self.total];
        let mut data_loss = T::zero();
        let mut correct = 0;
        for (l, g, c) in per_sample {
            data_loss += l;
            for (a, b) in grads.iter_mut().zip(&g) {
                *a += *b;
            }
            correct += c as usize;
        }
        data_loss = data_loss * inv_n;

        let mut l1_loss = T::zero();
        if l1 > T::zero() {
            if let Some(first) = self.spec.first_conv() {
                let r = self.layout[first];
                for (w, g) in params[r.weights..r.weights + r.weights_len]
                    .iter()
                    .zip(&mut grads[r.weights..r.weights + r.weights_len])
                {
                    l1_loss += w.abs();
                    if *w > T::zero() {
                        *g += l1;
                    } else if *w < T::zero() {
                        *g -= l1;
                    }
                }
                l1_loss = l1_loss * l1;
            }
        }
        Ok(LossOutput {
            loss: data_loss + l1_loss,
            data_loss,
            l1_loss,
            grads,
            correct,
        })
    }
}

/// Index of the largest entry (first on ties).
pub fn argmax<T: Scalar>(v: &[T]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, T::neg_infinity()), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::spec::{build_deeplnino, Padding, PoolEdge};

    fn toy() -> Network {
        Network::new(NetworkSpec {
            name: "toy".into(),
            input: Shape::new(8, 8, 2),
            layers: vec![
                LayerSpec::Conv {
                    kernel: 1,
                    filters: 3,
                    padding: Padding::Valid,
                },
                LayerSpec::Conv {
                    kernel: 3,
                    filters: 4,
                    padding: Padding::Same,
                },
                LayerSpec::MaxPool {
                    window: 3,
                    edge: PoolEdge::Partial,
                },
                LayerSpec::Flatten,
                LayerSpec::Dense { units: 5 },
                LayerSpec::Dropout { rate: 0.5 },
                LayerSpec::Softmax { classes: 2 },
            ],
            l1: 0.01,
        })
        .unwrap()
    }

    fn input(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = seed::rng(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn zero_parameters_give_uniform_output() {
        let net = Network::new(build_deeplnino(Shape::new(135, 101, 6), 2).unwrap()).unwrap();
        let params = vec![0.0f32; net.param_count()];
        let x = vec![1.0f32; net.input_shape().len()];
        assert_eq!(net.predict(&params, &x).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn eval_is_deterministic_and_normalized() {
        let net = toy();
        let p = net.init_params::<f64>(3);
        let x = input(128, 4);
        let a = net.predict(&p, &x).unwrap();
        let b = net.predict(&p, &x).unwrap();
        assert_eq!(a, b);
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(a.iter().all(|&v| v > 0.0 && v < 1.0));
    }

    #[test]
    fn perfect_predictions_have_zero_loss() {
        let net = toy();
        let mut p = vec![0.0f64; net.param_count()];
        let last = *net.layout().last().unwrap();
        p[last.bias] = 1000.0;
        p[last.bias + 1] = -1000.0;
        let x = input(128, 1);
        let batch = [Sample {
            input: &x,
            label: 0,
        }];
        let out = net
            .loss_and_grads(&p, &batch, &[1.0, 1.0], 0.0, Mode::Eval)
            .unwrap();
        assert_eq!(out.loss, 0.0);
        assert!(out.grads.iter().all(|&g| g == 0.0));
        assert_eq!(out.correct, 1);
    }

    #[test]
    fn class_weight_scales_sample_contribution() {
        let net = toy();
        let p = net.init_params::<f64>(5);
        let x0 = input(128, 6);
        let x1 = input(128, 7);
        let batch = [
            Sample {
                input: &x0,
                label: 0,
            },
            Sample {
                input: &x1,
                label: 1,
            },
        ];
        let base = net
            .loss_and_grads(&p, &batch, &[1.0, 1.0], 0.0, Mode::Eval)
            .unwrap();
        let heavy = net
            .loss_and_grads(&p, &batch, &[1.0, 3.0], 0.0, Mode::Eval)
            .unwrap();
        let only0 = net
            .loss_and_grads(&p, &batch[..1], &[1.0, 1.0], 0.0, Mode::Eval)
            .unwrap();
        // contribution of sample 1 = base - only0 / 2
        let c1 = base.data_loss - only0.data_loss / 2.0;
        let c1_heavy = heavy.data_loss - only0.data_loss / 2.0;
        assert!((c1_heavy - 3.0 * c1).abs() < 1e-12);
    }

    #[test]
    fn l1_pushes_first_layer_towards_zero_without_data_signal() {
        let net = toy();
        let p = net.init_params::<f64>(8);
        let zeros = vec![0.0; 128];
        let batch = [Sample {
            input: &zeros,
            label: 1,
        }];
        let out = net
            .loss_and_grads(&p, &batch, &[1.0, 1.0], 0.5, Mode::Eval)
            .unwrap();
        let r = net.layout()[0];
        for (w, g) in p[r.weights..r.weights + r.weights_len]
            .iter()
            .zip(&out.grads[r.weights..r.weights + r.weights_len])
        {
            assert_eq!(*g, 0.5 * w.signum());
        }
    }

    #[test]
    fn rejects_mismatched_shapes() {
        let net = toy();
        let p = net.init_params::<f64>(0);
        assert!(matches!(
            net.predict(&p, &[0.0; 10]),
            Err(NnError::ShapeMismatch { what: "input", .. })
        ));
        assert!(matches!(
            net.predict(&p[1..], &[0.0; 128]),
            Err(NnError::ShapeMismatch {
                what: "parameters",
                ..
            })
        ));
        assert!(matches!(
            net.loss_and_grads::<f64>(&p, &[], &[1.0, 1.0], 0.0, Mode::Eval),
            Err(NnError::EmptyBatch)
        ));
    }

    #[test]
    fn pool_routes_each_gradient_to_one_input() {
        let net = Network::new(NetworkSpec {
            name: "pool".into(),
            input: Shape::new(4, 5, 1),
            layers: vec![
                LayerSpec::MaxPool {
                    window: 2,
                    edge: PoolEdge::Partial,
                },
                LayerSpec::Flatten,
                LayerSpec::Softmax { classes: 2 },
            ],
            l1: 0.0,
        })
        .unwrap();
        let x: Vec<f64> = (0..20).map(|i| ((i * 7) % 20) as f64).collect();
        let p = net.init_params::<f64>(2);
        let trace = net.forward(&p, &x, Mode::Eval).unwrap();
        assert_eq!(trace.argmax[0].len(), 6);
        for (o, &src) in trace.argmax[0].iter().enumerate() {
            assert_eq!(trace.acts[1][o], x[src as usize]);
        }
        // Backward through an identity-like head: each pooled unit's
        // gradient lands on exactly its argmax input.
        let mut gin = vec![0.0; 20];
        let gout: Vec<f64> = (1..=6).map(|v| v as f64).collect();
        kernels::pool_backward(&trace.argmax[0], &gout, &mut gin);
        let nonzero: Vec<usize> = (0..20).filter(|&i| gin[i] != 0.0).collect();
        assert_eq!(nonzero.len(), 6);
        assert_eq!(gin.iter().sum::<f64>(), 21.0);
    }
}
