//! Forward and backward kernels on height-width-channel buffers.
//!
//! Convolution weights are `[kh][kw][c_in][c_out]`, dense weights
//! `[in][out]`. Zero inputs are skipped in the inner loops; grid images
//! and rectified activations are mostly zero.

use super::spec::{Padding, Shape};
use super::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub input: Shape,
    pub output: Shape,
    pub kernel: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn new(input: Shape, output: Shape, kernel: usize, padding: Padding) -> Self {
        let pad = match padding {
            Padding::Valid => 0,
            Padding::Same => (kernel - 1) / 2,
        };
        Self {
            input,
            output,
            kernel,
            pad,
        }
    }

    /// Input coordinate for output position `o` and kernel tap `k`.
    #[inline]
    fn src(&self, o: usize, k: usize, n: usize) -> Option<usize> {
        let i = (o + k).checked_sub(self.pad)?;
        (i < n).then_some(i)
    }
}

/// Convolution followed by a rectifier.
pub(crate) fn conv_forward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    weights: &[T],
    bias: &[T],
    out: &mut [T],
) {
    let (cin, cout, k) = (g.input.c, g.output.c, g.kernel);
    debug_assert_eq!(x.len(), g.input.len());
    debug_assert_eq!(out.len(), g.output.len());
    for oy in 0..g.output.h {
        for ox in 0..g.output.w {
            let o = (oy * g.output.w + ox) * cout;
            let acc = &mut out[o..o + cout];
            acc.copy_from_slice(bias);
            for ky in 0..k {
                let Some(iy) = g.src(oy, ky, g.input.h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = g.src(ox, kx, g.input.w) else {
                        continue;
                    };
                    let xin = &x[(iy * g.input.w + ix) * cin..][..cin];
                    let wk = &weights[(ky * k + kx) * cin * cout..][..cin * cout];
                    for (ci, &a) in xin.iter().enumerate() {
                        if a == T::zero() {
                            continue;
                        }
                        let wrow = &wk[ci * cout..(ci + 1) * cout];
                        for (s, &w) in acc.iter_mut().zip(wrow) {
                            *s += a * w;
                        }
                    }
                }
            }
            for v in acc.iter_mut() {
                if *v < T::zero() {
                    *v = T::zero();
                }
            }
        }
    }
}

/// Backward through rectifier + convolution. `gout` is the gradient with
/// respect to the rectified output and `out` the rectified output itself.
/// `gin` may be `None` when the input gradient is not needed.
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv_backward<T: Scalar>(
    g: &ConvGeom,
    x: &[T],
    weights: &[T],
    out: &[T],
    gout: &[T],
    gw: &mut [T],
    gb: &mut [T],
    mut gin: Option<&mut [T]>,
) {
    let (cin, cout, k) = (g.input.c, g.output.c, g.kernel);
    let mut gz = vec![T::zero(); cout];
    for oy in 0..g.output.h {
        for ox in 0..g.output.w {
            let o = (oy * g.output.w + ox) * cout;
            let mut any = false;
            for c in 0..cout {
                let v = if out[o + c] > T::zero() {
                    gout[o + c]
                } else {
                    T::zero()
                };
                gz[c] = v;
                any |= v != T::zero();
            }
            if !any {
                continue;
            }
            for (b, &v) in gb.iter_mut().zip(&gz) {
                *b += v;
            }
            for ky in 0..k {
                let Some(iy) = g.src(oy, ky, g.input.h) else {
                    continue;
                };
                for kx in 0..k {
                    let Some(ix) = g.src(ox, kx, g.input.w) else {
                        continue;
                    };
                    let xo = (iy * g.input.w + ix) * cin;
                    let wo = (ky * k + kx) * cin * cout;
                    for ci in 0..cin {
                        let a = x[xo + ci];
                        let wrow = &weights[wo + ci * cout..wo + (ci + 1) * cout];
                        if let Some(gin) = gin.as_deref_mut() {
                            let mut s = T::zero();
                            for (&w, &v) in wrow.iter().zip(&gz) {
                                s += w * v;
                            }
                            gin[xo + ci] += s;
                        }
                        if a != T::zero() {
                            let gwrow = &mut gw[wo + ci * cout..wo + (ci + 1) * cout];
                            for (gwv, &v) in gwrow.iter_mut().zip(&gz) {
                                *gwv += a * v;
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Max pooling with stride equal to the window. Records the flat input
/// index of each window's maximum (first one on ties).
pub(crate) fn pool_forward<T: Scalar>(
    input: Shape,
    output: Shape,
    window: usize,
    x: &[T],
    out: &mut [T],
    argmax: &mut [u32],
) {
    let c = input.c;
    for oy in 0..output.h {
        let y0 = oy * window;
        let y1 = (y0 + window).min(input.h);
        for ox in 0..output.w {
            let x0 = ox * window;
            let x1 = (x0 + window).min(input.w);
            for ch in 0..c {
                let mut best = T::neg_infinity();
                let mut best_i = 0usize;
                for iy in y0..y1 {
                    for ix in x0..x1 {
                        let i = (iy * input.w + ix) * c + ch;
                        if x[i] > best {
                            best = x[i];
                            best_i = i;
                        }
                    }
                }
                let o = (oy * output.w + ox) * c + ch;
                out[o] = best;
                argmax[o] = best_i as u32;
            }
        }
    }
}

pub(crate) fn pool_backward<T: Scalar>(argmax: &[u32], gout: &[T], gin: &mut [T]) {
    for (&i, &g) in argmax.iter().zip(gout) {
        gin[i as usize] += g;
    }
}

/// Affine map `y = Wᵀx + b`, optionally rectified.
pub(crate) fn dense_forward<T: Scalar>(
    x: &[T],
    weights: &[T],
    bias: &[T],
    relu: bool,
    out: &mut [T],
) {
    let m = out.len();
    out.copy_from_slice(bias);
    for (i, &a) in x.iter().enumerate() {
        if a == T::zero() {
            continue;
        }
        for (o, &w) in out.iter_mut().zip(&weights[i * m..(i + 1) * m]) {
            *o += a * w;
        }
    }
    if relu {
        for v in out.iter_mut() {
            if *v < T::zero() {
                *v = T::zero();
            }
        }
    }
}

/// Backward of [`dense_forward`]; `gz` is the gradient with respect to the
/// pre-activation.
pub(crate) fn dense_backward<T: Scalar>(
    x: &[T],
    weights: &[T],
    gz: &[T],
    gw: &mut [T],
    gb: &mut [T],
    gin: &mut [T],
) {
    let m = gz.len();
    for (b, &g) in gb.iter_mut().zip(gz) {
        *b += g;
    }
    for (i, &a) in x.iter().enumerate() {
        let wrow = &weights[i * m..(i + 1) * m];
        let mut s = T::zero();
        for (&w, &g) in wrow.iter().zip(gz) {
            s += w * g;
        }
        gin[i] += s;
        if a != T::zero() {
            for (gwv, &g) in gw[i * m..(i + 1) * m].iter_mut().zip(gz) {
                *gwv += a * g;
            }
        }
    }
}

/// Numerically stable softmax.
pub(crate) fn softmax<T: Scalar>(logits: &[T], out: &mut [T]) {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let mut sum = T::zero();
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o = *o / sum;
    }
}

/// `-log softmax(logits)[class]`, computed from the logits.
pub(crate) fn cross_entropy<T: Scalar>(logits: &[T], class: usize) -> T {
    let max = logits
        .iter()
        .copied()
        .fold(T::neg_infinity(), |a, b| if b > a { b } else { a });
    let lse = logits
        .iter()
        .map(|&z| (z - max).exp())
        .fold(T::zero(), |a, b| a + b)
        .ln()
        + max;
    lse - logits[class]
}
