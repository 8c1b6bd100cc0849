//! Independent reference implementations used by the integration tests.

#![allow(dead_code)]

use c2g::nn::{LayerSpec, NetworkSpec, Padding, Shape};

// ---------------------------------------------------------------------------
// Conflict resolution, written directly from the algorithm description with
// no shared code: angles via atan2, neighbour ranking by explicit angular
// distance, free-node search by scanning the grid state.

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fate {
    Kept,
    Shifted,
    Deleted,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub binned: Vec<(usize, usize)>,
    pub node: Vec<Option<(usize, usize)>>,
    pub fate: Vec<Fate>,
}

fn neighbour_angle(k: usize) -> f64 {
    45.0 * k as f64
}

fn neighbour_offset(k: usize) -> (i64, i64) {
    let a = neighbour_angle(k).to_radians();
    (a.cos().round() as i64, a.sin().round() as i64)
}

/// Signed angle from `from` to `to` in degrees, in (-180, 180].
fn signed_diff(to: f64, from: f64) -> f64 {
    let mut d = (to - from) % 360.0;
    if d <= -180.0 {
        d += 360.0;
    }
    if d > 180.0 {
        d -= 360.0;
    }
    d
}

/// Neighbour directions (0 = east, counter-clockwise in 45° steps) in the
/// order an object at offset `(dx, dy)` prefers them.
pub fn oracle_preference(dx: f64, dy: f64) -> Vec<usize> {
    let mut angle = if dx == 0.0 && dy == 0.0 {
        0.0
    } else {
        dy.atan2(dx).to_degrees()
    };
    if angle < 0.0 {
        angle += 360.0;
    }
    let sector = ((angle / 45.0).floor() as usize).min(7);
    let bisector = 45.0 * sector as f64 + 22.5;
    // The side neighbour is the axis direction touching the sector; the
    // in-sector corner lies on the other side of the bisector.
    let side = (0..8)
        .filter(|k| k % 2 == 0)
        .find(|&k| signed_diff(neighbour_angle(k), bisector).abs() < 23.0)
        .unwrap();
    let corner_sign = -signed_diff(neighbour_angle(side), bisector).signum();
    let mut rest: Vec<usize> = (0..8).collect();
    let mut order = Vec::new();
    // side, in-sector corner, corner on the far side of the side neighbour
    order.push(side);
    let in_corner = (0..8)
        .find(|&k| k != side && signed_diff(neighbour_angle(k), bisector).abs() < 23.0)
        .unwrap();
    order.push(in_corner);
    let far_corner = (0..8)
        .find(|&k| {
            let d = signed_diff(neighbour_angle(k), neighbour_angle(side));
            k % 2 == 1 && d.abs() < 46.0 && k != in_corner
        })
        .unwrap();
    order.push(far_corner);
    rest.retain(|k| !order.contains(k));
    rest.sort_by(|&a, &b| {
        let da = signed_diff(neighbour_angle(a), bisector);
        let db = signed_diff(neighbour_angle(b), bisector);
        da.abs().partial_cmp(&db.abs()).unwrap().then_with(|| {
            // ties go to the object's side of the bisector
            let sa = (da.signum() == corner_sign) as u8;
            let sb = (db.signum() == corner_sign) as u8;
            sb.cmp(&sa)
        })
    });
    order.extend(rest);
    order
}

pub fn oracle_priority_shift(coords: &[(f64, f64)], d: f64, kx: usize, ky: usize) -> OracleResult {
    let clamp = |v: f64, k: usize| -> usize {
        let r = (v / d).round();
        if r < 0.0 {
            0
        } else if r as usize >= k {
            k - 1
        } else {
            r as usize
        }
    };
    let binned: Vec<(usize, usize)> = coords
        .iter()
        .map(|&(x, y)| (clamp(x, kx), clamp(y, ky)))
        .collect();
    let mut grid: Vec<Vec<bool>> = vec![vec![false; ky]; kx];
    for &(x, y) in &binned {
        grid[x][y] = true;
    }
    let mut node = vec![None; coords.len()];
    let mut fate = vec![Fate::Kept; coords.len()];
    for gx in 0..kx {
        for gy in 0..ky {
            let members: Vec<usize> = (0..coords.len())
                .filter(|&i| binned[i] == (gx, gy))
                .collect();
            if members.is_empty() {
                continue;
            }
            let dist = |i: usize| {
                let (x, y) = coords[i];
                (x - gx as f64 * d).hypot(y - gy as f64 * d)
            };
            let mut sorted = members.clone();
            sorted.sort_by(|&a, &b| dist(a).partial_cmp(&dist(b)).unwrap().then(a.cmp(&b)));
            node[sorted[0]] = Some((gx, gy));
            for &i in &sorted[1..] {
                let (x, y) = coords[i];
                let pref = oracle_preference(x - gx as f64 * d, y - gy as f64 * d);
                let target = pref.iter().find_map(|&k| {
                    let (ox, oy) = neighbour_offset(k);
                    let (nx, ny) = (gx as i64 + ox, gy as i64 + oy);
                    let inside = nx >= 0 && ny >= 0 && (nx as usize) < kx && (ny as usize) < ky;
                    (inside && !grid[nx as usize][ny as usize])
                        .then_some((nx as usize, ny as usize))
                });
                match target {
                    Some((nx, ny)) => {
                        grid[nx][ny] = true;
                        node[i] = Some((nx, ny));
                        fate[i] = Fate::Shifted;
                    }
                    None => fate[i] = Fate::Deleted,
                }
            }
        }
    }
    OracleResult { binned, node, fate }
}

// ---------------------------------------------------------------------------
// Network forward pass by direct summation over explicitly padded inputs.

pub fn oracle_forward(spec: &NetworkSpec, params: &[f64], input: &[f64]) -> Vec<f64> {
    let mut shape = spec.input;
    let mut x = input.to_vec();
    let mut off = 0;
    let at = |s: Shape, h: usize, w: usize, c: usize| (h * s.w + w) * s.c + c;
    for layer in &spec.layers {
        match *layer {
            LayerSpec::Conv {
                kernel,
                filters,
                padding,
            } => {
                let (before, after) = match padding {
                    Padding::Valid => (0, 0),
                    Padding::Same => ((kernel - 1) / 2, kernel - 1 - (kernel - 1) / 2),
                };
                let padded =
                    Shape::new(shape.h + before + after, shape.w + before + after, shape.c);
                let mut p = vec![0.0; padded.len()];
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        for c in 0..shape.c {
                            p[at(padded, h + before, w + before, c)] = x[at(shape, h, w, c)];
                        }
                    }
                }
                let out = Shape::new(padded.h - kernel + 1, padded.w - kernel + 1, filters);
                let wlen = kernel * kernel * shape.c * filters;
                let weights = &params[off..off + wlen];
                let bias = &params[off + wlen..off + wlen + filters];
                off += wlen + filters;
                let mut y = vec![0.0; out.len()];
                for h in 0..out.h {
                    for w in 0..out.w {
                        for f in 0..filters {
                            let mut s = bias[f];
                            for a in 0..kernel {
                                for b in 0..kernel {
                                    for c in 0..shape.c {
                                        let wi = ((a * kernel + b) * shape.c + c) * filters + f;
                                        s += weights[wi] * p[at(padded, h + a, w + b, c)];
                                    }
                                }
                            }
                            y[at(out, h, w, f)] = s.max(0.0);
                        }
                    }
                }
                x = y;
                shape = out;
            }
            LayerSpec::MaxPool { window, edge } => {
                let n = |v: usize| match edge {
                    c2g::nn::PoolEdge::Drop => v / window,
                    c2g::nn::PoolEdge::Partial => v.div_ceil(window),
                };
                let out = Shape::new(n(shape.h), n(shape.w), shape.c);
                let mut y = vec![f64::NEG_INFINITY; out.len()];
                for h in 0..shape.h {
                    for w in 0..shape.w {
                        let (oh, ow) = (h / window, w / window);
                        if oh >= out.h || ow >= out.w {
                            continue;
                        }
                        for c in 0..shape.c {
                            let o = at(out, oh, ow, c);
                            y[o] = y[o].max(x[at(shape, h, w, c)]);
                        }
                    }
                }
                x = y;
                shape = out;
            }
            LayerSpec::Flatten => shape = Shape::new(1, 1, shape.len()),
            LayerSpec::Dropout { .. } => {}
            LayerSpec::Dense { units } | LayerSpec::Softmax { classes: units } => {
                let n = shape.len();
                let weights = &params[off..off + n * units];
                let bias = &params[off + n * units..off + n * units + units];
                off += n * units + units;
                let mut y: Vec<f64> = (0..units)
                    .map(|j| bias[j] + (0..n).map(|i| x[i] * weights[i * units + j]).sum::<f64>())
                    .collect();
                if matches!(layer, LayerSpec::Softmax { .. }) {
                    let m = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                    let e: Vec<f64> = y.iter().map(|v| (v - m).exp()).collect();
                    let s: f64 = e.iter().sum();
                    y = e.iter().map(|v| v / s).collect();
                } else {
                    y.iter_mut().for_each(|v| *v = v.max(0.0));
                }
                x = y;
                shape = Shape::new(1, 1, units);
            }
        }
    }
    assert_eq!(off, params.len());
    x
}

/// Class-weighted mean cross entropy plus `l1 · Σ|w|` over the first conv
/// weights, from the oracle forward pass.
pub fn oracle_loss(
    spec: &NetworkSpec,
    params: &[f64],
    batch: &[(Vec<f64>, usize)],
    weights: &[f64],
    l1: f64,
) -> f64 {
    let data: f64 = batch
        .iter()
        .map(|(x, y)| -weights[*y] * oracle_forward(spec, params, x)[*y].ln())
        .sum::<f64>()
        / batch.len() as f64;
    let first = match spec.layers[0] {
        LayerSpec::Conv {
            kernel, filters, ..
        } => kernel * kernel * spec.input.c * filters,
        _ => 0,
    };
    data + l1 * params[..first].iter().map(|w| w.abs()).sum::<f64>()
}

/// Relative error used for gradient checks.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Central difference of `f` at `params[i]`.
pub fn central_difference(f: &dyn Fn(&[f64]) -> f64, params: &[f64], i: usize, h: f64) -> f64 {
    let mut p = params.to_vec();
    p[i] = params[i] + h;
    let up = f(&p);
    p[i] = params[i] - h;
    let down = f(&p);
    (up - down) / (2.0 * h)
}

pub fn random_vec(n: usize, seed: u64, lo: f64, hi: f64) -> Vec<f64> {
    use rand::Rng;
    let mut rng = c2g::seed::rng(seed);
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}
