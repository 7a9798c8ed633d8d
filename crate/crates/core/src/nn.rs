//! Tiny feed-forward networks with hand-written backward passes.
//!
//! Parameters live in one flat vector owned by the caller so optimizers and
//! checkpoints can treat them uniformly. Activations are channel-major
//! (`C x H x W`) flat vectors.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl Shape {
    pub fn new(c: usize, h: usize, w: usize) -> Self {
        Self { c, h, w }
    }

    pub fn flat(n: usize) -> Self {
        Self { c: n, h: 1, w: 1 }
    }

    pub fn len(&self) -> usize {
        self.c * self.h * self.w
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Layer {
    /// Fully connected; the output is reinterpreted as `out` shape.
    Dense { out: Shape },
    /// Square kernel, zero padding `k / 2`.
    Conv { out_channels: usize, kernel: usize, stride: usize },
    /// Nearest-neighbor 2x upsampling.
    Upsample2,
    LeakyRelu(f64),
    Sigmoid,
}

/// A sequential network description.
#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    layers: Vec<Layer>,
    shapes: Vec<Shape>,
    offsets: Vec<usize>,
    param_count: usize,
}

/// Activations recorded by [`Network::forward`]; `acts[0]` is the input.
#[derive(Debug, Clone)]
pub struct Trace {
    pub acts: Vec<Vec<f64>>,
}

impl Trace {
    pub fn output(&self) -> &[f64] {
        self.acts.last().expect("trace holds the input")
    }
}

fn conv_out(size: usize, kernel: usize, stride: usize) -> usize {
    let pad = kernel / 2;
    (size + 2 * pad - kernel) / stride + 1
}

impl Network {
    pub fn new(input: Shape, layers: Vec<Layer>) -> Result<Self> {
        let mut shapes = vec![input];
        let mut offsets = Vec::with_capacity(layers.len());
        let mut count = 0;
        for layer in &layers {
            let s = *shapes.last().unwrap();
            offsets.push(count);
            let next = match *layer {
                Layer::Dense { out } => {
                    count += out.len() * s.len() + out.len();
                    out
                }
                Layer::Conv { out_channels, kernel, stride } => {
                    if kernel == 0 || kernel % 2 == 0 || stride == 0 {
                        return Err(Error::invalid("convolution needs an odd kernel and positive stride"));
                    }
                    count += out_channels * s.c * kernel * kernel + out_channels;
                    Shape::new(out_channels, conv_out(s.h, kernel, stride), conv_out(s.w, kernel, stride))
                }
                Layer::Upsample2 => Shape::new(s.c, 2 * s.h, 2 * s.w),
                Layer::LeakyRelu(_) | Layer::Sigmoid => s,
            };
            if next.is_empty() {
                return Err(Error::invalid("layer produces an empty activation"));
            }
            shapes.push(next);
        }
        Ok(Self {
            layers,
            shapes,
            offsets,
            param_count: count,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn input_shape(&self) -> Shape {
        self.shapes[0]
    }

    pub fn output_shape(&self) -> Shape {
        *self.shapes.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.param_count
    }

    /// He-style normal weights, zero biases.
    pub fn init_params<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let mut p = vec![0.0; self.param_count];
        for (i, layer) in self.layers.iter().enumerate() {
            let s = self.shapes[i];
            let off = self.offsets[i];
            let (fan_in, n_w) = match *layer {
                Layer::Dense { out } => (s.len(), out.len() * s.len()),
                Layer::Conv { out_channels, kernel, .. } => {
                    (s.c * kernel * kernel, out_channels * s.c * kernel * kernel)
                }
                _ => continue,
            };
            let normal = Normal::new(0.0, (2.0 / fan_in as f64).sqrt()).expect("positive std");
            for w in &mut p[off..off + n_w] {
                *w = normal.sample(rng);
            }
        }
        p
    }

    /// Parameter range `(weights, biases)` of layer `i`, if it has any.
    pub fn layer_params(&self, i: usize) -> Option<(std::ops::Range<usize>, std::ops::Range<usize>)> {
        let s = self.shapes[i];
        let off = self.offsets[i];
        let (n_w, n_b) = match self.layers[i] {
            Layer::Dense { out } => (out.len() * s.len(), out.len()),
            Layer::Conv { out_channels, kernel, .. } => (out_channels * s.c * kernel * kernel, out_channels),
            _ => return None,
        };
        Some((off..off + n_w, off + n_w..off + n_w + n_b))
    }

    fn check(&self, params: &[f64], x: &[f64]) -> Result<()> {
        check_dim("network parameters", self.param_count, params.len())?;
        check_dim("network input", self.shapes[0].len(), x.len())
    }

    pub fn forward(&self, params: &[f64], x: &[f64]) -> Result<Trace> {
        self.check(params, x)?;
        let mut acts = Vec::with_capacity(self.layers.len() + 1);
        acts.push(x.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let input = &acts[i];
            let (s, o) = (self.shapes[i], self.shapes[i + 1]);
            let out = match *layer {
                Layer::Dense { .. } => {
                    let (wr, br) = self.layer_params(i).unwrap();
                    let mut y = params[br].to_vec();
                    linear_dense(&params[wr], input, &mut y);
                    y
                }
                Layer::Conv { kernel, stride, .. } => {
                    let (wr, br) = self.layer_params(i).unwrap();
                    let mut y = vec![0.0; o.len()];
                    let plane = o.h * o.w;
                    for (co, b) in params[br].iter().enumerate() {
                        y[co * plane..(co + 1) * plane].fill(*b);
                    }
                    conv_forward(&params[wr], input, &mut y, s, o, kernel, stride);
                    y
                }
                Layer::Upsample2 => upsample(input, s),
                Layer::LeakyRelu(a) => input.iter().map(|&v| if v > 0.0 { v } else { a * v }).collect(),
                Layer::Sigmoid => input.iter().map(|&v| crate::geom::logistic(v)).collect(),
            };
            acts.push(out);
        }
        Ok(Trace { acts })
    }

    /// Reverse pass: accumulates into `d_params` and returns the input cotangent.
    pub fn backward(&self, params: &[f64], trace: &Trace, d_out: &[f64], d_params: &mut [f64]) -> Result<Vec<f64>> {
        check_dim("output cotangent", self.output_shape().len(), d_out.len())?;
        check_dim("parameter gradient", self.param_count, d_params.len())?;
        let mut g = d_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let input = &trace.acts[i];
            let (s, o) = (self.shapes[i], self.shapes[i + 1]);
            g = match self.layers[i] {
                Layer::Dense { .. } => {
                    let (wr, br) = self.layer_params(i).unwrap();
                    for (db, gv) in d_params[br].iter_mut().zip(&g) {
                        *db += gv;
                    }
                    outer_acc(&mut d_params[wr.clone()], &g, input);
                    linear_dense_t(&params[wr], &g, s.len())
                }
                Layer::Conv { kernel, stride, .. } => {
                    let (wr, br) = self.layer_params(i).unwrap();
                    let plane = o.h * o.w;
                    for (co, db) in d_params[br].iter_mut().enumerate() {
                        *db += g[co * plane..(co + 1) * plane].iter().sum::<f64>();
                    }
                    conv_weight_grad(&mut d_params[wr.clone()], input, &g, s, o, kernel, stride);
                    let mut dx = vec![0.0; s.len()];
                    conv_backward_input(&params[wr], &g, &mut dx, s, o, kernel, stride);
                    dx
                }
                Layer::Upsample2 => upsample_t(&g, s),
                Layer::LeakyRelu(a) => input.iter().zip(&g).map(|(&v, &gv)| if v > 0.0 { gv } else { a * gv }).collect(),
                Layer::Sigmoid => trace.acts[i + 1].iter().zip(&g).map(|(&y, &gv)| gv * y * (1.0 - y)).collect(),
            };
        }
        Ok(g)
    }

    fn require_piecewise_linear(&self) -> Result<()> {
        if self.layers.iter().any(|l| matches!(l, Layer::Sigmoid)) {
            return Err(Error::invalid("tangent passes need a piecewise-linear network"));
        }
        Ok(())
    }

    /// Forward-mode pass with input tangent `x_dot` at the point recorded in
    /// `trace`; returns the tangent of every activation (`[0]` is `x_dot`).
    ///
    /// Only piecewise-linear networks are supported.
    pub fn tangent(&self, params: &[f64], trace: &Trace, x_dot: &[f64]) -> Result<Vec<Vec<f64>>> {
        self.require_piecewise_linear()?;
        check_dim("input tangent", self.shapes[0].len(), x_dot.len())?;
        let mut tans = Vec::with_capacity(self.layers.len() + 1);
        tans.push(x_dot.to_vec());
        for (i, layer) in self.layers.iter().enumerate() {
            let t = &tans[i];
            let (s, o) = (self.shapes[i], self.shapes[i + 1]);
            let out = match *layer {
                Layer::Dense { out } => {
                    let (wr, _) = self.layer_params(i).unwrap();
                    let mut y = vec![0.0; out.len()];
                    linear_dense(&params[wr], t, &mut y);
                    y
                }
                Layer::Conv { kernel, stride, .. } => {
                    let (wr, _) = self.layer_params(i).unwrap();
                    let mut y = vec![0.0; o.len()];
                    conv_forward(&params[wr], t, &mut y, s, o, kernel, stride);
                    y
                }
                Layer::Upsample2 => upsample(t, s),
                Layer::LeakyRelu(a) => trace.acts[i].iter().zip(t).map(|(&v, &tv)| if v > 0.0 { tv } else { a * tv }).collect(),
                Layer::Sigmoid => unreachable!(),
            };
            tans.push(out);
        }
        Ok(tans)
    }

    /// Reverse pass through the tangent map `x_dot -> y_dot` with `x_dot`
    /// held fixed: accumulates the parameter gradient of `<d_tan_out, y_dot>`.
    ///
    /// Activation kinks are piecewise constant, so only weights contribute.
    pub fn tangent_backward(
        &self,
        params: &[f64],
        trace: &Trace,
        tangents: &[Vec<f64>],
        d_tan_out: &[f64],
        d_params: &mut [f64],
    ) -> Result<()> {
        self.require_piecewise_linear()?;
        check_dim("tangent cotangent", self.output_shape().len(), d_tan_out.len())?;
        check_dim("parameter gradient", self.param_count, d_params.len())?;
        let mut g = d_tan_out.to_vec();
        for i in (0..self.layers.len()).rev() {
            let t_in = &tangents[i];
            let (s, o) = (self.shapes[i], self.shapes[i + 1]);
            let need_input = i > 0;
            g = match self.layers[i] {
                Layer::Dense { .. } => {
                    let (wr, _) = self.layer_params(i).unwrap();
                    outer_acc(&mut d_params[wr.clone()], &g, t_in);
                    if need_input {
                        linear_dense_t(&params[wr], &g, s.len())
                    } else {
                        Vec::new()
                    }
                }
                Layer::Conv { kernel, stride, .. } => {
                    let (wr, _) = self.layer_params(i).unwrap();
                    conv_weight_grad(&mut d_params[wr.clone()], t_in, &g, s, o, kernel, stride);
                    let mut dx = vec![0.0; if need_input { s.len() } else { 0 }];
                    if need_input {
                        conv_backward_input(&params[wr], &g, &mut dx, s, o, kernel, stride);
                    }
                    dx
                }
                Layer::Upsample2 => upsample_t(&g, s),
                Layer::LeakyRelu(a) => trace.acts[i].iter().zip(&g).map(|(&v, &gv)| if v > 0.0 { gv } else { a * gv }).collect(),
                Layer::Sigmoid => unreachable!(),
            };
        }
        Ok(())
    }
}

/// `y += W x` with `W` row-major `(y.len() x x.len())`.
fn linear_dense(w: &[f64], x: &[f64], y: &mut [f64]) {
    for (row, yv) in w.chunks_exact(x.len()).zip(y.iter_mut()) {
        *yv += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn linear_dense_t(w: &[f64], g: &[f64], n_in: usize) -> Vec<f64> {
    let mut dx = vec![0.0; n_in];
    for (row, gv) in w.chunks_exact(n_in).zip(g) {
        if *gv == 0.0 {
            continue;
        }
        for (d, a) in dx.iter_mut().zip(row) {
            *d += a * gv;
        }
    }
    dx
}

fn outer_acc(dw: &mut [f64], g: &[f64], x: &[f64]) {
    for (row, gv) in dw.chunks_exact_mut(x.len()).zip(g) {
        if *gv == 0.0 {
            continue;
        }
        for (d, a) in row.iter_mut().zip(x) {
            *d += gv * a;
        }
    }
}

/// Valid output range for kernel offset `k`: those `o` with
/// `0 <= o * stride + k - pad < size`.
#[inline]
fn valid_range(out: usize, size: usize, k: usize, pad: usize, stride: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi_num = size as isize - 1 + pad as isize - k as isize;
    let hi = if hi_num < 0 { 0 } else { (hi_num as usize / stride + 1).min(out) };
    (lo.min(hi), hi)
}

/// Unfolds `x` into a `(s.c * k * k) x (o.h * o.w)` row-major patch matrix.
fn im2col(x: &[f64], s: Shape, o: Shape, k: usize, stride: usize) -> Vec<f64> {
    let pad = k / 2;
    let plane = o.h * o.w;
    let mut col = vec![0.0; s.c * k * k * plane];
    for ci in 0..s.c {
        let xi = &x[ci * s.h * s.w..(ci + 1) * s.h * s.w];
        for ky in 0..k {
            let (y0, y1) = valid_range(o.h, s.h, ky, pad, stride);
            for kx in 0..k {
                let (x0, x1) = valid_range(o.w, s.w, kx, pad, stride);
                let row = &mut col[((ci * k + ky) * k + kx) * plane..][..plane];
                for oy in y0..y1 {
                    let iy = oy * stride + ky - pad;
                    let src = &xi[iy * s.w..(iy + 1) * s.w];
                    let dst = &mut row[oy * o.w..(oy + 1) * o.w];
                    for ox in x0..x1 {
                        dst[ox] = src[ox * stride + kx - pad];
                    }
                }
            }
        }
    }
    col
}

/// Adjoint of `im2col`: scatters patch rows back onto `dx`.
fn col2im(col: &[f64], dx: &mut [f64], s: Shape, o: Shape, k: usize, stride: usize) {
    let pad = k / 2;
    let plane = o.h * o.w;
    for ci in 0..s.c {
        let di = &mut dx[ci * s.h * s.w..(ci + 1) * s.h * s.w];
        for ky in 0..k {
            let (y0, y1) = valid_range(o.h, s.h, ky, pad, stride);
            for kx in 0..k {
                let (x0, x1) = valid_range(o.w, s.w, kx, pad, stride);
                let row = &col[((ci * k + ky) * k + kx) * plane..][..plane];
                for oy in y0..y1 {
                    let iy = oy * stride + ky - pad;
                    let src = &row[oy * o.w..(oy + 1) * o.w];
                    let dst = &mut di[iy * s.w..(iy + 1) * s.w];
                    for ox in x0..x1 {
                        dst[ox * stride + kx - pad] += src[ox];
                    }
                }
            }
        }
    }
}

/// `c = alpha * op(a) * op(b) + beta * c` for row-major matrices, where
/// `op(a)` is `m x k` and `op(b)` is `k x n`.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], a_t: bool, b: &[f64], b_t: bool, beta: f64, c: &mut [f64]) {
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: the strides above address exactly the m*k, k*n and m*n
    // elements checked by the assertion.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn is_pointwise(s: Shape, o: Shape, k: usize, stride: usize) -> bool {
    k == 1 && stride == 1 && s.h == o.h && s.w == o.w
}

/// `y += conv(w, x)`.
fn conv_forward(w: &[f64], x: &[f64], y: &mut [f64], s: Shape, o: Shape, k: usize, stride: usize) {
    let kk = s.c * k * k;
    let plane = o.h * o.w;
    if is_pointwise(s, o, k, stride) {
        gemm(o.c, kk, plane, w, false, x, false, 1.0, y);
    } else {
        let col = im2col(x, s, o, k, stride);
        gemm(o.c, kk, plane, w, false, &col, false, 1.0, y);
    }
}

/// `dx += conv^T(w, g)`.
fn conv_backward_input(w: &[f64], g: &[f64], dx: &mut [f64], s: Shape, o: Shape, k: usize, stride: usize) {
    let kk = s.c * k * k;
    let plane = o.h * o.w;
    if is_pointwise(s, o, k, stride) {
        gemm(kk, o.c, plane, w, true, g, false, 1.0, dx);
    } else {
        let mut col = vec![0.0; kk * plane];
        gemm(kk, o.c, plane, w, true, g, false, 0.0, &mut col);
        col2im(&col, dx, s, o, k, stride);
    }
}

/// `dw += g x^T` in patch space.
fn conv_weight_grad(dw: &mut [f64], x: &[f64], g: &[f64], s: Shape, o: Shape, k: usize, stride: usize) {
    let kk = s.c * k * k;
    let plane = o.h * o.w;
    if is_pointwise(s, o, k, stride) {
        gemm(o.c, plane, kk, g, false, x, true, 1.0, dw);
    } else {
        let col = im2col(x, s, o, k, stride);
        gemm(o.c, plane, kk, g, false, &col, true, 1.0, dw);
    }
}

fn upsample(x: &[f64], s: Shape) -> Vec<f64> {
    let (h2, w2) = (2 * s.h, 2 * s.w);
    let mut y = vec![0.0; s.c * h2 * w2];
    for c in 0..s.c {
        for yy in 0..h2 {
            for xx in 0..w2 {
                y[(c * h2 + yy) * w2 + xx] = x[(c * s.h + yy / 2) * s.w + xx / 2];
            }
        }
    }
    y
}

fn upsample_t(g: &[f64], s: Shape) -> Vec<f64> {
    let (h2, w2) = (2 * s.h, 2 * s.w);
    let mut d = vec![0.0; s.len()];
    for c in 0..s.c {
        for yy in 0..h2 {
            for xx in 0..w2 {
                d[(c * s.h + yy / 2) * s.w + xx / 2] += g[(c * h2 + yy) * w2 + xx];
            }
        }
    }
    d
}
