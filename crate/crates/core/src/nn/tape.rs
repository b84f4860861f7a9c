//! Reverse-mode automatic differentiation over a linear tape.
//!
//! Nodes are appended in evaluation order, so walking the tape backwards
//! visits every node once after all of its consumers.

use super::tensor::{matmul, Scalar, Tensor};

pub const NORM_EPS: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Geometry of a valid (unpadded) NHWC convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub k: usize,
    pub stride: usize,
    pub out_h: usize,
    pub out_w: usize,
    pub filters: usize,
}

impl ConvGeom {
    pub fn patch_len(&self) -> usize {
        self.k * self.k * self.c
    }

    pub fn patches(&self) -> usize {
        self.batch * self.out_h * self.out_w
    }
}

pub fn conv_output_size(input: usize, k: usize, stride: usize) -> usize {
    (input - k) / stride + 1
}

/// Batch statistics produced by a training-mode batch norm.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<S> {
    pub mean: Vec<S>,
    pub var: Vec<S>,
    /// Number of samples per channel.
    pub count: usize,
}

enum Op<S> {
    Leaf,
    Param(usize),
    Linear { x: Var, w: Var, b: Var },
    Conv { x: Var, w: Var, b: Var, geom: ConvGeom, cols: Vec<S> },
    Relu { x: Var },
    /// `y = gamma·xhat + beta` with per-channel (last-dim) normalization.
    Norm { x: Var, gamma: Var, beta: Var, xhat: Vec<S>, inv_std: Vec<S>, kind: NormKind },
    Concat { a: Var, b: Var },
    Reshape { x: Var },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum NormKind {
    /// Statistics over all rows of each channel, computed from the batch.
    BatchTrain,
    /// Fixed statistics (running estimates or identity fallback).
    Fixed,
    /// Statistics over the channels of each row.
    Layer,
}

struct Node<S> {
    value: Tensor<S>,
    op: Op<S>,
    requires_grad: bool,
}

pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<S>, op: Op<S>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.nodes[v.0].value
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Constant input; never receives a gradient.
    pub fn input(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf, false)
    }

    /// Trainable parameter `index`; its gradient is returned by `backward`.
    pub fn param(&mut self, index: usize, t: &Tensor<S>) -> Var {
        self.push(t.clone(), Op::Param(index), true)
    }

    /// `y = x·wᵀ + b` over the last dimension; `w` is `out×in`.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        let (n_in, n_out) = (wv.shape[1], wv.shape[0]);
        assert_eq!(xv.last_dim(), n_in, "linear: input width {} vs weight {:?}", xv.last_dim(), wv.shape);
        let rows = xv.rows();
        let mut out = vec![S::zero(); rows * n_out];
        let bv = &self.value(b).data;
        for r in 0..rows {
            out[r * n_out..(r + 1) * n_out].copy_from_slice(bv);
        }
        matmul(&xv.data, false, &wv.data, true, &mut out, rows, n_in, n_out, S::one(), S::one());
        let mut shape = xv.shape.clone();
        *shape.last_mut().unwrap() = n_out;
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        self.push(Tensor::from_vec(&shape, out), Op::Linear { x, w, b }, rg)
    }

    /// Valid NHWC cross-correlation; `w` is `filters×k×k×c`.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Var {
        let (xv, wv) = (self.value(x), self.value(w));
        assert_eq!(xv.shape.len(), 4, "conv2d expects NHWC input, got {:?}", xv.shape);
        assert_eq!(wv.shape.len(), 4, "conv2d expects K×k×k×C filters, got {:?}", wv.shape);
        let (batch, h, wd, c) = (xv.shape[0], xv.shape[1], xv.shape[2], xv.shape[3]);
        let (filters, k) = (wv.shape[0], wv.shape[1]);
        assert_eq!(wv.shape[2], k);
        assert_eq!(wv.shape[3], c, "conv2d: input channels {c} vs filter {:?}", wv.shape);
        assert!(h >= k && wd >= k, "conv2d: input {h}×{wd} smaller than kernel {k}");
        let geom = ConvGeom {
            batch,
            h,
            w: wd,
            c,
            k,
            stride,
            out_h: conv_output_size(h, k, stride),
            out_w: conv_output_size(wd, k, stride),
            filters,
        };
        let cols = im2col(&xv.data, &geom);
        let p = geom.patches();
        let mut out = vec![S::zero(); p * filters];
        let bv = &self.value(b).data;
        for r in 0..p {
            out[r * filters..(r + 1) * filters].copy_from_slice(bv);
        }
        matmul(&cols, false, &wv.data, true, &mut out, p, geom.patch_len(), filters, S::one(), S::one());
        let rg = self.rg(x) || self.rg(w) || self.rg(b);
        let shape = [batch, geom.out_h, geom.out_w, filters];
        self.push(Tensor::from_vec(&shape, out), Op::Conv { x, w, b, geom, cols }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let out = Tensor::from_vec(&xv.shape, xv.data.iter().map(|&v| v.max(S::zero())).collect());
        let rg = self.rg(x);
        self.push(out, Op::Relu { x }, rg)
    }

    /// Per-channel normalization over every row of the batch (last dim is
    /// the channel). Returns the batch statistics for running estimates.
    pub fn batch_norm_train(&mut self, x: Var, gamma: Var, beta: Var) -> (Var, BatchStats<S>) {
        let xv = self.value(x);
        let c = xv.last_dim();
        let n = xv.rows();
        assert!(n >= 2, "batch norm in training mode needs at least 2 samples per channel");
        let mut mean = vec![0.0f64; c];
        for row in xv.data.chunks_exact(c) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v.as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        let mut var = vec![0.0f64; c];
        for row in xv.data.chunks_exact(c) {
            for ((s, v), m) in var.iter_mut().zip(row).zip(&mean) {
                let d = v.as_f64() - m;
                *s += d * d;
            }
        }
        var.iter_mut().for_each(|s| *s /= n as f64);
        let stats = BatchStats {
            mean: mean.iter().map(|&m| S::of_f64(m)).collect(),
            var: var.iter().map(|&v| S::of_f64(v)).collect(),
            count: n,
        };
        let inv: Vec<S> = var.iter().map(|v| S::of_f64(1.0 / (v + NORM_EPS).sqrt())).collect();
        let mean_s = stats.mean.clone();
        let v = self.normalize_channels(x, gamma, beta, &mean_s, &inv, NormKind::BatchTrain);
        (v, stats)
    }

    /// Normalization with fixed per-channel statistics.
    pub fn batch_norm_fixed(&mut self, x: Var, gamma: Var, beta: Var, mean: &[S], var: &[S]) -> Var {
        let inv: Vec<S> = var.iter().map(|v| S::of_f64(1.0 / (v.as_f64() + NORM_EPS).sqrt())).collect();
        self.normalize_channels(x, gamma, beta, mean, &inv, NormKind::Fixed)
    }

    fn normalize_channels(&mut self, x: Var, gamma: Var, beta: Var, mean: &[S], inv: &[S], kind: NormKind) -> Var {
        let xv = self.value(x);
        let c = xv.last_dim();
        let (g, bt) = (&self.value(gamma).data, &self.value(beta).data);
        assert_eq!(g.len(), c, "norm: gamma has {} entries for {c} channels", g.len());
        let mut xhat = vec![S::zero(); xv.len()];
        let mut out = vec![S::zero(); xv.len()];
        for (i, v) in xv.data.iter().enumerate() {
            let ch = i % c;
            let h = (*v - mean[ch]) * inv[ch];
            xhat[i] = h;
            out[i] = g[ch] * h + bt[ch];
        }
        let shape = xv.shape.clone();
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(Tensor::from_vec(&shape, out), Op::Norm { x, gamma, beta, xhat, inv_std: inv.to_vec(), kind }, rg)
    }

    /// Normalization of each row over its last dimension.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Var {
        let xv = self.value(x);
        let d = xv.last_dim();
        let (g, bt) = (&self.value(gamma).data, &self.value(beta).data);
        assert_eq!(g.len(), d, "layer norm: gamma has {} entries for width {d}", g.len());
        let mut xhat = vec![S::zero(); xv.len()];
        let mut out = vec![S::zero(); xv.len()];
        let mut inv_std = Vec::with_capacity(xv.rows());
        for (r, row) in xv.data.chunks_exact(d).enumerate() {
            let mean = row.iter().map(|v| v.as_f64()).sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / d as f64;
            let inv = 1.0 / (var + NORM_EPS).sqrt();
            inv_std.push(S::of_f64(inv));
            for j in 0..d {
                let h = S::of_f64((row[j].as_f64() - mean) * inv);
                xhat[r * d + j] = h;
                out[r * d + j] = g[j] * h + bt[j];
            }
        }
        let shape = xv.shape.clone();
        let rg = self.rg(x) || self.rg(gamma) || self.rg(beta);
        self.push(Tensor::from_vec(&shape, out), Op::Norm { x, gamma, beta, xhat, inv_std, kind: NormKind::Layer }, rg)
    }

    /// Concatenates along the last dimension; leading shapes must agree.
    pub fn concat(&mut self, a: Var, b: Var) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(av.rows(), bv.rows(), "concat: row counts differ ({:?} vs {:?})", av.shape, bv.shape);
        let (na, nb) = (av.last_dim(), bv.last_dim());
        let mut out = Vec::with_capacity(av.len() + bv.len());
        for r in 0..av.rows() {
            out.extend_from_slice(&av.data[r * na..(r + 1) * na]);
            out.extend_from_slice(&bv.data[r * nb..(r + 1) * nb]);
        }
        let mut shape = av.shape.clone();
        *shape.last_mut().unwrap() = na + nb;
        let rg = self.rg(a) || self.rg(b);
        self.push(Tensor::from_vec(&shape, out), Op::Concat { a, b }, rg)
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Var {
        let t = self.value(x).clone().reshaped(shape);
        let rg = self.rg(x);
        self.push(t, Op::Reshape { x }, rg)
    }

    /// Collapses all but the leading dimension.
    pub fn flatten(&mut self, x: Var) -> Var {
        let s = &self.value(x).shape;
        let lead = s[0];
        let rest = s[1..].iter().product::<usize>();
        self.reshape(x, &[lead, rest])
    }

    /// Propagates the given output gradients back through the tape and
    /// returns one gradient per parameter index (zeros if unused).
    pub fn backward(&self, seeds: &[(Var, Tensor<S>)], param_shapes: &[Vec<usize>]) -> Vec<Tensor<S>> {
        let mut grads: Vec<Option<Tensor<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        for (v, g) in seeds {
            assert_eq!(g.shape, self.value(*v).shape, "seed gradient shape mismatch");
            accumulate(&mut grads[v.0], g.data.iter().copied(), &g.shape);
        }
        let mut out: Vec<Tensor<S>> = param_shapes.iter().map(|s| Tensor::zeros(s)).collect();
        for i in (0..self.nodes.len()).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Param(p) => out[*p].add_assign(&g),
                Op::Reshape { x } => {
                    let s = self.value(*x).shape.clone();
                    accumulate(&mut grads[x.0], g.data.into_iter(), &s);
                }
                Op::Relu { x } => {
                    if self.rg(*x) {
                        let xv = self.value(*x);
                        let it = g.data.iter().zip(&xv.data).map(|(&g, &v)| if v > S::zero() { g } else { S::zero() });
                        accumulate(&mut grads[x.0], it, &xv.shape);
                    }
                }
                Op::Concat { a, b } => {
                    let (na, nb) = (self.value(*a).last_dim(), self.value(*b).last_dim());
                    let w = na + nb;
                    if self.rg(*a) {
                        let it = g.data.chunks_exact(w).flat_map(|r| r[..na].iter().copied());
                        let s = self.value(*a).shape.clone();
                        accumulate(&mut grads[a.0], it.collect::<Vec<_>>().into_iter(), &s);
                    }
                    if self.rg(*b) {
                        let it = g.data.chunks_exact(w).flat_map(|r| r[na..].iter().copied());
                        let s = self.value(*b).shape.clone();
                        accumulate(&mut grads[b.0], it.collect::<Vec<_>>().into_iter(), &s);
                    }
                }
                Op::Linear { x, w, b } => {
                    let (xv, wv) = (self.value(*x), self.value(*w));
                    let (n_out, n_in) = (wv.shape[0], wv.shape[1]);
                    let rows = xv.rows();
                    if self.rg(*w) {
                        let mut dw = vec![S::zero(); n_out * n_in];
                        matmul(&g.data, true, &xv.data, false, &mut dw, n_out, rows, n_in, S::one(), S::zero());
                        accumulate(&mut grads[w.0], dw.into_iter(), &wv.shape);
                    }
                    if self.rg(*b) {
                        let db = column_sums(&g.data, n_out);
                        accumulate(&mut grads[b.0], db.into_iter(), &[n_out]);
                    }
                    if self.rg(*x) {
                        let mut dx = vec![S::zero(); rows * n_in];
                        matmul(&g.data, false, &wv.data, false, &mut dx, rows, n_out, n_in, S::one(), S::zero());
                        let s = xv.shape.clone();
                        accumulate(&mut grads[x.0], dx.into_iter(), &s);
                    }
                }
                Op::Conv { x, w, b, geom, cols } => {
                    let wv = self.value(*w);
                    let (p, q, f) = (geom.patches(), geom.patch_len(), geom.filters);
                    if self.rg(*w) {
                        let mut dw = vec![S::zero(); f * q];
                        matmul(&g.data, true, cols, false, &mut dw, f, p, q, S::one(), S::zero());
                        accumulate(&mut grads[w.0], dw.into_iter(), &wv.shape);
                    }
                    if self.rg(*b) {
                        let db = column_sums(&g.data, f);
                        accumulate(&mut grads[b.0], db.into_iter(), &[f]);
                    }
                    if self.rg(*x) {
                        let mut dcols = vec![S::zero(); p * q];
                        matmul(&g.data, false, &wv.data, false, &mut dcols, p, f, q, S::one(), S::zero());
                        let dx = col2im(&dcols, geom);
                        let s = self.value(*x).shape.clone();
                        accumulate(&mut grads[x.0], dx.into_iter(), &s);
                    }
                }
                Op::Norm { x, gamma, beta, xhat, inv_std, kind } => {
                    let gv = &self.value(*gamma).data;
                    let c = gv.len();
                    if self.rg(*gamma) || self.rg(*beta) {
                        let mut dg = vec![S::zero(); c];
                        let mut db = vec![S::zero(); c];
                        for (i, (&gi, &h)) in g.data.iter().zip(xhat).enumerate() {
                            let ch = i % c;
                            dg[ch] = dg[ch] + gi * h;
                            db[ch] = db[ch] + gi;
                        }
                        if self.rg(*gamma) {
                            accumulate(&mut grads[gamma.0], dg.into_iter(), &[c]);
                        }
                        if self.rg(*beta) {
                            accumulate(&mut grads[beta.0], db.into_iter(), &[c]);
                        }
                    }
                    if self.rg(*x) {
                        let dx = norm_input_grad(&g.data, xhat, inv_std, gv, *kind);
                        let s = self.value(*x).shape.clone();
                        accumulate(&mut grads[x.0], dx.into_iter(), &s);
                    }
                }
            }
        }
        out
    }
}

fn accumulate<S: Scalar>(slot: &mut Option<Tensor<S>>, values: impl Iterator<Item = S>, shape: &[usize]) {
    match slot {
        Some(t) => {
            for (a, v) in t.data.iter_mut().zip(values) {
                *a = *a + v;
            }
        }
        None => *slot = Some(Tensor::from_vec(shape, values.collect())),
    }
}

fn column_sums<S: Scalar>(data: &[S], width: usize) -> Vec<S> {
    let mut s = vec![S::zero(); width];
    for row in data.chunks_exact(width) {
        for (a, v) in s.iter_mut().zip(row) {
            *a = *a + *v;
        }
    }
    s
}

fn norm_input_grad<S: Scalar>(g: &[S], xhat: &[S], inv_std: &[S], gamma: &[S], kind: NormKind) -> Vec<S> {
    let c = gamma.len();
    let mut dx = vec![S::zero(); g.len()];
    match kind {
        NormKind::Fixed => {
            for (i, (d, &gi)) in dx.iter_mut().zip(g).enumerate() {
                let ch = i % c;
                *d = gi * gamma[ch] * inv_std[ch];
            }
        }
        NormKind::BatchTrain => {
            let n = S::of_f64((g.len() / c) as f64);
            let mut sum = vec![S::zero(); c];
            let mut sum_h = vec![S::zero(); c];
            for (i, (&gi, &h)) in g.iter().zip(xhat).enumerate() {
                let ch = i % c;
                let dh = gi * gamma[ch];
                sum[ch] = sum[ch] + dh;
                sum_h[ch] = sum_h[ch] + dh * h;
            }
            for (i, d) in dx.iter_mut().enumerate() {
                let ch = i % c;
                let dh = g[i] * gamma[ch];
                *d = inv_std[ch] / n * (n * dh - sum[ch] - xhat[i] * sum_h[ch]);
            }
        }
        NormKind::Layer => {
            let n = S::of_f64(c as f64);
            for (r, ((dr, gr), hr)) in dx.chunks_exact_mut(c).zip(g.chunks_exact(c)).zip(xhat.chunks_exact(c)).enumerate() {
                let mut sum = S::zero();
                let mut sum_h = S::zero();
                for j in 0..c {
                    let dh = gr[j] * gamma[j];
                    sum = sum + dh;
                    sum_h = sum_h + dh * hr[j];
                }
                for j in 0..c {
                    let dh = gr[j] * gamma[j];
                    dr[j] = inv_std[r] / n * (n * dh - sum - hr[j] * sum_h);
                }
            }
        }
    }
    dx
}

/// Patch matrix: one row per output position, columns ordered (kh, kw, c).
pub fn im2col<S: Scalar>(x: &[S], g: &ConvGeom) -> Vec<S> {
    let q = g.patch_len();
    let mut cols = vec![S::zero(); g.patches() * q];
    let row_len = g.k * g.c;
    let mut p = 0;
    for b in 0..g.batch {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let dst = &mut cols[p * q..(p + 1) * q];
                for kh in 0..g.k {
                    let src = ((b * g.h + oh * g.stride + kh) * g.w + ow * g.stride) * g.c;
                    dst[kh * row_len..(kh + 1) * row_len].copy_from_slice(&x[src..src + row_len]);
                }
                p += 1;
            }
        }
    }
    cols
}

/// Adjoint of `im2col`: scatters patch gradients back onto the input.
pub fn col2im<S: Scalar>(cols: &[S], g: &ConvGeom) -> Vec<S> {
    let q = g.patch_len();
    let mut x = vec![S::zero(); g.batch * g.h * g.w * g.c];
    let row_len = g.k * g.c;
    let mut p = 0;
    for b in 0..g.batch {
        for oh in 0..g.out_h {
            for ow in 0..g.out_w {
                let src = &cols[p * q..(p + 1) * q];
                for kh in 0..g.k {
                    let dst = ((b * g.h + oh * g.stride + kh) * g.w + ow * g.stride) * g.c;
                    for (d, s) in x[dst..dst + row_len].iter_mut().zip(&src[kh * row_len..(kh + 1) * row_len]) {
                        *d = *d + *s;
                    }
                }
                p += 1;
            }
        }
    }
    x
}
