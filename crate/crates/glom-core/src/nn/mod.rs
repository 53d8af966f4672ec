//! A from-scratch VGG-style convolutional regressor with aux-feature
//! injection: stacked 3x3 conv groups with 2x2 max-pooling, a dense stack,
//! and non-image scalars concatenated into the final linear layer's input.
//! Forward and backward passes are exact reverse-mode pairs; everything runs
//! in f64.

mod checkpoint;
mod tensor;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use tensor::Tensor;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::Stream;

/// One VGG-style group: `convs` stacked 3x3 conv+relu layers with `filters`
/// output channels each, followed by a 2x2 max-pool.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGroup {
    pub filters: usize,
    pub convs: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub input_side: usize,
    pub input_channels: usize,
    pub conv_groups: Vec<ConvGroup>,
    /// Hidden dense widths; the last entry is the penultimate width that the
    /// aux vector is concatenated onto.
    pub dense_widths: Vec<usize>,
    pub aux_dim: usize,
    pub output_dim: usize,
}

impl NetworkConfig {
    /// Desk-scale default: small enough to train on a CPU in minutes.
    pub fn desk() -> Self {
        NetworkConfig {
            input_side: 64,
            input_channels: 3,
            conv_groups: vec![
                ConvGroup { filters: 8, convs: 2 },
                ConvGroup { filters: 16, convs: 2 },
                ConvGroup { filters: 32, convs: 2 },
                ConvGroup { filters: 64, convs: 2 },
            ],
            dense_widths: vec![128, 64],
            aux_dim: 1,
            output_dim: 1,
        }
    }

    /// Full-scale variant for 384 px crops. Not exercised by the test suite.
    pub fn full_scale() -> Self {
        NetworkConfig {
            input_side: 384,
            input_channels: 3,
            conv_groups: vec![
                ConvGroup { filters: 32, convs: 2 },
                ConvGroup { filters: 64, convs: 2 },
                ConvGroup { filters: 128, convs: 3 },
                ConvGroup { filters: 256, convs: 3 },
                ConvGroup { filters: 256, convs: 3 },
            ],
            dense_widths: vec![1024, 256],
            aux_dim: 1,
            output_dim: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_groups.is_empty() || self.dense_widths.is_empty() {
            return Err(Error::Config("need at least one conv group and dense layer".into()));
        }
        if self.output_dim != 1 {
            return Err(Error::Config("output_dim must be 1".into()));
        }
        if self
            .conv_groups
            .iter()
            .any(|g| g.filters == 0 || g.convs == 0)
            || self.dense_widths.iter().any(|&d| d == 0)
        {
            return Err(Error::Config("all layer counts must be >= 1".into()));
        }
        let shrink = 1usize << self.conv_groups.len();
        if self.input_side == 0 || self.input_side % shrink != 0 {
            return Err(Error::Config(format!(
                "input_side {} not divisible by 2^{}",
                self.input_side,
                self.conv_groups.len()
            )));
        }
        Ok(())
    }

    /// Side of the feature maps after all pools.
    pub fn final_side(&self) -> usize {
        self.input_side >> self.conv_groups.len()
    }

    /// Length of the flattened feature vector entering the dense stack.
    pub fn flatten_len(&self) -> usize {
        let last = self.conv_groups.last().expect("validated").filters;
        last * self.final_side() * self.final_side()
    }

    /// Width of the aux-injected penultimate vector.
    pub fn penultimate_width(&self) -> usize {
        *self.dense_widths.last().expect("validated")
    }

    /// Canonical single-line rendering, used for the checkpoint digest.
    pub fn canonical_string(&self) -> String {
        let groups: Vec<String> = self
            .conv_groups
            .iter()
            .map(|g| format!("{}x{}", g.filters, g.convs))
            .collect();
        let dense: Vec<String> = self.dense_widths.iter().map(|d| d.to_string()).collect();
        format!(
            "side={};ch={};groups={};dense={};aux={};out={}",
            self.input_side,
            self.input_channels,
            groups.join(","),
            dense.join(","),
            self.aux_dim,
            self.output_dim
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// [filters, in_channels, 3, 3]
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    /// [out, in]
    pub weights: Tensor,
    pub bias: Vec<f64>,
}

/// All learnable parameters. The same struct carries gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    pub conv: Vec<ConvLayer>,
    pub dense: Vec<DenseLayer>,
    /// Final linear layer, input width = penultimate + aux_dim.
    pub output: DenseLayer,
}

/// Uniform Glorot draws with bound sqrt(6 / (fan_in + fan_out)).
fn glorot_uniform(fan_in: usize, fan_out: usize, count: usize, rng: &mut Stream) -> Vec<f64> {
    let b = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..count).map(|_| rng.uniform(-b, b)).collect()
}

/// Glorot-initialized dense weight matrix [n_out, n_in]. Biases elsewhere
/// start at exactly zero.
pub fn glorot_init(n_in: usize, n_out: usize, rng: &mut Stream) -> Tensor {
    Tensor::from_vec(&[n_out, n_in], glorot_uniform(n_in, n_out, n_in * n_out, rng))
}

impl NetworkParams {
    pub fn init(cfg: &NetworkConfig, rng: &mut Stream) -> Result<Self> {
        cfg.validate()?;
        let mut conv = Vec::new();
        let mut c_in = cfg.input_channels;
        for group in &cfg.conv_groups {
            for _ in 0..group.convs {
                let f = group.filters;
                let weights = Tensor::from_vec(
                    &[f, c_in, 3, 3],
                    glorot_uniform(c_in * 9, f * 9, f * c_in * 9, rng),
                );
                conv.push(ConvLayer {
                    weights,
                    bias: vec![0.0; f],
                });
                c_in = f;
            }
        }
        let mut dense = Vec::new();
        let mut width = cfg.flatten_len();
        for &d in &cfg.dense_widths {
            dense.push(DenseLayer {
                weights: glorot_init(width, d, rng),
                bias: vec![0.0; d],
            });
            width = d;
        }
        let final_in = cfg.penultimate_width() + cfg.aux_dim;
        let output = DenseLayer {
            weights: glorot_init(final_in, cfg.output_dim, rng),
            bias: vec![0.0; cfg.output_dim],
        };
        Ok(NetworkParams {
            conv,
            dense,
            output,
        })
    }

    pub fn zeros_like(&self) -> NetworkParams {
        NetworkParams {
            conv: self
                .conv
                .iter()
                .map(|l| ConvLayer {
                    weights: Tensor::zeros(&l.weights.shape),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            dense: self
                .dense
                .iter()
                .map(|l| DenseLayer {
                    weights: Tensor::zeros(&l.weights.shape),
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
            output: DenseLayer {
                weights: Tensor::zeros(&self.output.weights.shape),
                bias: vec![0.0; self.output.bias.len()],
            },
        }
    }

    /// All parameter buffers in a fixed order (weights then bias per layer,
    /// conv stack, dense stack, output).
    pub fn buffers(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for l in &self.conv {
            out.push(l.weights.data.as_slice());
            out.push(l.bias.as_slice());
        }
        for l in &self.dense {
            out.push(l.weights.data.as_slice());
            out.push(l.bias.as_slice());
        }
        out.push(self.output.weights.data.as_slice());
        out.push(self.output.bias.as_slice());
        out
    }

    pub fn buffers_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for l in &mut self.conv {
            out.push(l.weights.data.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        for l in &mut self.dense {
            out.push(l.weights.data.as_mut_slice());
            out.push(l.bias.as_mut_slice());
        }
        out.push(self.output.weights.data.as_mut_slice());
        out.push(self.output.bias.as_mut_slice());
        out
    }

    pub fn num_params(&self) -> usize {
        self.buffers().iter().map(|b| b.len()).sum()
    }

    /// In-place self += other, buffer by buffer.
    pub fn add_assign(&mut self, other: &NetworkParams) {
        let mut mine = self.buffers_mut();
        let theirs = other.buffers();
        for (a, b) in mine.iter_mut().zip(theirs) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
}

/// Per-feature standardization statistics for the aux vector, fitted on the
/// training fold only.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxScaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl AuxScaling {
    /// Fit mean and population std per feature. `rows` holds one aux vector
    /// per training sample.
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(|r| r.len()).unwrap_or(0);
        if dim == 0 {
            return Ok(AuxScaling {
                mean: Vec::new(),
                std: Vec::new(),
            });
        }
        let n = rows.len() as f64;
        let mut mean = vec![0.0; dim];
        for r in rows {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        if std.iter().any(|&s| s <= 0.0) {
            return Err(Error::Data("constant aux feature: std is zero".into()));
        }
        Ok(AuxScaling { mean, std })
    }

    pub fn apply(&self, raw: &[f64]) -> Vec<f64> {
        raw.iter()
            .zip(&self.mean)
            .zip(&self.std)
            .map(|((v, m), s)| (v - m) / s)
            .collect()
    }
}

// ---------------------------------------------------------------------------
// primitive ops
// ---------------------------------------------------------------------------

fn conv_shapes(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<(usize, usize, usize, usize, usize)> {
    let (n, c, h, w) = match input.shape.as_slice() {
        [n, c, h, w] => (*n, *c, *h, *w),
        [c, h, w] => (1, *c, *h, *w),
        s => return Err(Error::ShapeMismatch(format!("conv input shape {s:?}"))),
    };
    match kernels.shape.as_slice() {
        [f, kc, 3, 3] if *kc == c && bias.len() == *f => Ok((n, c, h, w, *f)),
        s => Err(Error::ShapeMismatch(format!(
            "kernels {s:?} vs {c} input channels, {} bias", bias.len()
        ))),
    }
}

/// 3x3 same-padded cross-correlation plus bias. Accepts NCHW or CHW input.
pub fn conv2d(input: &Tensor, kernels: &Tensor, bias: &[f64]) -> Result<Tensor> {
    let (n, c, h, w, f) = conv_shapes(input, kernels, bias)?;
    let mut out = Tensor::zeros(&[n, f, h, w]);
    let plane = h * w;
    for ni in 0..n {
        let in_base = ni * c * plane;
        for fi in 0..f {
            let o_base = (ni * f + fi) * plane;
            out.data[o_base..o_base + plane].fill(bias[fi]);
            for ci in 0..c {
                let i_base = in_base + ci * plane;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let wgt = kernels.data[((fi * c + ci) * 3 + ky) * 3 + kx];
                        if wgt == 0.0 {
                            continue;
                        }
                        // output row y reads input row y + ky - 1
                        let y_lo = 1usize.saturating_sub(ky);
                        let y_hi = h - (ky.saturating_sub(1).min(h));
                        let x_lo = 1usize.saturating_sub(kx);
                        let x_hi = w - (kx.saturating_sub(1).min(w));
                        for y in y_lo..y_hi {
                            let iy = y + ky - 1;
                            let orow = o_base + y * w;
                            let irow = i_base + iy * w;
                            for x in x_lo..x_hi {
                                out.data[orow + x] += wgt * input.data[irow + x + kx - 1];
                            }
                        }
                    }
                }
            }
        }
    }
    if input.shape.len() == 3 {
        out.shape = vec![f, h, w];
    }
    Ok(out)
}

/// Gradients of conv2d: (d_input, d_kernels, d_bias).
fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    dout: &Tensor,
) -> (Tensor, Tensor, Vec<f64>) {
    let (n, c, h, w) = match input.shape.as_slice() {
        [n, c, h, w] => (*n, *c, *h, *w),
        [c, h, w] => (1, *c, *h, *w),
        _ => unreachable!("checked in forward"),
    };
    let f = kernels.shape[0];
    let plane = h * w;
    let mut d_in = Tensor::zeros(&input.shape);
    let mut d_k = Tensor::zeros(&kernels.shape);
    let mut d_b = vec![0.0; f];
    for ni in 0..n {
        for fi in 0..f {
            let o_base = (ni * f + fi) * plane;
            for v in &dout.data[o_base..o_base + plane] {
                d_b[fi] += v;
            }
            for ci in 0..c {
                let i_base = (ni * c + ci) * plane;
                for ky in 0..3usize {
                    for kx in 0..3usize {
                        let widx = ((fi * c + ci) * 3 + ky) * 3 + kx;
                        let wgt = kernels.data[widx];
                        let y_lo = 1usize.saturating_sub(ky);
                        let y_hi = h - (ky.saturating_sub(1).min(h));
                        let x_lo = 1usize.saturating_sub(kx);
                        let x_hi = w - (kx.saturating_sub(1).min(w));
                        let mut dk_acc = 0.0;
                        for y in y_lo..y_hi {
                            let iy = y + ky - 1;
                            let orow = o_base + y * w;
                            let irow = i_base + iy * w;
                            for x in x_lo..x_hi {
                                let g = dout.data[orow + x];
                                dk_acc += g * input.data[irow + x + kx - 1];
                                d_in.data[irow + x + kx - 1] += wgt * g;
                            }
                        }
                        d_k.data[widx] += dk_acc;
                    }
                }
            }
        }
    }
    (d_in, d_k, d_b)
}

/// Elementwise max(0, x).
pub fn relu(x: &Tensor) -> Tensor {
    Tensor::from_vec(&x.shape, x.data.iter().map(|&v| v.max(0.0)).collect())
}

fn relu_inplace(x: &mut Tensor) {
    for v in &mut x.data {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Masks the gradient by indicator(output > 0); the subgradient at 0 is 0.
fn relu_backward_inplace(grad: &mut [f64], output: &[f64]) {
    for (g, &o) in grad.iter_mut().zip(output) {
        if o <= 0.0 {
            *g = 0.0;
        }
    }
}

/// 2x2 max pool, stride 2. Returns the pooled tensor and the flat argmax
/// index per output cell (ties go to the first in row-major order).
pub fn maxpool2(x: &Tensor) -> Result<(Tensor, Vec<u32>)> {
    let (n, c, h, w) = match x.shape.as_slice() {
        [n, c, h, w] => (*n, *c, *h, *w),
        [c, h, w] => (1, *c, *h, *w),
        s => return Err(Error::ShapeMismatch(format!("pool input shape {s:?}"))),
    };
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::ShapeMismatch(format!("pool needs even dims, got {h}x{w}")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let mut out_shape = x.shape.clone();
    let dims = out_shape.len();
    out_shape[dims - 2] = oh;
    out_shape[dims - 1] = ow;
    let mut out = Tensor::zeros(&out_shape);
    let mut argmax = vec![0u32; n * c * oh * ow];
    for pc in 0..n * c {
        let i_base = pc * h * w;
        let o_base = pc * oh * ow;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best_idx = i_base + (2 * oy) * w + 2 * ox;
                let mut best = x.data[best_idx];
                for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                    let idx = i_base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x.data[idx] > best {
                        best = x.data[idx];
                        best_idx = idx;
                    }
                }
                out.data[o_base + oy * ow + ox] = best;
                argmax[o_base + oy * ow + ox] = best_idx as u32;
            }
        }
    }
    Ok((out, argmax))
}

fn maxpool2_backward(dout: &Tensor, argmax: &[u32], input_shape: &[usize]) -> Tensor {
    let mut d_in = Tensor::zeros(input_shape);
    for (g, &idx) in dout.data.iter().zip(argmax) {
        d_in.data[idx as usize] += g;
    }
    d_in
}

/// y = Wx + b.
pub fn dense(x: &[f64], layer: &DenseLayer) -> Result<Vec<f64>> {
    let [out_w, in_w] = layer.weights.shape.as_slice() else {
        return Err(Error::ShapeMismatch("dense weights must be 2-D".into()));
    };
    if x.len() != *in_w || layer.bias.len() != *out_w {
        return Err(Error::ShapeMismatch(format!(
            "dense {}x{} applied to input of length {}",
            out_w,
            in_w,
            x.len()
        )));
    }
    let mut y = layer.bias.clone();
    for (o, yo) in y.iter_mut().enumerate() {
        let row = &layer.weights.data[o * in_w..(o + 1) * in_w];
        *yo += row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
    }
    Ok(y)
}

/// Mean squared error and its gradient w.r.t. the predictions.
pub fn mse_loss(pred: &[f64], target: &[f64]) -> Result<(f64, Vec<f64>)> {
    if pred.is_empty() || pred.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "mse over {} predictions vs {} targets",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() as f64;
    let mut loss = 0.0;
    let grad: Vec<f64> = pred
        .iter()
        .zip(target)
        .map(|(p, t)| {
            let d = p - t;
            loss += d * d;
            2.0 * d / n
        })
        .collect();
    Ok((loss / n, grad))
}

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

/// Intermediates retained by the forward pass for exact backpropagation.
#[derive(Debug, Clone)]
pub struct Cache {
    conv_inputs: Vec<Tensor>,
    conv_outputs: Vec<Tensor>, // post-relu
    pool_argmax: Vec<Vec<u32>>,
    pool_input_shapes: Vec<Vec<usize>>,
    dense_inputs: Vec<Vec<f64>>,
    dense_outputs: Vec<Vec<f64>>, // post-relu
    final_input: Vec<f64>,        // penultimate ++ aux
}

/// Single-sample forward pass. `image` is a [C, S, S] tensor scaled to
/// [0, 1]; `aux` is already standardized. Returns the raw prediction (in
/// scaled target units) and the cache for [`backward_sample`].
pub fn forward_sample(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    image: &Tensor,
    aux: &[f64],
) -> Result<(f64, Cache)> {
    if image.shape != [cfg.input_channels, cfg.input_side, cfg.input_side] {
        return Err(Error::ShapeMismatch(format!(
            "image shape {:?}, expected [{}, {}, {}]",
            image.shape, cfg.input_channels, cfg.input_side, cfg.input_side
        )));
    }
    if aux.len() != cfg.aux_dim {
        return Err(Error::ShapeMismatch(format!(
            "aux length {} != aux_dim {}",
            aux.len(),
            cfg.aux_dim
        )));
    }
    let mut cache = Cache {
        conv_inputs: Vec::new(),
        conv_outputs: Vec::new(),
        pool_argmax: Vec::new(),
        pool_input_shapes: Vec::new(),
        dense_inputs: Vec::new(),
        dense_outputs: Vec::new(),
        final_input: Vec::new(),
    };
    let mut act = image.clone();
    let mut conv_idx = 0;
    for group in &cfg.conv_groups {
        for _ in 0..group.convs {
            let layer = &params.conv[conv_idx];
            let mut next = conv2d(&act, &layer.weights, &layer.bias)?;
            relu_inplace(&mut next);
            cache.conv_inputs.push(act);
            cache.conv_outputs.push(next.clone());
            act = next;
            conv_idx += 1;
        }
        cache.pool_input_shapes.push(act.shape.clone());
        let (pooled, argmax) = maxpool2(&act)?;
        cache.pool_argmax.push(argmax);
        act = pooled;
    }

    let mut vec = act.data;
    for layer in &params.dense {
        cache.dense_inputs.push(vec.clone());
        let mut y = dense(&vec, layer)?;
        for v in &mut y {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        cache.dense_outputs.push(y.clone());
        vec = y;
    }
    vec.extend_from_slice(aux);
    cache.final_input = vec.clone();
    let pred = dense(&vec, &params.output)?[0];
    if !pred.is_finite() {
        return Err(Error::NonFinite("network prediction".into()));
    }
    Ok((pred, cache))
}

/// Exact gradients of `d_pred * prediction` w.r.t. every parameter.
/// Gradients flow into both the image path and the output layer's aux
/// columns, never into the aux values themselves.
pub fn backward_sample(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    cache: &Cache,
    d_pred: f64,
) -> Result<NetworkParams> {
    if cache.conv_inputs.len() != params.conv.len()
        || cache.dense_inputs.len() != params.dense.len()
    {
        return Err(Error::ShapeMismatch("cache does not match parameters".into()));
    }
    let mut grads = params.zeros_like();

    // final linear layer
    let final_in = &cache.final_input;
    for (gw, x) in grads.output.weights.data.iter_mut().zip(final_in) {
        *gw = d_pred * x;
    }
    grads.output.bias[0] = d_pred;
    let d_width = cfg.penultimate_width();
    let mut dvec: Vec<f64> = params.output.weights.data[..d_width]
        .iter()
        .map(|w| w * d_pred)
        .collect();

    // dense stack, reversed
    for i in (0..params.dense.len()).rev() {
        relu_backward_inplace(&mut dvec, &cache.dense_outputs[i]);
        let layer = &params.dense[i];
        let in_w = layer.weights.shape[1];
        let input = &cache.dense_inputs[i];
        let g = &mut grads.dense[i];
        for (o, &d) in dvec.iter().enumerate() {
            g.bias[o] = d;
            let row = &mut g.weights.data[o * in_w..(o + 1) * in_w];
            for (rw, x) in row.iter_mut().zip(input) {
                *rw = d * x;
            }
        }
        let mut dx = vec![0.0; in_w];
        for (o, &d) in dvec.iter().enumerate() {
            let row = &layer.weights.data[o * in_w..(o + 1) * in_w];
            for (xg, w) in dx.iter_mut().zip(row) {
                *xg += w * d;
            }
        }
        dvec = dx;
    }

    // back through the conv groups
    let side = cfg.final_side();
    let last_filters = cfg.conv_groups.last().expect("validated").filters;
    let mut dact = Tensor::from_vec(&[last_filters, side, side], dvec);
    let mut conv_idx = params.conv.len();
    for (g_idx, group) in cfg.conv_groups.iter().enumerate().rev() {
        dact = maxpool2_backward(
            &dact,
            &cache.pool_argmax[g_idx],
            &cache.pool_input_shapes[g_idx],
        );
        for _ in 0..group.convs {
            conv_idx -= 1;
            relu_backward_inplace(&mut dact.data, &cache.conv_outputs[conv_idx].data);
            let layer = &params.conv[conv_idx];
            let (d_in, d_k, d_b) =
                conv2d_backward(&cache.conv_inputs[conv_idx], &layer.weights, &dact);
            grads.conv[conv_idx].weights = d_k;
            grads.conv[conv_idx].bias = d_b;
            dact = d_in;
        }
    }
    Ok(grads)
}

/// Batch forward: per-sample passes run in parallel; outputs keep the input
/// order.
pub fn forward_batch(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    images: &[Tensor],
    aux: &[Vec<f64>],
) -> Result<(Vec<f64>, Vec<Cache>)> {
    if images.len() != aux.len() {
        return Err(Error::ShapeMismatch("images vs aux batch length".into()));
    }
    let results: Result<Vec<(f64, Cache)>> = images
        .par_iter()
        .zip(aux.par_iter())
        .map(|(img, a)| forward_sample(cfg, params, img, a))
        .collect();
    let mut preds = Vec::with_capacity(images.len());
    let mut caches = Vec::with_capacity(images.len());
    for (p, c) in results? {
        preds.push(p);
        caches.push(c);
    }
    Ok((preds, caches))
}

/// Batch backward: per-sample gradients computed in parallel, then summed
/// in sample order so the reduction is reproducible.
pub fn backward_batch(
    cfg: &NetworkConfig,
    params: &NetworkParams,
    caches: &[Cache],
    loss_grad: &[f64],
) -> Result<NetworkParams> {
    if caches.is_empty() || caches.len() != loss_grad.len() {
        return Err(Error::ShapeMismatch("caches vs loss_grad length".into()));
    }
    let per_sample: Result<Vec<NetworkParams>> = caches
        .par_iter()
        .zip(loss_grad.par_iter())
        .map(|(cache, &d)| backward_sample(cfg, params, cache, d))
        .collect();
    let mut iter = per_sample?.into_iter();
    let mut total = iter.next().expect("non-empty");
    for g in iter {
        total.add_assign(&g);
    }
    Ok(total)
}

/// Convert an 8-bit interleaved RGB image to a [C, S, S] tensor in [0, 1].
pub fn image_to_tensor(img: &crate::raster::Image) -> Tensor {
    let (w, h, c) = (img.width, img.height, img.channels);
    let mut data = vec![0.0; c * h * w];
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                data[ch * h * w + y * w + x] = img.sample(x, y, ch) as f64 / 255.0;
            }
        }
    }
    Tensor::from_vec(&[c, h, w], data)
}
