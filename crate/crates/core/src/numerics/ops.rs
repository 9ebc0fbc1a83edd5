//! Layer primitives with hand-written backward passes.
//!
//! Every `*_backward` function takes the forward inputs (or whatever the
//! forward pass cached) plus the upstream gradient and returns gradients for
//! each differentiable input. Convolution uses the cross-correlation
//! convention: `out[o, y, x] = Σ k[o, c, u, v] · in[c, y·s + u − p, x·s + v − p]`.

use super::tensor::Tensor;
use crate::error::{dim_err, Error, Result};

/// Norms at or below this are rejected by [`l2_normalize`].
pub const NORMALIZE_EPS: f64 = 1e-12;

/// Output extent of a strided window sweep.
pub fn sweep_len(input: usize, kernel: usize, stride: usize, padding: usize) -> Result<usize> {
    if stride == 0 {
        return Err(dim_err!("stride must be positive"));
    }
    let padded = input + 2 * padding;
    if kernel == 0 || kernel > padded {
        return Err(dim_err!(
            "window {kernel} does not fit input extent {input} with padding {padding}"
        ));
    }
    Ok((padded - kernel) / stride + 1)
}

/// Range of output positions `o` with `0 ≤ o·stride + offset < in_len`.
fn valid_range(out_len: usize, in_len: usize, stride: usize, offset: isize) -> (usize, usize) {
    let s = stride as isize;
    let lo = if offset >= 0 {
        0
    } else {
        (-offset + s - 1) / s
    };
    let last = in_len as isize - 1 - offset;
    let hi = if last < 0 { 0 } else { last / s + 1 };
    let lo = lo.max(0) as usize;
    let hi = (hi.max(0) as usize).min(out_len);
    (lo, hi.max(lo))
}

fn conv_dims(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<((usize, usize, usize), (usize, usize, usize), usize)> {
    let (cin, h, w) = input.dims3()?;
    let [cout, kcin, kh, kw] = *kernels.shape() else {
        return Err(dim_err!(
            "kernels must be C_out×C_in×K×K, got {:?}",
            kernels.shape()
        ));
    };
    if kcin != cin {
        return Err(dim_err!(
            "input has {cin} channels but kernels expect {kcin}"
        ));
    }
    if kh != kw {
        return Err(dim_err!("kernels must be square, got {kh}×{kw}"));
    }
    let oh = sweep_len(h, kh, stride, padding)?;
    let ow = sweep_len(w, kw, stride, padding)?;
    Ok(((cin, h, w), (cout, oh, ow), kh))
}

pub fn conv2d(input: &Tensor, kernels: &Tensor, stride: usize, padding: usize) -> Result<Tensor> {
    let ((cin, h, w), (cout, oh, ow), k) = conv_dims(input, kernels, stride, padding)?;
    let x = input.data();
    let wts = kernels.data();
    let mut out = vec![0.0; cout * oh * ow];
    for co in 0..cout {
        let out_c = &mut out[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..cin {
            let x_c = &x[ci * h * w..(ci + 1) * h * w];
            for u in 0..k {
                let (oy_lo, oy_hi) = valid_range(oh, h, stride, u as isize - padding as isize);
                for v in 0..k {
                    let wt = wts[((co * cin + ci) * k + u) * k + v];
                    if wt == 0.0 {
                        continue;
                    }
                    let off_x = v as isize - padding as isize;
                    let (ox_lo, ox_hi) = valid_range(ow, w, stride, off_x);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = (oy * stride + u) - padding;
                        let row_in = &x_c[iy * w..(iy + 1) * w];
                        let row_out = &mut out_c[oy * ow + ox_lo..oy * ow + ox_hi];
                        if stride == 1 {
                            let ix0 = (ox_lo as isize + off_x) as usize;
                            let src = &row_in[ix0..ix0 + row_out.len()];
                            for (o, s) in row_out.iter_mut().zip(src) {
                                *o += wt * s;
                            }
                        } else {
                            for (j, o) in row_out.iter_mut().enumerate() {
                                let ix = ((ox_lo + j) * stride) as isize + off_x;
                                *o += wt * row_in[ix as usize];
                            }
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[cout, oh, ow], out)
}

/// Returns `(∂L/∂input, ∂L/∂kernels)`.
pub fn conv2d_backward(
    input: &Tensor,
    kernels: &Tensor,
    stride: usize,
    padding: usize,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let ((cin, h, w), (cout, oh, ow), k) = conv_dims(input, kernels, stride, padding)?;
    if grad_out.len() != cout * oh * ow {
        return Err(dim_err!(
            "upstream gradient has {} values, expected {cout}×{oh}×{ow}",
            grad_out.len()
        ));
    }
    let x = input.data();
    let wts = kernels.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; cin * h * w];
    let mut gw = vec![0.0; wts.len()];
    for co in 0..cout {
        let g_c = &g[co * oh * ow..(co + 1) * oh * ow];
        for ci in 0..cin {
            let x_c = &x[ci * h * w..(ci + 1) * h * w];
            let gx_c = &mut gx[ci * h * w..(ci + 1) * h * w];
            for u in 0..k {
                let (oy_lo, oy_hi) = valid_range(oh, h, stride, u as isize - padding as isize);
                for v in 0..k {
                    let widx = ((co * cin + ci) * k + u) * k + v;
                    let wt = wts[widx];
                    let off_x = v as isize - padding as isize;
                    let (ox_lo, ox_hi) = valid_range(ow, w, stride, off_x);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let mut acc = 0.0;
                    for oy in oy_lo..oy_hi {
                        let iy = (oy * stride + u) - padding;
                        let g_row = &g_c[oy * ow + ox_lo..oy * ow + ox_hi];
                        if stride == 1 {
                            let ix0 = (ox_lo as isize + off_x) as usize;
                            let n = g_row.len();
                            let x_row = &x_c[iy * w + ix0..iy * w + ix0 + n];
                            acc += g_row.iter().zip(x_row).map(|(a, b)| a * b).sum::<f64>();
                            let gx_row = &mut gx_c[iy * w + ix0..iy * w + ix0 + n];
                            for (d, gv) in gx_row.iter_mut().zip(g_row) {
                                *d += wt * gv;
                            }
                        } else {
                            for (j, gv) in g_row.iter().enumerate() {
                                let ix = (((ox_lo + j) * stride) as isize + off_x) as usize;
                                acc += gv * x_c[iy * w + ix];
                                gx_c[iy * w + ix] += wt * gv;
                            }
                        }
                    }
                    gw[widx] += acc;
                }
            }
        }
    }
    Ok((
        Tensor::new(input.shape(), gx)?,
        Tensor::new(kernels.shape(), gw)?,
    ))
}

/// Adds `bias[c]` to every element of channel `c`.
pub fn add_channel_bias(input: &Tensor, bias: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    if bias.len() != c {
        return Err(dim_err!("bias of length {} for {c} channels", bias.len()));
    }
    let mut out = input.data().to_vec();
    for (ch, b) in bias.data().iter().enumerate() {
        out[ch * h * w..(ch + 1) * h * w]
            .iter_mut()
            .for_each(|v| *v += b);
    }
    Tensor::new(input.shape(), out)
}

/// Gradient of [`add_channel_bias`] with respect to the bias.
pub fn channel_bias_backward(grad_out: &Tensor) -> Result<Tensor> {
    let (c, h, w) = grad_out.dims3()?;
    let g = grad_out.data();
    let sums = (0..c)
        .map(|ch| g[ch * h * w..(ch + 1) * h * w].iter().sum())
        .collect();
    Tensor::new(&[c], sums)
}

/// Max pooling over square windows. Also returns, for each output element,
/// the flat input index it was taken from (first maximum in row-major order).
pub fn maxpool2d_with_indices(
    input: &Tensor,
    window: usize,
    stride: usize,
) -> Result<(Tensor, Vec<usize>)> {
    let (c, h, w) = input.dims3()?;
    if window == 0 || window > h || window > w {
        return Err(dim_err!(
            "pool window {window} larger than input extent {h}×{w}"
        ));
    }
    let oh = sweep_len(h, window, stride, 0)?;
    let ow = sweep_len(w, window, stride, 0)?;
    let x = input.data();
    let mut out = Vec::with_capacity(c * oh * ow);
    let mut idx = Vec::with_capacity(c * oh * ow);
    for ch in 0..c {
        let base = ch * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + oy * stride * w + ox * stride;
                for u in 0..window {
                    let row = base + (oy * stride + u) * w + ox * stride;
                    for i in row..row + window {
                        if x[i] > x[best] {
                            best = i;
                        }
                    }
                }
                out.push(x[best]);
                idx.push(best);
            }
        }
    }
    let shape: Vec<usize> = if input.rank() == 2 {
        vec![oh, ow]
    } else {
        vec![c, oh, ow]
    };
    Ok((Tensor::new(&shape, out)?, idx))
}

pub fn maxpool2d(input: &Tensor, window: usize, stride: usize) -> Result<Tensor> {
    maxpool2d_with_indices(input, window, stride).map(|(t, _)| t)
}

pub fn maxpool2d_backward(
    input_shape: &[usize],
    argmax: &[usize],
    grad_out: &Tensor,
) -> Result<Tensor> {
    if argmax.len() != grad_out.len() {
        return Err(dim_err!("argmax and upstream gradient lengths differ"));
    }
    let n: usize = input_shape.iter().product();
    let mut gx = vec![0.0; n];
    for (&i, g) in argmax.iter().zip(grad_out.data()) {
        gx[i] += g;
    }
    Tensor::new(input_shape, gx)
}

/// Per-channel spatial mean of an `n×H×W` stack.
pub fn global_avg_pool(input: &Tensor) -> Result<Tensor> {
    let (c, h, w) = input.dims3()?;
    let x = input.data();
    let hw = (h * w) as f64;
    let means = (0..c)
        .map(|ch| x[ch * h * w..(ch + 1) * h * w].iter().sum::<f64>() / hw)
        .collect();
    Tensor::new(&[c], means)
}

pub fn global_avg_pool_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let probe = Tensor::zeros(input_shape);
    let (c, h, w) = probe.dims3()?;
    if grad_out.len() != c {
        return Err(dim_err!(
            "GAP gradient of length {} for {c} channels",
            grad_out.len()
        ));
    }
    let scale = 1.0 / (h * w) as f64;
    let mut gx = Vec::with_capacity(c * h * w);
    for g in grad_out.data() {
        gx.extend(std::iter::repeat(g * scale).take(h * w));
    }
    Tensor::new(input_shape, gx)
}

/// `W·x + b` for a vector `x`.
pub fn linear(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let [m, n] = *weight.shape() else {
        return Err(dim_err!("weight must be m×n, got {:?}", weight.shape()));
    };
    if x.len() != n {
        return Err(dim_err!(
            "weight is {m}×{n} but input has {} values",
            x.len()
        ));
    }
    if let Some(b) = bias {
        if b.len() != m {
            return Err(dim_err!("bias has {} values, expected {m}", b.len()));
        }
    }
    let xd = x.data();
    let wd = weight.data();
    let out = (0..m)
        .map(|r| {
            let dot: f64 = wd[r * n..(r + 1) * n]
                .iter()
                .zip(xd)
                .map(|(a, b)| a * b)
                .sum();
            dot + bias.map_or(0.0, |b| b.data()[r])
        })
        .collect();
    Tensor::new(&[m], out)
}

/// Returns `(∂L/∂x, ∂L/∂W, ∂L/∂b)`.
pub fn linear_backward(
    x: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
) -> Result<(Tensor, Tensor, Tensor)> {
    let [m, n] = *weight.shape() else {
        return Err(dim_err!("weight must be m×n, got {:?}", weight.shape()));
    };
    if x.len() != n || grad_out.len() != m {
        return Err(dim_err!("linear backward shape mismatch"));
    }
    let xd = x.data();
    let wd = weight.data();
    let g = grad_out.data();
    let mut gx = vec![0.0; n];
    let mut gw = vec![0.0; m * n];
    for r in 0..m {
        let gr = g[r];
        if gr == 0.0 {
            continue;
        }
        let w_row = &wd[r * n..(r + 1) * n];
        for (d, wv) in gx.iter_mut().zip(w_row) {
            *d += gr * wv;
        }
        for (d, xv) in gw[r * n..(r + 1) * n].iter_mut().zip(xd) {
            *d = gr * xv;
        }
    }
    Ok((
        Tensor::new(x.shape(), gx)?,
        Tensor::new(&[m, n], gw)?,
        Tensor::new(&[m], g.to_vec())?,
    ))
}

pub fn relu(x: &Tensor) -> Tensor {
    x.map(|v| v.max(0.0))
}

/// Subgradient 0 at the kink.
pub fn relu_backward(x: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    same_len(x, grad_out)?;
    let g = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&v, &g)| if v > 0.0 { g } else { 0.0 })
        .collect();
    Tensor::new(x.shape(), g)
}

pub fn sigmoid_scalar(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

pub fn sigmoid(x: &Tensor) -> Tensor {
    x.map(sigmoid_scalar)
}

/// Takes the forward *output* `y = sigmoid(x)`.
pub fn sigmoid_backward(y: &Tensor, grad_out: &Tensor) -> Result<Tensor> {
    same_len(y, grad_out)?;
    let g = y
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(&s, &g)| g * s * (1.0 - s))
        .collect();
    Tensor::new(y.shape(), g)
}

/// Scales `x` to unit Euclidean norm; fails on (near-)zero input.
pub fn l2_normalize(x: &Tensor) -> Result<Tensor> {
    let n = x.norm();
    if !n.is_finite() {
        return Err(Error::Numeric("non-finite norm".into()));
    }
    if n <= NORMALIZE_EPS {
        return Err(Error::Degenerate(format!(
            "cannot normalize a vector of norm {n:e}"
        )));
    }
    Ok(x.map(|v| v / n))
}

/// `x / (‖x‖ + eps)`; never fails, used on the training path.
pub fn l2_normalize_eps(x: &Tensor, eps: f64) -> Tensor {
    let n = x.norm() + eps;
    x.map(|v| v / n)
}

/// Gradient of `x / (‖x‖ + eps)`; `eps = 0` gives the plain normalization.
pub fn l2_normalize_backward(x: &Tensor, grad_out: &Tensor, eps: f64) -> Result<Tensor> {
    same_len(x, grad_out)?;
    let norm = x.norm();
    let denom = norm + eps;
    if denom == 0.0 {
        return Ok(Tensor::zeros(x.shape()));
    }
    let xd = x.data();
    let g = grad_out.data();
    let dot: f64 = xd.iter().zip(g).map(|(a, b)| a * b).sum();
    let coef = if norm > 0.0 {
        dot / (norm * denom * denom)
    } else {
        0.0
    };
    let out = xd
        .iter()
        .zip(g)
        .map(|(&xv, &gv)| gv / denom - coef * xv)
        .collect();
    Tensor::new(x.shape(), out)
}

/// Flattens and concatenates; the result is one-dimensional.
pub fn concat(parts: &[&Tensor]) -> Result<Tensor> {
    if parts.is_empty() {
        return Err(dim_err!("concat of zero tensors"));
    }
    let data: Vec<f64> = parts
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .collect();
    let n = data.len();
    Tensor::new(&[n], data)
}

/// Splits a concatenated gradient back into pieces shaped like `shapes`.
pub fn concat_backward(grad_out: &Tensor, shapes: &[Vec<usize>]) -> Result<Vec<Tensor>> {
    let total: usize = shapes.iter().map(|s| s.iter().product::<usize>()).sum();
    if total != grad_out.len() {
        return Err(dim_err!("concat gradient length mismatch"));
    }
    let mut offset = 0;
    shapes
        .iter()
        .map(|s| {
            let n: usize = s.iter().product();
            let piece = grad_out.data()[offset..offset + n].to_vec();
            offset += n;
            Tensor::new(s, piece)
        })
        .collect()
}

fn same_len(a: &Tensor, b: &Tensor) -> Result<()> {
    if a.len() != b.len() {
        return Err(dim_err!(
            "shape mismatch: {:?} vs {:?}",
            a.shape(),
            b.shape()
        ));
    }
    Ok(())
}
