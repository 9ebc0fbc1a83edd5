//! The multi-scale descriptor network.
//!
//! Each block filters the input window with a Gabor bank of one kernel
//! extent, recalibrates the direction responses and compresses them with a
//! conv/pool/conv unit. The block outputs are concatenated and projected to
//! a ReLU'd, L2-normalized descriptor.

mod block;
mod encode;

use std::hash::{DefaultHasher, Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use block::{
    ede_block_forward, shift_invariant_unit, BlockTrace, EdeBlock, ShiftTrace, ShiftUnit,
};
pub use encode::{encode_energy_profile, encode_sequence, window_count, window_pose};

use crate::daa::{fan_in_uniform, DEFAULT_REDUCTION};
use crate::error::{dim_err, Error, Result};
use crate::numerics::{
    concat, concat_backward, l2_normalize, l2_normalize_backward, l2_normalize_eps, linear,
    linear_backward, relu, relu_backward, sweep_len, Param, ParamSet, Tensor,
};

/// Added to the descriptor norm on the training path.
pub const TRAIN_NORM_EPS: f64 = 1e-8;

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdeBlockConfig {
    pub kernel_size: usize,
    pub directions: usize,
    pub shift_channels: usize,
    pub pool_window: usize,
    pub pool_stride: usize,
}

impl EdeBlockConfig {
    /// Four shift channels; 4×4 pooling for the largest kernels, 2×2
    /// otherwise.
    pub fn with_defaults(kernel_size: usize, directions: usize) -> Self {
        let pool = if kernel_size >= 35 { 4 } else { 2 };
        Self {
            kernel_size,
            directions,
            shift_channels: 4,
            pool_window: pool,
            pool_stride: pool,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size % 2 == 0 {
            return Err(Error::Config(format!(
                "kernel size {} must be odd",
                self.kernel_size
            )));
        }
        if self.directions < 2 {
            return Err(Error::Config(format!(
                "need at least 2 directions, got {}",
                self.directions
            )));
        }
        if self.shift_channels == 0 || self.pool_window == 0 || self.pool_stride == 0 {
            return Err(Error::Config(
                "shift channels and pooling geometry must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Shape of the block output for an `h×w` input.
    pub fn output_shape(&self, h: usize, w: usize) -> Result<[usize; 3]> {
        if h < self.kernel_size || w < self.kernel_size {
            return Err(dim_err!(
                "input {h}×{w} is smaller than the {k}×{k} kernel",
                k = self.kernel_size
            ));
        }
        Ok([
            self.shift_channels,
            sweep_len(h, self.pool_window, self.pool_stride, 0)?,
            sweep_len(w, self.pool_window, self.pool_stride, 0)?,
        ])
    }
}

#[cfg_attr(feature = "schema", derive(schemars::JsonSchema))]
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetConfig {
    pub scales: Vec<EdeBlockConfig>,
    pub descriptor_dim: usize,
    pub reduction: usize,
    /// Radar channels of the input.
    pub channels: usize,
    pub depth_bins: usize,
    /// Frames per input window.
    pub window: usize,
}

impl NetConfig {
    /// Kernel extents 35, 11 and 5 with 64 directions, 400-dimensional
    /// output, 100-frame windows.
    pub fn standard(depth_bins: usize, channels: usize) -> Self {
        Self::with_scales(&[35, 11, 5], 64, 400, depth_bins, channels, 100)
    }

    /// The four-scale variant (35, 23, 11, 5).
    pub fn four_scale(depth_bins: usize, channels: usize) -> Self {
        Self::with_scales(&[35, 23, 11, 5], 64, 400, depth_bins, channels, 100)
    }

    /// Smallest useful network, for gradient checks and fast tests.
    pub fn tiny() -> Self {
        let mut cfg = Self::with_scales(&[5], 4, 16, 16, 1, 8);
        cfg.scales[0].shift_channels = 2;
        cfg.reduction = 2;
        cfg
    }

    pub fn with_scales(
        kernel_sizes: &[usize],
        directions: usize,
        descriptor_dim: usize,
        depth_bins: usize,
        channels: usize,
        window: usize,
    ) -> Self {
        Self {
            scales: kernel_sizes
                .iter()
                .map(|&k| EdeBlockConfig::with_defaults(k, directions))
                .collect(),
            descriptor_dim,
            reduction: DEFAULT_REDUCTION,
            channels,
            depth_bins,
            window,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.scales.is_empty() {
            return Err(Error::Config("at least one scale is required".into()));
        }
        if self.descriptor_dim == 0 || self.reduction == 0 || self.channels == 0 {
            return Err(Error::Config(
                "descriptor_dim, reduction and channels must be positive".into(),
            ));
        }
        for s in &self.scales {
            s.validate()?;
            s.output_shape(self.depth_bins, self.window)
                .map_err(|e| Error::Config(format!("scale K={}: {e}", s.kernel_size)))?;
        }
        Ok(())
    }

    /// Input tensor shape `C×D×window`.
    pub fn input_shape(&self) -> [usize; 3] {
        [self.channels, self.depth_bins, self.window]
    }

    /// Length of the concatenated block outputs.
    pub fn concat_len(&self) -> Result<usize> {
        self.scales
            .iter()
            .map(|s| {
                s.output_shape(self.depth_bins, self.window)
                    .map(|sh| sh.iter().product::<usize>())
            })
            .sum()
    }
}

/// Unit-norm descriptor.
#[derive(Clone, Debug, PartialEq)]
pub struct Descriptor(Vec<f64>);

impl Descriptor {
    /// Wraps values that are already unit norm (within `1e-5`).
    pub fn new(values: Vec<f64>) -> Result<Self> {
        let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
        if values.is_empty() || !((norm - 1.0).abs() <= 1e-5) {
            return Err(Error::Degenerate(format!(
                "descriptor norm {norm} is not 1"
            )));
        }
        Ok(Self(values))
    }

    pub fn normalized(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        let t = l2_normalize(&Tensor::new(&[n], values)?)?;
        Ok(Self(t.into_data()))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    pub fn distance(&self, other: &Descriptor) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }

    pub fn cosine(&self, other: &Descriptor) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }
}

/// `normalize(relu(W·concat(etas) + b))`; fails on an all-zero activation.
pub fn aggregate(etas: &[&Tensor], w: &Tensor, b: &Tensor) -> Result<Descriptor> {
    let cat = concat(etas)?;
    if w.shape().len() != 2 || w.shape()[1] != cat.len() {
        return Err(dim_err!(
            "aggregation weight {:?} does not accept {} inputs",
            w.shape(),
            cat.len()
        ));
    }
    let act = relu(&linear(&cat, w, Some(b))?);
    Ok(Descriptor(l2_normalize(&act)?.into_data()))
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct NetTrace {
    pub blocks: Vec<BlockTrace>,
    pub eta_shapes: Vec<Vec<usize>>,
    pub cat: Tensor,
    pub pre: Tensor,
    pub act: Tensor,
}

impl NetTrace {
    /// Fingerprint of every piecewise-linear branch taken (ReLU masks,
    /// pooling winners). Finite differences are only valid when it does not
    /// change.
    pub fn branch(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for b in &self.blocks {
            for &z in b.daa.pre_hidden.data() {
                (z > 0.0).hash(&mut h);
            }
            b.shift.argmax.hash(&mut h);
        }
        for &z in self.pre.data() {
            (z > 0.0).hash(&mut h);
        }
        h.finish()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdeNet {
    pub config: NetConfig,
    pub blocks: Vec<EdeBlock>,
    /// `d×n_total`.
    pub agg_w: Param,
    pub agg_b: Param,
}

impl EdeNet {
    /// Seeded initialization; all parameters are representable as `f32`.
    pub fn new(config: &NetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let blocks = config
            .scales
            .iter()
            .map(|s| EdeBlock::new(s, config.channels, config.reduction, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let n = config.concat_len()?;
        Ok(Self {
            config: config.clone(),
            blocks,
            agg_w: Param::new(fan_in_uniform(&mut rng, &[config.descriptor_dim, n])),
            agg_b: Param::new(Tensor::zeros(&[config.descriptor_dim])),
        })
    }

    pub fn check_input(&self, x: &Tensor) -> Result<()> {
        let expected = self.config.input_shape();
        if x.shape() != expected {
            return Err(dim_err!(
                "input window has shape {:?} but the network expects {:?} (C×D×window)",
                x.shape(),
                expected
            ));
        }
        Ok(())
    }

    /// Training forward pass: layered, with `ε` added to the output norm.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, NetTrace)> {
        self.check_input(x)?;
        let mut etas = Vec::with_capacity(self.blocks.len());
        let mut traces = Vec::with_capacity(self.blocks.len());
        for b in &self.blocks {
            let (eta, t) = b.forward(x)?;
            etas.push(eta);
            traces.push(t);
        }
        let cat = concat(&etas.iter().collect::<Vec<_>>())?;
        let pre = linear(&cat, &self.agg_w.value, Some(&self.agg_b.value))?;
        let act = relu(&pre);
        let out = l2_normalize_eps(&act, TRAIN_NORM_EPS);
        Ok((
            out,
            NetTrace {
                blocks: traces,
                eta_shapes: etas.iter().map(|e| e.shape().to_vec()).collect(),
                cat,
                pre,
                act,
            },
        ))
    }

    /// Accumulates parameter gradients for `∂L/∂output = grad_out`.
    pub fn backward(&mut self, x: &Tensor, trace: &NetTrace, grad_out: &Tensor) -> Result<()> {
        let g_act = l2_normalize_backward(&trace.act, grad_out, TRAIN_NORM_EPS)?;
        let g_pre = relu_backward(&trace.pre, &g_act)?;
        let (g_cat, g_w, g_b) = linear_backward(&trace.cat, &self.agg_w.value, &g_pre)?;
        self.agg_w.accumulate(g_w.data())?;
        self.agg_b.accumulate(g_b.data())?;
        let pieces = concat_backward(&g_cat, &trace.eta_shapes)?;
        for ((b, t), g) in self.blocks.iter_mut().zip(&trace.blocks).zip(&pieces) {
            b.backward(x, t, g)?;
        }
        Ok(())
    }

    /// Inference through the layered path; mainly a reference for
    /// [`Encoder`].
    pub fn encode_layered(&self, x: &Tensor) -> Result<Descriptor> {
        self.check_input(x)?;
        let etas = self
            .blocks
            .iter()
            .map(|b| ede_block_forward(x, b))
            .collect::<Result<Vec<_>>>()?;
        aggregate(
            &etas.iter().collect::<Vec<_>>(),
            &self.agg_w.value,
            &self.agg_b.value,
        )
    }

    /// Inference helper with the Gabor kernels synthesized once.
    pub fn encoder(&self) -> Result<Encoder<'_>> {
        let kernels = self
            .blocks
            .iter()
            .map(|b| b.lgf.kernels())
            .collect::<Result<Vec<_>>>()?;
        Ok(Encoder { net: self, kernels })
    }

    pub fn encode(&self, x: &Tensor) -> Result<Descriptor> {
        self.encoder()?.encode(x)
    }
}

impl ParamSet for EdeNet {
    fn params(&self) -> Vec<(String, &Param)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter().enumerate() {
            out.extend(
                b.params()
                    .into_iter()
                    .map(|(n, p)| (format!("block{i}.{n}"), p)),
            );
        }
        out.push(("agg.w".into(), &self.agg_w));
        out.push(("agg.b".into(), &self.agg_b));
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = Vec::new();
        for (i, b) in self.blocks.iter_mut().enumerate() {
            out.extend(
                b.params_mut()
                    .into_iter()
                    .map(|(n, p)| (format!("block{i}.{n}"), p)),
            );
        }
        out.push(("agg.w".into(), &mut self.agg_w));
        out.push(("agg.b".into(), &mut self.agg_b));
        out
    }
}

/// Parameter group of a tensor name, without the block prefix
/// (`block1.gabor.sigma` → `gabor.sigma`).
pub fn param_group(name: &str) -> &str {
    match name.split_once('.') {
        Some((head, rest)) if head.starts_with("block") => rest,
        _ => name,
    }
}

/// Read-only inference over a fixed network.
pub struct Encoder<'a> {
    net: &'a EdeNet,
    kernels: Vec<Tensor>,
}

impl Encoder<'_> {
    pub fn net(&self) -> &EdeNet {
        self.net
    }

    pub fn encode(&self, x: &Tensor) -> Result<Descriptor> {
        self.net.check_input(x)?;
        let etas = self
            .net
            .blocks
            .iter()
            .zip(&self.kernels)
            .map(|(b, k)| b.infer(x, k))
            .collect::<Result<Vec<_>>>()?;
        aggregate(
            &etas.iter().collect::<Vec<_>>(),
            &self.net.agg_w.value,
            &self.net.agg_b.value,
        )
    }
}
