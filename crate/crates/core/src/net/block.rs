use rand::Rng;

use super::EdeBlockConfig;
use crate::daa::fan_in_uniform;
use crate::daa::{Daa, DaaTrace};
use crate::error::{dim_err, Result};
use crate::lgf::LgfLayer;
use crate::numerics::{
    add_channel_bias, channel_bias_backward, conv2d, conv2d_backward, maxpool2d_backward,
    maxpool2d_with_indices, Param, ParamSet, Tensor,
};

/// `η = W2 ∗ pool(W1 ∗ Ṽ + b1) + b2`, with `W1` a 1×1 convolution mixing the
/// direction channels and `W2` a same-size 3×3 convolution.
pub fn shift_invariant_unit(
    v: &Tensor,
    w1: &Tensor,
    b1: &Tensor,
    w2: &Tensor,
    b2: &Tensor,
    cfg: &EdeBlockConfig,
) -> Result<Tensor> {
    let z1 = add_channel_bias(&conv2d(v, w1, 1, 0)?, b1)?;
    let (pooled, _) = maxpool2d_with_indices(&z1, cfg.pool_window, cfg.pool_stride)?;
    add_channel_bias(&conv2d(&pooled, w2, 1, 1)?, b2)
}

#[derive(Clone, Debug)]
pub struct ShiftTrace {
    pub z1: Tensor,
    pub argmax: Vec<usize>,
    pub pooled: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ShiftUnit {
    /// `s×k×1×1`.
    pub w1: Param,
    pub b1: Param,
    /// `s×s×3×3`.
    pub w2: Param,
    pub b2: Param,
    pub pool_window: usize,
    pub pool_stride: usize,
}

impl ShiftUnit {
    pub fn new(cfg: &EdeBlockConfig, rng: &mut impl Rng) -> Self {
        let (s, k) = (cfg.shift_channels, cfg.directions);
        Self {
            w1: Param::new(fan_in_uniform(rng, &[s, k, 1, 1])),
            b1: Param::new(Tensor::zeros(&[s])),
            w2: Param::new(fan_in_uniform(rng, &[s, s, 3, 3])),
            b2: Param::new(Tensor::zeros(&[s])),
            pool_window: cfg.pool_window,
            pool_stride: cfg.pool_stride,
        }
    }

    pub fn forward(&self, v: &Tensor) -> Result<(Tensor, ShiftTrace)> {
        let z1 = add_channel_bias(&conv2d(v, &self.w1.value, 1, 0)?, &self.b1.value)?;
        let (pooled, argmax) = maxpool2d_with_indices(&z1, self.pool_window, self.pool_stride)?;
        let eta = add_channel_bias(&conv2d(&pooled, &self.w2.value, 1, 1)?, &self.b2.value)?;
        Ok((eta, ShiftTrace { z1, argmax, pooled }))
    }

    /// Second half of the unit given the pre-pool map `z1`.
    pub(crate) fn finish(&self, z1: &Tensor) -> Result<Tensor> {
        let (pooled, _) = maxpool2d_with_indices(z1, self.pool_window, self.pool_stride)?;
        add_channel_bias(&conv2d(&pooled, &self.w2.value, 1, 1)?, &self.b2.value)
    }

    pub fn backward(
        &mut self,
        v: &Tensor,
        trace: &ShiftTrace,
        grad_eta: &Tensor,
    ) -> Result<Tensor> {
        let g_b2 = channel_bias_backward(grad_eta)?;
        let (g_pooled, g_w2) = conv2d_backward(&trace.pooled, &self.w2.value, 1, 1, grad_eta)?;
        let g_z1 = maxpool2d_backward(trace.z1.shape(), &trace.argmax, &g_pooled)?;
        let g_b1 = channel_bias_backward(&g_z1)?;
        let (g_v, g_w1) = conv2d_backward(v, &self.w1.value, 1, 0, &g_z1)?;
        self.w1.accumulate(g_w1.data())?;
        self.b1.accumulate(g_b1.data())?;
        self.w2.accumulate(g_w2.data())?;
        self.b2.accumulate(g_b2.data())?;
        Ok(g_v)
    }
}

impl ParamSet for ShiftUnit {
    fn params(&self) -> Vec<(String, &Param)> {
        vec![
            ("shift.w1".into(), &self.w1),
            ("shift.b1".into(), &self.b1),
            ("shift.w2".into(), &self.w2),
            ("shift.b2".into(), &self.b2),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![
            ("shift.w1".into(), &mut self.w1),
            ("shift.b1".into(), &mut self.b1),
            ("shift.w2".into(), &mut self.w2),
            ("shift.b2".into(), &mut self.b2),
        ]
    }
}

#[derive(Clone, Debug)]
pub struct BlockTrace {
    pub v: Tensor,
    pub daa: DaaTrace,
    pub recalibrated: Tensor,
    pub shift: ShiftTrace,
}

/// One kernel scale: Gabor bank, attention and shift-invariant unit.
#[derive(Clone, Debug, PartialEq)]
pub struct EdeBlock {
    pub config: EdeBlockConfig,
    pub lgf: LgfLayer,
    pub daa: Daa,
    pub shift: ShiftUnit,
}

impl EdeBlock {
    pub fn new(
        config: &EdeBlockConfig,
        channels: usize,
        reduction: usize,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config: config.clone(),
            lgf: LgfLayer::new(config.kernel_size, config.directions, channels)?,
            daa: Daa::new(config.directions, reduction, rng),
            shift: ShiftUnit::new(config, rng),
        })
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (c, h, w) = x.dims3()?;
        let k = self.config.kernel_size;
        if c != self.lgf.channels() {
            return Err(dim_err!(
                "block expects {} input channels, got {c}",
                self.lgf.channels()
            ));
        }
        if h < k || w < k {
            return Err(dim_err!("input {h}×{w} is smaller than the {k}×{k} kernel"));
        }
        Ok(())
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, BlockTrace)> {
        self.check_input(x)?;
        let v = self.lgf.forward(x)?;
        let (recalibrated, daa) = self.daa.forward(&v)?;
        let (eta, shift) = self.shift.forward(&recalibrated)?;
        Ok((
            eta,
            BlockTrace {
                v,
                daa,
                recalibrated,
                shift,
            },
        ))
    }

    pub fn backward(&mut self, x: &Tensor, trace: &BlockTrace, grad_eta: &Tensor) -> Result<()> {
        let g_recal = self
            .shift
            .backward(&trace.recalibrated, &trace.shift, grad_eta)?;
        let g_v = self.daa.backward(&trace.v, &trace.daa, &g_recal)?;
        self.lgf.backward(x, &g_v)?;
        Ok(())
    }

    /// Same result as [`forward`](Self::forward) without materializing the
    /// `k` direction responses.
    ///
    /// Everything between the Gabor bank and the pooling is linear given the
    /// gates, so the 1×1 mixing, the gates and the Gabor kernels collapse into
    /// `s` combined kernels. The gates need only the per-direction means,
    /// which follow from box sums of the input. `kernels` must be
    /// `self.lgf.kernels()`.
    pub fn infer(&self, x: &Tensor, kernels: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let (c, h, w) = x.dims3()?;
        let k = self.config.kernel_size;
        let n = self.config.directions;
        let pad = k / 2;
        let kk = k * k;
        let kd = kernels.data();

        // window sums S_c(u, v): sum of the input region seen by tap (u, v)
        let mut sums = vec![0.0; c * kk];
        let stride = w + 1;
        for ch in 0..c {
            let plane = &x.data()[ch * h * w..(ch + 1) * h * w];
            let mut integral = vec![0.0; (h + 1) * stride];
            for r in 0..h {
                let mut row = 0.0;
                for col in 0..w {
                    row += plane[r * w + col];
                    integral[(r + 1) * stride + col + 1] = integral[r * stride + col + 1] + row;
                }
            }
            for u in 0..k {
                let r0 = u.saturating_sub(pad);
                let r1 = (h + u).saturating_sub(pad).min(h);
                for v in 0..k {
                    let c0 = v.saturating_sub(pad);
                    let c1 = (w + v).saturating_sub(pad).min(w);
                    sums[ch * kk + u * k + v] = if r1 > r0 && c1 > c0 {
                        integral[r1 * stride + c1]
                            - integral[r0 * stride + c1]
                            - integral[r1 * stride + c0]
                            + integral[r0 * stride + c0]
                    } else {
                        0.0
                    };
                }
            }
        }
        let area = (h * w) as f64;
        let means: Vec<f64> = (0..n)
            .map(|dir| {
                let f = &kd[dir * c * kk..(dir + 1) * c * kk];
                f.iter().zip(&sums).map(|(a, b)| a * b).sum::<f64>() / area
            })
            .collect();
        let gate = self.daa.gate(&Tensor::new(&[n], means)?)?;

        let s = self.config.shift_channels;
        let w1 = self.shift.w1.data();
        let mut combined = vec![0.0; s * c * kk];
        for out in 0..s {
            let dst = &mut combined[out * c * kk..(out + 1) * c * kk];
            for dir in 0..n {
                let coef = w1[out * n + dir] * (1.0 + gate.data()[dir]);
                for (d, f) in dst.iter_mut().zip(&kd[dir * c * kk..(dir + 1) * c * kk]) {
                    *d += coef * f;
                }
            }
        }
        let combined = Tensor::new(&[s, c, k, k], combined)?;
        let z1 = add_channel_bias(&conv2d(x, &combined, 1, pad)?, &self.shift.b1.value)?;
        self.shift.finish(&z1)
    }
}

impl ParamSet for EdeBlock {
    fn params(&self) -> Vec<(String, &Param)> {
        let mut out = self.lgf.params();
        out.extend(self.daa.params());
        out.extend(self.shift.params());
        out
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        let mut out = self.lgf.params_mut();
        out.extend(self.daa.params_mut());
        out.extend(self.shift.params_mut());
        out
    }
}

/// Direction stack, attention and shift-invariant unit of one block.
pub fn ede_block_forward(x: &Tensor, block: &EdeBlock) -> Result<Tensor> {
    block.forward(x).map(|(eta, _)| eta)
}
