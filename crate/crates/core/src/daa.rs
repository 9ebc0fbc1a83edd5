//! Direction-aware attention.
//!
//! The direction stack `V` is squeezed to one mean per direction, gated by a
//! bias-free bottleneck `T = sigmoid(F2·relu(F1·d))`, and recalibrated with a
//! residual path: `Ṽ_n = T_n·V_n + V_n`. Every direction keeps at least unit
//! gain, so the gate can emphasize several directions at once.

use rand::Rng;

use crate::error::{dim_err, Result};
use crate::numerics::{
    global_avg_pool, global_avg_pool_backward, linear, linear_backward, relu, relu_backward,
    sigmoid, sigmoid_backward, Param, ParamSet, Tensor,
};

pub const DEFAULT_REDUCTION: usize = 16;

pub fn bottleneck_width(directions: usize, reduction: usize) -> usize {
    (directions / reduction.max(1)).max(1)
}

/// `d_n`: spatial mean of channel `n`.
pub fn squeeze(v: &Tensor) -> Result<Tensor> {
    global_avg_pool(v)
}

pub fn excite(d: &Tensor, f1: &Tensor, f2: &Tensor) -> Result<Tensor> {
    let hidden = relu(&linear(d, f1, None)?);
    Ok(sigmoid(&linear(&hidden, f2, None)?))
}

/// `Ṽ_n = (1 + T_n)·V_n`.
pub fn recalibrate(v: &Tensor, t: &Tensor) -> Result<Tensor> {
    let (n, h, w) = v.dims3()?;
    if t.len() != n {
        return Err(dim_err!("{} gates for {n} directions", t.len()));
    }
    let mut out = v.data().to_vec();
    for (ch, gate) in t.data().iter().enumerate() {
        out[ch * h * w..(ch + 1) * h * w]
            .iter_mut()
            .for_each(|x| *x *= 1.0 + gate);
    }
    Tensor::new(v.shape(), out)
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct DaaTrace {
    pub d: Tensor,
    pub pre_hidden: Tensor,
    pub hidden: Tensor,
    pub gate: Tensor,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Daa {
    /// `h×n` reduction.
    pub f1: Param,
    /// `n×h` expansion.
    pub f2: Param,
}

impl Daa {
    pub fn new(directions: usize, reduction: usize, rng: &mut impl Rng) -> Self {
        let h = bottleneck_width(directions, reduction);
        Self {
            f1: Param::new(fan_in_uniform(rng, &[h, directions])),
            f2: Param::new(fan_in_uniform(rng, &[directions, h])),
        }
    }

    pub fn directions(&self) -> usize {
        self.f1.shape()[1]
    }

    pub fn gate(&self, d: &Tensor) -> Result<Tensor> {
        excite(d, &self.f1.value, &self.f2.value)
    }

    pub fn forward(&self, v: &Tensor) -> Result<(Tensor, DaaTrace)> {
        let d = squeeze(v)?;
        let pre_hidden = linear(&d, &self.f1.value, None)?;
        let hidden = relu(&pre_hidden);
        let gate = sigmoid(&linear(&hidden, &self.f2.value, None)?);
        let out = recalibrate(v, &gate)?;
        Ok((
            out,
            DaaTrace {
                d,
                pre_hidden,
                hidden,
                gate,
            },
        ))
    }

    /// Accumulates `F1`, `F2` gradients; returns `∂L/∂V`.
    pub fn backward(&mut self, v: &Tensor, trace: &DaaTrace, grad_out: &Tensor) -> Result<Tensor> {
        let (n, h, w) = v.dims3()?;
        let g = grad_out.data();
        let vd = v.data();
        let mut grad_v = Vec::with_capacity(n * h * w);
        let mut grad_gate = vec![0.0; n];
        for ch in 0..n {
            let scale = 1.0 + trace.gate.data()[ch];
            let span = ch * h * w..(ch + 1) * h * w;
            grad_gate[ch] = g[span.clone()]
                .iter()
                .zip(&vd[span.clone()])
                .map(|(a, b)| a * b)
                .sum();
            grad_v.extend(g[span].iter().map(|x| x * scale));
        }
        let grad_gate = Tensor::new(&[n], grad_gate)?;
        let grad_z = sigmoid_backward(&trace.gate, &grad_gate)?;
        let (grad_hidden, g_f2, _) = linear_backward(&trace.hidden, &self.f2.value, &grad_z)?;
        let grad_pre = relu_backward(&trace.pre_hidden, &grad_hidden)?;
        let (grad_d, g_f1, _) = linear_backward(&trace.d, &self.f1.value, &grad_pre)?;
        self.f1.accumulate(g_f1.data())?;
        self.f2.accumulate(g_f2.data())?;
        let through_mean = global_avg_pool_backward(v.shape(), &grad_d)?;
        for (a, b) in grad_v.iter_mut().zip(through_mean.data()) {
            *a += b;
        }
        Tensor::new(v.shape(), grad_v)
    }
}

impl ParamSet for Daa {
    fn params(&self) -> Vec<(String, &Param)> {
        vec![("daa.f1".into(), &self.f1), ("daa.f2".into(), &self.f2)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![
            ("daa.f1".into(), &mut self.f1),
            ("daa.f2".into(), &mut self.f2),
        ]
    }
}

/// `U(−1/√fan_in, 1/√fan_in)` with fan-in the product of all but the first
/// extent, rounded to `f32`.
pub(crate) fn fan_in_uniform(rng: &mut impl Rng, shape: &[usize]) -> Tensor {
    let fan_in: usize = shape[1..].iter().product();
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let mut t = Tensor::new(
        shape,
        (0..n).map(|_| rng.gen_range(-bound..bound)).collect(),
    )
    .expect("shape and data agree");
    t.round_to_f32();
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_weights_give_half_gates() {
        let d = Tensor::new(&[4], vec![0.3, -1.0, 2.0, 0.1]).unwrap();
        let t = excite(&d, &Tensor::zeros(&[1, 4]), &Tensor::zeros(&[4, 1])).unwrap();
        assert!(t.data().iter().all(|&g| g == 0.5));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let daa = Daa::new(4, 2, &mut rng);
        let t = daa.gate(&Tensor::zeros(&[4])).unwrap();
        assert!(t.data().iter().all(|&g| g == 0.5));
    }

    #[test]
    fn recalibration_cases() {
        let v = Tensor::new(&[2, 1, 2], vec![1.0, 2.0, -3.0, 4.0]).unwrap();
        let r = recalibrate(&v, &Tensor::filled(&[2], 0.5)).unwrap();
        assert_eq!(r.data(), &[1.5, 3.0, -4.5, 6.0]);
        let z = recalibrate(&Tensor::zeros(&[2, 2, 2]), &Tensor::filled(&[2], 0.3)).unwrap();
        assert!(z.data().iter().all(|&v| v == 0.0));
        assert!(recalibrate(&v, &Tensor::zeros(&[3])).is_err());
    }

    #[test]
    fn squeeze_constant_channels() {
        let v = Tensor::new(
            &[2, 2, 2],
            vec![3.0; 4].into_iter().chain(vec![-1.0; 4]).collect(),
        )
        .unwrap();
        assert_eq!(squeeze(&v).unwrap().data(), &[3.0, -1.0]);
        assert_eq!(
            squeeze(&Tensor::zeros(&[3, 2, 2])).unwrap().data(),
            &[0.0; 3]
        );
    }

    #[test]
    fn bottleneck_never_collapses() {
        assert_eq!(bottleneck_width(64, 16), 4);
        assert_eq!(bottleneck_width(4, 16), 1);
        assert_eq!(bottleneck_width(17, 4), 4);
    }
}
