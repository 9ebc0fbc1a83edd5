//! Learnable Gabor filter banks.
//!
//! A bank holds `n` kernels of extent `K×K` at fixed orientations
//! `θ_i = i·π/n` (`i = 1..=n`) that share one wavelength `λ`, ellipticity
//! `γ`, phase `φ` and envelope width `σ`:
//!
//! ```text
//! LG(i, j) = −exp(−(i'²γ² + j'²) / 2σ²) · cos(2π·i'/λ + φ)
//! i' =  i·cosθ + j·sinθ
//! j' = −i·sinθ + j·cosθ
//! ```
//!
//! with `(i, j)` the row/column offset from the kernel centre. Each kernel has
//! its mean subtracted before use, so banks reject constant input.
//!
//! `λ`, `γ` and `σ` are stored as unconstrained values passed through a
//! softplus, which keeps them positive under any optimizer step.

use std::f64::consts::PI;

use crate::error::{dim_err, Error, Result};
use crate::numerics::{conv2d, conv2d_backward, sigmoid_scalar, Param, ParamSet, Tensor};

pub fn softplus(u: f64) -> f64 {
    if u > 30.0 {
        u
    } else {
        u.exp().ln_1p()
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inv(y: f64) -> f64 {
    if y > 30.0 {
        y
    } else {
        y + (-(-y).exp()).ln_1p()
    }
}

/// Concrete parameters of one bank.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaborBank {
    pub kernel_size: usize,
    pub n_dirs: usize,
    pub lambda: f64,
    pub gamma: f64,
    pub phi: f64,
    pub sigma: f64,
}

/// Partial derivatives of one raw (pre-DC-removal) kernel.
#[derive(Clone, Debug)]
pub struct KernelPartials {
    pub kernel: Vec<f64>,
    pub d_lambda: Vec<f64>,
    pub d_gamma: Vec<f64>,
    pub d_phi: Vec<f64>,
    pub d_sigma: Vec<f64>,
}

impl GaborBank {
    /// Default initialization for extent `k`: one period across the kernel,
    /// mild anisotropy.
    pub fn initial(kernel_size: usize, n_dirs: usize) -> Self {
        Self {
            kernel_size,
            n_dirs,
            lambda: kernel_size as f64 / 2.0,
            gamma: 0.5,
            phi: 0.0,
            sigma: kernel_size as f64 / 4.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_size % 2 == 0 || self.kernel_size == 0 {
            return Err(Error::Domain(format!(
                "kernel extent {} must be odd",
                self.kernel_size
            )));
        }
        if self.n_dirs == 0 {
            return Err(Error::Domain("a bank needs at least one direction".into()));
        }
        for (name, v) in [("λ", self.lambda), ("γ", self.gamma), ("σ", self.sigma)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Domain(format!("{name} = {v} must be positive")));
            }
        }
        if !self.phi.is_finite() {
            return Err(Error::Domain("φ must be finite".into()));
        }
        Ok(())
    }

    /// Orientation of direction `dir` (1-based), `dir·π/n`.
    pub fn theta(&self, dir: usize) -> f64 {
        dir as f64 * PI / self.n_dirs as f64
    }

    fn check_dir(&self, dir: usize) -> Result<()> {
        if dir == 0 || dir > self.n_dirs {
            return Err(Error::Usage(format!(
                "direction {dir} outside 1..={}",
                self.n_dirs
            )));
        }
        Ok(())
    }

    /// Raw kernel for direction `dir` (1-based), before DC removal.
    pub fn kernel(&self, dir: usize) -> Result<Tensor> {
        Ok(self.kernel_partials(dir)?.kernel)
            .and_then(|k| Tensor::new(&[self.kernel_size, self.kernel_size], k))
    }

    /// Raw kernel together with its derivatives w.r.t. `λ, γ, φ, σ`.
    pub fn kernel_partials(&self, dir: usize) -> Result<KernelPartials> {
        self.validate()?;
        self.check_dir(dir)?;
        let k = self.kernel_size;
        let half = (k / 2) as f64;
        let (sin_t, cos_t) = self.theta(dir).sin_cos();
        let (lam, gam, phi, sig) = (self.lambda, self.gamma, self.phi, self.sigma);
        let n = k * k;
        let mut out = KernelPartials {
            kernel: vec![0.0; n],
            d_lambda: vec![0.0; n],
            d_gamma: vec![0.0; n],
            d_phi: vec![0.0; n],
            d_sigma: vec![0.0; n],
        };
        for row in 0..k {
            for col in 0..k {
                let i = row as f64 - half;
                let j = col as f64 - half;
                let ip = i * cos_t + j * sin_t;
                let jp = -i * sin_t + j * cos_t;
                let q = ip * ip * gam * gam + jp * jp;
                let env = (-q / (2.0 * sig * sig)).exp();
                let arg = 2.0 * PI * ip / lam + phi;
                let (s, c) = arg.sin_cos();
                let idx = row * k + col;
                out.kernel[idx] = -env * c;
                out.d_lambda[idx] = -env * s * 2.0 * PI * ip / (lam * lam);
                out.d_phi[idx] = env * s;
                out.d_gamma[idx] = c * env * ip * ip * gam / (sig * sig);
                out.d_sigma[idx] = -c * env * q / (sig * sig * sig);
            }
        }
        Ok(out)
    }
}

/// Subtracts the mean so the kernel sums to zero.
pub fn zero_dc(kernel: &Tensor) -> Tensor {
    let mean = kernel.data().iter().sum::<f64>() / kernel.len() as f64;
    kernel.map(|v| v - mean)
}

/// Gradient of [`zero_dc`]: the upstream gradient with its mean removed.
pub fn zero_dc_backward(grad_out: &[f64]) -> Vec<f64> {
    let mean = grad_out.iter().sum::<f64>() / grad_out.len() as f64;
    grad_out.iter().map(|g| g - mean).collect()
}

/// Stacks DC-free kernels of every bank into a `n×C×K×K` tensor; bank `c`
/// filters input channel `c`.
pub fn bank_kernels(banks: &[GaborBank]) -> Result<Tensor> {
    let first = banks
        .first()
        .ok_or_else(|| Error::Usage("no Gabor banks given".into()))?;
    let (k, n) = (first.kernel_size, first.n_dirs);
    if banks.iter().any(|b| b.kernel_size != k || b.n_dirs != n) {
        return Err(dim_err!("all banks must share extent and direction count"));
    }
    let c = banks.len();
    let mut data = vec![0.0; n * c * k * k];
    for (ci, bank) in banks.iter().enumerate() {
        for dir in 1..=n {
            let kern = zero_dc(&bank.kernel(dir)?);
            let off = ((dir - 1) * c + ci) * k * k;
            data[off..off + k * k].copy_from_slice(kern.data());
        }
    }
    Tensor::new(&[n, c, k, k], data)
}

/// Directional response stack `V` (`n×H×W`): channel `i` is the response to
/// direction `θ_{i+1}`, summed over input channels, with same-size zero
/// padding.
pub fn lgf_forward(x: &Tensor, banks: &[GaborBank]) -> Result<Tensor> {
    let (c, _, _) = x.dims3()?;
    if banks.len() != c {
        return Err(dim_err!(
            "{} Gabor banks for {c} input channels",
            banks.len()
        ));
    }
    let kernels = bank_kernels(banks)?;
    let pad = banks[0].kernel_size / 2;
    conv2d(x, &kernels, 1, pad)
}

/// Trainable layer: one bank per input channel, parameters stored as
/// length-`C` tensors (`λ`, `γ`, `σ` in softplus space).
#[derive(Clone, Debug, PartialEq)]
pub struct LgfLayer {
    pub kernel_size: usize,
    pub n_dirs: usize,
    pub lambda: Param,
    pub gamma: Param,
    pub phi: Param,
    pub sigma: Param,
}

impl LgfLayer {
    pub fn new(kernel_size: usize, n_dirs: usize, channels: usize) -> Result<Self> {
        let init = GaborBank::initial(kernel_size, n_dirs);
        init.validate()?;
        let fill = |v: f64| {
            let mut t = Tensor::filled(&[channels], v);
            t.round_to_f32();
            Param::new(t)
        };
        Ok(Self {
            kernel_size,
            n_dirs,
            lambda: fill(softplus_inv(init.lambda)),
            gamma: fill(softplus_inv(init.gamma)),
            phi: fill(init.phi),
            sigma: fill(softplus_inv(init.sigma)),
        })
    }

    pub fn channels(&self) -> usize {
        self.lambda.value.len()
    }

    pub fn bank(&self, channel: usize) -> GaborBank {
        GaborBank {
            kernel_size: self.kernel_size,
            n_dirs: self.n_dirs,
            lambda: softplus(self.lambda.data()[channel]),
            gamma: softplus(self.gamma.data()[channel]),
            phi: self.phi.data()[channel],
            sigma: softplus(self.sigma.data()[channel]),
        }
    }

    pub fn banks(&self) -> Vec<GaborBank> {
        (0..self.channels()).map(|c| self.bank(c)).collect()
    }

    pub fn kernels(&self) -> Result<Tensor> {
        bank_kernels(&self.banks())
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        lgf_forward(x, &self.banks())
    }

    /// Accumulates parameter gradients; returns `∂L/∂x`.
    pub fn backward(&mut self, x: &Tensor, grad_v: &Tensor) -> Result<Tensor> {
        let kernels = self.kernels()?;
        let pad = self.kernel_size / 2;
        let (gx, gk) = conv2d_backward(x, &kernels, 1, pad, grad_v)?;
        let c = self.channels();
        let kk = self.kernel_size * self.kernel_size;
        let mut grads = [vec![0.0; c], vec![0.0; c], vec![0.0; c], vec![0.0; c]];
        for ci in 0..c {
            let bank = self.bank(ci);
            for dir in 1..=self.n_dirs {
                let off = ((dir - 1) * c + ci) * kk;
                let g_raw = zero_dc_backward(&gk.data()[off..off + kk]);
                let parts = bank.kernel_partials(dir)?;
                let dot = |d: &[f64]| d.iter().zip(&g_raw).map(|(a, b)| a * b).sum::<f64>();
                grads[0][ci] += dot(&parts.d_lambda);
                grads[1][ci] += dot(&parts.d_gamma);
                grads[2][ci] += dot(&parts.d_phi);
                grads[3][ci] += dot(&parts.d_sigma);
            }
            // chain through the softplus reparameterization
            grads[0][ci] *= sigmoid_scalar(self.lambda.data()[ci]);
            grads[1][ci] *= sigmoid_scalar(self.gamma.data()[ci]);
            grads[3][ci] *= sigmoid_scalar(self.sigma.data()[ci]);
        }
        self.lambda.accumulate(&grads[0])?;
        self.gamma.accumulate(&grads[1])?;
        self.phi.accumulate(&grads[2])?;
        self.sigma.accumulate(&grads[3])?;
        Ok(gx)
    }
}

impl ParamSet for LgfLayer {
    fn params(&self) -> Vec<(String, &Param)> {
        vec![
            ("gabor.lambda".into(), &self.lambda),
            ("gabor.gamma".into(), &self.gamma),
            ("gabor.phi".into(), &self.phi),
            ("gabor.sigma".into(), &self.sigma),
        ]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![
            ("gabor.lambda".into(), &mut self.lambda),
            ("gabor.gamma".into(), &mut self.gamma),
            ("gabor.phi".into(), &mut self.phi),
            ("gabor.sigma".into(), &mut self.sigma),
        ]
    }
}

/// Tiles kernels into a binary PGM (P5) image, `cols` kernels per row with a
/// one-pixel gap, linearly mapped so the global min/max hit 0/255. Lossy;
/// intended for eyeballing learned filters.
pub fn kernel_grid_pgm(kernels: &[Tensor], cols: usize) -> Result<Vec<u8>> {
    let first = kernels
        .first()
        .ok_or_else(|| Error::Usage("no kernels to export".into()))?;
    let [k, k2] = *first.shape() else {
        return Err(dim_err!("kernels must be K×K, got {:?}", first.shape()));
    };
    if k != k2 || kernels.iter().any(|t| t.shape() != first.shape()) {
        return Err(dim_err!("kernels must all be square and equally sized"));
    }
    let cols = cols.clamp(1, kernels.len());
    let rows = kernels.len().div_ceil(cols);
    let (w, h) = (cols * (k + 1) - 1, rows * (k + 1) - 1);
    let (lo, hi) = kernels
        .iter()
        .flat_map(|t| t.data().iter().copied())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), v| {
            (a.min(v), b.max(v))
        });
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    let mut pixels = vec![0u8; w * h];
    for (n, t) in kernels.iter().enumerate() {
        let (r0, c0) = ((n / cols) * (k + 1), (n % cols) * (k + 1));
        for i in 0..k {
            for j in 0..k {
                let v = ((t.data()[i * k + j] - lo) * scale)
                    .round()
                    .clamp(0.0, 255.0);
                pixels[(r0 + i) * w + c0 + j] = v as u8;
            }
        }
    }
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    out.extend_from_slice(&pixels);
    Ok(out)
}
