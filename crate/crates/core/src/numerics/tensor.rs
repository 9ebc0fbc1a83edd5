use crate::error::{dim_err, Error, Result};

/// Dense row-major real array with an optional gradient buffer.
///
/// Values are kept in double precision; storage formats narrow to `f32`.
/// Equality compares shape and values only.
#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    grad: Option<Vec<f64>>,
}

impl PartialEq for Tensor {
    fn eq(&self, other: &Self) -> bool {
        self.shape == other.shape && self.data == other.data
    }
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(dim_err!("shape {shape:?} has a zero extent"));
        }
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(dim_err!(
                "shape {shape:?} needs {expected} values, got {}",
                data.len()
            ));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data,
            grad: None,
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        assert!(shape.iter().all(|&d| d > 0), "zero extent in {shape:?}");
        let n = shape.iter().product();
        Self {
            shape: shape.to_vec(),
            data: vec![value; n],
            grad: None,
        }
    }

    pub fn from_vec(data: Vec<f64>) -> Self {
        let n = data.len().max(1);
        let data = if data.is_empty() { vec![0.0] } else { data };
        Self {
            shape: vec![n],
            data,
            grad: None,
        }
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: vec![1],
            data: vec![value],
            grad: None,
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn grad(&self) -> Option<&[f64]> {
        self.grad.as_deref()
    }

    /// Gradient buffer, allocated as zeros on first access.
    pub fn grad_mut(&mut self) -> &mut [f64] {
        let n = self.data.len();
        self.grad.get_or_insert_with(|| vec![0.0; n])
    }

    pub fn zero_grad(&mut self) {
        if let Some(g) = self.grad.as_mut() {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn clear_grad(&mut self) {
        self.grad = None;
    }

    pub fn accumulate_grad(&mut self, delta: &[f64]) -> Result<()> {
        if delta.len() != self.data.len() {
            return Err(dim_err!(
                "gradient of length {} for tensor of shape {:?}",
                delta.len(),
                self.shape
            ));
        }
        for (g, d) in self.grad_mut().iter_mut().zip(delta) {
            *g += d;
        }
        Ok(())
    }

    pub fn reshape(mut self, shape: &[usize]) -> Result<Self> {
        let n: usize = shape.iter().product();
        if n != self.data.len() || shape.iter().any(|&d| d == 0) {
            return Err(dim_err!("cannot reshape {:?} into {shape:?}", self.shape));
        }
        self.shape = shape.to_vec();
        Ok(self)
    }

    /// Interprets the tensor as `C×H×W`; rank-2 tensors are a single channel.
    pub fn dims3(&self) -> Result<(usize, usize, usize)> {
        match *self.shape.as_slice() {
            [c, h, w] => Ok((c, h, w)),
            [h, w] => Ok((1, h, w)),
            _ => Err(dim_err!(
                "expected a C×H×W tensor, got shape {:?}",
                self.shape
            )),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn ensure_finite(&self, what: &str) -> Result<()> {
        if self.is_finite() {
            Ok(())
        } else {
            Err(Error::Numeric(format!("{what} contains non-finite values")))
        }
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    /// Rounds every value to the nearest `f32`, making the tensor exactly
    /// representable in the on-disk formats.
    pub fn round_to_f32(&mut self) {
        for v in &mut self.data {
            *v = *v as f32 as f64;
        }
    }
}

/// A trainable tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub requires_grad: bool,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        Self {
            value,
            requires_grad: true,
        }
    }

    pub fn frozen(value: Tensor) -> Self {
        Self {
            value,
            requires_grad: false,
        }
    }

    pub fn data(&self) -> &[f64] {
        self.value.data()
    }

    pub fn shape(&self) -> &[usize] {
        self.value.shape()
    }

    /// Current gradient, or zeros when nothing was accumulated yet.
    pub fn grad(&self) -> Vec<f64> {
        self.value
            .grad()
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; self.value.len()])
    }

    pub fn zero_grad(&mut self) {
        let n = self.value.len();
        let g = self.value.grad_mut();
        debug_assert_eq!(g.len(), n);
        g.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn accumulate(&mut self, delta: &[f64]) -> Result<()> {
        if !self.requires_grad {
            return Ok(());
        }
        self.value.accumulate_grad(delta)
    }
}

/// Anything exposing a named, ordered list of parameters.
pub trait ParamSet {
    fn params(&self) -> Vec<(String, &Param)>;
    fn params_mut(&mut self) -> Vec<(String, &mut Param)>;

    fn zero_grad(&mut self) {
        for (_, p) in self.params_mut() {
            p.zero_grad();
        }
    }
}

impl ParamSet for Param {
    fn params(&self) -> Vec<(String, &Param)> {
        vec![("param".to_string(), self)]
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        vec![("param".to_string(), self)]
    }
}

impl ParamSet for Vec<Param> {
    fn params(&self) -> Vec<(String, &Param)> {
        self.iter()
            .enumerate()
            .map(|(i, p)| (format!("param{i}"), p))
            .collect()
    }

    fn params_mut(&mut self) -> Vec<(String, &mut Param)> {
        self.iter_mut()
            .enumerate()
            .map(|(i, p)| (format!("param{i}"), p))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_must_match_data() {
        assert!(Tensor::new(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(matches!(
            Tensor::new(&[2, 3], vec![0.0; 5]),
            Err(Error::Dimension(_))
        ));
        assert!(Tensor::new(&[0, 3], vec![]).is_err());
    }

    #[test]
    fn grad_matches_shape() {
        let mut t = Tensor::zeros(&[2, 2]);
        t.accumulate_grad(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        t.accumulate_grad(&[1.0, 1.0, 1.0, 1.0]).unwrap();
        assert_eq!(t.grad().unwrap(), &[2.0, 3.0, 4.0, 5.0]);
        assert!(t.accumulate_grad(&[1.0]).is_err());
        t.zero_grad();
        assert_eq!(t.grad().unwrap(), &[0.0; 4]);
    }

    #[test]
    fn frozen_params_ignore_gradients() {
        let mut p = Param::frozen(Tensor::scalar(1.0));
        p.accumulate(&[5.0]).unwrap();
        assert_eq!(p.grad(), vec![0.0]);
    }
}
