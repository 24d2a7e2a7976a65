//! Dense row-major `f64` tensors, a reverse-mode tape over a small op set,
//! optimizers, and a finite-difference gradient checker.

mod conv;
pub mod gradcheck;
pub mod mten;
pub mod optim;
pub mod tape;

pub use conv::{conv2d_output_len, conv2d_transpose_output_len, Conv2dParams};
pub use gradcheck::{grad_check, GradCheckReport};
pub use optim::{Optimizer, OptimizerKind};
pub use tape::{Gradients, Tape, Var};

use crate::error::{Error, Result};

/// A dense tensor of 64-bit floats, row-major, every value finite.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.iter().any(|&d| d == 0) {
            return Err(Error::invalid(format!("zero extent in shape {shape:?}")));
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(Error::invalid(format!(
                "shape {shape:?} needs {len} values, got {}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { op: "tensor" });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Internal constructor for op outputs; the caller guarantees the length.
    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Tensor { shape, data }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let len = shape.iter().product();
        Tensor::from_parts(shape.to_vec(), vec![value; len])
    }

    pub fn scalar(value: f64) -> Self {
        Tensor::from_parts(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Mutable access to the payload. Callers must keep values finite.
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// Value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert!(self.is_scalar(), "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        let len: usize = shape.iter().product();
        if len != self.data.len() {
            return Err(Error::shape("reshape", &self.shape, shape));
        }
        Ok(Tensor::from_parts(shape.to_vec(), self.data.clone()))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Tensor::from_parts(self.shape.clone(), self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn dot(&self, other: &Tensor) -> Result<f64> {
        self.expect_same_shape("dot", other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub(crate) fn expect_same_shape(&self, op: &'static str, other: &Tensor) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(op, &self.shape, &other.shape));
        }
        Ok(())
    }

    pub(crate) fn check_finite(self, op: &'static str) -> Result<Self> {
        if self.is_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// `(n, c, h, w)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match self.shape[..] {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::invalid(format!(
                "expected an NCHW tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// Concatenate rank-4 tensors along the batch axis.
    pub fn cat_batch(items: &[Tensor]) -> Result<Tensor> {
        let first = items
            .first()
            .ok_or_else(|| Error::invalid("cat_batch of zero tensors"))?;
        let (_, c, h, w) = first.dims4()?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        let mut n = 0;
        for t in items {
            let (tn, tc, th, tw) = t.dims4()?;
            if (tc, th, tw) != (c, h, w) {
                return Err(Error::shape("cat_batch", first.shape(), t.shape()));
            }
            n += tn;
            data.extend_from_slice(&t.data);
        }
        Ok(Tensor::from_parts(vec![n, c, h, w], data))
    }

    /// Split a batch back into `1×C×H×W` tensors.
    pub fn split_batch(&self) -> Result<Vec<Tensor>> {
        let (n, c, h, w) = self.dims4()?;
        let plane = c * h * w;
        Ok((0..n)
            .map(|i| Tensor::from_parts(vec![1, c, h, w], self.data[i * plane..(i + 1) * plane].to_vec()))
            .collect())
    }

    /// Spatial crop of a rank-4 tensor.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4()?;
        if top + height > h || left + width > w || height == 0 || width == 0 {
            return Err(Error::invalid(format!(
                "crop {height}x{width} at ({top},{left}) outside {h}x{w}"
            )));
        }
        let mut out = Vec::with_capacity(n * c * height * width);
        for plane in self.data.chunks_exact(h * w) {
            for y in top..top + height {
                out.extend_from_slice(&plane[y * w + left..y * w + left + width]);
            }
        }
        Ok(Tensor::from_parts(vec![n, c, height, width], out))
    }
}
