//! Dense rank-≤4 tensors in NCHW layout.
//!
//! A tensor stores its logical shape (one to four extents) and a flat
//! row-major buffer of `f64`. Lower-rank tensors are viewed as 4-D by
//! prepending size-1 extents, so an `(N, C)` matrix is `(1, 1, N, C)` to any
//! routine that asks for [`Tensor::nchw`].

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
    requires_grad: bool,
}

impl Tensor {
    pub fn new(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if shape.is_empty() || shape.len() > 4 {
            return Err(dim_err!("tensor rank must be 1..=4, got {}", shape.len()));
        }
        if let Some(axis) = shape.iter().position(|&e| e == 0) {
            return Err(dim_err!("extent of axis {axis} is zero in shape {shape:?}"));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(dim_err!("shape {shape:?} holds {numel} values but {} were given", data.len()));
        }
        Ok(Self { shape: shape.to_vec(), data, requires_grad: false })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        Self::new(shape, vec![value; numel]).expect("valid shape")
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(&[1], vec![value]).expect("valid shape")
    }

    /// Builds a `(1, 1, rows, cols)` tensor from nested rows.
    pub fn from_rows(rows: &[&[f64]]) -> Result<Self> {
        let h = rows.len();
        let w = rows.first().map_or(0, |r| r.len());
        if rows.iter().any(|r| r.len() != w) {
            return Err(dim_err!("ragged rows"));
        }
        Self::new(&[1, 1, h, w], rows.iter().flat_map(|r| r.iter().copied()).collect())
    }

    pub fn with_requires_grad(mut self, requires_grad: bool) -> Self {
        self.requires_grad = requires_grad;
        self
    }

    pub fn requires_grad(&self) -> bool {
        self.requires_grad
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Shape padded with leading ones to `[N, C, H, W]`.
    pub fn nchw(&self) -> [usize; 4] {
        let mut out = [1; 4];
        out[4 - self.shape.len()..].copy_from_slice(&self.shape);
        out
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        Self::new(shape, self.data.clone()).map(|t| t.with_requires_grad(self.requires_grad))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { shape: self.shape.clone(), data: self.data.iter().map(|&v| f(v)).collect(), requires_grad: false }
    }

    pub fn zip_map(&self, other: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if self.shape != other.shape {
            return Err(dim_err!("elementwise shapes differ: {:?} vs {:?}", self.shape, other.shape));
        }
        Ok(Self {
            shape: self.shape.clone(),
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect(),
            requires_grad: false,
        })
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.sum() / self.numel() as f64
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn min_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Value at `[n, c, h, w]` of the NCHW view.
    pub fn at(&self, n: usize, c: usize, h: usize, w: usize) -> f64 {
        let [_, cc, hh, ww] = self.nchw();
        self.data[((n * cc + c) * hh + h) * ww + w]
    }

    /// One `(H, W)` plane of the NCHW view, row-major.
    pub fn plane(&self, n: usize, c: usize) -> &[f64] {
        let [_, cc, h, w] = self.nchw();
        let start = (n * cc + c) * h * w;
        &self.data[start..start + h * w]
    }

    /// Copies out a contiguous channel range `[start, end)` of an NCHW tensor.
    pub fn slice_channels(&self, start: usize, end: usize) -> Result<Self> {
        let [n, c, h, w] = self.nchw();
        if start >= end || end > c {
            return Err(dim_err!("channel range {start}..{end} invalid for {c} channels"));
        }
        let plane = h * w;
        let mut data = Vec::with_capacity(n * (end - start) * plane);
        for b in 0..n {
            let base = b * c * plane;
            data.extend_from_slice(&self.data[base + start * plane..base + end * plane]);
        }
        Self::new(&[n, end - start, h, w], data)
    }

    /// Gathers the listed batch entries of an NCHW tensor into a new batch.
    pub fn select_batch(&self, indices: &[usize]) -> Result<Self> {
        let [n, c, h, w] = self.nchw();
        let per = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * per);
        for &i in indices {
            if i >= n {
                return Err(dim_err!("batch index {i} out of range for batch {n}"));
            }
            data.extend_from_slice(&self.data[i * per..(i + 1) * per]);
        }
        Self::new(&[indices.len(), c, h, w], data)
    }

    pub(crate) fn from_parts(shape: Vec<usize>, data: Vec<f64>) -> Self {
        debug_assert_eq!(shape.iter().product::<usize>(), data.len());
        Self { shape, data, requires_grad: false }
    }

    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}
