//! Dense row-major tensors and the numerical kernels the layers are built on.
//!
//! 4-D tensors use NCHW layout. Every kernel is generic over [`Element`], so
//! the same code runs in `f32` for training and in `f64` for finite-difference
//! gradient checks.

mod gemm;
mod im2col;

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, NumAssign};

use crate::error::{Error, Result};

pub use gemm::{gemm, Transpose, KC, MC, MR, NC, NR};
pub use im2col::{col2im, col2im_image, im2col, im2col_image, ConvGeometry};

/// Floating-point element type of a [`Tensor`].
pub trait Element: Float + NumAssign + Default + Sum + Send + Sync + Debug + Display + 'static {
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Element for f32 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Element for f64 {
    #[inline]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline]
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Clone, PartialEq)]
pub struct Tensor<T = f32> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Debug> Debug for Tensor<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.data.len() <= 16 {
            write!(f, "Tensor({:?}, {:?})", self.shape, self.data)
        } else {
            write!(f, "Tensor({:?}, {} elements)", self.shape, self.data.len())
        }
    }
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() {
        return Err(Error::shape("tensor must have at least one dimension"));
    }
    if shape.contains(&0) {
        return Err(Error::shape(format!("zero-sized dimension in {shape:?}")));
    }
    Ok(shape.iter().product())
}

impl<T: Element> Tensor<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != data.len() {
            return Err(Error::shape(format!(
                "shape {shape:?} needs {len} elements, got {}",
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// # Panics
    /// If any dimension is zero or `shape` is empty.
    pub fn full(shape: &[usize], value: T) -> Self {
        let len = check_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, T::zero())
    }

    pub fn from_fn(shape: &[usize], mut f: impl FnMut(usize) -> T) -> Self {
        let len = check_shape(shape).expect("invalid tensor shape");
        Tensor {
            shape: shape.to_vec(),
            data: (0..len).map(&mut f).collect(),
        }
    }

    pub fn scalar(value: T) -> Self {
        Tensor {
            shape: vec![1],
            data: vec![value],
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

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// `(N, C, H, W)` of a rank-4 tensor.
    pub fn dims4(&self) -> Result<(usize, usize, usize, usize)> {
        match *self.shape.as_slice() {
            [n, c, h, w] => Ok((n, c, h, w)),
            _ => Err(Error::shape(format!(
                "expected a 4-D NCHW tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    /// `(rows, cols)` of a rank-2 tensor.
    pub fn dims2(&self) -> Result<(usize, usize)> {
        match *self.shape.as_slice() {
            [r, c] => Ok((r, c)),
            _ => Err(Error::shape(format!(
                "expected a 2-D tensor, got shape {:?}",
                self.shape
            ))),
        }
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        self.clone().into_reshape(shape)
    }

    pub fn into_reshape(self, shape: &[usize]) -> Result<Self> {
        let len = check_shape(shape)?;
        if len != self.data.len() {
            return Err(Error::shape(format!(
                "cannot reshape {:?} into {shape:?}",
                self.shape
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data: self.data,
        })
    }

    /// Row-major flat offset of a multi-index.
    pub fn flat_index(&self, index: &[usize]) -> Result<usize> {
        if index.len() != self.shape.len() {
            return Err(Error::shape(format!(
                "index {index:?} has wrong rank for shape {:?}",
                self.shape
            )));
        }
        let mut flat = 0;
        for (&i, &d) in index.iter().zip(&self.shape) {
            if i >= d {
                return Err(Error::shape(format!(
                    "index {index:?} out of bounds for shape {:?}",
                    self.shape
                )));
            }
            flat = flat * d + i;
        }
        Ok(flat)
    }

    /// Inverse of [`Tensor::flat_index`].
    pub fn unravel_index(&self, mut flat: usize) -> Result<Vec<usize>> {
        if flat >= self.data.len() {
            return Err(Error::shape(format!(
                "flat index {flat} out of bounds for shape {:?}",
                self.shape
            )));
        }
        let mut index = vec![0; self.shape.len()];
        for (slot, &d) in index.iter_mut().zip(&self.shape).rev() {
            *slot = flat % d;
            flat /= d;
        }
        Ok(index)
    }

    pub fn get(&self, index: &[usize]) -> Result<T> {
        Ok(self.data[self.flat_index(index)?])
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Result<Self> {
        self.expect_same_shape(other)?;
        Ok(Tensor {
            shape: self.shape.clone(),
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| f(a, b))
                .collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn scale(&self, s: T) -> Self {
        self.map(|x| x * s)
    }

    /// Inner product over all elements, accumulated in `f64`.
    pub fn dot(&self, other: &Self) -> Result<f64> {
        self.expect_same_shape(other)?;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a.as_f64() * b.as_f64())
            .sum())
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|x| x.as_f64()).sum()
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &x| if x.abs() > m { x.abs() } else { m })
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn cast<U: Element>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&x| U::from_f64(x.as_f64())).collect(),
        }
    }

    /// Adds `bias[c]` to every element of channel `c`. The channel axis is
    /// axis 1 (NCHW or N×F).
    pub fn add_channel_bias(&mut self, bias: &[T]) -> Result<()> {
        if self.shape.len() < 2 || self.shape[1] != bias.len() {
            return Err(Error::shape(format!(
                "bias of length {} does not match channel axis of {:?}",
                bias.len(),
                self.shape
            )));
        }
        let inner: usize = self.shape[2..].iter().product();
        for (i, chunk) in self.data.chunks_mut(inner).enumerate() {
            let b = bias[i % bias.len()];
            chunk.iter_mut().for_each(|x| *x += b);
        }
        Ok(())
    }

    /// Slice out samples `[start, start + count)` along axis 0.
    pub fn batch_slice(&self, start: usize, count: usize) -> Result<Self> {
        let n = self.shape[0];
        if count == 0 || start + count > n {
            return Err(Error::shape(format!(
                "batch slice {start}..{} out of range for {n} samples",
                start + count
            )));
        }
        let inner: usize = self.shape[1..].iter().product();
        let mut shape = self.shape.clone();
        shape[0] = count;
        Ok(Tensor {
            shape,
            data: self.data[start * inner..(start + count) * inner].to_vec(),
        })
    }

    /// Stack equally shaped tensors along a new leading axis.
    pub fn stack(items: &[Tensor<T>]) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::shape("cannot stack zero tensors"))?;
        let mut data = Vec::with_capacity(first.len() * items.len());
        for t in items {
            first.expect_same_shape(t)?;
            data.extend_from_slice(&t.data);
        }
        let mut shape = vec![items.len()];
        shape.extend_from_slice(&first.shape);
        Ok(Tensor { shape, data })
    }

    fn expect_same_shape(&self, other: &Self) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::shape(format!(
                "shape mismatch: {:?} vs {:?}",
                self.shape, other.shape
            )));
        }
        Ok(())
    }
}

/// `a[M×K] · b[K×N]` through the blocked GEMM kernel.
pub fn matmul<T: Element>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let dims = (a.dims2(), b.dims2());
    let ((m, k), (k2, n)) = match dims {
        (Ok(x), Ok(y)) => (x, y),
        _ => {
            return Err(Error::shape(format!(
                "matmul needs 2-D operands, got {:?} and {:?}",
                a.shape(),
                b.shape()
            )))
        }
    };
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul inner dimensions differ: {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut c = Tensor::zeros(&[m, n]);
    gemm(
        Transpose::No,
        Transpose::No,
        m,
        n,
        k,
        a.data(),
        b.data(),
        c.data_mut(),
        false,
    );
    Ok(c)
}
