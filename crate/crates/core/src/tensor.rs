//! Rank-3 `(batch, channels, length)` tensors.
//!
//! Values are stored contiguously in row-major order, so element `(b, c, t)`
//! lives at `(b * channels + c) * length + t`. The element type is a
//! construction parameter: `f64` is used for gradient oracles, `f32` for
//! training and inference.

use std::fmt::Debug;
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating-point element type accepted by every layer primitive.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Default + Send + Sync + Sum + 'static
{
    fn from_f64_lossy(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).unwrap_or_else(Self::nan)
    }

    fn to_f64_lossy(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn from_usize_lossy(v: usize) -> Self {
        <Self as FromPrimitive>::from_usize(v).unwrap_or_else(Self::nan)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub batch: usize,
    pub channels: usize,
    pub length: usize,
}

impl Shape {
    pub const fn new(batch: usize, channels: usize, length: usize) -> Self {
        Shape {
            batch,
            channels,
            length,
        }
    }

    pub const fn numel(&self) -> usize {
        self.batch * self.channels * self.length
    }
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {}, {})", self.batch, self.channels, self.length)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Shape,
    data: Vec<T>,
    grad: Option<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: Shape) -> Self {
        Tensor {
            shape,
            data: vec![T::zero(); shape.numel()],
            grad: None,
        }
    }

    pub fn full(shape: Shape, value: T) -> Self {
        Tensor {
            shape,
            data: vec![value; shape.numel()],
            grad: None,
        }
    }

    pub fn from_vec(shape: Shape, data: Vec<T>) -> Result<Self> {
        if data.len() != shape.numel() {
            return Err(Error::Shape {
                op: "tensor",
                dim: "element count",
                expected: shape.numel(),
                actual: data.len(),
            });
        }
        Ok(Tensor {
            shape,
            data,
            grad: None,
        })
    }

    /// Stacks equal-length single-channel rows into a `(rows, 1, len)` tensor.
    pub fn from_rows<R: AsRef<[T]>>(rows: &[R]) -> Result<Self> {
        let length = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * length);
        for row in rows {
            let row = row.as_ref();
            if row.len() != length {
                return Err(Error::Shape {
                    op: "tensor",
                    dim: "length",
                    expected: length,
                    actual: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Tensor::from_vec(Shape::new(rows.len(), 1, length), data)
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn batch(&self) -> usize {
        self.shape.batch
    }

    pub fn channels(&self) -> usize {
        self.shape.channels
    }

    pub fn len(&self) -> usize {
        self.shape.length
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

    #[inline]
    pub fn index(&self, b: usize, c: usize, t: usize) -> usize {
        (b * self.shape.channels + c) * self.shape.length + t
    }

    #[inline]
    pub fn get(&self, b: usize, c: usize, t: usize) -> T {
        self.data[self.index(b, c, t)]
    }

    #[inline]
    pub fn set(&mut self, b: usize, c: usize, t: usize, v: T) {
        let i = self.index(b, c, t);
        self.data[i] = v;
    }

    /// The contiguous time series of channel `c` in sample `b`.
    pub fn row(&self, b: usize, c: usize) -> &[T] {
        let start = self.index(b, c, 0);
        &self.data[start..start + self.shape.length]
    }

    pub fn row_mut(&mut self, b: usize, c: usize) -> &mut [T] {
        let start = self.index(b, c, 0);
        let len = self.shape.length;
        &mut self.data[start..start + len]
    }

    /// All channels of sample `b`.
    pub fn sample(&self, b: usize) -> &[T] {
        let n = self.shape.channels * self.shape.length;
        &self.data[b * n..(b + 1) * n]
    }

    pub fn grad(&self) -> Option<&[T]> {
        self.grad.as_deref()
    }

    pub fn set_grad(&mut self, grad: Vec<T>) -> Result<()> {
        if grad.len() != self.data.len() {
            return Err(Error::Shape {
                op: "tensor grad",
                dim: "element count",
                expected: self.data.len(),
                actual: grad.len(),
            });
        }
        self.grad = Some(grad);
        Ok(())
    }

    pub fn take_grad(&mut self) -> Option<Vec<T>> {
        self.grad.take()
    }

    /// Picks samples by index into a new tensor.
    pub fn select(&self, indices: &[usize]) -> Self {
        let n = self.shape.channels * self.shape.length;
        let mut data = Vec::with_capacity(indices.len() * n);
        for &i in indices {
            data.extend_from_slice(self.sample(i));
        }
        Tensor {
            shape: Shape::new(indices.len(), self.shape.channels, self.shape.length),
            data,
            grad: None,
        }
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Tensor {
            shape: self.shape,
            data: self.data.iter().map(|&v| f(v)).collect(),
            grad: None,
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_shape("add", other)?;
        Ok(Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .zip(&other.data)
                .map(|(&a, &b)| a + b)
                .collect(),
            grad: None,
        })
    }

    pub fn check_same_shape(&self, op: &'static str, other: &Self) -> Result<()> {
        let (a, b) = (self.shape, other.shape);
        let dims = [
            ("batch", a.batch, b.batch),
            ("channels", a.channels, b.channels),
            ("length", a.length, b.length),
        ];
        for (dim, expected, actual) in dims {
            if expected != actual {
                return Err(Error::Shape {
                    op,
                    dim,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape,
            data: self
                .data
                .iter()
                .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                .collect(),
            grad: self.grad.as_ref().map(|g| {
                g.iter()
                    .map(|v| U::from_f64_lossy(v.to_f64_lossy()))
                    .collect()
            }),
        }
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_batch_major() {
        let t =
            Tensor::<f64>::from_vec(Shape::new(2, 2, 3), (0..12).map(f64::from).collect()).unwrap();
        assert_eq!(t.get(1, 0, 2), 8.0);
        assert_eq!(t.row(0, 1), &[3.0, 4.0, 5.0]);
        assert_eq!(t.sample(1).len(), 6);
    }

    #[test]
    fn rejects_wrong_element_count() {
        let err = Tensor::<f32>::from_vec(Shape::new(1, 2, 3), vec![0.0; 5]).unwrap_err();
        assert!(err.to_string().contains("element count"));
    }

    #[test]
    fn grad_shape_must_match() {
        let mut t = Tensor::<f64>::zeros(Shape::new(1, 1, 4));
        assert!(t.set_grad(vec![0.0; 3]).is_err());
        t.set_grad(vec![1.0; 4]).unwrap();
        assert_eq!(t.grad().unwrap().len(), 4);
    }

    #[test]
    fn select_and_rows() {
        let t = Tensor::from_rows(&[vec![1.0f32, 2.0], vec![3.0, 4.0], vec![5.0, 6.0]]).unwrap();
        let s = t.select(&[2, 0]);
        assert_eq!(s.data(), &[5.0, 6.0, 1.0, 2.0]);
        assert!(Tensor::from_rows(&[vec![1.0f32], vec![1.0, 2.0]]).is_err());
    }
}
