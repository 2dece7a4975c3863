//! Flat dense tensors over `f32` or `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use crate::error::{Error, Result};

/// Element type for tensors. `f64` is used by gradient-checking tests and
/// internal accumulators; training runs in `f32`.
pub trait Scalar:
    Copy
    + Debug
    + Display
    + Default
    + PartialOrd
    + Sum
    + Send
    + Sync
    + 'static
    + std::ops::Add<Output = Self>
    + std::ops::Sub<Output = Self>
    + std::ops::Mul<Output = Self>
    + std::ops::Div<Output = Self>
    + std::ops::Neg<Output = Self>
    + std::ops::AddAssign
    + std::ops::SubAssign
    + std::ops::MulAssign
{
    const ZERO: Self;
    const ONE: Self;

    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn is_finite(self) -> bool;

    fn sqrt(self) -> Self {
        Self::from_f64(self.to_f64().sqrt())
    }
    fn exp(self) -> Self {
        Self::from_f64(self.to_f64().exp())
    }
    fn ln(self) -> Self {
        Self::from_f64(self.to_f64().ln())
    }
    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Scalar for f32 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn to_f64(self) -> f64 {
        f64::from(self)
    }
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

impl Scalar for f64 {
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;

    fn from_f64(v: f64) -> Self {
        v
    }
    fn to_f64(self) -> f64 {
        self
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

/// Dense row-major tensor: a shape plus a flat buffer of `shape.product()`
/// elements.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Vec<T>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Tensor {
            shape: shape.to_vec(),
            data: vec![T::ZERO; shape.iter().product()],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        let want: usize = shape.iter().product();
        if data.len() != want {
            return Err(Error::Validation(format!(
                "tensor data length {} does not match shape {:?} (expected {})",
                data.len(),
                shape,
                want
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    #[must_use]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[must_use]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[must_use]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[must_use]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    /// Row `i` of a 2-D tensor.
    #[must_use]
    pub fn row(&self, i: usize) -> &[T] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &self.data[i * cols..(i + 1) * cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        debug_assert_eq!(self.shape.len(), 2);
        let cols = self.shape[1];
        &mut self.data[i * cols..(i + 1) * cols]
    }

    #[must_use]
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Element-wise `self += scale * other`. Shapes must match.
    pub fn add_scaled(&mut self, other: &Tensor<T>, scale: T) {
        debug_assert_eq!(self.shape, other.shape);
        for (a, &b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += scale * b;
        }
    }

    pub fn scale(&mut self, s: T) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    pub fn fill(&mut self, v: T) {
        self.data.fill(v);
    }

    /// Converts element type, round-tripping through `f64`.
    #[must_use]
    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| U::from_f64(v.to_f64())).collect(),
        }
    }
}

/// Dot product accumulated in `f64` regardless of element type. Fixed
/// left-to-right order so results are reproducible.
#[must_use]
pub fn dot_f64<T: Scalar>(a: &[T], b: &[T]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = 0.0f64;
    for i in 0..a.len() {
        acc += a[i].to_f64() * b[i].to_f64();
    }
    acc
}

/// L2 norm of a slice, accumulated in `f64`.
#[must_use]
pub fn norm_f64<T: Scalar>(a: &[T]) -> f64 {
    dot_f64(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_rejects_wrong_length() {
        let r = Tensor::from_vec(&[2, 3], vec![1.0f32; 5]);
        assert!(r.is_err());
    }

    #[test]
    fn rows_index_flat_buffer() {
        let t = Tensor::from_vec(&[2, 3], vec![0.0f64, 1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        assert_eq!(t.row(0), &[0.0, 1.0, 2.0]);
        assert_eq!(t.row(1), &[3.0, 4.0, 5.0]);
    }

    #[test]
    fn add_scaled_accumulates() {
        let mut a = Tensor::zeros(&[2, 2]);
        let b = Tensor::from_vec(&[2, 2], vec![1.0f64, 2.0, 3.0, 4.0]).unwrap();
        a.add_scaled(&b, 0.5);
        a.add_scaled(&b, 0.5);
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn cast_round_trips_f32() {
        let a = Tensor::from_vec(&[3], vec![1.5f32, -2.25, 0.125]).unwrap();
        let b: Tensor<f64> = a.cast();
        let c: Tensor<f32> = b.cast();
        assert_eq!(a, c);
    }

    #[test]
    fn dot_accumulates_in_f64() {
        // 16777216 = 2^24; adding 1.0 to it is lossy in f32 but not in f64.
        let a = vec![16_777_216.0f32, 1.0];
        let b = vec![1.0f32, 1.0];
        assert_eq!(dot_f64(&a, &b), 16_777_217.0);
    }
}
