//! Dense row-major tensors, generic over the working precision.
//!
//! The production path runs in f32; the gradient-check suite instantiates
//! the identical code at f64.

use crate::error::{Error, Result};
use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

/// Scalar abstraction over f32/f64.
pub trait Real:
    Copy
    + PartialOrd
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
    fn from_f32(v: f32) -> Self;
    fn to_f32(self) -> f32;
    fn sqrt(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn maximum(self, other: Self) -> Self;
    fn abs(self) -> Self;
    fn is_finite_scalar(self) -> bool;
}

macro_rules! impl_real {
    ($t:ty) => {
        impl Real for $t {
            const ZERO: Self = 0.0;
            const ONE: Self = 1.0;
            #[inline]
            fn from_f64(v: f64) -> Self {
                v as $t
            }
            #[inline]
            fn to_f64(self) -> f64 {
                self as f64
            }
            #[inline]
            fn from_f32(v: f32) -> Self {
                v as $t
            }
            #[inline]
            fn to_f32(self) -> f32 {
                self as f32
            }
            #[inline]
            fn sqrt(self) -> Self {
                self.sqrt()
            }
            #[inline]
            fn exp(self) -> Self {
                self.exp()
            }
            #[inline]
            fn ln(self) -> Self {
                self.ln()
            }
            #[inline]
            fn maximum(self, other: Self) -> Self {
                if self > other {
                    self
                } else {
                    other
                }
            }
            #[inline]
            fn abs(self) -> Self {
                self.abs()
            }
            #[inline]
            fn is_finite_scalar(self) -> bool {
                self.is_finite()
            }
        }
    };
}

impl_real!(f32);
impl_real!(f64);

/// Row-major dense tensor.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R: Real> {
    pub shape: Vec<usize>,
    pub data: Vec<R>,
}

impl<R: Real> Tensor<R> {
    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![R::ZERO; numel],
        }
    }

    pub fn from_vec(shape: &[usize], data: Vec<R>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::ShapeMismatch(format!(
                "shape {:?} wants {numel} elements, got {}",
                shape,
                data.len()
            )));
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn assert_finite(&self, what: &str) -> Result<()> {
        if self.data.iter().any(|v| !v.is_finite_scalar()) {
            return Err(Error::Numerical(format!("non-finite value in {what}")));
        }
        Ok(())
    }

    /// Convert precision element-wise.
    pub fn cast<S: Real>(&self) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| S::from_f64(v.to_f64())).collect(),
        }
    }

    /// Sum of squares accumulated in f64.
    pub fn sq_norm_f64(&self) -> f64 {
        let mut acc = 0.0f64;
        for v in &self.data {
            let x = v.to_f64();
            acc += x * x;
        }
        acc
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_shape() {
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f32>::from_vec(&[2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn finite_guard() {
        let mut t = Tensor::<f32>::zeros(&[4]);
        assert!(t.assert_finite("t").is_ok());
        t.data[2] = f32::NAN;
        assert!(t.assert_finite("t").is_err());
    }

    #[test]
    fn cast_roundtrip() {
        let t = Tensor::<f64>::from_vec(&[3], vec![1.5, -2.25, 0.125]).unwrap();
        let f: Tensor<f32> = t.cast();
        let back: Tensor<f64> = f.cast();
        assert_eq!(t, back);
    }
}
