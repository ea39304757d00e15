//! Dense tensor type shared by every operation in the engine.
//!
//! A [`Tensor`] is a shape plus a contiguous row-major buffer behind an
//! `Arc`, so clones are cheap and values are immutable once produced by
//! an op. The element type is any [`Real`] (`f64` for tests and oracles,
//! `f32` optionally for training).

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};

/// Scalar element type of the engine.
///
/// Adds to `num_traits::Float` the conversions and the GEMM kernel hook the
/// engine needs. Implemented for `f32` and `f64` only.
pub trait Real:
    num_traits::Float
    + num_traits::NumAssign
    + fmt::Debug
    + fmt::Display
    + Send
    + Sync
    + 'static
{
    const NAME: &'static str;

    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;

    /// C := alpha * A(m x k) * B(k x n) + beta * C, arbitrary strides.
    ///
    /// # Safety
    /// Pointers must reference buffers valid for the given dimensions and
    /// strides; same contract as `matrixmultiply::dgemm`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );
}

impl Real for f64 {
    const NAME: &'static str = "f64";

    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self
    }

    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

impl Real for f32 {
    const NAME: &'static str = "f32";

    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self as f64
    }

    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }
}

/// Dense n-dimensional array, row-major, immutable once built.
#[derive(Clone)]
pub struct Tensor<F: Real> {
    shape: Vec<usize>,
    data: Arc<Vec<F>>,
}

impl<F: Real> Tensor<F> {
    /// Build from a flat buffer; `product(shape)` must equal `data.len()`.
    pub fn from_vec(shape: Vec<usize>, data: Vec<F>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim(
                "tensor",
                format!("shape {:?} needs {} values, got {}", shape, numel, data.len()),
            ));
        }
        Ok(Tensor {
            shape,
            data: Arc::new(data),
        })
    }

    pub fn zeros(shape: &[usize]) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![F::zero(); numel]),
        }
    }

    pub fn full(shape: &[usize], value: F) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: Arc::new(vec![value; numel]),
        }
    }

    pub fn scalar(value: F) -> Self {
        Tensor {
            shape: vec![],
            data: Arc::new(vec![value]),
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[F] {
        &self.data
    }

    /// The single value of a scalar (rank-0 or one-element) tensor.
    pub fn item(&self) -> F {
        debug_assert_eq!(self.numel(), 1, "item() on non-scalar tensor");
        self.data[0]
    }

    pub fn is_scalar(&self) -> bool {
        self.numel() == 1 && self.shape.len() <= 1
    }

    /// Same buffer, new shape. Element count must be preserved.
    pub fn reshape(&self, shape: Vec<usize>) -> Result<Self> {
        let numel: usize = shape.iter().product();
        if numel != self.numel() {
            return Err(Error::dim(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape, shape),
            ));
        }
        Ok(Tensor {
            shape,
            data: Arc::clone(&self.data),
        })
    }

    pub fn map(&self, f: impl Fn(F) -> F) -> Self {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&x| f(x)).collect()),
        }
    }

    /// Elementwise combine; shapes must match exactly.
    pub fn zip(&self, other: &Self, op: &'static str, f: impl Fn(F, F) -> F) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::dim(
                op,
                format!("shape mismatch {:?} vs {:?}", self.shape, other.shape),
            ));
        }
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| f(a, b))
            .collect();
        Ok(Tensor {
            shape: self.shape.clone(),
            data: Arc::new(data),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip(other, "add", |a, b| a + b)
    }

    pub fn scale(&self, s: F) -> Self {
        self.map(|x| x * s)
    }

    pub fn sum(&self) -> F {
        self.data.iter().fold(F::zero(), |acc, &x| acc + x)
    }

    /// True if every element is finite.
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Engine-level invariant: every op output must be finite.
    pub fn check_finite(self, op: &'static str) -> Result<Self> {
        if self.all_finite() {
            Ok(self)
        } else {
            Err(Error::NonFinite { op })
        }
    }

    /// Mutable view of the buffer, copying if it is shared.
    pub fn make_mut(&mut self) -> &mut [F] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn to_f64(&self) -> Tensor<f64> {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|x| x.as_f64()).collect()),
        }
    }

    pub fn from_f64_tensor(t: &Tensor<f64>) -> Tensor<F> {
        Tensor {
            shape: t.shape.clone(),
            data: Arc::new(t.data.iter().map(|&x| F::from_f64(x)).collect()),
        }
    }

    /// Largest absolute elementwise difference. Shapes must match.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.shape, other.shape, "max_abs_diff shape mismatch");
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(&a, &b)| (a - b).abs().as_f64())
            .fold(0.0, f64::max)
    }

    /// Exact bit equality of shape and data.
    pub fn bits_eq(&self, other: &Self) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(other.data.iter())
                .all(|(a, b)| a.as_f64().to_bits() == b.as_f64().to_bits())
    }
}

impl<F: Real> fmt::Debug for Tensor<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor{:?}", self.shape)?;
        if self.numel() <= 8 {
            write!(f, " {:?}", &self.data[..])
        } else {
            write!(f, " [{:?}, {:?}, ...]", self.data[0], self.data[1])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_vec_checks_length() {
        assert!(Tensor::<f64>::from_vec(vec![2, 3], vec![0.0; 6]).is_ok());
        assert!(Tensor::<f64>::from_vec(vec![2, 3], vec![0.0; 5]).is_err());
    }

    #[test]
    fn clone_shares_buffer() {
        let t = Tensor::<f64>::zeros(&[4]);
        let u = t.clone();
        assert!(Arc::ptr_eq(&t.data, &u.data));
    }

    #[test]
    fn check_finite_rejects_nan() {
        let t = Tensor::from_vec(vec![2], vec![1.0, f64::NAN]).unwrap();
        assert!(matches!(
            t.check_finite("test"),
            Err(Error::NonFinite { op: "test" })
        ));
    }

    #[test]
    fn reshape_preserves_data() {
        let t = Tensor::from_vec(vec![2, 3], (0..6).map(|i| i as f64).collect()).unwrap();
        let u = t.reshape(vec![3, 2]).unwrap();
        assert_eq!(u.shape(), &[3, 2]);
        assert_eq!(u.data(), t.data());
        assert!(t.reshape(vec![4, 2]).is_err());
    }
}
