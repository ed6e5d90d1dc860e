//! Dense row-major f64 tensors.
//!
//! Values are immutable after creation; autograd wraps them in [`crate::autograd::Var`].

use crate::error::{Error, Result};
use std::sync::Arc;

/// Dense n-dimensional array of 64-bit reals, row-major.
#[derive(Clone, Debug)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        assert_eq!(
            shape.iter().product::<usize>(),
            data.len(),
            "shape {:?} does not match data length {}",
            shape,
            data.len()
        );
        Tensor {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn zeros(shape: Vec<usize>) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, vec![0.0; n])
    }

    pub fn full(shape: Vec<usize>, value: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape, vec![value; n])
    }

    pub fn scalar(value: f64) -> Tensor {
        Tensor::new(vec![1], vec![value])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
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

    pub fn to_vec(&self) -> Vec<f64> {
        self.data.to_vec()
    }

    /// Scalar value of a 1-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.len(), 1, "item() on tensor of shape {:?}", self.shape);
        self.data[0]
    }

    pub fn reshaped(&self, shape: Vec<usize>) -> Tensor {
        assert_eq!(shape.iter().product::<usize>(), self.len());
        Tensor {
            shape,
            data: Arc::clone(&self.data),
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Tensor {
        Tensor::new(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    /// Elementwise sum of two same-shape tensors.
    pub fn add(&self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape);
        let data = self
            .data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| a + b)
            .collect();
        Tensor::new(self.shape.clone(), data)
    }

    /// Adds `other` into `self`, reusing the buffer when uniquely owned.
    pub fn accumulate(mut self, other: &Tensor) -> Tensor {
        assert_eq!(self.shape, other.shape);
        match Arc::get_mut(&mut self.data) {
            Some(buf) => {
                for (a, b) in buf.iter_mut().zip(other.data.iter()) {
                    *a += b;
                }
                self
            }
            None => self.add(other),
        }
    }

    /// Max |a - b| over all elements.
    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        assert_eq!(self.shape, other.shape);
        self.data
            .iter()
            .zip(other.data.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Errors if any element is non-finite.
    pub fn check_finite(&self, op: &str) -> Result<()> {
        if all_finite(&self.data) {
            Ok(())
        } else {
            Err(Error::NonFinite(op.to_string()))
        }
    }
}

/// Fast finiteness scan: x * 0.0 is 0.0 for finite x, NaN otherwise.
pub fn all_finite(data: &[f64]) -> bool {
    let mut acc = [0.0f64; 4];
    let mut chunks = data.chunks_exact(4);
    for c in &mut chunks {
        acc[0] += c[0] * 0.0;
        acc[1] += c[1] * 0.0;
        acc[2] += c[2] * 0.0;
        acc[3] += c[3] * 0.0;
    }
    let mut tail = 0.0;
    for &x in chunks.remainder() {
        tail += x * 0.0;
    }
    (acc[0] + acc[1] + acc[2] + acc[3] + tail) == 0.0
}

/// C = alpha * op(A) * op(B) + beta * C for row-major buffers.
///
/// When `trans_a` is set, `a` holds a (k x m) row-major buffer read as its
/// transpose; likewise for `trans_b`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert_eq!(a.len(), m * k);
    assert_eq!(b.len(), k * n);
    assert_eq!(c.len(), m * n);
    let (rsa, csa) = if trans_a {
        (1, m as isize)
    } else {
        (k as isize, 1)
    };
    let (rsb, csb) = if trans_b {
        (1, k as isize)
    } else {
        (n as isize, 1)
    };
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}
