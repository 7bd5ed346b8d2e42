//! Dense row-major tensors and the handful of matrix kernels the model needs.
//!
//! Rank 1 and rank 2 cover everything; batched activations are `(batch, dim)`
//! matrices. The three matmul orientations below are exactly the ones an
//! affine layer needs for its forward pass and its two backward products.
//! Every kernel reduces along contiguous memory and sums in an order that
//! depends only on the reduction length, so a batch of rows produces
//! bit-identical results to processing the rows one at a time.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Dense tensor: a shape and a row-major data buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// All-zero tensor of the given shape.
    pub fn zeros(shape: &[usize]) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::ZERO; len],
        }
    }

    /// Builds a tensor from raw data; the element count must match the shape.
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        let expected: usize = shape.iter().product();
        if expected != data.len() {
            return Err(Error::Dimension {
                op: "Tensor::from_vec",
                detail: format!(
                    "shape {shape:?} implies {expected} elements, got {}",
                    data.len()
                ),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    /// Rank-1 tensor from a vector.
    pub fn vector(data: Vec<S>) -> Self {
        Tensor {
            shape: vec![data.len()],
            data,
        }
    }

    /// Rank-2 tensor from row-major data.
    pub fn matrix(rows: usize, cols: usize, data: Vec<S>) -> Result<Self> {
        Tensor::from_vec(&[rows, cols], data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    /// Total number of elements.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    /// Rows of a rank-2 tensor (or length of a rank-1 tensor).
    pub fn rows(&self) -> usize {
        match self.shape.len() {
            1 => self.shape[0],
            2 => self.shape[0],
            r => panic!("rows() on rank-{r} tensor"),
        }
    }

    /// Columns of a rank-2 tensor.
    pub fn cols(&self) -> usize {
        assert!(self.shape.len() == 2, "cols() on rank-{} tensor", self.rank());
        self.shape[1]
    }

    pub fn data(&self) -> &[S] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    /// Row `r` of a rank-2 tensor as a slice.
    pub fn row(&self, r: usize) -> &[S] {
        let c = self.cols();
        &self.data[r * c..(r + 1) * c]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        let c = self.cols();
        &mut self.data[r * c..(r + 1) * c]
    }

    /// Element of a rank-2 tensor.
    pub fn at(&self, r: usize, c: usize) -> S {
        self.data[r * self.cols() + c]
    }

    pub fn set(&mut self, r: usize, c: usize, value: S) {
        let cols = self.cols();
        self.data[r * cols + c] = value;
    }

    pub fn fill(&mut self, value: S) {
        self.data.fill(value);
    }

    /// True when every element is finite (no NaN/Inf).
    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Elementwise `self += other`.
    pub fn add_assign(&mut self, other: &Tensor<S>) -> Result<()> {
        if self.shape != other.shape {
            return Err(Error::Dimension {
                op: "Tensor::add_assign",
                detail: format!("lhs {:?} vs rhs {:?}", self.shape, other.shape),
            });
        }
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    /// Elementwise conversion to another precision.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|x| T::from_f64(x.to_f64())).collect(),
        }
    }
}

/// Dot product with four independent accumulators. The summation order is a
/// function of the slice length only, which keeps batched and one-row-at-a-
/// time evaluation bit-identical.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [S::ZERO; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = S::ZERO;
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += *x * *y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// `y += alpha * x`.
pub fn axpy<S: Scalar>(alpha: S, x: &[S], y: &mut [S]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * *xi;
    }
}

/// `a (m×k) · bᵀ (n×k) -> (m×n)`: every output element is a dot product of
/// two contiguous rows. This is the forward orientation `x · Wᵀ`.
pub fn matmul_nt<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    if a.rank() != 2 || b.rank() != 2 || a.cols() != b.cols() {
        return Err(Error::Dimension {
            op: "matmul_nt",
            detail: format!("lhs {:?} vs rhs {:?}", a.shape(), b.shape()),
        });
    }
    let (m, n, k) = (a.rows(), b.rows(), a.cols());
    let mut out = Tensor::zeros(&[m, n]);
    for i in 0..m {
        let ai = a.row(i);
        let oi = out.row_mut(i);
        for (j, o) in oi.iter_mut().enumerate() {
            *o = dot(ai, &b.data[j * k..(j + 1) * k]);
        }
    }
    Ok(out)
}

/// `out (m×n) += a (m×k) · b (k×n)`: accumulated row-axpy form, used for the
/// input-gradient product `dX += dZ · W`.
pub fn matmul_nn_acc<S: Scalar>(out: &mut Tensor<S>, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    let conforms = a.rank() == 2
        && b.rank() == 2
        && out.rank() == 2
        && a.cols() == b.rows()
        && out.rows() == a.rows()
        && out.cols() == b.cols();
    if !conforms {
        return Err(Error::Dimension {
            op: "matmul_nn_acc",
            detail: format!(
                "out {:?} vs lhs {:?} · rhs {:?}",
                out.shape(),
                a.shape(),
                b.shape()
            ),
        });
    }
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    for i in 0..m {
        let ai = a.row(i);
        let oi = &mut out.data[i * n..(i + 1) * n];
        for (j, &aij) in ai.iter().enumerate().take(k) {
            axpy(aij, &b.data[j * n..(j + 1) * n], oi);
        }
    }
    Ok(())
}

/// `out (k×n) += aᵀ (k×m)ᵀ... ` precisely: `out += a (m×k)ᵀ · b (m×n)`,
/// the weight-gradient product `dW += dZᵀ · X` with `a = dZ`, `b = X`.
pub fn matmul_tn_acc<S: Scalar>(out: &mut Tensor<S>, a: &Tensor<S>, b: &Tensor<S>) -> Result<()> {
    let conforms = a.rank() == 2
        && b.rank() == 2
        && out.rank() == 2
        && a.rows() == b.rows()
        && out.rows() == a.cols()
        && out.cols() == b.cols();
    if !conforms {
        return Err(Error::Dimension {
            op: "matmul_tn_acc",
            detail: format!(
                "out {:?} vs lhsᵀ {:?} · rhs {:?}",
                out.shape(),
                a.shape(),
                b.shape()
            ),
        });
    }
    let (m, k) = (a.rows(), a.cols());
    let n = b.cols();
    for i in 0..m {
        let ai = a.row(i);
        let bi = &b.data[i * n..(i + 1) * n];
        for (j, &aij) in ai.iter().enumerate().take(k) {
            axpy(aij, bi, &mut out.data[j * n..(j + 1) * n]);
        }
    }
    Ok(())
}

/// Adds a bias row to every row of a `(batch, dim)` matrix.
pub fn add_row_broadcast<S: Scalar>(x: &mut Tensor<S>, bias: &[S]) -> Result<()> {
    if x.rank() != 2 || x.cols() != bias.len() {
        return Err(Error::Dimension {
            op: "add_row_broadcast",
            detail: format!("matrix {:?} vs bias [{}]", x.shape(), bias.len()),
        });
    }
    let n = x.cols();
    for r in 0..x.rows() {
        for (xi, bi) in x.data[r * n..(r + 1) * n].iter_mut().zip(bias) {
            *xi += *bi;
        }
    }
    Ok(())
}

/// `out += column sums of a`: the bias gradient `db += Σ_rows dZ`.
pub fn col_sums_acc<S: Scalar>(out: &mut [S], a: &Tensor<S>) -> Result<()> {
    if a.rank() != 2 || a.cols() != out.len() {
        return Err(Error::Dimension {
            op: "col_sums_acc",
            detail: format!("matrix {:?} vs out [{}]", a.shape(), out.len()),
        });
    }
    let n = a.cols();
    for r in 0..a.rows() {
        for (o, x) in out.iter_mut().zip(&a.data[r * n..(r + 1) * n]) {
            *o += *x;
        }
    }
    Ok(())
}
