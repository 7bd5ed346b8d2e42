//! Neural-network primitives with explicit forward and backward passes:
//! affine maps, softmax, the LSTM cell, inverted dropout and cross-entropy.
//!
//! Vector forms operate on single examples; `*_batch_*` forms operate on
//! `(batch, dim)` matrices and are what the training path uses. Backward
//! functions accumulate into gradient buffers so one buffer can collect
//! contributions from many time steps.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::optim::Parameter;
use crate::rng::RngState;
use crate::scalar::{sigmoid, Scalar};
use crate::tensor::{
    add_row_broadcast, axpy, col_sums_acc, dot, matmul_nn_acc, matmul_nt, matmul_tn_acc, Tensor,
};

/// Guard added inside `ln` when scoring probabilities, so that a zero
/// probability yields a large finite loss instead of infinity.
pub const LOG_EPS: f64 = 1e-12;

// ---------------------------------------------------------------------------
// Affine
// ---------------------------------------------------------------------------

/// `W·x + b` for a single vector.
pub fn affine<S: Scalar>(x: &Tensor<S>, w: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    if x.rank() != 1 || w.rank() != 2 || b.rank() != 1 || w.cols() != x.len() || w.rows() != b.len()
    {
        return Err(Error::Dimension {
            op: "affine",
            detail: format!(
                "x {:?}, W {:?}, b {:?}",
                x.shape(),
                w.shape(),
                b.shape()
            ),
        });
    }
    let mut out = Vec::with_capacity(w.rows());
    for r in 0..w.rows() {
        out.push(dot(w.row(r), x.data()) + b.data()[r]);
    }
    Ok(Tensor::vector(out))
}

/// Backward of [`affine`]: given `dy`, accumulates `dW += dy·xᵀ`,
/// `db += dy`, `dx += Wᵀ·dy`.
pub fn affine_backward<S: Scalar>(
    dy: &Tensor<S>,
    x: &Tensor<S>,
    w: &Tensor<S>,
    dw: &mut Tensor<S>,
    db: &mut Tensor<S>,
    dx: &mut Tensor<S>,
) -> Result<()> {
    if dy.len() != w.rows() || x.len() != w.cols() || dw.shape() != w.shape()
        || db.len() != dy.len() || dx.len() != x.len()
    {
        return Err(Error::Dimension {
            op: "affine_backward",
            detail: format!("dy {:?}, x {:?}, W {:?}", dy.shape(), x.shape(), w.shape()),
        });
    }
    let cols = w.cols();
    for r in 0..w.rows() {
        let g = dy.data()[r];
        axpy(g, x.data(), &mut dw.data_mut()[r * cols..(r + 1) * cols]);
        db.data_mut()[r] += g;
        axpy(g, w.row(r), dx.data_mut());
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// In-place softmax over a slice, with max-subtraction for stability.
pub fn softmax_slice<S: Scalar>(z: &mut [S]) {
    let mut max = z[0];
    for &v in z.iter() {
        max = max.max(v);
    }
    let mut sum = S::ZERO;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

/// Softmax of a rank-1 tensor. Entries come out positive and sum to 1.
pub fn softmax<S: Scalar>(z: &Tensor<S>) -> Result<Tensor<S>> {
    if z.rank() != 1 || z.is_empty() {
        return Err(Error::Dimension {
            op: "softmax",
            detail: format!("expected non-empty vector, got {:?}", z.shape()),
        });
    }
    let mut out = z.clone();
    softmax_slice(out.data_mut());
    Ok(out)
}

/// Row-wise in-place softmax of a `(batch, dim)` matrix.
pub fn softmax_rows<S: Scalar>(x: &mut Tensor<S>) {
    let cols = x.cols();
    for r in 0..x.rows() {
        softmax_slice(&mut x.data_mut()[r * cols..(r + 1) * cols]);
    }
}

/// Backward through `p = softmax(z)` for one row: `dz += p ⊙ (dp − (dp·p))`.
pub fn softmax_backward_row<S: Scalar>(p: &[S], dp: &[S], dz: &mut [S]) {
    let inner = dot(dp, p);
    for ((dzi, &pi), &dpi) in dz.iter_mut().zip(p).zip(dp) {
        *dzi += pi * (dpi - inner);
    }
}

// ---------------------------------------------------------------------------
// LSTM cell
// ---------------------------------------------------------------------------

/// Weights of one LSTM layer. Gate pre-activations are a single affine map of
/// the concatenated `[x; h_prev]`, stored as separate input and recurrent
/// blocks; the four gate rows are concatenated in the fixed order
/// `[input, forget, output, candidate]` (i, f, o, g).
#[derive(Debug, Clone, PartialEq)]
pub struct LstmLayerParams<S> {
    /// `(4n, input_dim)`: maps the layer input to gate pre-activations.
    pub input_weights: Parameter<S>,
    /// `(4n, n)`: maps the previous hidden state to gate pre-activations.
    pub recurrent_weights: Parameter<S>,
    /// `(4n,)`.
    pub biases: Parameter<S>,
}

impl<S: Scalar> LstmLayerParams<S> {
    pub fn zeros(input_dim: usize, hidden_dim: usize) -> Self {
        LstmLayerParams {
            input_weights: Parameter::zeros(&[4 * hidden_dim, input_dim]),
            recurrent_weights: Parameter::zeros(&[4 * hidden_dim, hidden_dim]),
            biases: Parameter::zeros(&[4 * hidden_dim]),
        }
    }

    pub fn hidden_dim(&self) -> usize {
        self.recurrent_weights.value.cols()
    }

    pub fn input_dim(&self) -> usize {
        self.input_weights.value.cols()
    }
}

/// Cached activations of one batched cell application, needed for backward.
#[derive(Debug, Clone)]
pub struct LstmCellCache<S> {
    /// `(batch, 4n)` post-activation gates in `[i, f, o, g]` order.
    pub gates: Tensor<S>,
    /// `(batch, n)` new cell state.
    pub c: Tensor<S>,
    /// `(batch, n)` tanh of the new cell state.
    pub tanh_c: Tensor<S>,
}

/// Batched LSTM step: standard non-peephole update
/// `c = f ⊙ c_prev + i ⊙ g`, `h = o ⊙ tanh(c)`.
/// Returns the new hidden state, and the cache for the backward pass (the
/// cell state lives in the cache).
pub fn lstm_cell_batch<S: Scalar>(
    x: &Tensor<S>,
    h_prev: &Tensor<S>,
    c_prev: &Tensor<S>,
    p: &LstmLayerParams<S>,
) -> Result<(Tensor<S>, LstmCellCache<S>)> {
    let n = p.hidden_dim();
    let batch = x.rows();
    if x.cols() != p.input_dim() || h_prev.cols() != n || c_prev.cols() != n
        || h_prev.rows() != batch || c_prev.rows() != batch
    {
        return Err(Error::Dimension {
            op: "lstm_cell",
            detail: format!(
                "x {:?}, h_prev {:?}, c_prev {:?}, input_weights {:?}, recurrent_weights {:?}",
                x.shape(),
                h_prev.shape(),
                c_prev.shape(),
                p.input_weights.value.shape(),
                p.recurrent_weights.value.shape()
            ),
        });
    }

    let mut z = matmul_nt(x, &p.input_weights.value)?;
    let zh = matmul_nt(h_prev, &p.recurrent_weights.value)?;
    z.add_assign(&zh)?;
    add_row_broadcast(&mut z, p.biases.value.data())?;

    // Activate gates in place: sigmoid on i/f/o, tanh on g.
    for r in 0..batch {
        let row = z.row_mut(r);
        for v in row[..3 * n].iter_mut() {
            *v = sigmoid(*v);
        }
        for v in row[3 * n..].iter_mut() {
            *v = v.tanh();
        }
    }

    let mut c = Tensor::zeros(&[batch, n]);
    let mut tanh_c = Tensor::zeros(&[batch, n]);
    let mut h = Tensor::zeros(&[batch, n]);
    for r in 0..batch {
        let gates = z.row(r);
        let (gi, rest) = gates.split_at(n);
        let (gf, rest) = rest.split_at(n);
        let (go, gg) = rest.split_at(n);
        let cp = c_prev.row(r);
        let cr = c.row_mut(r);
        for k in 0..n {
            cr[k] = gf[k] * cp[k] + gi[k] * gg[k];
        }
        let tr = tanh_c.row_mut(r);
        for k in 0..n {
            tr[k] = c.at(r, k).tanh();
        }
        let hr = h.row_mut(r);
        for k in 0..n {
            hr[k] = go[k] * tanh_c.at(r, k);
        }
    }

    Ok((h, LstmCellCache { gates: z, c, tanh_c }))
}

/// Backward of [`lstm_cell_batch`]. `dh`/`dc` are the gradients flowing into
/// the step's outputs; parameter gradients are accumulated into `p`, and the
/// input-side gradients are accumulated into `dx`, `dh_prev`, `dc_prev`.
#[allow(clippy::too_many_arguments)]
pub fn lstm_cell_batch_backward<S: Scalar>(
    dh: &Tensor<S>,
    dc: &Tensor<S>,
    cache: &LstmCellCache<S>,
    x: &Tensor<S>,
    h_prev: &Tensor<S>,
    c_prev: &Tensor<S>,
    p: &mut LstmLayerParams<S>,
    dx: &mut Tensor<S>,
    dh_prev: &mut Tensor<S>,
    dc_prev: &mut Tensor<S>,
) -> Result<()> {
    let n = p.hidden_dim();
    let batch = dh.rows();
    let mut dz = Tensor::zeros(&[batch, 4 * n]);
    for r in 0..batch {
        let gates = cache.gates.row(r);
        let (gi, rest) = gates.split_at(n);
        let (gf, rest) = rest.split_at(n);
        let (go, gg) = rest.split_at(n);
        let tanh_c = cache.tanh_c.row(r);
        let cp = c_prev.row(r);
        let dhr = dh.row(r);
        let dcr = dc.row(r);
        let dzr = dz.row_mut(r);
        let dcp = dc_prev.row_mut(r);
        for k in 0..n {
            let do_ = dhr[k] * tanh_c[k];
            let dc_total = dcr[k] + dhr[k] * go[k] * (S::ONE - tanh_c[k] * tanh_c[k]);
            let di = dc_total * gg[k];
            let df = dc_total * cp[k];
            let dg = dc_total * gi[k];
            dcp[k] += dc_total * gf[k];
            dzr[k] = di * gi[k] * (S::ONE - gi[k]);
            dzr[n + k] = df * gf[k] * (S::ONE - gf[k]);
            dzr[2 * n + k] = do_ * go[k] * (S::ONE - go[k]);
            dzr[3 * n + k] = dg * (S::ONE - gg[k] * gg[k]);
        }
    }

    matmul_tn_acc(&mut p.input_weights.grad, &dz, x)?;
    matmul_tn_acc(&mut p.recurrent_weights.grad, &dz, h_prev)?;
    col_sums_acc(p.biases.grad.data_mut(), &dz)?;
    matmul_nn_acc(dx, &dz, &p.input_weights.value)?;
    matmul_nn_acc(dh_prev, &dz, &p.recurrent_weights.value)?;
    Ok(())
}

/// Single-example LSTM step, the shape given in the module contract:
/// `(h, c) = lstm_cell(x, h_prev, c_prev, params)`.
pub fn lstm_cell<S: Scalar>(
    x: &Tensor<S>,
    h_prev: &Tensor<S>,
    c_prev: &Tensor<S>,
    p: &LstmLayerParams<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    let xb = Tensor::matrix(1, x.len(), x.data().to_vec())?;
    let hb = Tensor::matrix(1, h_prev.len(), h_prev.data().to_vec())?;
    let cb = Tensor::matrix(1, c_prev.len(), c_prev.data().to_vec())?;
    let (h, cache) = lstm_cell_batch(&xb, &hb, &cb, p)?;
    Ok((
        Tensor::vector(h.data().to_vec()),
        Tensor::vector(cache.c.data().to_vec()),
    ))
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted dropout. In training mode each entry is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`, so expectations are
/// preserved and evaluation mode is the identity.
pub fn dropout<S: Scalar>(
    x: &Tensor<S>,
    rate: f64,
    rng: &mut RngState,
    training: bool,
) -> Result<Tensor<S>> {
    let mut out = x.clone();
    let mask = dropout_mask(x.shape(), rate, rng, training)?;
    if let Some(mask) = mask {
        apply_mask(&mut out, &mask);
    }
    Ok(out)
}

/// Draws a dropout mask holding `0` or `1/(1-rate)` per entry, or `None` when
/// dropout is inactive (eval mode or rate 0). Masks double as the backward
/// multiplier.
pub fn dropout_mask<S: Scalar>(
    shape: &[usize],
    rate: f64,
    rng: &mut RngState,
    training: bool,
) -> Result<Option<Tensor<S>>> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Config(format!(
            "dropout rate must be in [0, 1), got {rate}"
        )));
    }
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let keep_scale = S::from_f64(1.0 / (1.0 - rate));
    let mut mask = Tensor::zeros(shape);
    for v in mask.data_mut() {
        if !rng.bernoulli(rate) {
            *v = keep_scale;
        }
    }
    Ok(Some(mask))
}

/// Elementwise multiply by a mask (used for both forward and backward).
pub fn apply_mask<S: Scalar>(x: &mut Tensor<S>, mask: &Tensor<S>) {
    debug_assert_eq!(x.shape(), mask.shape());
    for (v, m) in x.data_mut().iter_mut().zip(mask.data()) {
        *v *= *m;
    }
}

// ---------------------------------------------------------------------------
// Cross-entropy
// ---------------------------------------------------------------------------

/// `-ln(dist[target] + LOG_EPS)` for a probability vector.
pub fn cross_entropy<S: Scalar>(dist: &Tensor<S>, target: usize) -> Result<S> {
    if target >= dist.len() {
        return Err(Error::Index {
            index: target,
            len: dist.len(),
        });
    }
    Ok(-(dist.data()[target] + S::from_f64(LOG_EPS)).ln())
}

/// Backward of `-ln(softmax(z)[target] + LOG_EPS)` directly in terms of the
/// logits, given the softmax output `p` of the row:
/// `dz += upstream · p_y/(p_y+eps) · (p − e_y)`.
pub fn xent_softmax_backward_row<S: Scalar>(p: &[S], target: usize, upstream: S, dz: &mut [S]) {
    let py = p[target];
    let scale = upstream * py / (py + S::from_f64(LOG_EPS));
    for (dzi, &pi) in dz.iter_mut().zip(p) {
        *dzi += scale * pi;
    }
    dz[target] -= scale;
}
