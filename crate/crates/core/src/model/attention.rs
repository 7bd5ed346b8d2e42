//! Dot-product soft attention over encoder hidden states.
//!
//! Scores are softmax-normalized dot products between the decoder's current
//! top hidden vector and every encoder top hidden vector; the context vector
//! is the score-weighted sum, and the prediction vector is
//! `tanh(W1·h + W2·c)`. Padded encoder positions are masked out of the
//! softmax.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::{axpy, dot, matmul_nn_acc, matmul_nt, matmul_tn_acc, Tensor};

use super::{EncoderOutput, ModelParameters};

/// Effectively `-inf` for masked score slots; exp underflows to exactly 0.
const MASKED_SCORE: f64 = -1.0e30;

/// Attention for a single decoder step: returns the score vector over
/// encoder positions (sums to 1) and the context vector.
pub fn attend<S: Scalar>(
    dec_hidden: &[S],
    enc: &EncoderOutput<S>,
    params: &ModelParameters<S>,
) -> Result<(Vec<S>, Vec<S>)> {
    if !params.attention_enabled {
        return Err(Error::Config(
            "attend called on a model with attention disabled".into(),
        ));
    }
    let n = dec_hidden.len();
    let mut scores: Vec<S> = enc
        .top_hiddens
        .iter()
        .map(|h| dot(h, dec_hidden))
        .collect();
    crate::nn::softmax_slice(&mut scores);
    let mut context = vec![S::ZERO; n];
    for (s, h) in scores.iter().zip(&enc.top_hiddens) {
        axpy(*s, h, &mut context);
    }
    Ok((scores, context))
}

/// Cached activations of one batched attention step.
#[derive(Debug, Clone)]
pub(crate) struct AttnCache<S> {
    /// `(rows, enc_steps)` softmax scores; padded slots are exactly 0.
    pub scores: Tensor<S>,
    /// `(rows, hidden)` context vectors.
    pub ctx: Tensor<S>,
    /// `(rows, hidden)` post-tanh prediction vectors.
    pub h_att: Tensor<S>,
}

/// Batched attention forward. `examples[r]` maps segment row `r` to its
/// encoder batch row; `enc_top[k]` is the `(enc_batch, hidden)` top hidden at
/// encoder step `k` and `enc_mask[k][example]` marks real positions.
pub(crate) fn attn_batch_forward<S: Scalar>(
    h_dec: &Tensor<S>,
    enc_top: &[Tensor<S>],
    enc_mask: &[Vec<bool>],
    examples: &[usize],
    params: &ModelParameters<S>,
) -> Result<AttnCache<S>> {
    let rows = h_dec.rows();
    let n = h_dec.cols();
    let steps = enc_top.len();
    let masked = S::from_f64(MASKED_SCORE);

    let mut scores = Tensor::zeros(&[rows, steps]);
    for r in 0..rows {
        let ex = examples[r];
        let hr = h_dec.row(r);
        let srow = scores.row_mut(r);
        for (k, sk) in srow.iter_mut().enumerate() {
            *sk = if enc_mask[k][ex] {
                dot(enc_top[k].row(ex), hr)
            } else {
                masked
            };
        }
    }
    crate::nn::softmax_rows(&mut scores);

    let mut ctx = Tensor::zeros(&[rows, n]);
    for r in 0..rows {
        let ex = examples[r];
        for k in 0..steps {
            let s = scores.at(r, k);
            if s != S::ZERO {
                axpy(s, enc_top[k].row(ex), ctx.row_mut(r));
            }
        }
    }

    let mut pre = matmul_nt(h_dec, &params.attn_hidden.value)?;
    let from_ctx = matmul_nt(&ctx, &params.attn_context.value)?;
    pre.add_assign(&from_ctx)?;
    for v in pre.data_mut() {
        *v = v.tanh();
    }
    Ok(AttnCache {
        scores,
        ctx,
        h_att: pre,
    })
}

/// Batched attention backward: accumulates into the attention projections,
/// the decoder hidden gradient `dh_dec`, and the encoder-side gradients
/// `d_enc_top[k]`.
pub(crate) fn attn_batch_backward<S: Scalar>(
    dh_att: &Tensor<S>,
    cache: &AttnCache<S>,
    h_dec: &Tensor<S>,
    enc_top: &[Tensor<S>],
    examples: &[usize],
    params: &mut ModelParameters<S>,
    dh_dec: &mut Tensor<S>,
    d_enc_top: &mut [Tensor<S>],
) -> Result<()> {
    let rows = h_dec.rows();
    let n = h_dec.cols();
    let steps = enc_top.len();

    // Through the tanh.
    let mut dpre = dh_att.clone();
    for (d, a) in dpre.data_mut().iter_mut().zip(cache.h_att.data()) {
        *d *= S::ONE - *a * *a;
    }

    matmul_tn_acc(&mut params.attn_hidden.grad, &dpre, h_dec)?;
    matmul_nn_acc(dh_dec, &dpre, &params.attn_hidden.value)?;
    matmul_tn_acc(&mut params.attn_context.grad, &dpre, &cache.ctx)?;
    let mut dctx = Tensor::zeros(&[rows, n]);
    matmul_nn_acc(&mut dctx, &dpre, &params.attn_context.value)?;

    for r in 0..rows {
        let ex = examples[r];
        let dctx_r = dctx.row(r);
        let s_row = cache.scores.row(r).to_vec();

        // Context backward and raw-score gradient.
        let mut ds = vec![S::ZERO; steps];
        for (k, dsk) in ds.iter_mut().enumerate() {
            if s_row[k] != S::ZERO {
                *dsk = dot(dctx_r, enc_top[k].row(ex));
                axpy(s_row[k], dctx_r, d_enc_top[k].row_mut(ex));
            }
        }
        // Softmax backward; masked slots have score 0 and contribute nothing.
        let inner = dot(&ds, &s_row);
        for k in 0..steps {
            let draw = s_row[k] * (ds[k] - inner);
            if draw != S::ZERO {
                axpy(draw, enc_top[k].row(ex), dh_dec.row_mut(r));
                axpy(draw, h_dec.row(r), d_enc_top[k].row_mut(ex));
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{DecoderMode, ModelDims};

    fn tiny_params(attention: bool) -> ModelParameters<f64> {
        ModelParameters::new(
            ModelDims {
                embed: 2,
                hidden: 2,
                layers: 1,
                vocab_q: 4,
                vocab_a: 4,
            },
            DecoderMode::Seq2Seq,
            attention,
        )
        .unwrap()
    }

    fn enc(tops: Vec<Vec<f64>>) -> EncoderOutput<f64> {
        EncoderOutput {
            top_hiddens: tops,
            final_state: vec![(vec![0.0; 2], vec![0.0; 2])],
        }
    }

    #[test]
    fn single_position_gets_all_attention() {
        let params = tiny_params(true);
        let enc = enc(vec![vec![0.3, -0.7]]);
        let (scores, ctx) = attend(&[1.0, 2.0], &enc, &params).unwrap();
        assert_eq!(scores, vec![1.0]);
        assert_eq!(ctx, vec![0.3, -0.7]);
    }

    #[test]
    fn orthogonal_query_gives_uniform_scores() {
        let params = tiny_params(true);
        let enc = enc(vec![vec![1.0, 0.0], vec![2.0, 0.0], vec![-1.0, 0.0]]);
        let (scores, _) = attend(&[0.0, 5.0], &enc, &params).unwrap();
        for s in scores {
            assert!((s - 1.0 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_position_scores_match_hand_computation() {
        // Encoder hiddens e1=[1,0], e2=[0,1]; query [1,0]:
        // scores = [e/(e+1), 1/(e+1)].
        let params = tiny_params(true);
        let enc = enc(vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let (scores, ctx) = attend(&[1.0, 0.0], &enc, &params).unwrap();
        let e = core::f64::consts::E;
        assert!((scores[0] - e / (e + 1.0)).abs() < 1e-12);
        assert!((scores[1] - 1.0 / (e + 1.0)).abs() < 1e-12);
        assert!((ctx[0] - scores[0]).abs() < 1e-12);
        assert!((ctx[1] - scores[1]).abs() < 1e-12);
    }

    #[test]
    fn attend_requires_attention_enabled() {
        let params = tiny_params(false);
        let enc = enc(vec![vec![1.0, 0.0]]);
        assert!(matches!(
            attend(&[1.0, 0.0], &enc, &params),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn scores_always_sum_to_one() {
        let params = tiny_params(true);
        let enc = enc(vec![vec![3.0, -1.0], vec![0.5, 0.5], vec![-2.0, 4.0]]);
        let (scores, _) = attend(&[0.7, -1.3], &enc, &params).unwrap();
        let sum: f64 = scores.iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }
}
