//! The L-layer LSTM encoder: a single-example inference path and a batched,
//! padding-masked training path with its backward pass.
//!
//! Batches are right-padded. At a padded step the layer states carry through
//! unchanged, so the state at the last step equals each example's state at
//! its true final token; backward splits gradients the same way, which makes
//! padding exactly invisible to every gradient entry.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::{dropout_mask, lstm_cell_batch, lstm_cell_batch_backward, LstmCellCache};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

use super::ModelParameters;

/// Encoder output for one example: per-position top-layer hidden vectors and
/// the final per-layer `(h, c)` state that initializes the decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderOutput<S> {
    pub top_hiddens: Vec<Vec<S>>,
    pub final_state: Vec<(Vec<S>, Vec<S>)>,
}

/// Encodes one token-index sequence (already reversed by the text pipeline).
/// Runs without dropout; the input must be non-empty and in-vocabulary.
pub fn encode<S: Scalar>(tokens: &[usize], params: &ModelParameters<S>) -> Result<EncoderOutput<S>> {
    if tokens.is_empty() {
        return Err(Error::Input("cannot encode an empty utterance".into()));
    }
    let mut rng = RngState::new(0);
    let trace = EncoderTrace::run(params, &[tokens.to_vec()], &mut rng, false, 0.0)?;
    Ok(trace.output_for(0))
}

/// All activations of one batched encoder run, kept for the backward pass.
pub(crate) struct EncoderTrace<S> {
    pub batch: usize,
    pub steps: usize,
    tokens: Vec<Vec<usize>>,
    /// `mask[t][b]`: step `t` is a real token of example `b`.
    pub mask: Vec<Vec<bool>>,
    embeds: Vec<Tensor<S>>,
    /// Inputs to layers 1..L (post-dropout copies of the lower hidden).
    layer_inputs: Vec<Vec<Tensor<S>>>,
    drop_masks: Vec<Vec<Option<Tensor<S>>>>,
    caches: Vec<Vec<LstmCellCache<S>>>,
    /// Post-mask states, indexed `[layer][t]` with `t` in `0..=steps`.
    h: Vec<Vec<Tensor<S>>>,
    c: Vec<Vec<Tensor<S>>>,
}

impl<S: Scalar> EncoderTrace<S> {
    /// Runs the encoder over a batch of reversed index sequences.
    pub fn run(
        params: &ModelParameters<S>,
        inputs: &[Vec<usize>],
        rng: &mut RngState,
        training: bool,
        dropout_rate: f64,
    ) -> Result<EncoderTrace<S>> {
        let batch = inputs.len();
        let layers = params.encoder_layers.len();
        let n = params.dims.hidden;
        let e = params.dims.embed;
        let steps = inputs.iter().map(Vec::len).max().unwrap_or(0);
        if batch == 0 || steps == 0 {
            return Err(Error::Input("cannot encode an empty batch".into()));
        }
        for seq in inputs {
            if seq.is_empty() {
                return Err(Error::Input("cannot encode an empty utterance".into()));
            }
            if let Some(&bad) = seq.iter().find(|&&t| t >= params.dims.vocab_q) {
                return Err(Error::Vocabulary(alloc::format!(
                    "input token index {bad} outside |V_q| = {}",
                    params.dims.vocab_q
                )));
            }
        }

        let mut tokens = vec![vec![usize::MAX; batch]; steps];
        let mut mask = vec![vec![false; batch]; steps];
        for (b, seq) in inputs.iter().enumerate() {
            for (t, &tok) in seq.iter().enumerate() {
                tokens[t][b] = tok;
                mask[t][b] = true;
            }
        }

        let mut h: Vec<Vec<Tensor<S>>> = (0..layers)
            .map(|_| vec![Tensor::zeros(&[batch, n])])
            .collect();
        let mut c = h.clone();
        let mut embeds = Vec::with_capacity(steps);
        let mut layer_inputs = Vec::with_capacity(steps);
        let mut drop_masks = Vec::with_capacity(steps);
        let mut caches = Vec::with_capacity(steps);

        for t in 0..steps {
            let mut x = Tensor::zeros(&[batch, e]);
            for b in 0..batch {
                if mask[t][b] {
                    x.row_mut(b)
                        .copy_from_slice(params.input_embeddings.value.row(tokens[t][b]));
                }
            }
            embeds.push(x);

            let mut step_inputs: Vec<Tensor<S>> = Vec::with_capacity(layers.saturating_sub(1));
            let mut step_drops: Vec<Option<Tensor<S>>> = Vec::with_capacity(layers.saturating_sub(1));
            let mut step_caches: Vec<LstmCellCache<S>> = Vec::with_capacity(layers);

            for l in 0..layers {
                let input = if l == 0 {
                    &embeds[t]
                } else {
                    // Dropout between stacked layers, never on recurrence.
                    let mut dropped = h[l - 1][t + 1].clone();
                    let dmask = dropout_mask(dropped.shape(), dropout_rate, rng, training)?;
                    if let Some(m) = &dmask {
                        crate::nn::apply_mask(&mut dropped, m);
                    }
                    step_drops.push(dmask);
                    step_inputs.push(dropped);
                    step_inputs.last().unwrap()
                };
                let (h_raw, cache) =
                    lstm_cell_batch(input, &h[l][t], &c[l][t], &params.encoder_layers[l])?;
                // Carry states through padded steps unchanged.
                let mut h_new = h_raw;
                let mut c_new = cache.c.clone();
                for b in 0..batch {
                    if !mask[t][b] {
                        h_new.row_mut(b).copy_from_slice(h[l][t].row(b));
                        c_new.row_mut(b).copy_from_slice(c[l][t].row(b));
                    }
                }
                h[l].push(h_new);
                c[l].push(c_new);
                step_caches.push(cache);
            }
            layer_inputs.push(step_inputs);
            drop_masks.push(step_drops);
            caches.push(step_caches);
        }

        Ok(EncoderTrace {
            batch,
            steps,
            tokens,
            mask,
            embeds,
            layer_inputs,
            drop_masks,
            caches,
            h,
            c,
        })
    }

    /// Post-mask top-layer hidden states at step `t` (state index `t + 1`).
    pub fn top(&self, t: usize) -> &Tensor<S> {
        &self.h[self.h.len() - 1][t + 1]
    }

    /// All per-step top-layer hidden states, one `(batch, hidden)` tensor
    /// per encoder step.
    pub fn tops(&self) -> &[Tensor<S>] {
        let top = self.h.len() - 1;
        &self.h[top][1..]
    }

    /// Final post-mask state of layer `l`.
    pub fn final_h(&self, l: usize) -> &Tensor<S> {
        &self.h[l][self.steps]
    }

    pub fn final_c(&self, l: usize) -> &Tensor<S> {
        &self.c[l][self.steps]
    }

    pub fn layers(&self) -> usize {
        self.h.len()
    }

    /// Extracts the [`EncoderOutput`] view of one batch row, trimmed to the
    /// example's true length.
    pub fn output_for(&self, b: usize) -> EncoderOutput<S> {
        let len = (0..self.steps).take_while(|&t| self.mask[t][b]).count();
        let top_hiddens = (0..len).map(|t| self.top(t).row(b).to_vec()).collect();
        let final_state = (0..self.layers())
            .map(|l| (self.final_h(l).row(b).to_vec(), self.final_c(l).row(b).to_vec()))
            .collect();
        EncoderOutput {
            top_hiddens,
            final_state,
        }
    }

    /// Backward pass. `d_top[t]` is the gradient flowing into the top-layer
    /// hidden at step `t` (from attention); `d_final_h`/`d_final_c` flow into
    /// the final per-layer state (from decoder initialization). Parameter
    /// gradients accumulate into `params`.
    pub fn backward(
        &self,
        params: &mut ModelParameters<S>,
        d_top: &[Tensor<S>],
        d_final_h: Vec<Tensor<S>>,
        d_final_c: Vec<Tensor<S>>,
    ) -> Result<()> {
        let layers = self.layers();
        let batch = self.batch;
        let n = params.dims.hidden;
        let mut dh_next = d_final_h;
        let mut dc_next = d_final_c;

        for t in (0..self.steps).rev() {
            dh_next[layers - 1].add_assign(&d_top[t])?;
            // Gradient flowing from layer l into layer l-1 at this step.
            let mut d_from_above: Option<Tensor<S>> = None;
            for l in (0..layers).rev() {
                if let Some(d) = d_from_above.take() {
                    dh_next[l].add_assign(&d)?;
                }
                // Split by mask: padded rows carry straight through.
                let mut dh_cell = dh_next[l].clone();
                let mut dc_cell = dc_next[l].clone();
                let mut dh_prev = Tensor::zeros(&[batch, n]);
                let mut dc_prev = Tensor::zeros(&[batch, n]);
                for b in 0..batch {
                    if !self.mask[t][b] {
                        dh_prev.row_mut(b).copy_from_slice(dh_cell.row(b));
                        dc_prev.row_mut(b).copy_from_slice(dc_cell.row(b));
                        dh_cell.row_mut(b).fill(S::ZERO);
                        dc_cell.row_mut(b).fill(S::ZERO);
                    }
                }
                let input = if l == 0 {
                    &self.embeds[t]
                } else {
                    &self.layer_inputs[t][l - 1]
                };
                let mut dx = Tensor::zeros(input.shape());
                lstm_cell_batch_backward(
                    &dh_cell,
                    &dc_cell,
                    &self.caches[t][l],
                    input,
                    &self.h[l][t],
                    &self.c[l][t],
                    &mut params.encoder_layers[l],
                    &mut dx,
                    &mut dh_prev,
                    &mut dc_prev,
                )?;
                dh_next[l] = dh_prev;
                dc_next[l] = dc_prev;
                if l == 0 {
                    for b in 0..batch {
                        if self.mask[t][b] {
                            crate::tensor::axpy(
                                S::ONE,
                                dx.row(b),
                                params
                                    .input_embeddings
                                    .grad
                                    .row_mut(self.tokens[t][b]),
                            );
                        }
                    }
                } else {
                    if let Some(m) = &self.drop_masks[t][l - 1] {
                        crate::nn::apply_mask(&mut dx, m);
                    }
                    d_from_above = Some(dx);
                }
            }
            debug_assert!(d_from_above.is_none());
        }
        Ok(())
    }
}
