//! Teacher-forced scoring with explicit backward passes.
//!
//! Both decoders are scored through the same machinery: a *segment* is a
//! batch of token sequences decoded in lockstep from given initial states.
//! Sequence mode uses one segment whose rows start from the encoder's final
//! state. Tree mode linearizes each tree into level sequences and runs one
//! segment per depth: rows at depth d+1 start from the per-layer state
//! snapshot taken where their parent emitted `<n>`, receive `<(` as first
//! input, and get the snapshot's top hidden vector concatenated to every
//! step input (parent-feeding). Root rows use the encoder's final state as
//! both initializer and parent vector, keeping the layer-0 input width
//! uniform.
//!
//! Backward runs segments in reverse depth order, routing initial-state and
//! parent-vector gradients into the parent segment's state at the snapshot
//! step (or into the encoder for root rows), then backs through the encoder.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lftree::LfTree;
use crate::nn::{
    dropout_mask, lstm_cell_batch, lstm_cell_batch_backward, xent_softmax_backward_row,
    LstmCellCache, LOG_EPS,
};
use crate::rng::RngState;
use crate::scalar::Scalar;
use crate::tensor::{axpy, matmul_nn_acc, matmul_nt, matmul_tn_acc, Tensor};
use crate::text::vocab::{SEQ_END_INDEX, SEQ_START_INDEX, SUBTREE_START_INDEX};
use crate::text::Vocabulary;

use super::attention::{attn_batch_backward, attn_batch_forward, AttnCache};
use super::encoder::EncoderTrace;
use super::{DecoderMode, ModelParameters};

/// One linearized tree node with vocabulary indices: its token sequence
/// (ending in `</s>`), its depth, and the `(parent node, token position)`
/// link of the `<n>` that spawned it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexedNode {
    pub parent: Option<(usize, usize)>,
    pub tokens: Vec<usize>,
    pub depth: usize,
}

/// Converts a tree into indexed level sequences. Unknown target tokens are a
/// vocabulary error: output vocabularies keep all logical-form tokens.
pub fn index_tree(tree: &LfTree, vocab_a: &Vocabulary) -> Result<Vec<IndexedNode>> {
    tree.to_level_sequences()
        .iter()
        .map(|seq| {
            Ok(IndexedNode {
                parent: seq.parent,
                tokens: seq
                    .tokens
                    .iter()
                    .map(|t| vocab_a.index_strict(t))
                    .collect::<Result<Vec<usize>>>()?,
                depth: seq.depth,
            })
        })
        .collect()
}

/// Teacher-forcing targets of one batch.
#[derive(Debug, Clone)]
pub enum BatchTargets {
    /// Per example: target token indices including the trailing `</s>`.
    Seq(Vec<Vec<usize>>),
    /// Per example: indexed level sequences (see [`index_tree`]).
    Tree(Vec<Vec<IndexedNode>>),
}

/// A batch of indexed examples: reversed utterances plus targets.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: Vec<Vec<usize>>,
    pub targets: BatchTargets,
}

#[derive(Debug, Clone, Copy)]
enum RowInit {
    EncoderFinal,
    Snapshot {
        segment: usize,
        row: usize,
        state: usize,
    },
}

#[derive(Debug, Clone, Copy)]
struct RowSrc {
    example: usize,
    init: RowInit,
}

struct StepCache<S> {
    /// Layer-0 input `(rows, embed [+ hidden])`.
    x0: Tensor<S>,
    /// Post-dropout inputs to layers 1..L.
    upper_inputs: Vec<Tensor<S>>,
    drop_between: Vec<Option<Tensor<S>>>,
    cells: Vec<LstmCellCache<S>>,
    attn: Option<AttnCache<S>>,
    v_drop: Option<Tensor<S>>,
    /// Post-dropout vector entering the output projection.
    v: Tensor<S>,
    /// `(rows, |V_a|)` softmax outputs.
    probs: Tensor<S>,
}

struct Segment<S> {
    rows: Vec<RowSrc>,
    examples: Vec<usize>,
    steps: usize,
    inputs: Vec<Vec<usize>>,
    targets: Vec<Vec<usize>>,
    mask: Vec<Vec<bool>>,
    /// Post-mask states `[layer][0..=steps]`.
    h: Vec<Vec<Tensor<S>>>,
    c: Vec<Vec<Tensor<S>>>,
    step_caches: Vec<StepCache<S>>,
    parent_top: Option<Tensor<S>>,
    loss: f64,
    /// Gradients injected by child segments, keyed by state index.
    inj_dh: Vec<BTreeMap<usize, Tensor<S>>>,
    inj_dc: Vec<BTreeMap<usize, Tensor<S>>>,
}

/// A gradient routed from a segment to its parent's state buffers.
struct Injection<S> {
    segment: usize,
    layer: usize,
    state: usize,
    row: usize,
    dh: Vec<S>,
    /// Empty for parent-vector gradients (hidden only).
    dc: Vec<S>,
}

/// The forward activations of one scored batch; call [`TrainingGraph::backward`]
/// to accumulate gradients, or drop it for a forward-only evaluation.
pub struct TrainingGraph<S> {
    enc: EncoderTrace<S>,
    segments: Vec<Segment<S>>,
    /// Summed negative log-likelihood over all scored tokens.
    pub loss: f64,
    /// Number of scored target tokens.
    pub target_tokens: usize,
}

#[allow(clippy::too_many_arguments)]
fn run_segment<S: Scalar>(
    params: &ModelParameters<S>,
    enc: &EncoderTrace<S>,
    prev: &[Segment<S>],
    rows: Vec<RowSrc>,
    row_targets: &[Vec<usize>],
    start_token: usize,
    rng: &mut RngState,
    training: bool,
    dropout_rate: f64,
) -> Result<Segment<S>> {
    let batch = rows.len();
    let layers = params.decoder_layers.len();
    let n = params.dims.hidden;
    let e = params.dims.embed;
    let parent_feed = params.mode == DecoderMode::Seq2Tree;
    let enc_top_layer = enc.layers() - 1;
    let steps = row_targets.iter().map(Vec::len).max().unwrap_or(0);

    let mut inputs = vec![vec![usize::MAX; batch]; steps];
    let mut targets = vec![vec![usize::MAX; batch]; steps];
    let mut mask = vec![vec![false; batch]; steps];
    for (b, tgt) in row_targets.iter().enumerate() {
        for (t, &tok) in tgt.iter().enumerate() {
            inputs[t][b] = if t == 0 { start_token } else { tgt[t - 1] };
            targets[t][b] = tok;
            mask[t][b] = true;
        }
    }

    // Gather initial states and (in tree mode) parent vectors.
    fn gather<'a, S: Scalar>(
        cell_side: bool,
        l: usize,
        src: &RowSrc,
        enc: &'a EncoderTrace<S>,
        prev: &'a [Segment<S>],
    ) -> &'a [S] {
        match src.init {
            RowInit::EncoderFinal => {
                let t = if cell_side { enc.final_c(l) } else { enc.final_h(l) };
                t.row(src.example)
            }
            RowInit::Snapshot { segment, row, state } => {
                let seg = &prev[segment];
                let t = if cell_side { &seg.c[l][state] } else { &seg.h[l][state] };
                t.row(row)
            }
        }
    }
    let mut h: Vec<Vec<Tensor<S>>> = Vec::with_capacity(layers);
    let mut c: Vec<Vec<Tensor<S>>> = Vec::with_capacity(layers);
    for l in 0..layers {
        let mut h0 = Tensor::zeros(&[batch, n]);
        let mut c0 = Tensor::zeros(&[batch, n]);
        for (b, src) in rows.iter().enumerate() {
            h0.row_mut(b).copy_from_slice(gather(false, l, src, enc, prev));
            c0.row_mut(b).copy_from_slice(gather(true, l, src, enc, prev));
        }
        h.push(vec![h0]);
        c.push(vec![c0]);
    }
    let parent_top = if parent_feed {
        let mut pt = Tensor::zeros(&[batch, n]);
        for (b, src) in rows.iter().enumerate() {
            pt.row_mut(b)
                .copy_from_slice(gather(false, enc_top_layer, src, enc, prev));
        }
        Some(pt)
    } else {
        None
    };

    let examples: Vec<usize> = rows.iter().map(|r| r.example).collect();
    let x0_width = e + if parent_feed { n } else { 0 };
    let mut step_caches = Vec::with_capacity(steps);
    let mut loss = 0.0f64;
    let log_eps = S::from_f64(LOG_EPS);

    for t in 0..steps {
        let mut x0 = Tensor::zeros(&[batch, x0_width]);
        for b in 0..batch {
            if mask[t][b] {
                x0.row_mut(b)[..e]
                    .copy_from_slice(params.output_embeddings.value.row(inputs[t][b]));
            }
            if let Some(pt) = &parent_top {
                x0.row_mut(b)[e..].copy_from_slice(pt.row(b));
            }
        }

        let mut upper_inputs: Vec<Tensor<S>> = Vec::with_capacity(layers.saturating_sub(1));
        let mut drop_between: Vec<Option<Tensor<S>>> = Vec::with_capacity(layers.saturating_sub(1));
        let mut cells: Vec<LstmCellCache<S>> = Vec::with_capacity(layers);
        for l in 0..layers {
            let input = if l == 0 {
                &x0
            } else {
                let mut dropped = h[l - 1][t + 1].clone();
                let dmask = dropout_mask(dropped.shape(), dropout_rate, rng, training)?;
                if let Some(m) = &dmask {
                    crate::nn::apply_mask(&mut dropped, m);
                }
                drop_between.push(dmask);
                upper_inputs.push(dropped);
                upper_inputs.last().unwrap()
            };
            let (h_raw, cache) =
                lstm_cell_batch(input, &h[l][t], &c[l][t], &params.decoder_layers[l])?;
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
            cells.push(cache);
        }

        let top = &h[layers - 1][t + 1];
        let attn = if params.attention_enabled {
            Some(attn_batch_forward(
                top,
                enc.tops(),
                &enc.mask,
                &examples,
                params,
            )?)
        } else {
            None
        };
        let mut v = match &attn {
            Some(cache) => cache.h_att.clone(),
            None => top.clone(),
        };
        let v_drop = dropout_mask(v.shape(), dropout_rate, rng, training)?;
        if let Some(m) = &v_drop {
            crate::nn::apply_mask(&mut v, m);
        }
        let mut probs = matmul_nt(&v, &params.output_projection.value)?;
        crate::nn::softmax_rows(&mut probs);
        for b in 0..batch {
            if mask[t][b] {
                let p = probs.at(b, targets[t][b]);
                loss -= (p + log_eps).ln().to_f64();
            }
        }
        step_caches.push(StepCache {
            x0,
            upper_inputs,
            drop_between,
            cells,
            attn,
            v_drop,
            v,
            probs,
        });
    }

    Ok(Segment {
        rows,
        examples,
        steps,
        inputs,
        targets,
        mask,
        h,
        c,
        step_caches,
        parent_top,
        loss,
        inj_dh: (0..layers).map(|_| BTreeMap::new()).collect(),
        inj_dc: (0..layers).map(|_| BTreeMap::new()).collect(),
    })
}

#[allow(clippy::too_many_arguments)]
fn segment_backward<S: Scalar>(
    seg: &Segment<S>,
    seg_index: usize,
    params: &mut ModelParameters<S>,
    enc: &EncoderTrace<S>,
    d_enc_top: &mut [Tensor<S>],
    d_enc_final_h: &mut [Tensor<S>],
    d_enc_final_c: &mut [Tensor<S>],
) -> Result<Vec<Injection<S>>> {
    let batch = seg.rows.len();
    let layers = params.decoder_layers.len();
    let n = params.dims.hidden;
    let e = params.dims.embed;
    let enc_top_layer = enc.layers() - 1;
    let vocab_a = params.dims.vocab_a;

    let mut dh_next: Vec<Tensor<S>> = (0..layers).map(|_| Tensor::zeros(&[batch, n])).collect();
    let mut dc_next = dh_next.clone();
    let mut d_parent_top = seg
        .parent_top
        .as_ref()
        .map(|_| Tensor::zeros(&[batch, n]));

    for t in (0..seg.steps).rev() {
        for l in 0..layers {
            if let Some(inj) = seg.inj_dh[l].get(&(t + 1)) {
                dh_next[l].add_assign(inj)?;
            }
            if let Some(inj) = seg.inj_dc[l].get(&(t + 1)) {
                dc_next[l].add_assign(inj)?;
            }
        }
        let step = &seg.step_caches[t];

        // Output side: fused softmax + cross-entropy backward.
        let mut dlogits = Tensor::zeros(&[batch, vocab_a]);
        for b in 0..batch {
            if seg.mask[t][b] {
                xent_softmax_backward_row(
                    step.probs.row(b),
                    seg.targets[t][b],
                    S::ONE,
                    dlogits.row_mut(b),
                );
            }
        }
        matmul_tn_acc(&mut params.output_projection.grad, &dlogits, &step.v)?;
        let mut dv = Tensor::zeros(&[batch, n]);
        matmul_nn_acc(&mut dv, &dlogits, &params.output_projection.value)?;
        if let Some(m) = &step.v_drop {
            crate::nn::apply_mask(&mut dv, m);
        }

        let top = &seg.h[layers - 1][t + 1];
        let d_top_out = match &step.attn {
            Some(cache) => {
                let mut dh_dec = Tensor::zeros(&[batch, n]);
                attn_batch_backward(
                    &dv,
                    cache,
                    top,
                    enc.tops(),
                    &seg.examples,
                    params,
                    &mut dh_dec,
                    d_enc_top,
                )?;
                dh_dec
            }
            None => dv,
        };
        dh_next[layers - 1].add_assign(&d_top_out)?;

        let mut d_from_above: Option<Tensor<S>> = None;
        for l in (0..layers).rev() {
            if let Some(d) = d_from_above.take() {
                dh_next[l].add_assign(&d)?;
            }
            let mut dh_cell = dh_next[l].clone();
            let mut dc_cell = dc_next[l].clone();
            let mut dh_prev = Tensor::zeros(&[batch, n]);
            let mut dc_prev = Tensor::zeros(&[batch, n]);
            for b in 0..batch {
                if !seg.mask[t][b] {
                    dh_prev.row_mut(b).copy_from_slice(dh_cell.row(b));
                    dc_prev.row_mut(b).copy_from_slice(dc_cell.row(b));
                    dh_cell.row_mut(b).fill(S::ZERO);
                    dc_cell.row_mut(b).fill(S::ZERO);
                }
            }
            let input = if l == 0 {
                &step.x0
            } else {
                &step.upper_inputs[l - 1]
            };
            let mut dx = Tensor::zeros(input.shape());
            lstm_cell_batch_backward(
                &dh_cell,
                &dc_cell,
                &step.cells[l],
                input,
                &seg.h[l][t],
                &seg.c[l][t],
                &mut params.decoder_layers[l],
                &mut dx,
                &mut dh_prev,
                &mut dc_prev,
            )?;
            dh_next[l] = dh_prev;
            dc_next[l] = dc_prev;
            if l == 0 {
                for b in 0..batch {
                    if seg.mask[t][b] {
                        axpy(
                            S::ONE,
                            &dx.row(b)[..e],
                            params.output_embeddings.grad.row_mut(seg.inputs[t][b]),
                        );
                    }
                    if let Some(dpt) = &mut d_parent_top {
                        axpy(S::ONE, &dx.row(b)[e..], dpt.row_mut(b));
                    }
                }
            } else {
                if let Some(m) = &step.drop_between[l - 1] {
                    crate::nn::apply_mask(&mut dx, m);
                }
                d_from_above = Some(dx);
            }
        }
    }

    // Route initial-state and parent-vector gradients to their sources.
    let mut injections = Vec::new();
    let mut route = |layer: usize, src: &RowSrc, dh: &[S], dc: Option<&[S]>| {
        match src.init {
            RowInit::EncoderFinal => {
                axpy(S::ONE, dh, d_enc_final_h[layer].row_mut(src.example));
                if let Some(dc) = dc {
                    axpy(S::ONE, dc, d_enc_final_c[layer].row_mut(src.example));
                }
            }
            RowInit::Snapshot { segment, row: prow, state } => {
                debug_assert!(segment < seg_index);
                injections.push(Injection {
                    segment,
                    layer,
                    state,
                    row: prow,
                    dh: dh.to_vec(),
                    dc: dc.map(|d| d.to_vec()).unwrap_or_default(),
                });
            }
        }
    };
    for l in 0..layers {
        for (b, src) in seg.rows.iter().enumerate() {
            route(l, src, dh_next[l].row(b), Some(dc_next[l].row(b)));
        }
    }
    if let Some(dpt) = &d_parent_top {
        for (b, src) in seg.rows.iter().enumerate() {
            route(enc_top_layer, src, dpt.row(b), None);
        }
    }
    Ok(injections)
}

impl<S: Scalar> TrainingGraph<S> {
    /// Runs the forward pass over a batch, building every cache the backward
    /// pass needs. Dropout draws (when `training`) happen in execution
    /// order: encoder steps first, then each segment in depth order, within
    /// a step bottom layer to softmax.
    pub fn forward(
        params: &ModelParameters<S>,
        batch: &Batch,
        rng: &mut RngState,
        training: bool,
        dropout_rate: f64,
    ) -> Result<TrainingGraph<S>> {
        let examples = batch.inputs.len();
        let validate_target = |tokens: &[usize]| -> Result<()> {
            if tokens.last() != Some(&SEQ_END_INDEX) {
                return Err(Error::Input(format!(
                    "target sequence must end with </s> (index {SEQ_END_INDEX})"
                )));
            }
            if let Some(&bad) = tokens.iter().find(|&&t| t >= params.dims.vocab_a) {
                return Err(Error::Vocabulary(format!(
                    "target token index {bad} outside |V_a| = {}",
                    params.dims.vocab_a
                )));
            }
            Ok(())
        };

        let enc = EncoderTrace::run(params, &batch.inputs, rng, training, dropout_rate)?;
        let mut segments: Vec<Segment<S>> = Vec::new();
        let mut target_tokens = 0usize;

        match &batch.targets {
            BatchTargets::Seq(targets) => {
                if targets.len() != examples {
                    return Err(Error::Input("targets and inputs differ in length".into()));
                }
                for t in targets {
                    validate_target(t)?;
                    target_tokens += t.len();
                }
                let rows: Vec<RowSrc> = (0..examples)
                    .map(|b| RowSrc {
                        example: b,
                        init: RowInit::EncoderFinal,
                    })
                    .collect();
                segments.push(run_segment(
                    params,
                    &enc,
                    &segments,
                    rows,
                    targets,
                    SEQ_START_INDEX,
                    rng,
                    training,
                    dropout_rate,
                )?);
            }
            BatchTargets::Tree(trees) => {
                if params.mode != DecoderMode::Seq2Tree {
                    return Err(Error::Config(
                        "tree targets require a seq2tree-mode model".into(),
                    ));
                }
                if trees.len() != examples {
                    return Err(Error::Input("targets and inputs differ in length".into()));
                }
                let mut max_depth = 0;
                for nodes in trees {
                    if nodes.is_empty() {
                        return Err(Error::Input("example with no tree nodes".into()));
                    }
                    for node in nodes {
                        validate_target(&node.tokens)?;
                        target_tokens += node.tokens.len();
                        max_depth = max_depth.max(node.depth);
                    }
                }
                // Segment row of each (example, local node id). A node's
                // parent is always one depth up, i.e. in the previous
                // segment, with to_level_sequences breadth-first ids.
                let mut locator: BTreeMap<(usize, usize), usize> = BTreeMap::new();
                for depth in 0..=max_depth {
                    let mut rows = Vec::new();
                    let mut row_targets = Vec::new();
                    for (ex, nodes) in trees.iter().enumerate() {
                        for (local_id, node) in nodes.iter().enumerate() {
                            if node.depth != depth {
                                continue;
                            }
                            let init = match node.parent {
                                None => RowInit::EncoderFinal,
                                Some((parent_local, pos)) => RowInit::Snapshot {
                                    segment: depth - 1,
                                    row: *locator.get(&(ex, parent_local)).ok_or_else(|| {
                                        Error::Structure(format!(
                                            "node {local_id} of example {ex} references a \
                                             parent outside the previous depth"
                                        ))
                                    })?,
                                    state: pos + 1,
                                },
                            };
                            locator.insert((ex, local_id), rows.len());
                            rows.push(RowSrc { example: ex, init });
                            row_targets.push(node.tokens.clone());
                        }
                    }
                    let start = if depth == 0 {
                        SEQ_START_INDEX
                    } else {
                        SUBTREE_START_INDEX
                    };
                    segments.push(run_segment(
                        params,
                        &enc,
                        &segments,
                        rows,
                        &row_targets,
                        start,
                        rng,
                        training,
                        dropout_rate,
                    )?);
                }
            }
        }

        let loss = segments.iter().map(|s| s.loss).sum();
        Ok(TrainingGraph {
            enc,
            segments,
            loss,
            target_tokens,
        })
    }

    /// Backward pass: accumulates parameter gradients for `loss`.
    pub fn backward(mut self, params: &mut ModelParameters<S>) -> Result<()> {
        let n = params.dims.hidden;
        let enc_layers = self.enc.layers();
        let batch = self.enc.batch;
        let mut d_enc_top: Vec<Tensor<S>> = (0..self.enc.steps)
            .map(|_| Tensor::zeros(&[batch, n]))
            .collect();
        let mut d_final_h: Vec<Tensor<S>> = (0..enc_layers)
            .map(|_| Tensor::zeros(&[batch, n]))
            .collect();
        let mut d_final_c = d_final_h.clone();

        for k in (0..self.segments.len()).rev() {
            let injections = segment_backward(
                &self.segments[k],
                k,
                params,
                &self.enc,
                &mut d_enc_top,
                &mut d_final_h,
                &mut d_final_c,
            )?;
            for inj in injections {
                let seg = &mut self.segments[inj.segment];
                let rows = seg.rows.len();
                let dh = seg.inj_dh[inj.layer]
                    .entry(inj.state)
                    .or_insert_with(|| Tensor::zeros(&[rows, n]));
                axpy(S::ONE, &inj.dh, dh.row_mut(inj.row));
                if !inj.dc.is_empty() {
                    let dc = seg.inj_dc[inj.layer]
                        .entry(inj.state)
                        .or_insert_with(|| Tensor::zeros(&[rows, n]));
                    axpy(S::ONE, &inj.dc, dc.row_mut(inj.row));
                }
            }
        }
        self.enc.backward(params, &d_enc_top, d_final_h, d_final_c)
    }
}

/// Teacher-forced log-probability of a flat target sequence (which must end
/// with `</s>`). Dropout is active only when `training` is set.
pub fn seq_log_prob<S: Scalar>(
    q_tokens: &[usize],
    a_tokens: &[usize],
    params: &ModelParameters<S>,
    rng: &mut RngState,
    training: bool,
    dropout_rate: f64,
) -> Result<f64> {
    let batch = Batch {
        inputs: vec![q_tokens.to_vec()],
        targets: BatchTargets::Seq(vec![a_tokens.to_vec()]),
    };
    let graph = TrainingGraph::forward(params, &batch, rng, training, dropout_rate)?;
    Ok(-graph.loss)
}

/// Teacher-forced log-probability of a tree under the hierarchical decoder:
/// the sum of its level-sequence scores, each child scored from the state
/// snapshot at its parent's `<n>` step.
#[allow(clippy::too_many_arguments)]
pub fn tree_log_prob<S: Scalar>(
    q_tokens: &[usize],
    tree: &LfTree,
    vocab_a: &Vocabulary,
    params: &ModelParameters<S>,
    rng: &mut RngState,
    training: bool,
    dropout_rate: f64,
    max_depth: usize,
) -> Result<f64> {
    if tree.depth() > max_depth {
        return Err(Error::Structure(format!(
            "tree depth {} exceeds the cap {max_depth}",
            tree.depth()
        )));
    }
    let nodes = index_tree(tree, vocab_a)?;
    let batch = Batch {
        inputs: vec![q_tokens.to_vec()],
        targets: BatchTargets::Tree(vec![nodes]),
    };
    let graph = TrainingGraph::forward(params, &batch, rng, training, dropout_rate)?;
    Ok(-graph.loss)
}
