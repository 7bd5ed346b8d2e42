//! Inference-side decoding: greedy and beam search for the sequence decoder,
//! and nonterminal-queue decoding for the tree decoder.
//!
//! Tree decoding keeps a FIFO queue of pending subtree expansions. Jobs are
//! popped level by level and the batched implementation steps all jobs of a
//! level in lockstep; enqueue order, cap accounting and every floating-point
//! operation are arranged so that batched and strictly sequential decoding
//! produce identical results (the kernels reduce row by row, so batching a
//! row never changes its arithmetic).

use alloc::collections::VecDeque;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::lftree::{LfNode, LfTree};
use crate::nn::LOG_EPS;
use crate::scalar::Scalar;
use crate::tensor::{axpy, dot, matmul_nt, Tensor};
use crate::text::vocab::{NONTERM_INDEX, SEQ_END_INDEX, SEQ_START_INDEX, SUBTREE_START_INDEX};
use crate::text::Vocabulary;

use super::encoder::{encode, EncoderOutput};
use super::{DecoderMode, ModelParameters};

/// Decoder state between steps: per-layer `(h, c)`, the previously emitted
/// (or gold) token, and the parent vector in tree mode.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderState<S> {
    pub layers: Vec<(Vec<S>, Vec<S>)>,
    pub prev_token: usize,
    pub parent_vector: Option<Vec<S>>,
}

impl<S: Scalar> DecoderState<S> {
    /// The state before the first decoder step: layer states come from the
    /// encoder's final state, the previous token is `<s>`, and in tree mode
    /// the encoder's final top hidden vector acts as the root's parent.
    pub fn initial(enc: &EncoderOutput<S>, params: &ModelParameters<S>) -> DecoderState<S> {
        DecoderState {
            layers: enc.final_state.clone(),
            prev_token: SEQ_START_INDEX,
            parent_vector: match params.mode {
                DecoderMode::Seq2Seq => None,
                DecoderMode::Seq2Tree => {
                    Some(enc.final_state.last().expect("layers >= 1").0.clone())
                }
            },
        }
    }

    /// The top-layer hidden vector.
    pub fn top_hidden(&self) -> &[S] {
        &self.layers.last().expect("layers >= 1").0
    }

    /// Consumes the embedding of `prev_token` (concatenated with the parent
    /// vector in tree mode) and advances every LSTM layer once.
    pub fn advance(&self, params: &ModelParameters<S>) -> Result<DecoderState<S>> {
        let mut out = advance_batch(&[self], params)?;
        Ok(out.pop().expect("batch of one"))
    }
}

/// Advances a batch of states in lockstep. Row r of every matrix belongs to
/// `states[r]`; all kernels reduce per row, so results are bit-identical to
/// advancing each state alone.
fn advance_batch<S: Scalar>(
    states: &[&DecoderState<S>],
    params: &ModelParameters<S>,
) -> Result<Vec<DecoderState<S>>> {
    let batch = states.len();
    let layers = params.decoder_layers.len();
    let n = params.dims.hidden;
    let e = params.dims.embed;
    let parent_feed = params.mode == DecoderMode::Seq2Tree;
    let width = e + if parent_feed { n } else { 0 };

    let mut x = Tensor::zeros(&[batch, width]);
    for (r, st) in states.iter().enumerate() {
        if st.prev_token >= params.dims.vocab_a {
            return Err(Error::Vocabulary(alloc::format!(
                "decoder token index {} outside |V_a| = {}",
                st.prev_token,
                params.dims.vocab_a
            )));
        }
        x.row_mut(r)[..e].copy_from_slice(params.output_embeddings.value.row(st.prev_token));
        if parent_feed {
            let pv = st.parent_vector.as_ref().ok_or_else(|| {
                Error::Input("tree-mode decoder state without a parent vector".into())
            })?;
            x.row_mut(r)[e..].copy_from_slice(pv);
        }
    }

    let mut new_layers: Vec<Vec<(Vec<S>, Vec<S>)>> = vec![Vec::with_capacity(layers); batch];
    let mut input = x;
    for l in 0..layers {
        let mut h_prev = Tensor::zeros(&[batch, n]);
        let mut c_prev = Tensor::zeros(&[batch, n]);
        for (r, st) in states.iter().enumerate() {
            h_prev.row_mut(r).copy_from_slice(&st.layers[l].0);
            c_prev.row_mut(r).copy_from_slice(&st.layers[l].1);
        }
        let (h, cache) =
            crate::nn::lstm_cell_batch(&input, &h_prev, &c_prev, &params.decoder_layers[l])?;
        for r in 0..batch {
            new_layers[r].push((h.row(r).to_vec(), cache.c.row(r).to_vec()));
        }
        input = h;
    }

    Ok(states
        .iter()
        .zip(new_layers)
        .map(|(st, layers)| DecoderState {
            layers,
            prev_token: st.prev_token,
            parent_vector: st.parent_vector.clone(),
        })
        .collect())
}

/// Output distributions for a batch of already-advanced states, plus the
/// attention score rows when attention is enabled.
fn predict_batch<S: Scalar>(
    states: &[&DecoderState<S>],
    enc: &EncoderOutput<S>,
    params: &ModelParameters<S>,
) -> Result<(Tensor<S>, Option<Tensor<S>>)> {
    let batch = states.len();
    let n = params.dims.hidden;
    let mut top = Tensor::zeros(&[batch, n]);
    for (r, st) in states.iter().enumerate() {
        top.row_mut(r).copy_from_slice(st.top_hidden());
    }

    let (v, scores) = if params.attention_enabled {
        let steps = enc.top_hiddens.len();
        let mut scores = Tensor::zeros(&[batch, steps]);
        for r in 0..batch {
            let hr = top.row(r);
            let srow = scores.row_mut(r);
            for (k, sk) in srow.iter_mut().enumerate() {
                *sk = dot(&enc.top_hiddens[k], hr);
            }
        }
        crate::nn::softmax_rows(&mut scores);
        let mut ctx = Tensor::zeros(&[batch, n]);
        for r in 0..batch {
            for k in 0..steps {
                axpy(scores.at(r, k), &enc.top_hiddens[k], ctx.row_mut(r));
            }
        }
        let mut pre = matmul_nt(&top, &params.attn_hidden.value)?;
        let from_ctx = matmul_nt(&ctx, &params.attn_context.value)?;
        pre.add_assign(&from_ctx)?;
        for v in pre.data_mut() {
            *v = v.tanh();
        }
        (pre, Some(scores))
    } else {
        (top, None)
    };

    let mut probs = matmul_nt(&v, &params.output_projection.value)?;
    crate::nn::softmax_rows(&mut probs);
    Ok((probs, scores))
}

/// Probability distribution over the output vocabulary for the current
/// state: with attention, `softmax(W_o · tanh(W1·h + W2·c))`; without,
/// `softmax(W_o · h)`.
pub fn predict_distribution<S: Scalar>(
    state: &DecoderState<S>,
    enc: &EncoderOutput<S>,
    params: &ModelParameters<S>,
) -> Result<Vec<S>> {
    let (probs, _) = predict_batch(&[state], enc, params)?;
    Ok(probs.row(0).to_vec())
}

/// Argmax with ties broken toward the lowest index.
fn argmax<S: Scalar>(row: &[S]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Per-step attention scores of one decode, one row per decoder step, plus
/// the token emitted at each step (`</s>` included). Empty when attention is
/// disabled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttentionRecord {
    pub rows: Vec<Vec<f64>>,
    pub outputs: Vec<usize>,
}

impl AttentionRecord {
    fn push<S: Scalar>(&mut self, scores: Option<&[S]>, token: usize) {
        if let Some(s) = scores {
            self.rows.push(s.iter().map(|v| v.to_f64()).collect());
            self.outputs.push(token);
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

/// Result of a greedy or beam sequence decode.
#[derive(Debug, Clone, PartialEq)]
pub struct SeqDecodeOutcome {
    /// Emitted tokens, `</s>` excluded.
    pub tokens: Vec<usize>,
    pub attention: AttentionRecord,
    /// Set when the decode hit `max_len` without emitting `</s>`.
    pub truncated: bool,
}

/// Greedy sequence decoding: repeatedly emit the argmax token until `</s>`
/// or `max_len` steps.
pub fn greedy_decode_seq<S: Scalar>(
    q_tokens: &[usize],
    params: &ModelParameters<S>,
    max_len: usize,
) -> Result<SeqDecodeOutcome> {
    let enc = encode(q_tokens, params)?;
    let mut state = DecoderState::initial(&enc, params);
    let mut tokens = Vec::new();
    let mut attention = AttentionRecord::default();
    let mut truncated = true;
    for _ in 0..max_len {
        state = state.advance(params)?;
        let (probs, scores) = predict_batch(&[&state], &enc, params)?;
        let tok = argmax(probs.row(0));
        attention.push(scores.as_ref().map(|s| s.row(0)), tok);
        if tok == SEQ_END_INDEX {
            truncated = false;
            break;
        }
        tokens.push(tok);
        state.prev_token = tok;
    }
    Ok(SeqDecodeOutcome {
        tokens,
        attention,
        truncated,
    })
}

struct Hypothesis<S> {
    state: DecoderState<S>,
    tokens: Vec<usize>,
    log_prob: f64,
    done: bool,
}

/// Result of a beam decode.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamDecodeOutcome {
    /// Tokens of the best hypothesis, `</s>` excluded.
    pub tokens: Vec<usize>,
    /// Its total log-probability including the `</s>` step.
    pub log_prob: f64,
    /// False when no hypothesis finished within `max_len` steps.
    pub finished: bool,
}

/// Length-synchronous beam search over token log-probabilities. Finished
/// hypotheses are frozen and keep competing on total log-probability;
/// `beam = 1` reproduces greedy decoding exactly (ties break toward the
/// lower token index, then the earlier parent hypothesis).
pub fn beam_decode_seq<S: Scalar>(
    q_tokens: &[usize],
    params: &ModelParameters<S>,
    beam: usize,
    max_len: usize,
) -> Result<BeamDecodeOutcome> {
    if beam == 0 {
        return Err(Error::Config("beam width must be at least 1".into()));
    }
    let enc = encode(q_tokens, params)?;
    let log_eps = S::from_f64(LOG_EPS);
    let mut hyps = vec![Hypothesis {
        state: DecoderState::initial(&enc, params),
        tokens: Vec::new(),
        log_prob: 0.0,
        done: false,
    }];

    for _ in 0..max_len {
        if hyps.iter().all(|h| h.done) {
            break;
        }
        // Advance all live hypotheses in one lockstep batch.
        let live: Vec<usize> = (0..hyps.len()).filter(|&i| !hyps[i].done).collect();
        let states: Vec<&DecoderState<S>> = live.iter().map(|&i| &hyps[i].state).collect();
        let advanced = advance_batch(&states, params)?;
        let refs: Vec<&DecoderState<S>> = advanced.iter().collect();
        let (probs, _) = predict_batch(&refs, &enc, params)?;

        // (score, parent order, token) keeps expansion deterministic.
        let mut candidates: Vec<(f64, usize, Option<(usize, usize)>)> = Vec::new();
        for (i, h) in hyps.iter().enumerate() {
            if h.done {
                candidates.push((h.log_prob, i, None));
            }
        }
        for (slot, &i) in live.iter().enumerate() {
            let base = hyps[i].log_prob;
            for (tok, p) in probs.row(slot).iter().enumerate() {
                let lp = base + (*p + log_eps).ln().to_f64();
                candidates.push((lp, i, Some((slot, tok))));
            }
        }
        candidates.sort_by(|a, b| {
            b.0.partial_cmp(&a.0)
                .unwrap_or(core::cmp::Ordering::Equal)
                .then_with(|| a.1.cmp(&b.1))
                .then_with(|| {
                    let ka = a.2.map_or(usize::MAX, |(_, t)| t);
                    let kb = b.2.map_or(usize::MAX, |(_, t)| t);
                    ka.cmp(&kb)
                })
        });

        let mut next: Vec<Hypothesis<S>> = Vec::with_capacity(beam);
        for (lp, parent, ext) in candidates.into_iter().take(beam) {
            match ext {
                None => next.push(Hypothesis {
                    state: hyps[parent].state.clone(),
                    tokens: hyps[parent].tokens.clone(),
                    log_prob: lp,
                    done: true,
                }),
                Some((slot, tok)) => {
                    let mut state = advanced[slot].clone();
                    let mut tokens = hyps[parent].tokens.clone();
                    let done = tok == SEQ_END_INDEX;
                    if !done {
                        tokens.push(tok);
                        state.prev_token = tok;
                    }
                    next.push(Hypothesis {
                        state,
                        tokens,
                        log_prob: lp,
                        done,
                    });
                }
            }
        }
        hyps = next;
    }

    // Best finished hypothesis, or the best overall when none finished.
    let best_done = hyps
        .iter()
        .filter(|h| h.done)
        .max_by(|a, b| a.log_prob.partial_cmp(&b.log_prob).unwrap());
    let (best, finished) = match best_done {
        Some(h) => (h, true),
        None => (
            hyps.iter()
                .max_by(|a, b| a.log_prob.partial_cmp(&b.log_prob).unwrap())
                .expect("at least one hypothesis"),
            false,
        ),
    };
    Ok(BeamDecodeOutcome {
        tokens: best.tokens.clone(),
        log_prob: best.log_prob,
        finished,
    })
}

/// Decoding caps; trees that trip a cap are flagged truncated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DecodeCaps {
    /// Maximum steps per sequence (root or subtree).
    pub max_seq_len: usize,
    /// Maximum subtree nesting depth.
    pub max_depth: usize,
    /// Maximum number of sequences (tree nodes) decoded per tree.
    pub max_nodes: usize,
}

impl Default for DecodeCaps {
    fn default() -> Self {
        DecodeCaps {
            max_seq_len: 100,
            max_depth: 10,
            max_nodes: 500,
        }
    }
}

/// Result of a tree decode.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDecodeOutcome {
    pub tree: LfTree,
    pub attention: AttentionRecord,
    pub truncated: bool,
}

/// One pending or finished subtree expansion.
struct TreeJob<S> {
    state: DecoderState<S>,
    node_id: usize,
    parent: Option<(usize, usize)>,
    depth: usize,
    /// Emitted tokens including `<n>` placeholders, `</s>` excluded.
    tokens: Vec<usize>,
    /// Attention rows of this job's steps.
    attn_rows: Vec<Vec<f64>>,
    attn_outputs: Vec<usize>,
    ended: bool,
    /// Pending `(position, child state)` spawns, resolved in job order.
    pending: Vec<(usize, DecoderState<S>)>,
}

impl<S: Scalar> TreeJob<S> {
    fn new(state: DecoderState<S>, node_id: usize, parent: Option<(usize, usize)>, depth: usize) -> Self {
        TreeJob {
            state,
            node_id,
            parent,
            depth,
            tokens: Vec::new(),
            attn_rows: Vec::new(),
            attn_outputs: Vec::new(),
            ended: false,
            pending: Vec::new(),
        }
    }

    /// Applies one decoded step to this job. `advanced` is the post-advance
    /// state, `probs`/`scores` its output row.
    fn apply_step(&mut self, advanced: DecoderState<S>, probs: &[S], scores: Option<&[S]>) {
        let tok = argmax(probs);
        if let Some(s) = scores {
            self.attn_rows.push(s.iter().map(|v| v.to_f64()).collect());
            self.attn_outputs.push(tok);
        }
        if tok == SEQ_END_INDEX {
            self.ended = true;
            return;
        }
        if tok == NONTERM_INDEX {
            // Snapshot for the child: same layer states, <( as first input,
            // the snapshot's top hidden as the child's constant parent vector.
            let mut child = advanced.clone();
            child.prev_token = SUBTREE_START_INDEX;
            child.parent_vector = Some(advanced.top_hidden().to_vec());
            self.pending.push((self.tokens.len(), child));
        }
        self.tokens.push(tok);
        self.state = advanced;
        self.state.prev_token = tok;
    }
}

/// Shared cap/spawn accounting, applied in node-id order in both decode
/// strategies so that truncation decisions agree exactly.
struct SpawnBudget {
    nodes_created: usize,
    truncated: bool,
}

impl SpawnBudget {
    fn try_spawn(&mut self, depth: usize, caps: &DecodeCaps) -> Option<usize> {
        if depth > caps.max_depth || self.nodes_created >= caps.max_nodes {
            self.truncated = true;
            return None;
        }
        let id = self.nodes_created;
        self.nodes_created += 1;
        Some(id)
    }
}

fn assemble<S: Scalar>(
    jobs: &[TreeJob<S>],
    vocab_a: &Vocabulary,
    truncated: bool,
) -> Result<(LfTree, AttentionRecord)> {
    let mut attention = AttentionRecord::default();
    let mut order: Vec<usize> = (0..jobs.len()).collect();
    order.sort_by_key(|&i| jobs[i].node_id);
    for &i in &order {
        attention.rows.extend(jobs[i].attn_rows.iter().cloned());
        attention.outputs.extend(jobs[i].attn_outputs.iter().copied());
    }

    if !truncated {
        let seqs: Vec<crate::lftree::LevelSequence> = order
            .iter()
            .map(|&i| {
                let job = &jobs[i];
                let mut tokens: Vec<alloc::string::String> = job
                    .tokens
                    .iter()
                    .map(|&t| vocab_a.token(t).to_string())
                    .collect();
                tokens.push(crate::lftree::SEQ_END.to_string());
                crate::lftree::LevelSequence {
                    node_id: job.node_id,
                    parent: job.parent,
                    tokens,
                    depth: job.depth,
                }
            })
            .collect();
        let tree = LfTree::from_level_sequences(&seqs)?;
        return Ok((tree, attention));
    }

    // Lenient assembly for truncated decodes: dangling nonterminals stay as
    // literal <n> leaves.
    let mut children: alloc::collections::BTreeMap<(usize, usize), usize> =
        alloc::collections::BTreeMap::new();
    for (i, job) in jobs.iter().enumerate() {
        if let Some(link) = job.parent {
            children.insert(link, i);
        }
    }
    fn build<S: Scalar>(
        idx: usize,
        jobs: &[TreeJob<S>],
        children: &alloc::collections::BTreeMap<(usize, usize), usize>,
        vocab_a: &Vocabulary,
    ) -> Vec<LfNode> {
        let job = &jobs[idx];
        job.tokens
            .iter()
            .enumerate()
            .map(|(pos, &tok)| match children.get(&(job.node_id, pos)) {
                Some(&child) if tok == NONTERM_INDEX => {
                    LfNode::Subtree(build(child, jobs, children, vocab_a))
                }
                _ => LfNode::Leaf(vocab_a.token(tok).to_string()),
            })
            .collect()
    }
    let root_idx = jobs
        .iter()
        .position(|j| j.parent.is_none())
        .expect("root job exists");
    let tree = LfTree {
        root_children: build(root_idx, jobs, &children, vocab_a),
    };
    Ok((tree, attention))
}

/// Hierarchical greedy decoding with the batched nonterminal queue: all jobs
/// of one depth are decoded in one lockstep batch.
pub fn decode_tree<S: Scalar>(
    q_tokens: &[usize],
    params: &ModelParameters<S>,
    vocab_a: &Vocabulary,
    caps: &DecodeCaps,
) -> Result<TreeDecodeOutcome> {
    decode_tree_impl(q_tokens, params, vocab_a, caps, true)
}

/// Reference implementation with a strictly sequential FIFO queue; decodes
/// one job at a time. Must produce exactly the same output as
/// [`decode_tree`].
pub fn decode_tree_sequential<S: Scalar>(
    q_tokens: &[usize],
    params: &ModelParameters<S>,
    vocab_a: &Vocabulary,
    caps: &DecodeCaps,
) -> Result<TreeDecodeOutcome> {
    decode_tree_impl(q_tokens, params, vocab_a, caps, false)
}

fn decode_tree_impl<S: Scalar>(
    q_tokens: &[usize],
    params: &ModelParameters<S>,
    vocab_a: &Vocabulary,
    caps: &DecodeCaps,
    batched: bool,
) -> Result<TreeDecodeOutcome> {
    if params.mode != DecoderMode::Seq2Tree {
        return Err(Error::Config("decode_tree requires a seq2tree model".into()));
    }
    if caps.max_seq_len == 0 || caps.max_nodes == 0 {
        return Err(Error::Config("decode caps must be positive".into()));
    }
    let enc = encode(q_tokens, params)?;
    let root = TreeJob::new(DecoderState::initial(&enc, params), 0, None, 0);
    let mut budget = SpawnBudget {
        nodes_created: 1,
        truncated: false,
    };
    let mut done: Vec<TreeJob<S>> = Vec::new();

    if batched {
        let mut level = vec![root];
        while !level.is_empty() {
            // Lockstep decode of the whole level.
            for _ in 0..caps.max_seq_len {
                let live: Vec<usize> = (0..level.len()).filter(|&i| !level[i].ended).collect();
                if live.is_empty() {
                    break;
                }
                let states: Vec<&DecoderState<S>> =
                    live.iter().map(|&i| &level[i].state).collect();
                let advanced = advance_batch(&states, params)?;
                let refs: Vec<&DecoderState<S>> = advanced.iter().collect();
                let (probs, scores) = predict_batch(&refs, &enc, params)?;
                for (slot, (&i, st)) in live.iter().zip(advanced).enumerate() {
                    level[i].apply_step(st, probs.row(slot), scores.as_ref().map(|s| s.row(slot)));
                }
            }
            // Spawn children in job order, then position order: the same
            // canonical order the sequential queue uses.
            let mut next = Vec::new();
            for mut job in level {
                if !job.ended {
                    budget.truncated = true;
                }
                let depth = job.depth;
                for (pos, child_state) in core::mem::take(&mut job.pending) {
                    if let Some(id) = budget.try_spawn(depth + 1, caps) {
                        next.push(TreeJob::new(
                            child_state,
                            id,
                            Some((job.node_id, pos)),
                            depth + 1,
                        ));
                    }
                }
                done.push(job);
            }
            level = next;
        }
    } else {
        let mut queue: VecDeque<TreeJob<S>> = VecDeque::new();
        queue.push_back(root);
        while let Some(mut job) = queue.pop_front() {
            for _ in 0..caps.max_seq_len {
                if job.ended {
                    break;
                }
                let advanced = job.state.advance(params)?;
                let (probs, scores) = predict_batch(&[&advanced], &enc, params)?;
                job.apply_step(advanced, probs.row(0), scores.as_ref().map(|s| s.row(0)));
            }
            if !job.ended {
                budget.truncated = true;
            }
            let depth = job.depth;
            for (pos, child_state) in core::mem::take(&mut job.pending) {
                if let Some(id) = budget.try_spawn(depth + 1, caps) {
                    queue.push_back(TreeJob::new(
                        child_state,
                        id,
                        Some((job.node_id, pos)),
                        depth + 1,
                    ));
                }
            }
            done.push(job);
        }
    }

    let (tree, attention) = assemble(&done, vocab_a, budget.truncated)?;
    Ok(TreeDecodeOutcome {
        tree,
        attention,
        truncated: budget.truncated,
    })
}
