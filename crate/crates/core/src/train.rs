//! Mini-batch training: shuffled length-bucketed batches, teacher-forced
//! forward/backward, global-norm clipping, RMSProp, and early stopping on
//! dev exact-match accuracy.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::eval::{evaluate, EvalOptions};
use crate::lftree::{LfTree, SEQ_END};
use crate::model::{
    graph, Batch, BatchTargets, DecodeCaps, DecoderMode, ModelParameters,
};
use crate::optim::{clip_gradients, rmsprop_step};
use crate::rng::{stream, RngState};
use crate::scalar::Scalar;
use crate::text::{reverse_input, ExamplePair, Vocabulary};

/// Every training knob, with the standard defaults used across the bundled
/// datasets (batch 20, RMSProp smoothing 0.95, clip 5, init U(-0.08, 0.08),
/// reversed encoder inputs).
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub smoothing: f64,
    pub clip_threshold: f64,
    pub dropout_rate: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub dev_fraction: f64,
    pub init_half_range: f64,
    pub rmsprop_eps: f64,
    pub reverse_input: bool,
    pub max_tree_depth: usize,
    pub eval_max_len: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 20,
            smoothing: 0.95,
            clip_threshold: 5.0,
            dropout_rate: 0.3,
            hidden_dim: 200,
            embed_dim: 200,
            num_layers: 1,
            max_epochs: 150,
            patience: 10,
            seed: 1,
            dev_fraction: 0.1,
            init_half_range: 0.08,
            rmsprop_eps: 1e-8,
            reverse_input: true,
            max_tree_depth: 10,
            eval_max_len: 100,
        }
    }
}

impl TrainConfig {
    /// Collects every invalid field at once.
    pub fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.learning_rate <= 0.0 {
            problems.push(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if self.batch_size == 0 {
            problems.push("batch_size must be positive".into());
        }
        if !(0.0 < self.smoothing && self.smoothing < 1.0) {
            problems.push(format!("smoothing must be in (0, 1), got {}", self.smoothing));
        }
        if self.clip_threshold <= 0.0 {
            problems.push(format!(
                "clip_threshold must be positive, got {}",
                self.clip_threshold
            ));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            problems.push(format!(
                "dropout_rate must be in [0, 1), got {}",
                self.dropout_rate
            ));
        }
        if self.hidden_dim == 0 || self.embed_dim == 0 || self.num_layers == 0 {
            problems.push("hidden_dim, embed_dim and num_layers must be positive".into());
        }
        if self.max_epochs == 0 {
            problems.push("max_epochs must be positive".into());
        }
        if !(0.0..=0.5).contains(&self.dev_fraction) {
            problems.push(format!(
                "dev_fraction must be in [0, 0.5], got {}",
                self.dev_fraction
            ));
        }
        if self.init_half_range <= 0.0 {
            problems.push("init_half_range must be positive".into());
        }
        if self.rmsprop_eps <= 0.0 {
            problems.push("rmsprop_eps must be positive".into());
        }
        if self.max_tree_depth == 0 || self.eval_max_len == 0 {
            problems.push("max_tree_depth and eval_max_len must be positive".into());
        }
        problems
    }
}

/// A mini-batch of preprocessed examples.
#[derive(Debug, Clone)]
pub struct TrainBatch {
    pub examples: Vec<ExamplePair>,
}

/// Shuffles deterministically, then sorts runs of `4 * batch_size`
/// consecutive examples by utterance length (shorter padding) before
/// chunking into batches of at most `batch_size`.
pub fn make_batches(
    data: &[ExamplePair],
    batch_size: usize,
    rng: &mut RngState,
) -> Result<Vec<TrainBatch>> {
    if data.is_empty() {
        return Err(Error::Config("cannot batch an empty dataset".into()));
    }
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be positive".into()));
    }
    let mut order = rng.permutation(data.len());
    let bucket = batch_size * 4;
    let mut batches = Vec::new();
    for bucket_slice in order.chunks_mut(bucket) {
        bucket_slice.sort_by_key(|&i| (data[i].utterance.tokens.len(), i));
        for chunk in bucket_slice.chunks(batch_size) {
            batches.push(TrainBatch {
                examples: chunk.iter().map(|&i| data[i].clone()).collect(),
            });
        }
    }
    Ok(batches)
}

/// Converts a batch of examples to index form for the scoring graph:
/// reversed, vocabulary-encoded utterances and flat or tree targets.
pub fn to_graph_batch(
    examples: &[ExamplePair],
    vocab_q: &Vocabulary,
    vocab_a: &Vocabulary,
    mode: DecoderMode,
    reverse: bool,
    max_tree_depth: usize,
) -> Result<Batch> {
    let mut inputs = Vec::with_capacity(examples.len());
    for ex in examples {
        let toks = if reverse {
            reverse_input(&ex.utterance.tokens)
        } else {
            ex.utterance.tokens.clone()
        };
        inputs.push(vocab_q.encode(&toks));
    }
    let targets = match mode {
        DecoderMode::Seq2Seq => {
            let mut seqs = Vec::with_capacity(examples.len());
            for ex in examples {
                let mut toks = ex
                    .logical_form
                    .iter()
                    .map(|t| vocab_a.index_strict(t))
                    .collect::<Result<Vec<usize>>>()?;
                toks.push(vocab_a.index_strict(SEQ_END)?);
                seqs.push(toks);
            }
            BatchTargets::Seq(seqs)
        }
        DecoderMode::Seq2Tree => {
            let mut trees = Vec::with_capacity(examples.len());
            for ex in examples {
                let tree = LfTree::from_tokens(&ex.logical_form)?;
                if tree.depth() > max_tree_depth {
                    return Err(Error::Structure(format!(
                        "logical form depth {} exceeds the cap {max_tree_depth}",
                        tree.depth()
                    )));
                }
                trees.push(graph::index_tree(&tree, vocab_a)?);
            }
            BatchTargets::Tree(trees)
        }
    };
    Ok(Batch { inputs, targets })
}

/// One pass over the batches: forward, backward, clip, RMSProp step.
/// Returns the mean per-example negative log-likelihood.
pub fn train_epoch<S: Scalar>(
    params: &mut ModelParameters<S>,
    batches: &[Batch],
    config: &TrainConfig,
    dropout_rng: &mut RngState,
) -> Result<f64> {
    let mut loss_sum = 0.0f64;
    let mut example_count = 0usize;
    for (i, batch) in batches.iter().enumerate() {
        let graph =
            graph::TrainingGraph::forward(params, batch, dropout_rng, true, config.dropout_rate)?;
        if !graph.loss.is_finite() {
            return Err(Error::Training {
                batch: i,
                message: format!("non-finite loss {}", graph.loss),
            });
        }
        loss_sum += graph.loss;
        example_count += batch.inputs.len();
        graph.backward(params)?;
        clip_gradients(params, config.clip_threshold);
        rmsprop_step(params, config.learning_rate, config.smoothing, config.rmsprop_eps);
    }
    Ok(loss_sum / example_count as f64)
}

/// Wall-clock source; the core is `no_std`, so the caller supplies one.
pub trait Clock {
    fn now_seconds(&self) -> f64;
}

/// Clock that always reads zero (tests, headless runs).
pub struct NullClock;

impl Clock for NullClock {
    fn now_seconds(&self) -> f64 {
        0.0
    }
}

/// Per-epoch training statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_accuracy: Option<f64>,
    pub wall_seconds: f64,
}

/// Full training trace plus best-checkpoint bookkeeping.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: Option<usize>,
    pub best_dev_accuracy: f64,
    pub stopped_early: bool,
}

/// Result of [`train`]: the best parameters seen plus the report.
#[derive(Debug, Clone)]
pub struct TrainOutcome<S> {
    pub params: ModelParameters<S>,
    pub report: TrainReport,
}

/// Progress callback invoked after each epoch.
pub type ProgressFn<'a> = &'a mut dyn FnMut(&EpochStats);

/// Trains with RMSProp and early stopping. When no explicit dev set is
/// given and `dev_fraction > 0`, a deterministic seeded split carves one
/// from `data`. The best checkpoint by dev exact-match accuracy is kept;
/// training stops after `patience` epochs without improvement (without a
/// dev set the lowest training loss decides and early stopping is off).
pub fn train<S: Scalar>(
    params: ModelParameters<S>,
    data: &[ExamplePair],
    explicit_dev: Option<&[ExamplePair]>,
    vocab_q: &Vocabulary,
    vocab_a: &Vocabulary,
    config: &TrainConfig,
    clock: &dyn Clock,
    mut progress: Option<ProgressFn<'_>>,
) -> Result<TrainOutcome<S>> {
    let problems = config.validate();
    if !problems.is_empty() {
        return Err(Error::Config(problems.join("; ")));
    }
    if params.dims.hidden != config.hidden_dim
        || params.dims.embed != config.embed_dim
        || params.dims.layers != config.num_layers
    {
        return Err(Error::Config(
            "model dimensions do not match the training config".into(),
        ));
    }
    if data.is_empty() {
        return Err(Error::Config("cannot train on an empty dataset".into()));
    }
    if config.dev_fraction > 0.0 && explicit_dev.is_none() && data.len() < 2 {
        return Err(Error::Config(
            "need at least 2 examples to split off a dev set".into(),
        ));
    }

    let root_rng = RngState::new(config.seed);
    // Deterministic dev split when none is supplied.
    let (train_set, dev_set): (Vec<ExamplePair>, Vec<ExamplePair>) = match explicit_dev {
        Some(dev) => (data.to_vec(), dev.to_vec()),
        None => {
            let dev_count = ((data.len() as f64) * config.dev_fraction) as usize;
            let mut split_rng = root_rng.fork(stream::SPLIT);
            let order = split_rng.permutation(data.len());
            let dev: Vec<ExamplePair> =
                order[..dev_count].iter().map(|&i| data[i].clone()).collect();
            let train: Vec<ExamplePair> =
                order[dev_count..].iter().map(|&i| data[i].clone()).collect();
            (train, dev)
        }
    };
    let have_dev = !dev_set.is_empty();
    let eval_opts = EvalOptions {
        max_len: config.eval_max_len,
        caps: DecodeCaps {
            max_seq_len: config.eval_max_len,
            ..DecodeCaps::default()
        },
        reverse_input: config.reverse_input,
    };

    let mut dropout_rng = root_rng.fork(stream::DROPOUT);
    let mut current = params;
    let mut best: Option<(ModelParameters<S>, usize)> = None;
    let mut best_metric = f64::NEG_INFINITY;
    let mut since_best = 0usize;
    let mut report = TrainReport::default();
    let start = clock.now_seconds();

    for epoch in 0..config.max_epochs {
        let mut shuffle_rng = root_rng.fork(stream::SHUFFLE).fork(epoch as u64);
        let batches = make_batches(&train_set, config.batch_size, &mut shuffle_rng)?;
        let graph_batches = batches
            .iter()
            .map(|b| {
                to_graph_batch(
                    &b.examples,
                    vocab_q,
                    vocab_a,
                    current.mode,
                    config.reverse_input,
                    config.max_tree_depth,
                )
            })
            .collect::<Result<Vec<Batch>>>()?;
        let train_loss = train_epoch(&mut current, &graph_batches, config, &mut dropout_rng)?;

        let dev_accuracy = if have_dev {
            Some(evaluate(&current, vocab_q, vocab_a, &dev_set, &eval_opts)?.accuracy)
        } else {
            None
        };
        let stats = EpochStats {
            epoch,
            train_loss,
            dev_accuracy,
            wall_seconds: clock.now_seconds() - start,
        };
        if let Some(cb) = progress.as_deref_mut() {
            cb(&stats);
        }
        report.epochs.push(stats);

        // Dev accuracy drives model selection; without a dev set, the
        // (negated) training loss stands in and early stopping is disabled.
        let metric = dev_accuracy.unwrap_or(-train_loss);
        if metric > best_metric {
            best_metric = metric;
            best = Some((current.clone(), epoch));
            since_best = 0;
        } else {
            since_best += 1;
            if have_dev && since_best > config.patience {
                report.stopped_early = true;
                break;
            }
        }
    }

    let (best_params, best_epoch) = best.unwrap_or((current, 0));
    report.best_epoch = Some(best_epoch);
    report.best_dev_accuracy = if have_dev { best_metric } else { 0.0 };
    Ok(TrainOutcome {
        params: best_params,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::{identify_arguments, ArgumentLexicon, MaskedUtterance};
    use alloc::string::ToString;
    use alloc::vec;

    fn pair(utt: &str, lf: &str) -> ExamplePair {
        let toks: Vec<String> = utt.split_whitespace().map(str::to_string).collect();
        let masked = identify_arguments(&toks, &ArgumentLexicon::numbers_only());
        ExamplePair {
            utterance: masked,
            logical_form: lf.split_whitespace().map(str::to_string).collect(),
        }
    }

    #[test]
    fn make_batches_sizes_and_determinism() {
        let data: Vec<ExamplePair> = (0..45)
            .map(|i| pair(&format!("tok{i} a b"), "( f x )"))
            .collect();
        let mut rng = RngState::new(5).fork(stream::SHUFFLE);
        let batches = make_batches(&data, 20, &mut rng).unwrap();
        let sizes: Vec<usize> = batches.iter().map(|b| b.examples.len()).collect();
        assert_eq!(sizes, vec![20, 20, 5]);
        let total: usize = sizes.iter().sum();
        assert_eq!(total, 45);

        let mut rng2 = RngState::new(5).fork(stream::SHUFFLE);
        let again = make_batches(&data, 20, &mut rng2).unwrap();
        for (a, b) in batches.iter().zip(&again) {
            assert_eq!(
                a.examples.iter().map(|e| e.utterance.original.clone()).collect::<Vec<_>>(),
                b.examples.iter().map(|e| e.utterance.original.clone()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn make_batches_rejects_empty_data() {
        let mut rng = RngState::new(1);
        assert!(matches!(
            make_batches(&[], 20, &mut rng),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn config_validation_collects_all_problems() {
        let config = TrainConfig {
            learning_rate: -1.0,
            dropout_rate: 1.5,
            dev_fraction: 0.9,
            ..TrainConfig::default()
        };
        let problems = config.validate();
        assert_eq!(problems.len(), 3, "{problems:?}");
        assert!(TrainConfig::default().validate().is_empty());
    }

    #[test]
    fn masked_utterance_used_for_batch_length_sorting() {
        // Longer utterances should group together inside a bucket.
        let mut data = Vec::new();
        for i in 0..16 {
            let len = 1 + (i % 4);
            let words = vec!["w"; len].join(" ");
            data.push(pair(&words, "( f x )"));
        }
        let mut rng = RngState::new(9).fork(stream::SHUFFLE);
        let batches = make_batches(&data, 4, &mut rng).unwrap();
        // One bucket of 16: batches are length-sorted.
        let lens: Vec<usize> = batches
            .iter()
            .flat_map(|b| b.examples.iter().map(|e| e.utterance.tokens.len()))
            .collect();
        let mut sorted = lens.clone();
        sorted.sort();
        assert_eq!(lens, sorted);
        let _ = MaskedUtterance {
            tokens: vec![],
            table: Default::default(),
            original: vec![],
        };
    }
}
