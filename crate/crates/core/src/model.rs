//! The encoder-decoder model: an L-layer LSTM encoder, dot-product soft
//! attention, and two decoders sharing one parameter layout — a flat
//! sequence decoder and a hierarchical tree decoder with parent-feeding.
//!
//! Training-side scoring (teacher forcing with explicit backward passes)
//! lives in [`graph`]; inference-side greedy/beam/tree decoding lives in
//! [`decode`].

pub mod attention;
pub mod decode;
pub mod encoder;
pub mod graph;

pub use attention::attend;
pub use decode::{
    beam_decode_seq, decode_tree, decode_tree_sequential, greedy_decode_seq,
    predict_distribution, AttentionRecord, BeamDecodeOutcome, DecodeCaps, DecoderState,
    SeqDecodeOutcome, TreeDecodeOutcome,
};
pub use encoder::{encode, EncoderOutput};
pub use graph::{
    seq_log_prob, tree_log_prob, Batch, BatchTargets, TrainingGraph,
};

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::nn::LstmLayerParams;
use crate::optim::{ParamCollection, Parameter};
use crate::rng::RngState;
use crate::scalar::Scalar;

/// Which decoder the model trains and decodes with.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecoderMode {
    Seq2Seq,
    Seq2Tree,
}

/// Model dimensions, fixed at construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub vocab_q: usize,
    pub vocab_a: usize,
}

/// All trainable weights. The encoder and decoder stacks are disjoint
/// parameter lists; nothing is shared between them.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParameters<S> {
    pub dims: ModelDims,
    pub mode: DecoderMode,
    pub attention_enabled: bool,
    /// `(|V_q|, embed)`: row per input token.
    pub input_embeddings: Parameter<S>,
    /// `(|V_a|, embed)`: row per output token.
    pub output_embeddings: Parameter<S>,
    pub encoder_layers: Vec<LstmLayerParams<S>>,
    /// Layer 0 consumes `[embedding; parent vector]` in tree mode, so its
    /// input width is `embed + hidden` there and `embed` otherwise.
    pub decoder_layers: Vec<LstmLayerParams<S>>,
    /// `(|V_a|, hidden)`: output projection.
    pub output_projection: Parameter<S>,
    /// `(hidden, hidden)`: attention projection of the decoder hidden state.
    pub attn_hidden: Parameter<S>,
    /// `(hidden, hidden)`: attention projection of the context vector.
    pub attn_context: Parameter<S>,
}

impl<S: Scalar> ModelParameters<S> {
    /// Allocates a zeroed model after validating the dimensions.
    pub fn new(dims: ModelDims, mode: DecoderMode, attention_enabled: bool) -> Result<Self> {
        if dims.embed == 0 || dims.hidden == 0 || dims.layers == 0 {
            return Err(Error::Config(format!(
                "model dimensions must be positive: embed {}, hidden {}, layers {}",
                dims.embed, dims.hidden, dims.layers
            )));
        }
        if dims.vocab_q == 0 || dims.vocab_a == 0 {
            return Err(Error::Config("vocabulary sizes must be positive".into()));
        }
        let dec_input0 = match mode {
            DecoderMode::Seq2Seq => dims.embed,
            DecoderMode::Seq2Tree => dims.embed + dims.hidden,
        };
        let layer_dims = |first: usize| {
            (0..dims.layers).map(move |l| if l == 0 { first } else { dims.hidden })
        };
        Ok(ModelParameters {
            dims,
            mode,
            attention_enabled,
            input_embeddings: Parameter::zeros(&[dims.vocab_q, dims.embed]),
            output_embeddings: Parameter::zeros(&[dims.vocab_a, dims.embed]),
            encoder_layers: layer_dims(dims.embed)
                .map(|d| LstmLayerParams::zeros(d, dims.hidden))
                .collect(),
            decoder_layers: layer_dims(dec_input0)
                .map(|d| LstmLayerParams::zeros(d, dims.hidden))
                .collect(),
            output_projection: Parameter::zeros(&[dims.vocab_a, dims.hidden]),
            attn_hidden: Parameter::zeros(&[dims.hidden, dims.hidden]),
            attn_context: Parameter::zeros(&[dims.hidden, dims.hidden]),
        })
    }

    /// Draws every parameter from `U(-half_range, half_range)`.
    pub fn init_uniform(&mut self, half_range: f64, rng: &mut RngState) {
        crate::optim::init_uniform(self, half_range, rng);
    }

    /// Width of the decoder's layer-0 input.
    pub fn decoder_input_dim(&self) -> usize {
        self.decoder_layers[0].input_dim()
    }

    /// Stable names of all parameters, in [`ParamCollection`] order. Names
    /// are unique; the encoder and decoder stacks are structurally disjoint.
    pub fn named_parameters(&self) -> Vec<(String, &Parameter<S>)> {
        let mut out: Vec<(String, &Parameter<S>)> = Vec::new();
        out.push(("embeddings.input".into(), &self.input_embeddings));
        out.push(("embeddings.output".into(), &self.output_embeddings));
        for (prefix, layers) in [
            ("encoder", &self.encoder_layers),
            ("decoder", &self.decoder_layers),
        ] {
            for (l, layer) in layers.iter().enumerate() {
                out.push((format!("{prefix}.l{l}.input_weights"), &layer.input_weights));
                out.push((
                    format!("{prefix}.l{l}.recurrent_weights"),
                    &layer.recurrent_weights,
                ));
                out.push((format!("{prefix}.l{l}.biases"), &layer.biases));
            }
        }
        out.push(("output_projection".into(), &self.output_projection));
        out.push(("attention.hidden".into(), &self.attn_hidden));
        out.push(("attention.context".into(), &self.attn_context));
        out
    }

    /// Zeroes every gradient buffer.
    pub fn zero_grads(&mut self) {
        for i in 0..self.param_count() {
            self.param_mut(i).zero_grad();
        }
    }

    fn layer_param(layer: &LstmLayerParams<S>, which: usize) -> &Parameter<S> {
        match which {
            0 => &layer.input_weights,
            1 => &layer.recurrent_weights,
            _ => &layer.biases,
        }
    }

    fn layer_param_mut(layer: &mut LstmLayerParams<S>, which: usize) -> &mut Parameter<S> {
        match which {
            0 => &mut layer.input_weights,
            1 => &mut layer.recurrent_weights,
            _ => &mut layer.biases,
        }
    }
}

impl<S: Scalar> ParamCollection<S> for ModelParameters<S> {
    fn param_count(&self) -> usize {
        2 + 3 * (self.encoder_layers.len() + self.decoder_layers.len()) + 3
    }

    fn param(&self, index: usize) -> &Parameter<S> {
        let enc = self.encoder_layers.len() * 3;
        let dec = self.decoder_layers.len() * 3;
        match index {
            0 => &self.input_embeddings,
            1 => &self.output_embeddings,
            i if i < 2 + enc => {
                let j = i - 2;
                Self::layer_param(&self.encoder_layers[j / 3], j % 3)
            }
            i if i < 2 + enc + dec => {
                let j = i - 2 - enc;
                Self::layer_param(&self.decoder_layers[j / 3], j % 3)
            }
            i if i == 2 + enc + dec => &self.output_projection,
            i if i == 3 + enc + dec => &self.attn_hidden,
            _ => &self.attn_context,
        }
    }

    fn param_mut(&mut self, index: usize) -> &mut Parameter<S> {
        let enc = self.encoder_layers.len() * 3;
        let dec = self.decoder_layers.len() * 3;
        match index {
            0 => &mut self.input_embeddings,
            1 => &mut self.output_embeddings,
            i if i < 2 + enc => {
                let j = i - 2;
                Self::layer_param_mut(&mut self.encoder_layers[j / 3], j % 3)
            }
            i if i < 2 + enc + dec => {
                let j = i - 2 - enc;
                Self::layer_param_mut(&mut self.decoder_layers[j / 3], j % 3)
            }
            i if i == 2 + enc + dec => &mut self.output_projection,
            i if i == 3 + enc + dec => &mut self.attn_hidden,
            _ => &mut self.attn_context,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    fn dims() -> ModelDims {
        ModelDims {
            embed: 4,
            hidden: 3,
            layers: 2,
            vocab_q: 7,
            vocab_a: 9,
        }
    }

    #[test]
    fn construction_validates_dimensions() {
        assert!(ModelParameters::<f64>::new(dims(), DecoderMode::Seq2Seq, true).is_ok());
        let mut bad = dims();
        bad.hidden = 0;
        assert!(matches!(
            ModelParameters::<f64>::new(bad, DecoderMode::Seq2Seq, true),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn tree_mode_widens_decoder_layer_zero() {
        let seq = ModelParameters::<f64>::new(dims(), DecoderMode::Seq2Seq, true).unwrap();
        let tree = ModelParameters::<f64>::new(dims(), DecoderMode::Seq2Tree, true).unwrap();
        assert_eq!(seq.decoder_input_dim(), 4);
        assert_eq!(tree.decoder_input_dim(), 4 + 3);
        assert_eq!(tree.decoder_layers[1].input_dim(), 3);
    }

    #[test]
    fn named_parameters_are_unique_and_cover_the_collection() {
        let m = ModelParameters::<f64>::new(dims(), DecoderMode::Seq2Tree, true).unwrap();
        let names = m.named_parameters();
        assert_eq!(names.len(), m.param_count());
        let set: BTreeSet<_> = names.iter().map(|(n, _)| n.clone()).collect();
        assert_eq!(set.len(), names.len());
        // Encoder and decoder stacks are disjoint parameter objects.
        assert!(set.contains("encoder.l0.input_weights"));
        assert!(set.contains("decoder.l0.input_weights"));
        // ParamCollection indexing agrees with named order.
        for (i, (_, p)) in names.iter().enumerate() {
            assert!(core::ptr::eq(*p, m.param(i)));
        }
    }

    #[test]
    fn init_uniform_fills_every_parameter() {
        let mut m = ModelParameters::<f64>::new(dims(), DecoderMode::Seq2Seq, true).unwrap();
        m.init_uniform(0.08, &mut RngState::new(1).fork(crate::rng::stream::INIT));
        for i in 0..m.param_count() {
            let data = m.param(i).value.data();
            assert!(data.iter().all(|v| v.abs() <= 0.08));
            assert!(data.iter().any(|v| *v != 0.0));
        }
    }
}
