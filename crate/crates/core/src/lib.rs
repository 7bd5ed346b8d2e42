//! Encoder-decoder semantic parsing in pure Rust.
//!
//! Maps natural-language utterances to logical forms with an LSTM encoder and
//! two interchangeable decoders: a flat sequence decoder and a hierarchical
//! tree decoder that expands nonterminal placeholders top-down. Soft attention
//! over encoder states and an argument-identification (delexicalization) step
//! round out the model. All forward and backward passes are written out
//! explicitly; there is no autodiff graph.
//!
//! The crate is `no_std` + `alloc` so the numeric core stays free of IO; the
//! companion CLI crate owns files, checkpoints and command-line handling.
//!
//! Module map:
//! - [`tensor`], [`nn`], [`optim`], [`gradcheck`]: dense kernels, LSTM cell,
//!   softmax/cross-entropy, RMSProp, gradient clipping, finite differences.
//! - [`lftree`]: logical forms as ordered trees, linearization with `<n>`
//!   nonterminals, production extraction for F1.
//! - [`text`]: tokenization, vocabularies, argument masking and recovery.
//! - [`model`]: encoder, attention, sequence/tree scoring and decoding.
//! - [`train`]: mini-batched RMSProp training with early stopping.
//! - [`eval`]: exact-match accuracy and production-level balanced F1.

#![cfg_attr(not(any(test, feature = "std")), no_std)]

extern crate alloc;

pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod lftree;
pub mod model;
pub mod nn;
pub mod optim;
pub mod rng;
pub mod scalar;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::Error;
pub use scalar::Scalar;
pub use tensor::Tensor;
