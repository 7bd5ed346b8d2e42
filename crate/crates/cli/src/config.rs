//! JSON run configuration: data sources, model shape, and every training
//! knob with its standard default.

use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

use nl2lf_core::model::DecoderMode;
use nl2lf_core::text::{NumberKind, NumberPattern};
use nl2lf_core::train::TrainConfig;

use crate::error::{CliError, Result};

/// Logical-form syntax of a dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LfFormat {
    /// Bracketed s-expressions (lambda-calculus style).
    Sexpr,
    /// Prolog-style queries, normalized to bracketed form at ingestion.
    Prolog,
}

/// Named number-pattern presets accepted in configs and flags.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NumberPatternName {
    Integer,
    Decimal,
    TimeHhmm,
}

impl NumberPatternName {
    pub fn to_pattern(self) -> NumberPattern {
        match self {
            NumberPatternName::Integer => NumberPattern::new(NumberKind::Integer, "num", ""),
            NumberPatternName::Decimal => NumberPattern::new(NumberKind::Decimal, "num", ""),
            NumberPatternName::TimeHhmm => NumberPattern::new(NumberKind::TimeHhmm, "ti", ":ti"),
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "integer" => Ok(NumberPatternName::Integer),
            "decimal" => Ok(NumberPatternName::Decimal),
            "time-hhmm" => Ok(NumberPatternName::TimeHhmm),
            other => Err(CliError::usage(format!(
                "unknown number pattern {other:?} (expected integer, decimal, time-hhmm)"
            ))),
        }
    }
}

pub fn to_patterns(names: &[NumberPatternName]) -> Vec<NumberPattern> {
    names.iter().map(|n| n.to_pattern()).collect()
}

fn default_format() -> LfFormat {
    LfFormat::Sexpr
}
fn default_true() -> bool {
    true
}
fn default_min_count() -> usize {
    2
}
fn default_patterns() -> Vec<NumberPatternName> {
    vec![NumberPatternName::Integer, NumberPatternName::Decimal]
}

/// Data sources and text-pipeline switches.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DataConfig {
    pub train_file: PathBuf,
    #[serde(default)]
    pub dev_file: Option<PathBuf>,
    #[serde(default)]
    pub lexicon_file: Option<PathBuf>,
    #[serde(default = "default_format")]
    pub format: LfFormat,
    /// Identify entities/numbers and train on masked forms.
    #[serde(default = "default_true")]
    pub argument_identification: bool,
    /// Apply the rule-based suffix stripper to utterance tokens.
    #[serde(default)]
    pub stem: bool,
    /// Input words below this count map to `<unk>`; logical-form tokens are
    /// always kept.
    #[serde(default = "default_min_count")]
    pub min_count: usize,
    #[serde(default = "default_patterns")]
    pub number_patterns: Vec<NumberPatternName>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeName {
    Seq2seq,
    Seq2tree,
}

impl ModeName {
    pub fn to_mode(self) -> DecoderMode {
        match self {
            ModeName::Seq2seq => DecoderMode::Seq2Seq,
            ModeName::Seq2tree => DecoderMode::Seq2Tree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

fn default_mode() -> ModeName {
    ModeName::Seq2seq
}
fn default_precision() -> Precision {
    Precision::F32
}
fn default_dim() -> usize {
    200
}
fn default_layers() -> usize {
    1
}

/// Model shape.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    #[serde(default = "default_mode")]
    pub mode: ModeName,
    #[serde(default = "default_true")]
    pub attention: bool,
    #[serde(default = "default_dim")]
    pub hidden_dim: usize,
    #[serde(default = "default_dim")]
    pub embed_dim: usize,
    #[serde(default = "default_layers")]
    pub num_layers: usize,
    /// Numeric working precision: f32 is the standard training mode, f64 the
    /// high-precision mode.
    #[serde(default = "default_precision")]
    pub precision: Precision,
}

fn default_lr() -> f64 {
    0.01
}
fn default_batch() -> usize {
    20
}
fn default_smoothing() -> f64 {
    0.95
}
fn default_clip() -> f64 {
    5.0
}
fn default_dropout() -> f64 {
    0.3
}
fn default_epochs() -> usize {
    150
}
fn default_patience() -> usize {
    10
}
fn default_seed() -> u64 {
    1
}
fn default_dev_fraction() -> f64 {
    0.1
}
fn default_init() -> f64 {
    0.08
}
fn default_rms_eps() -> f64 {
    1e-8
}
fn default_tree_depth() -> usize {
    10
}
fn default_eval_len() -> usize {
    100
}

/// Training knobs; defaults follow the standard recipe (batch 20, smoothing
/// 0.95, clip 5, init U(-0.08, 0.08), reversed inputs).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainingConfig {
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_smoothing")]
    pub smoothing: f64,
    #[serde(default = "default_clip")]
    pub clip_threshold: f64,
    #[serde(default = "default_dropout")]
    pub dropout_rate: f64,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    #[serde(default = "default_patience")]
    pub patience: usize,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_dev_fraction")]
    pub dev_fraction: f64,
    #[serde(default = "default_init")]
    pub init_half_range: f64,
    #[serde(default = "default_rms_eps")]
    pub rmsprop_eps: f64,
    #[serde(default = "default_true")]
    pub reverse_input: bool,
    #[serde(default = "default_tree_depth")]
    pub max_tree_depth: usize,
    #[serde(default = "default_eval_len")]
    pub eval_max_len: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        serde_json::from_str("{}").expect("all fields defaulted")
    }
}

/// Output paths.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OutputConfig {
    pub checkpoint: PathBuf,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

/// Hyperparameter grids for the sweep command. Hidden and embedding
/// dimensions move together through `dim_grid`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepConfig {
    #[serde(default = "default_dropout_grid")]
    pub dropout_grid: Vec<f64>,
    #[serde(default = "default_dim_grid")]
    pub dim_grid: Vec<usize>,
    #[serde(default = "default_lr_grid")]
    pub lr_grid: Vec<f64>,
    /// 1 = single deterministic dev split; k > 1 = k-fold cross-validation.
    #[serde(default = "default_folds")]
    pub folds: usize,
    #[serde(default)]
    pub report: Option<PathBuf>,
}

fn default_dropout_grid() -> Vec<f64> {
    vec![0.2, 0.3, 0.4, 0.5]
}
fn default_dim_grid() -> Vec<usize> {
    vec![150, 200, 250]
}
fn default_lr_grid() -> Vec<f64> {
    vec![0.01]
}
fn default_folds() -> usize {
    1
}

/// A full run configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    pub output: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        let config: RunConfig = serde_json::from_str(&text)
            .map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    /// Collects every problem before failing, so a bad config is fixed in
    /// one round trip.
    pub fn validate(&self) -> Result<()> {
        let mut problems = self.to_train_config().validate();
        if self.model.mode == ModeName::Seq2tree && self.data.format == LfFormat::Prolog {
            // Fine: Prolog normalizes to trees. Nothing to check here; the
            // arm exists to keep the match in sync with future formats.
        }
        if self.data.min_count == 0 {
            problems.push("data.min_count must be at least 1".into());
        }
        if let Some(sweep) = &self.sweep {
            if sweep.dropout_grid.is_empty() || sweep.dim_grid.is_empty() || sweep.lr_grid.is_empty()
            {
                problems.push("sweep grids must be non-empty".into());
            }
            if sweep.folds == 0 {
                problems.push("sweep.folds must be at least 1".into());
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(CliError::usage(format!(
                "configuration errors:\n  - {}",
                problems.join("\n  - ")
            )))
        }
    }

    /// The core training configuration implied by this file.
    pub fn to_train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.training.learning_rate,
            batch_size: self.training.batch_size,
            smoothing: self.training.smoothing,
            clip_threshold: self.training.clip_threshold,
            dropout_rate: self.training.dropout_rate,
            hidden_dim: self.model.hidden_dim,
            embed_dim: self.model.embed_dim,
            num_layers: self.model.num_layers,
            max_epochs: self.training.max_epochs,
            patience: self.training.patience,
            seed: self.training.seed,
            dev_fraction: self.training.dev_fraction,
            init_half_range: self.training.init_half_range,
            rmsprop_eps: self.training.rmsprop_eps,
            reverse_input: self.training.reverse_input,
            max_tree_depth: self.training.max_tree_depth,
            eval_max_len: self.training.eval_max_len,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_paper_defaults() {
        let json = r#"{
            "data": {"train_file": "train.tsv"},
            "model": {},
            "output": {"checkpoint": "model.ckpt"}
        }"#;
        let config: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.training.batch_size, 20);
        assert_eq!(config.training.smoothing, 0.95);
        assert_eq!(config.training.clip_threshold, 5.0);
        assert_eq!(config.training.init_half_range, 0.08);
        assert!(config.training.reverse_input);
        assert_eq!(config.data.min_count, 2);
        assert_eq!(config.model.hidden_dim, 200);
        assert!(config.validate().is_ok());
    }

    #[test]
    fn validation_reports_all_problems_at_once() {
        let json = r#"{
            "data": {"train_file": "t.tsv", "min_count": 0},
            "model": {"hidden_dim": 0},
            "training": {"learning_rate": -2.0},
            "output": {"checkpoint": "m.ckpt"}
        }"#;
        let config: RunConfig = serde_json::from_str(json).unwrap();
        let err = config.validate().unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("learning_rate"));
        assert!(msg.contains("hidden_dim"));
        assert!(msg.contains("min_count"));
        assert_eq!(err.exit_code(), 1);
    }
}
