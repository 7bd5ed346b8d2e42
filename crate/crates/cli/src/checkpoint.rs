//! Checkpoint container: a human-readable JSON header (mode, dimensions,
//! vocabularies, training-config echo, per-tensor manifest with SHA-256
//! checksums) followed by a raw little-endian float payload.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::io::{Read, Write};
use std::path::Path;

use nl2lf_core::model::{ModelDims, ModelParameters};
use nl2lf_core::optim::ParamCollection;
use nl2lf_core::scalar::Scalar;
use nl2lf_core::text::Vocabulary;

use crate::config::{LfFormat, ModeName, NumberPatternName, Precision, TrainingConfig};
use crate::error::{CliError, Result};

const MAGIC: &[u8; 8] = b"NL2LFCK1";
const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DimsHeader {
    pub embed: usize,
    pub hidden: usize,
    pub layers: usize,
    pub vocab_q: usize,
    pub vocab_a: usize,
}

/// Pipeline switches the checkpoint was trained with; prediction and
/// evaluation must replay them on new inputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineHeader {
    pub format: LfFormat,
    pub stem: bool,
    pub argument_identification: bool,
    pub reverse_input: bool,
    pub number_patterns: Vec<NumberPatternName>,
    pub min_count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: u64,
    pub len_bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointHeader {
    pub version: u32,
    pub mode: ModeName,
    pub attention: bool,
    pub precision: Precision,
    pub dims: DimsHeader,
    pub vocab_q: Vec<String>,
    pub vocab_a: Vec<String>,
    pub pipeline: PipelineHeader,
    pub train_config: TrainingConfig,
    pub seed: u64,
    pub tensors: Vec<TensorEntry>,
}

impl CheckpointHeader {
    pub fn vocab_q(&self) -> Result<Vocabulary> {
        Vocabulary::from_token_list(self.vocab_q.clone(), self.pipeline.min_count)
            .map_err(|e| CliError::data(format!("checkpoint input vocabulary: {e}")))
    }

    pub fn vocab_a(&self) -> Result<Vocabulary> {
        Vocabulary::from_token_list(self.vocab_a.clone(), 1)
            .map_err(|e| CliError::data(format!("checkpoint output vocabulary: {e}")))
    }

    /// Short human-readable tag of the model variant (used in eval output).
    pub fn variant_tag(&self) -> String {
        let mode = match self.mode {
            ModeName::Seq2seq => "seq2seq",
            ModeName::Seq2tree => "seq2tree",
        };
        let mut tag = String::from(mode);
        if !self.attention {
            tag.push_str(" -attention");
        }
        if !self.pipeline.argument_identification {
            tag.push_str(" -argument");
        }
        tag
    }
}

/// A loaded model in whichever precision the checkpoint was written.
pub enum AnyModel {
    F32(ModelParameters<f32>),
    F64(ModelParameters<f64>),
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn tensor_bytes<S: Scalar>(data: &[S]) -> Vec<u8> {
    let mut out = vec![0u8; data.len() * S::BYTES];
    for (i, v) in data.iter().enumerate() {
        v.write_le(&mut out[i * S::BYTES..(i + 1) * S::BYTES]);
    }
    out
}

/// Writes a checkpoint. Deterministic: identical parameters and metadata
/// produce identical bytes.
pub fn save<S: Scalar>(
    path: &Path,
    params: &ModelParameters<S>,
    precision: Precision,
    pipeline: PipelineHeader,
    train_config: TrainingConfig,
    vocab_q: &Vocabulary,
    vocab_a: &Vocabulary,
) -> Result<()> {
    let mut payload: Vec<u8> = Vec::new();
    let mut tensors = Vec::new();
    for (name, param) in params.named_parameters() {
        let bytes = tensor_bytes(param.value.data());
        let mut hasher = Sha256::new();
        hasher.update(&bytes);
        tensors.push(TensorEntry {
            name,
            shape: param.value.shape().to_vec(),
            offset: payload.len() as u64,
            len_bytes: bytes.len() as u64,
            sha256: hex(&hasher.finalize()),
        });
        payload.extend_from_slice(&bytes);
    }
    let seed = train_config.seed;
    let header = CheckpointHeader {
        version: VERSION,
        mode: match params.mode {
            nl2lf_core::model::DecoderMode::Seq2Seq => ModeName::Seq2seq,
            nl2lf_core::model::DecoderMode::Seq2Tree => ModeName::Seq2tree,
        },
        attention: params.attention_enabled,
        precision,
        dims: DimsHeader {
            embed: params.dims.embed,
            hidden: params.dims.hidden,
            layers: params.dims.layers,
            vocab_q: params.dims.vocab_q,
            vocab_a: params.dims.vocab_a,
        },
        vocab_q: vocab_q.tokens().to_vec(),
        vocab_a: vocab_a.tokens().to_vec(),
        pipeline,
        train_config,
        seed,
        tensors,
    };
    let header_json = serde_json::to_vec(&header)
        .map_err(|e| CliError::data(format!("cannot serialize checkpoint header: {e}")))?;

    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| {
                CliError::data(format!("cannot create {}: {e}", parent.display()))
            })?;
        }
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    file.write_all(MAGIC)
        .and_then(|_| file.write_all(&(header_json.len() as u64).to_le_bytes()))
        .and_then(|_| file.write_all(&header_json))
        .and_then(|_| file.write_all(&payload))
        .map_err(|e| CliError::data(format!("cannot write {}: {e}", path.display())))?;
    Ok(())
}

fn fill_params<S: Scalar>(
    header: &CheckpointHeader,
    payload: &[u8],
) -> Result<ModelParameters<S>> {
    let dims = ModelDims {
        embed: header.dims.embed,
        hidden: header.dims.hidden,
        layers: header.dims.layers,
        vocab_q: header.dims.vocab_q,
        vocab_a: header.dims.vocab_a,
    };
    let mode = header.mode.to_mode();
    let mut params = ModelParameters::<S>::new(dims, mode, header.attention)
        .map_err(|e| CliError::data(format!("checkpoint dimensions: {e}")))?;
    let names: Vec<String> = params
        .named_parameters()
        .into_iter()
        .map(|(n, _)| n)
        .collect();
    if names.len() != header.tensors.len() {
        return Err(CliError::data(format!(
            "checkpoint has {} tensors, model expects {}",
            header.tensors.len(),
            names.len()
        )));
    }
    for (i, name) in names.iter().enumerate() {
        let entry = header
            .tensors
            .iter()
            .find(|t| &t.name == name)
            .ok_or_else(|| CliError::data(format!("checkpoint is missing tensor {name:?}")))?;
        let start = entry.offset as usize;
        let end = start + entry.len_bytes as usize;
        let bytes = payload.get(start..end).ok_or_else(|| {
            CliError::data(format!("checkpoint payload too short for tensor {name:?}"))
        })?;
        let mut hasher = Sha256::new();
        hasher.update(bytes);
        if hex(&hasher.finalize()) != entry.sha256 {
            return Err(CliError::data(format!(
                "checksum mismatch for tensor {name:?}"
            )));
        }
        let param = params.param_mut(i);
        if param.value.shape() != entry.shape.as_slice() {
            return Err(CliError::data(format!(
                "tensor {name:?} has shape {:?}, model expects {:?}",
                entry.shape,
                param.value.shape()
            )));
        }
        if bytes.len() != param.value.len() * S::BYTES {
            return Err(CliError::data(format!(
                "tensor {name:?} has {} bytes, expected {}",
                bytes.len(),
                param.value.len() * S::BYTES
            )));
        }
        for (j, v) in param.value.data_mut().iter_mut().enumerate() {
            *v = S::read_le(&bytes[j * S::BYTES..(j + 1) * S::BYTES]);
        }
    }
    Ok(params)
}

/// Reads a checkpoint, verifying magic, version and per-tensor checksums.
pub fn load(path: &Path) -> Result<(CheckpointHeader, AnyModel)> {
    let mut file = std::fs::File::open(path)
        .map_err(|e| CliError::data(format!("cannot open {}: {e}", path.display())))?;
    let mut buf = Vec::new();
    file.read_to_end(&mut buf)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    if buf.len() < 16 || &buf[..8] != MAGIC {
        return Err(CliError::data(format!(
            "{} is not a checkpoint (bad magic)",
            path.display()
        )));
    }
    let header_len = u64::from_le_bytes(buf[8..16].try_into().unwrap()) as usize;
    let header_end = 16 + header_len;
    if buf.len() < header_end {
        return Err(CliError::data(format!("{} is truncated", path.display())));
    }
    let header: CheckpointHeader = serde_json::from_slice(&buf[16..header_end])
        .map_err(|e| CliError::data(format!("invalid checkpoint header: {e}")))?;
    if header.version != VERSION {
        return Err(CliError::data(format!(
            "unsupported checkpoint version {}",
            header.version
        )));
    }
    let payload = &buf[header_end..];
    let model = match header.precision {
        Precision::F32 => AnyModel::F32(fill_params::<f32>(&header, payload)?),
        Precision::F64 => AnyModel::F64(fill_params::<f64>(&header, payload)?),
    };
    Ok((header, model))
}
