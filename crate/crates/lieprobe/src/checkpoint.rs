//! Model checkpoints.
//!
//! Layout:
//!
//! ```text
//! b"LPCKPT01"                  8 bytes
//! manifest length (u64 LE)     8 bytes
//! manifest (UTF-8 JSON)        `length` bytes
//! tensors (f32 LE)             in manifest order, row-major
//! ```
//!
//! The manifest holds the model configuration, the vocabulary with its
//! digest, the split seed and the tensor shapes.

use std::fs;
use std::path::Path;

use lieprobe_core::adam::AdamConfig;
use lieprobe_core::corpus::Vocabulary;
use lieprobe_core::model::{param_shapes, ModelConfig, ModelParams, ModelState, PARAM_NAMES};
use lieprobe_core::tensor::Tensor;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{hex, vocabulary_digest};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"LPCKPT01";
const HEADER: u64 = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigRecord {
    pub embedding_dim: usize,
    pub hidden_dim: usize,
    pub classes: usize,
    pub neurons_per_class: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl From<&ModelConfig> for ConfigRecord {
    fn from(c: &ModelConfig) -> Self {
        Self {
            embedding_dim: c.embedding_dim,
            hidden_dim: c.hidden_dim,
            classes: c.classes,
            neurons_per_class: c.neurons_per_class,
            epochs: c.epochs,
            batch_size: c.batch_size,
            seed: c.seed,
            lr: c.optimizer.lr,
            beta1: c.optimizer.beta1,
            beta2: c.optimizer.beta2,
            eps: c.optimizer.eps,
        }
    }
}

impl From<&ConfigRecord> for ModelConfig {
    fn from(r: &ConfigRecord) -> Self {
        ModelConfig {
            embedding_dim: r.embedding_dim,
            hidden_dim: r.hidden_dim,
            classes: r.classes,
            neurons_per_class: r.neurons_per_class,
            epochs: r.epochs,
            batch_size: r.batch_size,
            seed: r.seed,
            optimizer: AdamConfig {
                lr: r.lr,
                beta1: r.beta1,
                beta2: r.beta2,
                eps: r.eps,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorRecord {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: ConfigRecord,
    pub frozen: bool,
    pub split_seed: u64,
    pub min_count: usize,
    pub vocabulary_digest: String,
    pub vocabulary: Vec<String>,
    pub tensors: Vec<TensorRecord>,
}

#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: ModelState<f32>,
    pub vocab: Vocabulary,
    pub split_seed: u64,
}

/// Serializes to the in-memory file image.
pub fn encode(model: &ModelState<f32>, vocab: &Vocabulary, split_seed: u64) -> Vec<u8> {
    let tensors = model.params().tensors();
    let manifest = Manifest {
        config: model.config().into(),
        frozen: model.is_frozen(),
        split_seed,
        min_count: vocab.min_count(),
        vocabulary_digest: vocabulary_digest(vocab),
        vocabulary: vocab.tokens().to_vec(),
        tensors: PARAM_NAMES
            .iter()
            .zip(tensors.iter())
            .map(|(name, t)| TensorRecord {
                name: (*name).to_string(),
                rows: t.rows(),
                cols: t.cols(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&manifest).expect("manifest serializes");
    let floats: usize = tensors.iter().map(|t| t.data().len()).sum();
    let mut out = Vec::with_capacity(HEADER as usize + json.len() + 4 * floats);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in tensors {
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn save(
    path: &Path,
    model: &ModelState<f32>,
    vocab: &Vocabulary,
    split_seed: u64,
) -> Result<()> {
    crate::reports::write_atomic(path, &encode(model, vocab, split_seed))
}

/// SHA-256 of a checkpoint image.
pub fn digest(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

pub fn decode(path: &Path, bytes: &[u8]) -> Result<Checkpoint> {
    let err = |offset: u64, msg: &str| Error::format(path, offset, msg);
    if bytes.len() < HEADER as usize {
        return Err(err(bytes.len() as u64, "file ends inside the header"));
    }
    if &bytes[..8] != MAGIC {
        return Err(err(0, "not a checkpoint (bad magic)"));
    }
    let len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let end = HEADER
        .checked_add(len)
        .filter(|&e| e <= bytes.len() as u64)
        .ok_or_else(|| err(8, "manifest length runs past the end of the file"))?;
    let manifest: Manifest = serde_json::from_slice(&bytes[HEADER as usize..end as usize])
        .map_err(|e| err(HEADER + e.column() as u64, &format!("bad manifest: {e}")))?;

    let config = ModelConfig::from(&manifest.config);
    let vocab = Vocabulary::from_tokens(manifest.vocabulary.clone(), manifest.min_count)
        .map_err(|e| err(HEADER, &e.to_string()))?;
    if vocabulary_digest(&vocab) != manifest.vocabulary_digest {
        return Err(err(HEADER, "vocabulary digest does not match its tokens"));
    }
    let expected = param_shapes(&config, vocab.len());
    if manifest.tensors.len() != expected.len() {
        return Err(err(HEADER, "wrong number of tensors in manifest"));
    }
    for ((rec, want), name) in manifest.tensors.iter().zip(expected).zip(PARAM_NAMES) {
        if rec.name != name || (rec.rows, rec.cols) != want {
            return Err(err(
                HEADER,
                &format!(
                    "tensor {} is {}x{}, configuration implies {name} {}x{}",
                    rec.name, rec.rows, rec.cols, want.0, want.1
                ),
            ));
        }
    }

    let mut offset = end as usize;
    let mut tensors = Vec::with_capacity(expected.len());
    for rec in &manifest.tensors {
        let count = rec.rows * rec.cols;
        let stop = offset + 4 * count;
        if stop > bytes.len() {
            return Err(err(
                bytes.len() as u64,
                &format!("file ends inside tensor {}", rec.name),
            ));
        }
        let data = bytes[offset..stop]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        tensors.push(Tensor::from_vec(rec.rows, rec.cols, data)?);
        offset = stop;
    }
    if offset != bytes.len() {
        return Err(err(offset as u64, "trailing bytes after the last tensor"));
    }
    let params = ModelParams::from_tensors(tensors)?;
    let model = ModelState::from_params(&config, vocab.len(), params, manifest.frozen)?;
    Ok(Checkpoint {
        model,
        vocab,
        split_seed: manifest.split_seed,
    })
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| match Error::io(path, e) {
        Error::Missing { path, .. } => Error::Missing {
            what: "checkpoint",
            path,
        },
        other => other,
    })?;
    decode(path, &bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use lieprobe_core::corpus::{LabeledDocument, Token};

    fn sample() -> (ModelState<f32>, Vocabulary) {
        let docs = vec![LabeledDocument {
            tokens: ["a", "b", "c"]
                .iter()
                .map(|t| Token::new(t).unwrap())
                .collect(),
            label: 0,
        }];
        let vocab = Vocabulary::build(&docs, 1).unwrap();
        let mut cfg = ModelConfig::new(3, 4, 2);
        cfg.neurons_per_class = 2;
        cfg.seed = 11;
        (ModelState::init(&cfg, vocab.len()).unwrap(), vocab)
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let (model, vocab) = sample();
        let bytes = encode(&model, &vocab, 42);
        let back = decode(Path::new("x"), &bytes).unwrap();
        assert_eq!(back.model.params(), model.params());
        assert_eq!(back.model.config(), model.config());
        assert_eq!(back.vocab, vocab);
        assert_eq!(back.split_seed, 42);
        assert_eq!(encode(&back.model, &back.vocab, 42), bytes);
    }

    #[test]
    fn corruption_is_reported_with_offsets() {
        let (model, vocab) = sample();
        let bytes = encode(&model, &vocab, 0);
        let p = Path::new("ck");

        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(matches!(
            decode(p, &bad),
            Err(Error::Format { offset: 0, .. })
        ));

        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(decode(p, cut), Err(Error::Format { .. })));

        let mut extra = bytes.clone();
        extra.push(0);
        assert!(matches!(
            decode(p, &extra),
            Err(Error::Format { offset, .. }) if offset == bytes.len() as u64
        ));
    }

    #[test]
    fn manifest_shape_mismatch_is_a_format_error() {
        let (model, vocab) = sample();
        let bytes = encode(&model, &vocab, 0);
        let len = u64::from_le_bytes(bytes[8..16].try_into().unwrap()) as usize;
        let json = std::str::from_utf8(&bytes[16..16 + len]).unwrap();
        let edited = json.replace("\"embedding_dim\":3", "\"embedding_dim\":5");
        assert_ne!(edited, json);
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(edited.len() as u64).to_le_bytes());
        out.extend_from_slice(edited.as_bytes());
        out.extend_from_slice(&bytes[16 + len..]);
        let e = decode(Path::new("ck"), &out).unwrap_err();
        assert!(matches!(e, Error::Format { .. }), "{e}");
        assert!(e.to_string().contains("embedding"));
    }
}
