//! Corpus files and the prepared train/validation/test splits.
//!
//! A corpus is JSON lines, one `{"text": string, "label": integer}` object
//! per document.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use lieprobe_core::corpus::{
    class_count, encode_docs, split_corpus, EncodedDoc, LabeledDocument, Vocabulary,
    DEFAULT_FRACTIONS,
};
use lieprobe_core::rng::derive_seed;
use lieprobe_core::sweep::PreparedCorpus;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
struct Line {
    text: String,
    label: usize,
}

/// Reads a JSON-lines corpus. Blank lines are skipped, as are documents
/// whose text yields no tokens; the second value counts those.
pub fn read_corpus(path: &Path) -> Result<(Vec<LabeledDocument>, usize)> {
    let file = File::open(path).map_err(|e| match Error::io(path, e) {
        Error::Missing { path, .. } => Error::Missing {
            what: "corpus",
            path,
        },
        other => other,
    })?;
    let mut docs = Vec::new();
    let mut empty = 0;
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Line = serde_json::from_str(&line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        match LabeledDocument::from_text(&rec.text, rec.label) {
            Some(d) => docs.push(d),
            None => empty += 1,
        }
    }
    Ok((docs, empty))
}

/// Writes documents back as JSON lines, tokens joined by single spaces.
pub fn write_corpus(path: &Path, docs: &[LabeledDocument]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for d in docs {
        let text = d
            .tokens
            .iter()
            .map(|t| t.as_str())
            .collect::<Vec<_>>()
            .join(" ");
        let line = serde_json::to_string(&Line {
            text,
            label: d.label,
        })
        .expect("plain struct serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// `{token: id}` as JSON, keys sorted.
pub fn vocabulary_json(vocab: &Vocabulary) -> String {
    let map: BTreeMap<&str, usize> = vocab
        .tokens()
        .iter()
        .enumerate()
        .map(|(i, t)| (t.as_str(), i))
        .collect();
    serde_json::to_string_pretty(&map).expect("map serializes")
}

/// SHA-256 over the id-ordered tokens, newline separated.
pub fn vocabulary_digest(vocab: &Vocabulary) -> String {
    let mut h = Sha256::new();
    for t in vocab.tokens() {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    hex(&h.finalize())
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Split seed used for a run seeded with `seed`.
pub fn split_seed(seed: u64) -> u64 {
    derive_seed(seed, &[0x73_706c_6974])
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub classes: usize,
    pub split_seed: u64,
    pub train: Vec<EncodedDoc>,
    pub validation: Vec<EncodedDoc>,
    pub test: Vec<EncodedDoc>,
}

impl Dataset {
    /// Splits, builds the vocabulary from the training split only and
    /// encodes every split with it.
    pub fn prepare(docs: &[LabeledDocument], split_seed: u64, min_count: usize) -> Result<Self> {
        let classes = class_count(docs);
        if classes < 2 {
            return Err(Error::Usage(format!(
                "corpus needs at least 2 classes, found {classes}"
            )));
        }
        let (train, validation, test) = split_corpus(docs, split_seed, DEFAULT_FRACTIONS)?;
        let vocab = Vocabulary::build(&train, min_count)?;
        Self::encode(vocab, classes, split_seed, &train, &validation, &test)
    }

    /// Re-splits with the seed and vocabulary stored in a checkpoint.
    pub fn with_vocabulary(
        docs: &[LabeledDocument],
        split_seed: u64,
        vocab: Vocabulary,
    ) -> Result<Self> {
        let (train, validation, test) = split_corpus(docs, split_seed, DEFAULT_FRACTIONS)?;
        let rebuilt = Vocabulary::build(&train, vocab.min_count())?;
        if rebuilt.tokens() != vocab.tokens() {
            return Err(Error::Usage(
                "corpus does not match the checkpoint's vocabulary".into(),
            ));
        }
        Self::encode(
            vocab,
            class_count(docs),
            split_seed,
            &train,
            &validation,
            &test,
        )
    }

    fn encode(
        vocab: Vocabulary,
        classes: usize,
        split_seed: u64,
        train: &[LabeledDocument],
        validation: &[LabeledDocument],
        test: &[LabeledDocument],
    ) -> Result<Self> {
        if test.is_empty() {
            return Err(Error::Usage(
                "corpus is too small to hold a test split".into(),
            ));
        }
        Ok(Self {
            train: encode_docs(train, &vocab),
            validation: encode_docs(validation, &vocab),
            test: encode_docs(test, &vocab),
            vocab,
            classes,
            split_seed,
        })
    }

    pub fn prepared(&self) -> PreparedCorpus<'_> {
        PreparedCorpus {
            vocab_size: self.vocab.len(),
            train: &self.train,
            validation: &self.validation,
            test: &self.test,
        }
    }
}

/// Reads `token v1 v2 ..` lines (GloVe text format) and returns the rows
/// for tokens present in `vocab`, keyed by id.
pub fn read_embedding_import(
    path: &Path,
    vocab: &Vocabulary,
    dim: usize,
) -> Result<BTreeMap<usize, Vec<f32>>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut rows = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let mut parts = line.split_whitespace();
        let Some(token) = parts.next() else { continue };
        let values: std::result::Result<Vec<f32>, _> = parts.map(str::parse).collect();
        let values = values.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: format!("bad number: {e}"),
        })?;
        if values.len() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message: format!("expected {dim} values, found {}", values.len()),
            });
        }
        let id = vocab.id(token);
        if id != lieprobe_core::corpus::UNK_ID || token == lieprobe_core::corpus::UNK {
            rows.insert(id, values);
        }
    }
    Ok(rows)
}
