//! Labeled short texts: tokens, vocabulary, splits and padded batches.

mod synth;
mod tokenize;

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::SeededRng;

pub use synth::{synthesize_corpus, SynthSpec};
pub use tokenize::{tokenize, tokenize_strings, EMOTICONS, URL_TOKEN};

pub const PAD: &str = "<pad>";
pub const UNK: &str = "<unk>";
pub const PAD_ID: usize = 0;
pub const UNK_ID: usize = 1;
pub const DEFAULT_MIN_COUNT: usize = 5;
pub const DEFAULT_FRACTIONS: (f64, f64, f64) = (0.8, 0.1, 0.1);

/// A normalized token: non-empty, lowercase, no surrounding whitespace.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Token(String);

impl Token {
    /// Normalizes `s`; `None` when nothing remains.
    pub fn new(s: &str) -> Option<Self> {
        let t = s.trim().to_lowercase();
        (!t.is_empty()).then_some(Self(t))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDocument {
    pub tokens: Vec<Token>,
    pub label: usize,
}

impl LabeledDocument {
    /// Tokenizes `text`; `None` if no tokens survive.
    pub fn from_text(text: &str, label: usize) -> Option<Self> {
        let tokens = tokenize(text);
        (!tokens.is_empty()).then_some(Self { tokens, label })
    }
}

/// Number of classes implied by dense labels: `max(label) + 1`.
pub fn class_count(docs: &[LabeledDocument]) -> usize {
    docs.iter().map(|d| d.label + 1).max().unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Vocabulary {
    ids: BTreeMap<String, usize>,
    tokens: Vec<String>,
    min_count: usize,
}

impl Vocabulary {
    /// Ids are handed out in order of first occurrence, so the result is a
    /// pure function of document order and `min_count`.
    pub fn build(docs: &[LabeledDocument], min_count: usize) -> Result<Self> {
        if min_count == 0 {
            return Err(Error::config("min_count must be at least 1"));
        }
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        let mut order: Vec<&str> = Vec::new();
        for doc in docs {
            for t in &doc.tokens {
                let c = counts.entry(t.as_str()).or_insert(0);
                if *c == 0 {
                    order.push(t.as_str());
                }
                *c += 1;
            }
        }
        let mut tokens: Vec<String> = Vec::from([PAD.to_string(), UNK.to_string()]);
        for t in order {
            if counts[t] >= min_count && t != PAD && t != UNK {
                tokens.push(t.to_string());
            }
        }
        Self::from_tokens(tokens, min_count)
    }

    /// Rebuilds a vocabulary from its id-ordered token list.
    pub fn from_tokens(tokens: Vec<String>, min_count: usize) -> Result<Self> {
        if tokens.len() < 2 || tokens[PAD_ID] != PAD || tokens[UNK_ID] != UNK {
            return Err(Error::config("vocabulary must start with <pad>, <unk>"));
        }
        let mut ids = BTreeMap::new();
        for (i, t) in tokens.iter().enumerate() {
            if ids.insert(t.clone(), i).is_some() {
                return Err(Error::config(format!("duplicate vocabulary token {t:?}")));
            }
        }
        Ok(Self {
            ids,
            tokens,
            min_count,
        })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn min_count(&self) -> usize {
        self.min_count
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn id(&self, token: &str) -> usize {
        self.ids.get(token).copied().unwrap_or(UNK_ID)
    }

    pub fn token(&self, id: usize) -> Option<&str> {
        self.tokens.get(id).map(String::as_str)
    }

    pub fn encode(&self, tokens: &[Token]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t.as_str())).collect()
    }

    pub fn decode(&self, ids: &[usize]) -> Vec<&str> {
        ids.iter().map(|&i| self.token(i).unwrap_or(UNK)).collect()
    }
}

/// A document as word ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedDoc {
    pub ids: Vec<usize>,
    pub label: usize,
}

pub fn encode_docs(docs: &[LabeledDocument], vocab: &Vocabulary) -> Vec<EncodedDoc> {
    docs.iter()
        .map(|d| EncodedDoc {
            ids: vocab.encode(&d.tokens),
            label: d.label,
        })
        .collect()
}

/// Splits into (train, validation, test) after a seeded shuffle.
///
/// Validation and test sizes are `floor(len * fraction)`; train takes the
/// remainder.
pub fn split_corpus<D: Clone>(
    docs: &[D],
    seed: u64,
    fractions: (f64, f64, f64),
) -> Result<(Vec<D>, Vec<D>, Vec<D>)> {
    let (ft, fv, fs) = fractions;
    if ft < 0.0 || fv < 0.0 || fs < 0.0 {
        return Err(Error::config("split fractions must be non-negative"));
    }
    if libm::fabs(ft + fv + fs - 1.0) > 1e-9 {
        return Err(Error::config("split fractions must sum to 1"));
    }
    let mut order: Vec<usize> = (0..docs.len()).collect();
    SeededRng::new(seed).shuffle(&mut order);
    let n = docs.len();
    let n_val = libm::floor(n as f64 * fv) as usize;
    let n_test = libm::floor(n as f64 * fs) as usize;
    let n_train = n - n_val - n_test;
    let pick = |range: core::ops::Range<usize>| -> Vec<D> {
        order[range].iter().map(|&i| docs[i].clone()).collect()
    };
    Ok((
        pick(0..n_train),
        pick(n_train..n_train + n_val),
        pick(n_train + n_val..n),
    ))
}

/// A right-padded `batch x width` grid of word ids.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedBatch {
    pub ids: Vec<usize>,
    pub width: usize,
    pub lengths: Vec<usize>,
    pub labels: Vec<usize>,
}

impl EncodedBatch {
    pub fn batch_size(&self) -> usize {
        self.lengths.len()
    }

    pub fn row(&self, r: usize) -> &[usize] {
        &self.ids[r * self.width..(r + 1) * self.width]
    }

    /// Ids of every row at time step `t`.
    pub fn column(&self, t: usize) -> Vec<usize> {
        (0..self.batch_size())
            .map(|r| self.ids[r * self.width + t])
            .collect()
    }
}

/// Groups documents in order into batches, each padded to its own longest row.
pub fn encode_batches(docs: &[EncodedDoc], batch_size: usize) -> Result<Vec<EncodedBatch>> {
    if batch_size == 0 {
        return Err(Error::config("batch size must be at least 1"));
    }
    Ok(docs
        .chunks(batch_size)
        .map(|chunk| {
            let width = chunk.iter().map(|d| d.ids.len()).max().unwrap_or(0);
            let mut ids = Vec::with_capacity(chunk.len() * width);
            for d in chunk {
                ids.extend_from_slice(&d.ids);
                ids.extend(core::iter::repeat_n(PAD_ID, width - d.ids.len()));
            }
            EncodedBatch {
                ids,
                width,
                lengths: chunk.iter().map(|d| d.ids.len()).collect(),
                labels: chunk.iter().map(|d| d.label).collect(),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn doc(words: &[&str], label: usize) -> LabeledDocument {
        LabeledDocument {
            tokens: words.iter().map(|w| Token::new(w).unwrap()).collect(),
            label,
        }
    }

    #[test]
    fn min_count_boundary() {
        let mut docs = Vec::new();
        for _ in 0..4 {
            docs.push(doc(&["rare"], 0));
        }
        for _ in 0..5 {
            docs.push(doc(&["edge"], 1));
        }
        let v = Vocabulary::build(&docs, 5).unwrap();
        assert_eq!(v.id("rare"), UNK_ID);
        assert_eq!(v.id("edge"), 2);
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn empty_docs_give_specials_only() {
        let v = Vocabulary::build(&[], 5).unwrap();
        assert_eq!(v.len(), 2);
        assert_eq!(v.token(PAD_ID), Some(PAD));
        assert_eq!(v.token(UNK_ID), Some(UNK));
        assert!(Vocabulary::build(&[], 0).is_err());
    }

    #[test]
    fn ids_follow_first_occurrence() {
        let docs = vec![doc(&["b", "a"], 0), doc(&["c", "a", "b"], 0)];
        let v = Vocabulary::build(&docs, 1).unwrap();
        assert_eq!(v.tokens(), &["<pad>", "<unk>", "b", "a", "c"]);
        assert_eq!(Vocabulary::build(&docs, 1).unwrap(), v);
    }

    #[test]
    fn split_matches_reported_sizes() {
        let docs: Vec<usize> = (0..27632).collect();
        let (tr, va, te) = split_corpus(&docs, 1, DEFAULT_FRACTIONS).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (22106, 2763, 2763));
        let mut all: Vec<usize> = tr.iter().chain(&va).chain(&te).copied().collect();
        all.sort_unstable();
        assert_eq!(all, docs);
    }

    #[test]
    fn split_edge_cases() {
        let docs: Vec<usize> = (0..10).collect();
        let (tr, va, te) = split_corpus(&docs, 3, (1.0, 0.0, 0.0)).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (10, 0, 0));
        assert_eq!(
            split_corpus(&docs, 9, DEFAULT_FRACTIONS).unwrap(),
            split_corpus(&docs, 9, DEFAULT_FRACTIONS).unwrap()
        );
        assert!(split_corpus(&docs, 0, (1.2, -0.2, 0.0)).is_err());
        assert!(split_corpus(&docs, 0, (0.5, 0.2, 0.2)).is_err());
    }

    #[test]
    fn batches_are_right_padded() {
        let docs = vec![
            EncodedDoc {
                ids: vec![2, 3, 4],
                label: 0,
            },
            EncodedDoc {
                ids: vec![5, 6, 7, 8, 9],
                label: 1,
            },
        ];
        let b = &encode_batches(&docs, 2).unwrap()[0];
        assert_eq!(b.width, 5);
        assert_eq!(b.row(0), &[2, 3, 4, PAD_ID, PAD_ID]);
        assert_eq!(b.labels, vec![0, 1]);
        assert_eq!(b.column(3), vec![PAD_ID, 8]);

        let single = &encode_batches(&docs[..1], 4).unwrap()[0];
        assert_eq!(single.width, 3);
        assert_eq!(single.ids, vec![2, 3, 4]);
    }

    #[test]
    fn unknown_tokens_map_to_unk() {
        let v = Vocabulary::build(&[doc(&["known"], 0)], 1).unwrap();
        let enc = encode_docs(&[doc(&["known", "mystery"], 0)], &v);
        assert_eq!(enc[0].ids, vec![2, UNK_ID]);
    }
}
