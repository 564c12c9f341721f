use alloc::format;
use alloc::vec::Vec;

use super::{LabeledDocument, Token};
use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Parameters of the built-in separable corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub seed: u64,
    pub classes: usize,
    pub docs_per_class: usize,
    pub vocab_size: usize,
    /// Inclusive document length range.
    pub length_range: (usize, usize),
    /// Probability that a token comes from its class's own band.
    pub class_bias: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 7,
            classes: 10,
            docs_per_class: 100,
            vocab_size: 200,
            length_range: (6, 14),
            class_bias: 0.6,
        }
    }
}

/// Generates a class-biased corpus of tokens `w0 .. w{vocab_size-1}`.
///
/// The first half of the vocabulary is shared filler; the rest is cut into
/// one band per class. Each token is drawn from the document's class band
/// with probability `class_bias`, otherwise from the shared half.
/// Documents cycle through labels `0, 1, .., C-1, 0, ..`.
pub fn synthesize_corpus(spec: &SynthSpec) -> Result<Vec<LabeledDocument>> {
    let c = spec.classes;
    if c < 2 {
        return Err(Error::config("synthetic corpus needs at least 2 classes"));
    }
    let shared = spec.vocab_size / 2;
    let band = (spec.vocab_size - shared) / c;
    if shared == 0 || band == 0 {
        return Err(Error::config(format!(
            "vocab_size {} too small for {} classes",
            spec.vocab_size, c
        )));
    }
    let (lo, hi) = spec.length_range;
    if lo == 0 || hi < lo {
        return Err(Error::config("length range must satisfy 1 <= lo <= hi"));
    }
    if !(0.0..=1.0).contains(&spec.class_bias) {
        return Err(Error::config("class_bias must lie in [0, 1]"));
    }
    let mut rng = SeededRng::new(spec.seed);
    let mut docs = Vec::with_capacity(c * spec.docs_per_class);
    for i in 0..c * spec.docs_per_class {
        let label = i % c;
        let len = lo + rng.below(hi - lo + 1);
        let tokens = (0..len)
            .map(|_| {
                let id = if rng.uniform() < spec.class_bias {
                    shared + label * band + rng.below(band)
                } else {
                    rng.below(shared)
                };
                Token(format!("w{id}"))
            })
            .collect();
        docs.push(LabeledDocument { tokens, label });
    }
    Ok(docs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::collections::BTreeSet;

    #[test]
    fn deterministic_under_seed() {
        let spec = SynthSpec::default();
        assert_eq!(
            synthesize_corpus(&spec).unwrap(),
            synthesize_corpus(&spec).unwrap()
        );
        let other = SynthSpec {
            seed: 8,
            ..spec.clone()
        };
        assert_ne!(
            synthesize_corpus(&spec).unwrap(),
            synthesize_corpus(&other).unwrap()
        );
    }

    #[test]
    fn label_set_and_size() {
        let docs = synthesize_corpus(&SynthSpec::default()).unwrap();
        assert_eq!(docs.len(), 1000);
        let labels: BTreeSet<usize> = docs.iter().map(|d| d.label).collect();
        assert_eq!(labels, (0..10).collect());
        assert!(docs.iter().all(|d| (6..=14).contains(&d.tokens.len())));
    }

    #[test]
    fn rejects_bad_specs() {
        let base = SynthSpec::default();
        assert!(synthesize_corpus(&SynthSpec {
            classes: 1,
            ..base.clone()
        })
        .is_err());
        assert!(synthesize_corpus(&SynthSpec {
            vocab_size: 10,
            ..base.clone()
        })
        .is_err());
        assert!(synthesize_corpus(&SynthSpec {
            length_range: (5, 2),
            ..base
        })
        .is_err());
    }
}
