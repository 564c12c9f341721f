//! Run settings: defaults, a flat `key = value` config file, then flags.
//!
//! Config keys are the long flag names without the leading dashes. `#`
//! starts a comment; blank lines are ignored.
//!
//! ```text
//! # desk preset
//! m = 20
//! n = 20
//! lr = 0.01
//! p-grid = 4,8,12,16
//! ```

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use lieprobe_core::adam::AdamConfig;
use lieprobe_core::corpus::SynthSpec;
use lieprobe_core::geometry::GeometryConfig;
use lieprobe_core::latent::LatentConfig;
use lieprobe_core::model::ModelConfig;
use lieprobe_core::probes::{ProbeConfig, TestKind};

use crate::error::{Error, Result};

/// Comma-separated list of positive integers; empty means "derive a default".
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsizeList(pub Vec<usize>);

impl FromStr for UsizeList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if s.is_empty() {
            return Ok(Self(Vec::new()));
        }
        s.split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<std::result::Result<_, _>>()
            .map(Self)
    }
}

impl fmt::Display for UsizeList {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(usize::to_string).collect();
        f.write_str(&parts.join(","))
    }
}

/// A probe test named in snake case.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TestName(pub TestKind);

impl FromStr for TestName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        TestKind::from_name(s.trim()).map(Self).ok_or_else(|| {
            let names: Vec<&str> = TestKind::ALL.iter().map(|t| t.name()).collect();
            format!("unknown test {s:?}; expected one of {}", names.join(", "))
        })
    }
}

impl fmt::Display for TestName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.0.name())
    }
}

macro_rules! settings {
    ($($(#[doc = $doc:literal])* $field:ident : $ty:ty = $default:expr, $key:literal;)*) => {
        #[derive(Debug, Clone, PartialEq)]
        pub struct Settings {
            $($(#[doc = $doc])* pub $field: $ty,)*
        }

        impl Default for Settings {
            fn default() -> Self {
                Self { $($field: $default,)* }
            }
        }

        impl Settings {
            pub const KEYS: &'static [&'static str] = &[$($key),*];

            /// Sets one key from its textual value.
            pub fn apply(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
                match key {
                    $($key => {
                        self.$field = value
                            .trim()
                            .parse::<$ty>()
                            .map_err(|e| format!("{key}: {e}"))?;
                    })*
                    _ => return Err(format!("unknown setting {key:?}")),
                }
                Ok(())
            }

            /// Every key with its current value, in declaration order.
            pub fn entries(&self) -> Vec<(&'static str, String)> {
                vec![$(($key, self.$field.to_string())),*]
            }
        }

        /// Flags overriding the config file.
        #[derive(Debug, Clone, Default, clap::Args)]
        pub struct Overrides {
            $($(#[doc = $doc])* #[arg(long = $key)] pub $field: Option<$ty>,)*
        }

        impl Overrides {
            pub fn overlay(&self, s: &mut Settings) {
                $(if let Some(v) = &self.$field { s.$field = v.clone(); })*
            }
        }
    };
}

settings! {
    /// JSON-lines corpus file
    corpus: String = String::new(), "corpus";
    /// Output directory
    out: String = "out".into(), "out";
    /// Checkpoint to load (defaults to <out>/checkpoint.lpck)
    checkpoint: String = String::new(), "checkpoint";
    /// Global seed
    seed: u64 = 0, "seed";
    /// Word embedding dimension
    m: usize = 20, "m";
    /// GRU hidden dimension
    n: usize = 20, "n";
    /// Training epochs
    epochs: usize = 10, "epochs";
    /// Training batch size
    batch_size: usize = 32, "batch-size";
    /// Adam learning rate for training
    lr: f64 = 1e-3, "lr";
    /// Dense neurons dedicated to each class
    neurons_per_class: usize = 10, "neurons-per-class";
    /// Minimum training-split count for a vocabulary word
    min_count: usize = 5, "min-count";
    /// Text file of pretrained vectors (`token v1 .. vm` per line)
    embeddings: String = String::new(), "embeddings";
    /// Probe optimization steps
    probe_epochs: usize = 5000, "probe-epochs";
    /// Probe learning rate
    probe_lr: f64 = 1e-2, "probe-lr";
    /// Instances per probe step
    samples_per_step: usize = 64, "samples-per-step";
    /// Words, pairs or documents given their own candidate
    word_pair_samples: usize = 32, "word-pair-samples";
    /// Fixed probe training instances
    train_instances: usize = 2048, "train-instances";
    /// Held-out probe evaluation instances
    eval_instances: usize = 256, "eval-instances";
    /// Loss below which an axiom counts as satisfied
    threshold: f64 = 0.01, "threshold";
    /// Latent dimensions to scan (default 20, 40, .., n-20)
    p_grid: UsizeList = UsizeList::default(), "p-grid";
    /// Repeats per latent dimension
    repeats: usize = 10, "repeats";
    /// Noise added to the truncated identity projection
    init_noise: f64 = 1e-3, "init-noise";
    /// Restarts allowed for a collapsed projection
    max_restarts: usize = 3, "max-restarts";
    /// Test the shared projection is trained on
    latent_target: TestName = TestName(TestKind::CompositeInverse), "latent-target";
    /// Bracket norm below which commutator instances are dropped
    commutator_filter: f64 = 1e-3, "commutator-filter";
    /// Samples per geometry category
    samples_per_category: usize = 10_000, "samples-per-category";
    /// Histogram bins
    bins: usize = 50, "bins";
    /// Embedding dimensions of the sweep grid
    m_grid: UsizeList = UsizeList((1..=14).map(|k| 20 * k).collect()), "m-grid";
    /// Hidden dimensions of the sweep grid
    n_grid: UsizeList = UsizeList((1..=14).map(|k| 20 * k).collect()), "n-grid";
    /// Worker threads for the sweep
    threads: usize = 1, "threads";
    /// Experiments per sweep cell: any of probes, latent, geometry
    experiments: String = "probes".into(), "experiments";
    /// Synthetic corpus: classes
    classes: usize = 10, "classes";
    /// Synthetic corpus: documents per class
    docs_per_class: usize = 100, "docs-per-class";
    /// Synthetic corpus: vocabulary size
    vocab_size: usize = 200, "vocab-size";
    /// Synthetic corpus: probability of a class-band token
    class_bias: f64 = 0.6, "class-bias";
}

impl Settings {
    /// Applies a config file on top of the current values.
    pub fn load_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| match Error::io(path, e) {
            Error::Missing { path, .. } => Error::Missing {
                what: "config file",
                path,
            },
            other => other,
        })?;
        self.parse_text(path, &text)
    }

    pub fn parse_text(&mut self, path: &Path, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: i + 1,
                message,
            };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected key = value, got {line:?}")))?;
            self.apply(k.trim(), v).map_err(err)?;
        }
        Ok(())
    }

    /// `key = value` lines that `parse_text` reads back to the same settings.
    pub fn to_text(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    pub fn model_config(&self, classes: usize) -> ModelConfig {
        ModelConfig {
            embedding_dim: self.m,
            hidden_dim: self.n,
            classes,
            neurons_per_class: self.neurons_per_class,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            optimizer: AdamConfig::with_lr(self.lr),
        }
    }

    pub fn probe_config(&self) -> ProbeConfig {
        ProbeConfig {
            epochs: self.probe_epochs,
            lr: self.probe_lr,
            samples_per_step: self.samples_per_step,
            word_pair_samples: self.word_pair_samples,
            train_instances: self.train_instances,
            eval_instances: self.eval_instances,
            threshold: self.threshold,
            seed: self.seed,
        }
    }

    pub fn latent_config(&self) -> LatentConfig {
        LatentConfig {
            init_noise: self.init_noise,
            max_restarts: self.max_restarts,
            target: self.latent_target.0,
            commutator_filter: self.commutator_filter,
        }
    }

    pub fn geometry_config(&self) -> GeometryConfig {
        GeometryConfig {
            samples_per_category: self.samples_per_category,
            bins: self.bins,
            seed: self.seed,
        }
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            seed: self.seed,
            classes: self.classes,
            docs_per_class: self.docs_per_class,
            vocab_size: self.vocab_size,
            class_bias: self.class_bias,
            ..SynthSpec::default()
        }
    }

    /// Experiments named in `experiments`.
    pub fn experiment_set(&self) -> Result<Experiments> {
        let mut e = Experiments::default();
        for part in self
            .experiments
            .split(',')
            .map(str::trim)
            .filter(|p| !p.is_empty())
        {
            match part {
                "probes" => e.probes = true,
                "latent" => e.latent = true,
                "geometry" => e.geometry = true,
                other => {
                    return Err(Error::Usage(format!(
                        "unknown experiment {other:?}; expected probes, latent or geometry"
                    )))
                }
            }
        }
        Ok(e)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Experiments {
    pub probes: bool,
    pub latent: bool,
    pub geometry: bool,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_values_and_comments() {
        let mut s = Settings::default();
        s.parse_text(
            Path::new("c"),
            "# comment\n\nm = 8 # trailing\np-grid = 4, 8\nlatent-target = arbitrary_closure\n",
        )
        .unwrap();
        assert_eq!(s.m, 8);
        assert_eq!(s.p_grid, UsizeList(vec![4, 8]));
        assert_eq!(s.latent_target.0, TestKind::ArbitraryClosure);
    }

    #[test]
    fn bad_lines_name_the_line() {
        let mut s = Settings::default();
        let e = s
            .parse_text(Path::new("c"), "m = 8\nbogus = 1\n")
            .unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
        let e = s.parse_text(Path::new("c"), "m 8\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 1, .. }));
        assert!(s.parse_text(Path::new("c"), "m = -3\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut s = Settings::default();
        s.apply("lr", "0.01").unwrap();
        s.apply("p-grid", "4,8,12").unwrap();
        let mut back = Settings {
            m: 99,
            ..Settings::default()
        };
        back.parse_text(Path::new("c"), &s.to_text()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn flags_override_file() {
        let mut s = Settings::default();
        s.parse_text(Path::new("c"), "m = 8\nn = 9\n").unwrap();
        let o = Overrides {
            n: Some(12),
            ..Overrides::default()
        };
        o.overlay(&mut s);
        assert_eq!((s.m, s.n), (8, 12));
    }
}
