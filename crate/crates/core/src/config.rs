//! Run configuration: a line-based `key = value` format with `[sections]`
//! and `#` comments, resolved over built-in defaults. The resolved form can
//! be printed back out verbatim for audit, and its SHA-256 digest is stored
//! in checkpoints.

use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::morphology::TargetKind;
use crate::neuralnet::AdamConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("unknown key {section}.{key}")]
    UnknownKey { section: String, key: String },
    #[error("invalid value for {key}: {msg}")]
    BadValue { key: String, msg: String },
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Paths {
    pub lexicon: Option<PathBuf>,
    pub pos_mapping: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    pub gold: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub paths: Paths,
    pub target: TargetKind,
    // [model]
    pub window: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub mlp_hidden: usize,
    // [embedding]
    pub embedding_dim: usize,
    pub buckets: usize,
    pub min_n: usize,
    pub max_n: usize,
    pub trainable_embeddings: bool,
    // [training]
    pub batch_size: usize,
    pub dropout: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_alpha: f64,
    pub adam_epsilon: f64,
    pub epochs: usize,
    pub patience: usize,
    pub grad_clip: f64,
    pub seed: u64,
    // [eval]
    pub threshold: f64,
    pub thresholds: Vec<f64>,
    pub jobs: usize,
    pub n_repeats: usize,
    pub dev_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            target: TargetKind::Pos,
            window: 21,
            hidden: 512,
            lstm_layers: 1,
            mlp_hidden: 1024,
            embedding_dim: 300,
            buckets: 100_000,
            min_n: 3,
            max_n: 6,
            trainable_embeddings: false,
            batch_size: 50,
            dropout: 0.1,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_alpha: 0.0001,
            adam_epsilon: 0.001,
            epochs: 20,
            patience: 3,
            grad_clip: 5.0,
            seed: 42,
            threshold: 0.0,
            thresholds: (0..10).map(|i| i as f64 / 10.0).collect(),
            jobs: 1,
            n_repeats: 10,
            dev_fraction: 0.1,
        }
    }
}

impl RunConfig {
    /// Window radius `r`, from the (odd) window size `2r + 1`.
    pub fn radius(&self) -> usize {
        (self.window - 1) / 2
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            alpha: self.adam_alpha,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            epsilon: self.adam_epsilon,
        }
    }

    /// Parses config text over the defaults.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut config = RunConfig::default();
        config.apply(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, text: &str) -> Result<(), ConfigError> {
        let mut section = String::new();
        for (lineno, raw) in text.lines().enumerate() {
            let lineno = lineno + 1;
            let line = match raw.find('#') {
                Some(i) => &raw[..i],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or(ConfigError::Parse {
                    line: lineno,
                    msg: "unterminated section header".to_string(),
                })?;
                section = name.trim().to_string();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or(ConfigError::Parse {
                line: lineno,
                msg: "expected `key = value`".to_string(),
            })?;
            self.set(&section, key.trim(), value.trim())?;
        }
        Ok(())
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<(), ConfigError> {
        let full = format!("{section}.{key}");
        let unknown = || ConfigError::UnknownKey {
            section: section.to_string(),
            key: key.to_string(),
        };
        match (section, key) {
            ("paths", "lexicon") => self.paths.lexicon = Some(PathBuf::from(value)),
            ("paths", "pos_mapping") => self.paths.pos_mapping = Some(PathBuf::from(value)),
            ("paths", "embeddings") => self.paths.embeddings = Some(PathBuf::from(value)),
            ("paths", "corpus") => self.paths.corpus = Some(PathBuf::from(value)),
            ("paths", "gold") => self.paths.gold = Some(PathBuf::from(value)),
            ("paths", "checkpoint") => self.paths.checkpoint = Some(PathBuf::from(value)),
            ("model", "target") => {
                self.target = match value {
                    "pos" => TargetKind::Pos,
                    "lemma" => TargetKind::Lemma,
                    other => {
                        return Err(ConfigError::BadValue {
                            key: full,
                            msg: format!("expected pos or lemma, got {other:?}"),
                        })
                    }
                }
            }
            ("model", "window") => self.window = parse_num(&full, value)?,
            ("model", "hidden") => self.hidden = parse_num(&full, value)?,
            ("model", "lstm_layers") => self.lstm_layers = parse_num(&full, value)?,
            ("model", "mlp_hidden") => self.mlp_hidden = parse_num(&full, value)?,
            ("embedding", "dim") => self.embedding_dim = parse_num(&full, value)?,
            ("embedding", "buckets") => self.buckets = parse_num(&full, value)?,
            ("embedding", "min_n") => self.min_n = parse_num(&full, value)?,
            ("embedding", "max_n") => self.max_n = parse_num(&full, value)?,
            ("embedding", "trainable") => self.trainable_embeddings = parse_bool(&full, value)?,
            ("training", "batch_size") => self.batch_size = parse_num(&full, value)?,
            ("training", "dropout") => self.dropout = parse_num(&full, value)?,
            ("training", "adam_beta1") => self.adam_beta1 = parse_num(&full, value)?,
            ("training", "adam_beta2") => self.adam_beta2 = parse_num(&full, value)?,
            ("training", "adam_alpha") => self.adam_alpha = parse_num(&full, value)?,
            ("training", "adam_epsilon") => self.adam_epsilon = parse_num(&full, value)?,
            ("training", "epochs") => self.epochs = parse_num(&full, value)?,
            ("training", "patience") => self.patience = parse_num(&full, value)?,
            ("training", "grad_clip") => self.grad_clip = parse_num(&full, value)?,
            ("training", "seed") => self.seed = parse_num(&full, value)?,
            ("eval", "threshold") => self.threshold = parse_num(&full, value)?,
            ("eval", "thresholds") => {
                self.thresholds = value
                    .split(',')
                    .map(|v| parse_num(&full, v.trim()))
                    .collect::<Result<_, _>>()?;
            }
            ("eval", "jobs") => self.jobs = parse_num(&full, value)?,
            ("eval", "n_repeats") => self.n_repeats = parse_num(&full, value)?,
            ("eval", "dev_fraction") => self.dev_fraction = parse_num(&full, value)?,
            _ => return Err(unknown()),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.window < 3 || self.window.is_multiple_of(2) {
            return Err(ConfigError::Invalid(format!(
                "model.window must be odd and >= 3 (2r + 1), got {}",
                self.window
            )));
        }
        if self.lstm_layers != 1 {
            return Err(ConfigError::Invalid(
                "model.lstm_layers: only 1 layer is supported".to_string(),
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(ConfigError::Invalid(format!(
                "training.dropout must be in [0, 1), got {}",
                self.dropout
            )));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(ConfigError::Invalid(
                "training.batch_size and training.epochs must be >= 1".to_string(),
            ));
        }
        if self.hidden == 0 || self.mlp_hidden == 0 || self.embedding_dim == 0 {
            return Err(ConfigError::Invalid(
                "model dimensions must be >= 1".to_string(),
            ));
        }
        if self.min_n < 1 || self.max_n < self.min_n || self.buckets == 0 {
            return Err(ConfigError::Invalid(
                "embedding.buckets >= 1 and 1 <= min_n <= max_n required".to_string(),
            ));
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(ConfigError::Invalid(format!(
                "eval.threshold must be in [0, 1], got {}",
                self.threshold
            )));
        }
        for &t in &self.thresholds {
            if !(0.0..=1.0).contains(&t) {
                return Err(ConfigError::Invalid(format!(
                    "eval.thresholds entries must be in [0, 1], got {t}"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dev_fraction) || self.dev_fraction == 0.0 {
            return Err(ConfigError::Invalid(format!(
                "eval.dev_fraction must be in (0, 1), got {}",
                self.dev_fraction
            )));
        }
        if self.jobs == 0 || self.n_repeats == 0 {
            return Err(ConfigError::Invalid(
                "eval.jobs and eval.n_repeats must be >= 1".to_string(),
            ));
        }
        Ok(())
    }

    /// The resolved config in its own file format; parsing it back yields an
    /// identical config.
    pub fn print(&self) -> String {
        fn path(out: &mut String, name: &str, value: &Option<PathBuf>) {
            if let Some(p) = value {
                let _ = writeln!(out, "{name} = {}", p.display());
            }
        }
        let mut out = String::new();
        out.push_str("[paths]\n");
        path(&mut out, "lexicon", &self.paths.lexicon);
        path(&mut out, "pos_mapping", &self.paths.pos_mapping);
        path(&mut out, "embeddings", &self.paths.embeddings);
        path(&mut out, "corpus", &self.paths.corpus);
        path(&mut out, "gold", &self.paths.gold);
        path(&mut out, "checkpoint", &self.paths.checkpoint);
        let _ = writeln!(out, "\n[model]");
        let _ = writeln!(out, "target = {}", self.target.name());
        let _ = writeln!(out, "window = {}", self.window);
        let _ = writeln!(out, "hidden = {}", self.hidden);
        let _ = writeln!(out, "lstm_layers = {}", self.lstm_layers);
        let _ = writeln!(out, "mlp_hidden = {}", self.mlp_hidden);
        let _ = writeln!(out, "\n[embedding]");
        let _ = writeln!(out, "dim = {}", self.embedding_dim);
        let _ = writeln!(out, "buckets = {}", self.buckets);
        let _ = writeln!(out, "min_n = {}", self.min_n);
        let _ = writeln!(out, "max_n = {}", self.max_n);
        let _ = writeln!(out, "trainable = {}", self.trainable_embeddings);
        let _ = writeln!(out, "\n[training]");
        let _ = writeln!(out, "batch_size = {}", self.batch_size);
        let _ = writeln!(out, "dropout = {}", self.dropout);
        let _ = writeln!(out, "adam_beta1 = {}", self.adam_beta1);
        let _ = writeln!(out, "adam_beta2 = {}", self.adam_beta2);
        let _ = writeln!(out, "adam_alpha = {}", self.adam_alpha);
        let _ = writeln!(out, "adam_epsilon = {}", self.adam_epsilon);
        let _ = writeln!(out, "epochs = {}", self.epochs);
        let _ = writeln!(out, "patience = {}", self.patience);
        let _ = writeln!(out, "grad_clip = {}", self.grad_clip);
        let _ = writeln!(out, "seed = {}", self.seed);
        let _ = writeln!(out, "\n[eval]");
        let _ = writeln!(out, "threshold = {}", self.threshold);
        let _ = writeln!(
            out,
            "thresholds = {}",
            self.thresholds
                .iter()
                .map(|t| t.to_string())
                .collect::<Vec<_>>()
                .join(",")
        );
        let _ = writeln!(out, "jobs = {}", self.jobs);
        let _ = writeln!(out, "n_repeats = {}", self.n_repeats);
        let _ = writeln!(out, "dev_fraction = {}", self.dev_fraction);
        out
    }

    /// SHA-256 of the resolved config text, stored in checkpoint headers.
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.print().as_bytes());
        hasher.finalize().into()
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e| ConfigError::BadValue {
        key: key.to_string(),
        msg: format!("{e}"),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        other => Err(ConfigError::BadValue {
            key: key.to_string(),
            msg: format!("expected true/false, got {other:?}"),
        }),
    }
}
