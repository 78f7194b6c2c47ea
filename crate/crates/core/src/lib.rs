//! Disambiguation of morphological analyser output.
//!
//! A morphological analyser maps a surface form to a set of readings
//! (lemma, POS, tags); many forms admit several. This crate trains POS- and
//! lemma-prediction models on the analyser's *unambiguous* tokens only —
//! no manual annotation — and then resolves the ambiguous tokens either
//! blindly (global argmax) or guided by the analyser's own option set, with
//! optional confidence thresholding.
//!
//! Module map:
//! - [`corpus`]: documents, CoNLL-U I/O, sliding context windows.
//! - [`morphology`]: readings, the lexicon-file analyser, the universal
//!   10-POS set, compound splitting, ambiguity tests.
//! - [`taxonomy`]: ambiguity classification, viable strategies, incidence
//!   statistics and accuracy ceilings.
//! - [`embeddings`]: word-vector table plus deterministic subword hashing.
//! - [`neuralnet`]: the tensor/autograd/Adam engine.
//! - [`disambigmodel`]: the bidirectional-LSTM architecture, decoding, and
//!   the checkpoint format.
//! - [`pipeline`]: training sets, the training loop, metrics, sweeps.
//! - [`config`]: the run configuration file format and defaults.

pub mod config;
pub mod corpus;
pub mod disambigmodel;
pub mod embeddings;
pub mod morphology;
pub mod neuralnet;
pub mod pipeline;
pub mod taxonomy;

pub use config::RunConfig;
pub use corpus::{Document, GoldLabel, SurfaceToken, Window, WindowSlot};
pub use disambigmodel::{Embedder, LabelVocab, ModelDims, ModelParams, Prediction};
pub use morphology::{AnalysedToken, Lexicon, Reading, TargetKind, UniversalPos};
pub use pipeline::{EvalInstance, MetricsReport, TrainingInstance};
pub use taxonomy::{AmbiguityClass, IncidenceReport, Strategy};
