//! The disambiguation network: left/right LSTM context encoders, residual
//! concatenation with the target embedding, an MLP merge, a projection to
//! label scores and softmax — plus blind/guided decoding and the binary
//! checkpoint format.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;

use crate::corpus::Window;
use crate::embeddings::{EmbeddingProvider, TokenSlot};
use crate::morphology::{is_digit_only, split_compound, Lexicon, TargetKind, UniversalPos, NUM_LEMMA};
use crate::neuralnet::{
    self, dropout_mask, mlp_forward, run_lstm, softmax, LstmParams, NetError, NodeId, Tape, Tensor,
};

use thiserror::Error;

pub const UNK_LABEL: &str = "<UNK>";

const CHECKPOINT_MAGIC: &[u8; 4] = b"MDK1";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    BadVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("checkpoint corrupt in {section}: {msg}")]
    Corrupt { section: String, msg: String },
    #[error("empty option set for guided decoding")]
    EmptyOptions,
    #[error("label index {index} out of range for {len} labels")]
    BadLabel { index: usize, len: usize },
    #[error("subword table has {table} buckets but the provider hashes into {provider}")]
    BucketMismatch { table: usize, provider: usize },
    #[error(transparent)]
    Net(#[from] NetError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

/// Bidirectional label string <-> dense index map. The POS vocabulary is
/// always exactly the ten universal tags with their stable codes; lemma
/// vocabularies are built from the training corpus and reserve `<UNK>` and
/// `<NUM>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVocab {
    kind: TargetKind,
    labels: Vec<String>,
    index: HashMap<String, usize>,
}

impl LabelVocab {
    pub fn pos() -> LabelVocab {
        let labels: Vec<String> = UniversalPos::ALL.iter().map(|p| p.name().to_string()).collect();
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        LabelVocab {
            kind: TargetKind::Pos,
            labels,
            index,
        }
    }

    /// Builds a lemma vocabulary from analyser lemmas. Digit-only lemmas are
    /// collapsed onto the reserved `<NUM>` entry; everything else is sorted
    /// for a deterministic index assignment.
    pub fn lemma<I, S>(lemmas: I) -> LabelVocab
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut unique: Vec<String> = lemmas
            .into_iter()
            .filter(|l| {
                let l = l.as_ref();
                !is_digit_only(l) && l != UNK_LABEL && l != NUM_LEMMA
            })
            .map(|l| l.as_ref().to_string())
            .collect();
        unique.sort();
        unique.dedup();

        let mut labels = Vec::with_capacity(unique.len() + 2);
        labels.push(UNK_LABEL.to_string());
        labels.push(NUM_LEMMA.to_string());
        labels.extend(unique);
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        LabelVocab {
            kind: TargetKind::Lemma,
            labels,
            index,
        }
    }

    fn from_labels(kind: TargetKind, labels: Vec<String>) -> LabelVocab {
        let index = labels
            .iter()
            .enumerate()
            .map(|(i, l)| (l.clone(), i))
            .collect();
        LabelVocab {
            kind,
            labels,
            index,
        }
    }

    pub fn kind(&self) -> TargetKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, index: usize) -> &str {
        &self.labels[index]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn unk_index(&self) -> Option<usize> {
        match self.kind {
            TargetKind::Pos => None,
            TargetKind::Lemma => Some(0),
        }
    }

    /// Maps a lemma string onto the vocabulary: digit-only lemmas hit
    /// `<NUM>`, out-of-vocabulary lemmas hit `<UNK>`.
    pub fn map_lemma(&self, lemma: &str) -> usize {
        debug_assert_eq!(self.kind, TargetKind::Lemma);
        if is_digit_only(lemma) {
            return self.index_of(NUM_LEMMA).expect("reserved entry");
        }
        self.index_of(lemma).unwrap_or(0)
    }

    /// Maps a POS value onto its stable code.
    pub fn map_pos(&self, pos: UniversalPos) -> usize {
        debug_assert_eq!(self.kind, TargetKind::Pos);
        pos.code()
    }
}

/// All model dimensions needed to rebuild parameter shapes. The MLP's output
/// width equals `mlp_hidden`; the concat input is `2*hidden + emb`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelDims {
    pub emb: usize,
    pub hidden: usize,
    pub mlp_hidden: usize,
    pub n_labels: usize,
    pub radius: usize,
}

impl ModelDims {
    pub fn concat_width(&self) -> usize {
        2 * self.hidden + self.emb
    }
}

/// Subword-bucket settings when the embedding table is trained jointly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashConfig {
    pub buckets: usize,
    pub min_n: usize,
    pub max_n: usize,
}

const T_LEFT_WX: usize = 0;
const T_LEFT_WH: usize = 1;
const T_LEFT_B: usize = 2;
const T_RIGHT_WX: usize = 3;
const T_RIGHT_WH: usize = 4;
const T_RIGHT_B: usize = 5;
const T_MLP_W1: usize = 6;
const T_MLP_B1: usize = 7;
const T_MLP_W2: usize = 8;
const T_MLP_B2: usize = 9;
const T_PROJ: usize = 10;
const T_HASH: usize = 11;

pub const TENSOR_NAMES: [&str; 12] = [
    "left.wx", "left.wh", "left.bias", "right.wx", "right.wh", "right.bias", "mlp.w1", "mlp.b1",
    "mlp.w2", "mlp.b2", "proj", "hash.table",
];

/// Every trainable tensor of the model, in a fixed order shared by the
/// optimizer, the tape and the checkpoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub dims: ModelDims,
    pub hash: Option<HashConfig>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn init<R: Rng>(dims: ModelDims, hash: Option<HashConfig>, rng: &mut R) -> ModelParams {
        let (lwx, lwh, lb) = neuralnet::lstm_init(dims.emb, dims.hidden, 1.0, rng);
        let (rwx, rwh, rb) = neuralnet::lstm_init(dims.emb, dims.hidden, 1.0, rng);
        let mut tensors = vec![
            lwx,
            lwh,
            lb,
            rwx,
            rwh,
            rb,
            neuralnet::xavier_uniform(dims.mlp_hidden, dims.concat_width(), rng),
            Tensor::zeros(vec![dims.mlp_hidden]),
            neuralnet::xavier_uniform(dims.mlp_hidden, dims.mlp_hidden, rng),
            Tensor::zeros(vec![dims.mlp_hidden]),
            neuralnet::xavier_uniform(dims.n_labels, dims.mlp_hidden, rng),
        ];
        if let Some(h) = hash {
            let bound = 1.0 / dims.emb as f64;
            let data = (0..h.buckets * dims.emb)
                .map(|_| rng.gen::<f64>() * 2.0 * bound - bound)
                .collect();
            tensors.push(Tensor::new(vec![h.buckets, dims.emb], data).expect("finite init"));
        }
        ModelParams {
            dims,
            hash,
            tensors,
        }
    }

    pub fn from_tensors(
        dims: ModelDims,
        hash: Option<HashConfig>,
        tensors: Vec<Tensor>,
    ) -> Result<ModelParams, ModelError> {
        let expected = Self::expected_shapes(dims, hash);
        if tensors.len() != expected.len() {
            return Err(ModelError::Corrupt {
                section: "tensors".to_string(),
                msg: format!("expected {} tensors, found {}", expected.len(), tensors.len()),
            });
        }
        for (i, (tensor, shape)) in tensors.iter().zip(&expected).enumerate() {
            if tensor.shape() != shape.as_slice() {
                return Err(ModelError::Corrupt {
                    section: format!("tensor {}", TENSOR_NAMES[i]),
                    msg: format!("shape {:?} does not match header {:?}", tensor.shape(), shape),
                });
            }
        }
        Ok(ModelParams {
            dims,
            hash,
            tensors,
        })
    }

    fn expected_shapes(dims: ModelDims, hash: Option<HashConfig>) -> Vec<Vec<usize>> {
        let mut shapes = vec![
            vec![4 * dims.hidden, dims.emb],
            vec![4 * dims.hidden, dims.hidden],
            vec![4 * dims.hidden],
            vec![4 * dims.hidden, dims.emb],
            vec![4 * dims.hidden, dims.hidden],
            vec![4 * dims.hidden],
            vec![dims.mlp_hidden, dims.concat_width()],
            vec![dims.mlp_hidden],
            vec![dims.mlp_hidden, dims.mlp_hidden],
            vec![dims.mlp_hidden],
            vec![dims.n_labels, dims.mlp_hidden],
        ];
        if let Some(h) = hash {
            shapes.push(vec![h.buckets, dims.emb]);
        }
        shapes
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn left(&self) -> LstmParams<'_> {
        LstmParams {
            wx: &self.tensors[T_LEFT_WX],
            wh: &self.tensors[T_LEFT_WH],
            b: &self.tensors[T_LEFT_B],
        }
    }

    pub fn right(&self) -> LstmParams<'_> {
        LstmParams {
            wx: &self.tensors[T_RIGHT_WX],
            wh: &self.tensors[T_RIGHT_WH],
            b: &self.tensors[T_RIGHT_B],
        }
    }

    pub fn n_weights(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }
}

/// Full probability vector over the label vocabulary plus the unrestricted
/// choice. The blind label is the argmax with lowest-index tie-break and the
/// confidence is its probability.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub probabilities: Vec<f64>,
    pub blind_label: usize,
    pub confidence: f64,
}

impl Prediction {
    pub fn from_scores(scores: &[f64]) -> Prediction {
        let probabilities = softmax(scores);
        let blind_label = argmax_lowest(&probabilities);
        let confidence = probabilities[blind_label];
        Prediction {
            probabilities,
            blind_label,
            confidence,
        }
    }

    /// The chosen label's own probability, used for confidence thresholding
    /// of guided picks.
    pub fn confidence_of(&self, label: usize) -> f64 {
        self.probabilities[label]
    }
}

pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Restricted argmax over the analyser-admitted label indices, with
/// lowest-index tie-break. The caller handles unknown tokens (no options) by
/// falling back to blind decoding.
pub fn guided_decode(pred: &Prediction, options: &[usize]) -> Result<usize, ModelError> {
    if options.is_empty() {
        return Err(ModelError::EmptyOptions);
    }
    let mut best: Option<usize> = None;
    for &o in options {
        if o >= pred.probabilities.len() {
            return Err(ModelError::BadLabel {
                index: o,
                len: pred.probabilities.len(),
            });
        }
        best = Some(match best {
            None => o,
            Some(b) => {
                let (pb, po) = (pred.probabilities[b], pred.probabilities[o]);
                if po > pb || (po == pb && o < b) {
                    o
                } else {
                    b
                }
            }
        });
    }
    Ok(best.expect("non-empty options"))
}

/// Couples the embedding provider with the analyser lexicon that drives
/// compound splitting of lexicon-unknown context words.
#[derive(Clone, Copy)]
pub struct Embedder<'a> {
    pub provider: &'a EmbeddingProvider,
    pub lexicon: Option<&'a Lexicon>,
}

impl<'a> Embedder<'a> {
    pub fn new(provider: &'a EmbeddingProvider, lexicon: Option<&'a Lexicon>) -> Embedder<'a> {
        Embedder { provider, lexicon }
    }

    fn split_if_unknown(&self, text: &str) -> Option<Vec<String>> {
        let lexicon = self.lexicon?;
        let is_punct = text.chars().all(crate::corpus::is_punct_char);
        if is_punct || is_digit_only(text) || lexicon.lookup(text).is_some() {
            return None;
        }
        let pieces = split_compound(lexicon, text);
        if pieces.len() > 1 {
            Some(pieces)
        } else {
            None
        }
    }
}

/// One embedding position after window slots are resolved: either the shared
/// number embedding or a word.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EmbedKey {
    Num,
    Word(String),
}

impl EmbedKey {
    fn for_word(text: &str) -> EmbedKey {
        if is_digit_only(text) {
            EmbedKey::Num
        } else {
            EmbedKey::Word(text.to_string())
        }
    }
}

/// The model-input view of a window: PAD slots dropped, lexicon-unknown
/// compounds expanded into their pieces, both sides in LSTM consumption
/// order (the right side reads from the window edge toward the target).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelInput {
    pub left: Vec<EmbedKey>,
    pub right: Vec<EmbedKey>,
    pub target: EmbedKey,
}

impl ModelInput {
    pub fn from_window(window: &Window, embedder: &Embedder<'_>) -> ModelInput {
        let expand = |text: &str, out: &mut Vec<EmbedKey>| match embedder.split_if_unknown(text) {
            Some(pieces) => out.extend(pieces.iter().map(|p| EmbedKey::for_word(p))),
            None => out.push(EmbedKey::for_word(text)),
        };

        let mut left = Vec::new();
        for slot in window.left_slots() {
            if let crate::corpus::WindowSlot::Token(text) = slot {
                expand(text, &mut left);
            }
        }
        let mut right = Vec::new();
        for slot in window.right_slots() {
            if let crate::corpus::WindowSlot::Token(text) = slot {
                expand(text, &mut right);
            }
        }
        right.reverse();

        // An unknown compound as the target contributes its first piece; the
        // remaining pieces would dilute the single residual position.
        let target_text = window.target_text();
        let target = match embedder.split_if_unknown(target_text) {
            Some(pieces) => EmbedKey::for_word(&pieces[0]),
            None => EmbedKey::for_word(target_text),
        };

        ModelInput {
            left,
            right,
            target,
        }
    }
}

fn frozen_embedding(embedder: &Embedder<'_>, key: &EmbedKey) -> Vec<f64> {
    match key {
        EmbedKey::Num => embedder.provider.embed(TokenSlot::Num),
        EmbedKey::Word(w) => embedder.provider.embed(TokenSlot::Word(w)),
    }
}

fn hash_rows(embedder: &Embedder<'_>, key: &EmbedKey) -> Vec<usize> {
    let word = match key {
        EmbedKey::Num => NUM_LEMMA,
        EmbedKey::Word(w) => w,
    };
    embedder.provider.subword_indices(word)
}

fn check_hash_setup(params: &ModelParams, embedder: &Embedder<'_>) -> Result<(), ModelError> {
    if let Some(h) = params.hash {
        if embedder.provider.buckets() != h.buckets {
            return Err(ModelError::BucketMismatch {
                table: h.buckets,
                provider: embedder.provider.buckets(),
            });
        }
    }
    Ok(())
}

/// Eval/teacher forward pass over the pure kernels. The left LSTM consumes
/// the slots before the target left-to-right, the right LSTM the slots after
/// it right-to-left; the target embedding bypasses both and joins the concat
/// directly.
pub fn forward<R: Rng>(
    params: &ModelParams,
    embedder: &Embedder<'_>,
    window: &Window,
    training: bool,
    dropout_rate: f64,
    rng: &mut R,
) -> Result<Prediction, ModelError> {
    check_hash_setup(params, embedder)?;
    let input = ModelInput::from_window(window, embedder);
    forward_input(params, embedder, &input, training, dropout_rate, rng)
}

pub fn forward_input<R: Rng>(
    params: &ModelParams,
    embedder: &Embedder<'_>,
    input: &ModelInput,
    training: bool,
    dropout_rate: f64,
    rng: &mut R,
) -> Result<Prediction, ModelError> {
    check_hash_setup(params, embedder)?;
    let embed = |key: &EmbedKey| -> Vec<f64> {
        if params.hash.is_some() {
            let table = &params.tensors[T_HASH];
            let rows = hash_rows(embedder, key);
            let dim = params.dims.emb;
            let mut v = vec![0.0; dim];
            for &r in &rows {
                for (acc, x) in v.iter_mut().zip(&table.data()[r * dim..(r + 1) * dim]) {
                    *acc += x;
                }
            }
            let scale = 1.0 / rows.len() as f64;
            v.iter_mut().for_each(|x| *x *= scale);
            v
        } else {
            frozen_embedding(embedder, key)
        }
    };

    let left_seq: Vec<Vec<f64>> = input.left.iter().map(&embed).collect();
    let right_seq: Vec<Vec<f64>> = input.right.iter().map(&embed).collect();
    let h_left = run_lstm(&params.left(), &left_seq)?;
    let h_right = run_lstm(&params.right(), &right_seq)?;

    let mut concat = Vec::with_capacity(params.dims.concat_width());
    concat.extend_from_slice(&h_left);
    concat.extend_from_slice(&h_right);
    concat.extend_from_slice(&embed(&input.target));

    let merged = mlp_forward(
        &params.tensors[T_MLP_W1],
        &params.tensors[T_MLP_B1],
        &params.tensors[T_MLP_W2],
        &params.tensors[T_MLP_B2],
        &concat,
        dropout_rate,
        training,
        rng,
    )?;
    let scores = matvec_tensor(&params.tensors[T_PROJ], &merged)?;
    Ok(Prediction::from_scores(&scores))
}

fn matvec_tensor(w: &Tensor, x: &[f64]) -> Result<Vec<f64>, NetError> {
    let (rows, cols) = w.dims2()?;
    if cols != x.len() {
        return Err(NetError::ShapeMismatch {
            context: "projection",
            detail: format!("matrix width {cols} vs input {}", x.len()),
        });
    }
    let mut y = vec![0.0; rows];
    for (r, out) in y.iter_mut().enumerate() {
        *out = w.data()[r * cols..(r + 1) * cols]
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum();
    }
    Ok(y)
}

/// Training forward on the tape; returns the tape and the scalar loss node
/// so the caller can read the loss and run backward. Dropout masks are drawn
/// in the same order as [`forward`]'s training mode.
pub fn training_loss<'p, R: Rng>(
    params: &'p ModelParams,
    embedder: &Embedder<'_>,
    input: &ModelInput,
    label: usize,
    dropout_rate: f64,
    training: bool,
    rng: &mut R,
) -> Result<(Tape<'p>, NodeId), ModelError> {
    check_hash_setup(params, embedder)?;
    if label >= params.dims.n_labels {
        return Err(ModelError::BadLabel {
            index: label,
            len: params.dims.n_labels,
        });
    }
    let mut tape = Tape::new(params.tensors());
    let hash_node = params.hash.map(|_| tape.param(T_HASH));

    let embed = |tape: &mut Tape<'p>, key: &EmbedKey| -> Result<NodeId, ModelError> {
        match hash_node {
            Some(table) => Ok(tape.gather_mean(table, hash_rows(embedder, key))?),
            None => Ok(tape.input(frozen_embedding(embedder, key))?),
        }
    };

    let hidden = params.dims.hidden;
    let run_side = |tape: &mut Tape<'p>,
                        keys: &[EmbedKey],
                        wx: usize,
                        wh: usize,
                        b: usize|
     -> Result<NodeId, ModelError> {
        let wx = tape.param(wx);
        let wh = tape.param(wh);
        let b = tape.param(b);
        let mut h = tape.input(vec![0.0; hidden])?;
        let mut c = tape.input(vec![0.0; hidden])?;
        for key in keys {
            let x = embed(tape, key)?;
            let zx = tape.matvec(wx, x)?;
            let zh = tape.matvec(wh, h)?;
            let z = tape.add(zx, zh)?;
            let z = tape.add(z, b)?;
            let i = tape.slice(z, 0, hidden)?;
            let i = tape.sigmoid(i)?;
            let f = tape.slice(z, hidden, hidden)?;
            let f = tape.sigmoid(f)?;
            let g = tape.slice(z, 2 * hidden, hidden)?;
            let g = tape.tanh(g)?;
            let o = tape.slice(z, 3 * hidden, hidden)?;
            let o = tape.sigmoid(o)?;
            let fc = tape.hadamard(f, c)?;
            let ig = tape.hadamard(i, g)?;
            c = tape.add(fc, ig)?;
            let ct = tape.tanh(c)?;
            h = tape.hadamard(o, ct)?;
        }
        Ok(h)
    };

    let h_left = run_side(&mut tape, &input.left, T_LEFT_WX, T_LEFT_WH, T_LEFT_B)?;
    let h_right = run_side(&mut tape, &input.right, T_RIGHT_WX, T_RIGHT_WH, T_RIGHT_B)?;
    let target = embed(&mut tape, &input.target)?;
    let concat = tape.concat(&[h_left, h_right, target])?;

    let concat = if training {
        let mask = dropout_mask(params.dims.concat_width(), dropout_rate, rng)?;
        tape.scale_mask(concat, mask)?
    } else {
        concat
    };
    let w1 = tape.param(T_MLP_W1);
    let b1 = tape.param(T_MLP_B1);
    let pre = tape.matvec(w1, concat)?;
    let pre = tape.add(pre, b1)?;
    let act = tape.relu(pre)?;
    let act = if training {
        let mask = dropout_mask(params.dims.mlp_hidden, dropout_rate, rng)?;
        tape.scale_mask(act, mask)?
    } else {
        act
    };
    let w2 = tape.param(T_MLP_W2);
    let b2 = tape.param(T_MLP_B2);
    let merged = tape.matvec(w2, act)?;
    let merged = tape.add(merged, b2)?;
    let proj = tape.param(T_PROJ);
    let scores = tape.matvec(proj, merged)?;
    let loss = tape.softmax_ce(scores, label)?;
    Ok((tape, loss))
}

// ---------------------------------------------------------------------------
// Checkpoint format: little-endian binary.
//
//   magic "MDK1" | version u32 | target kind u8 | d,h,mlp,n_labels,r (5xu32)
//   | hash flag u8 | buckets,min_n,max_n (3xu32) | config digest (32 bytes)
//   | vocab: count u32, then per label len u32 + UTF-8 bytes
//   | tensors: count u32, then per tensor ndim u32, dims u32s, values f64
// ---------------------------------------------------------------------------

struct Section<R> {
    inner: R,
    name: &'static str,
}

impl<R: Read> Section<R> {
    fn set(&mut self, name: &'static str) -> &mut Self {
        self.name = name;
        self
    }

    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], ModelError> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|_| ModelError::Truncated(self.name.to_string()))?;
        Ok(buf)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.bytes::<1>()?[0])
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.bytes::<4>()?))
    }

    fn f64(&mut self) -> Result<f64, ModelError> {
        Ok(f64::from_le_bytes(self.bytes::<8>()?))
    }
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    params: &ModelParams,
    vocab: &LabelVocab,
    config_digest: &[u8; 32],
) -> Result<(), ModelError> {
    w.write_all(CHECKPOINT_MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&[match vocab.kind() {
        TargetKind::Pos => 0u8,
        TargetKind::Lemma => 1u8,
    }])?;
    let d = params.dims;
    for v in [d.emb, d.hidden, d.mlp_hidden, d.n_labels, d.radius] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    match params.hash {
        Some(h) => {
            w.write_all(&[1u8])?;
            for v in [h.buckets, h.min_n, h.max_n] {
                w.write_all(&(v as u32).to_le_bytes())?;
            }
        }
        None => {
            w.write_all(&[0u8])?;
            w.write_all(&[0u8; 12])?;
        }
    }
    w.write_all(config_digest)?;

    w.write_all(&(vocab.len() as u32).to_le_bytes())?;
    for label in vocab.labels() {
        w.write_all(&(label.len() as u32).to_le_bytes())?;
        w.write_all(label.as_bytes())?;
    }

    w.write_all(&(params.tensors().len() as u32).to_le_bytes())?;
    for tensor in params.tensors() {
        w.write_all(&(tensor.shape().len() as u32).to_le_bytes())?;
        for dim in tensor.shape() {
            w.write_all(&(*dim as u32).to_le_bytes())?;
        }
        for value in tensor.data() {
            w.write_all(&value.to_le_bytes())?;
        }
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(
    reader: R,
) -> Result<(ModelParams, LabelVocab, [u8; 32]), ModelError> {
    let mut r = Section {
        inner: reader,
        name: "header",
    };
    let magic = r.set("magic").bytes::<4>()?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(ModelError::BadMagic);
    }
    let version = r.set("version").u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::BadVersion(version));
    }
    let kind = match r.set("target kind").u8()? {
        0 => TargetKind::Pos,
        1 => TargetKind::Lemma,
        other => {
            return Err(ModelError::Corrupt {
                section: "target kind".to_string(),
                msg: format!("unknown kind byte {other}"),
            })
        }
    };
    r.set("dimension table");
    let dims = ModelDims {
        emb: r.u32()? as usize,
        hidden: r.u32()? as usize,
        mlp_hidden: r.u32()? as usize,
        n_labels: r.u32()? as usize,
        radius: r.u32()? as usize,
    };
    let hash_flag = r.set("hash flag").u8()?;
    r.set("hash config");
    let buckets = r.u32()? as usize;
    let min_n = r.u32()? as usize;
    let max_n = r.u32()? as usize;
    let hash = match hash_flag {
        0 => None,
        1 => Some(HashConfig {
            buckets,
            min_n,
            max_n,
        }),
        other => {
            return Err(ModelError::Corrupt {
                section: "hash flag".to_string(),
                msg: format!("unknown flag byte {other}"),
            })
        }
    };
    let digest: [u8; 32] = r.set("config digest").bytes::<32>()?;

    let n_labels = r.set("vocab size").u32()? as usize;
    if n_labels != dims.n_labels {
        return Err(ModelError::Corrupt {
            section: "vocab size".to_string(),
            msg: format!("vocab has {n_labels} labels, dimension table says {}", dims.n_labels),
        });
    }
    let mut labels = Vec::with_capacity(n_labels);
    for i in 0..n_labels {
        r.set("vocab entry");
        let len = r.u32()? as usize;
        let mut buf = vec![0u8; len];
        r.inner
            .read_exact(&mut buf)
            .map_err(|_| ModelError::Truncated(format!("vocab entry {i}")))?;
        let label = String::from_utf8(buf).map_err(|e| ModelError::Corrupt {
            section: format!("vocab entry {i}"),
            msg: e.to_string(),
        })?;
        labels.push(label);
    }
    let vocab = LabelVocab::from_labels(kind, labels);

    let n_tensors = r.set("tensor count").u32()? as usize;
    let mut tensors = Vec::with_capacity(n_tensors);
    for i in 0..n_tensors {
        let name = TENSOR_NAMES.get(i).copied().unwrap_or("extra tensor");
        r.set("tensor header");
        let ndim = r.u32()? as usize;
        if ndim > 4 {
            return Err(ModelError::Corrupt {
                section: format!("tensor {name}"),
                msg: format!("implausible rank {ndim}"),
            });
        }
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(r.u32()? as usize);
        }
        let len: usize = shape.iter().product();
        let mut data = Vec::with_capacity(len);
        r.set("tensor data");
        for _ in 0..len {
            data.push(
                r.f64()
                    .map_err(|_| ModelError::Truncated(format!("tensor {name}")))?,
            );
        }
        let tensor = Tensor::new(shape, data).map_err(|e| ModelError::Corrupt {
            section: format!("tensor {name}"),
            msg: e.to_string(),
        })?;
        tensors.push(tensor);
    }
    let params = ModelParams::from_tensors(dims, hash, tensors)?;
    Ok((params, vocab, digest))
}

pub fn save_checkpoint(
    params: &ModelParams,
    vocab: &LabelVocab,
    config_digest: &[u8; 32],
    path: &Path,
) -> Result<(), ModelError> {
    let file = std::fs::File::create(path)?;
    let mut writer = std::io::BufWriter::new(file);
    write_checkpoint(&mut writer, params, vocab, config_digest)?;
    writer.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelParams, LabelVocab, [u8; 32]), ModelError> {
    let file = std::fs::File::open(path)?;
    read_checkpoint(std::io::BufReader::new(file))
}
