//! End-to-end pipeline: build training sets from unambiguous tokens, run the
//! training loop with dev-set stopping, evaluate with blind/guided decoding,
//! compute the metrics, and sweep confidence thresholds.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::config::RunConfig;
use crate::corpus::{extract_window, CorpusError, Document, Window};
use crate::disambigmodel::{
    forward_input, guided_decode, training_loss, Embedder, HashConfig, LabelVocab, ModelDims,
    ModelError, ModelInput, ModelParams,
};
use crate::morphology::{
    is_ambiguous, is_digit_only, AnalysedToken, MorphologyError, TargetKind, UniversalPos,
    NUM_LEMMA,
};
use crate::neuralnet::{adam_step, clip_global_norm, AdamState, NetError, Tensor};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("no training instances (every token is ambiguous or unknown)")]
    EmptyTrainingSet,
    #[error("no evaluation instances")]
    EmptyEvalSet,
    #[error("confidence threshold must be in [0, 1], got {0}")]
    BadThreshold(f64),
    #[error("thresholds must be sorted ascending in [0, 1]")]
    UnsortedThresholds,
    #[error("token {0:?} lacks gold annotation")]
    MissingGold(String),
    #[error("embedding provider dimension {provider} differs from configured {config}")]
    EmbeddingDimMismatch { provider: usize, config: usize },
    #[error("checkpoint targets {checkpoint} but the task targets {requested}")]
    TargetKindMismatch {
        checkpoint: &'static str,
        requested: &'static str,
    },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Morphology(#[from] MorphologyError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Net(#[from] NetError),
}

/// A window around an unambiguous token plus its analyser-given label.
#[derive(Debug, Clone)]
pub struct TrainingInstance {
    pub window: Window,
    pub label: usize,
}

/// A window around an ambiguous token, the analyser-admitted label indices,
/// and the manually annotated gold label.
#[derive(Debug, Clone)]
pub struct EvalInstance {
    pub window: Window,
    pub options: Vec<usize>,
    pub gold: usize,
    pub gold_pos: Option<UniversalPos>,
}

/// The label vocabulary implied by a corpus: the fixed ten tags for POS
/// models, all analyser lemmas (plus reserved entries) for lemma models.
pub fn build_label_vocab(analysed: &[Vec<AnalysedToken>], kind: TargetKind) -> LabelVocab {
    match kind {
        TargetKind::Pos => LabelVocab::pos(),
        TargetKind::Lemma => LabelVocab::lemma(
            analysed
                .iter()
                .flatten()
                .flat_map(|t| t.readings.iter().map(|r| r.lemma.as_str())),
        ),
    }
}

/// One instance per token that has at least one reading and is unambiguous
/// for the target kind. The label is what the analyser says, not gold.
pub fn build_training_set(
    docs: &[Document],
    analysed: &[Vec<AnalysedToken>],
    kind: TargetKind,
    r: usize,
    vocab: &LabelVocab,
) -> Result<Vec<TrainingInstance>, PipelineError> {
    debug_assert_eq!(docs.len(), analysed.len());
    let mut instances = Vec::new();
    for (doc, tokens) in docs.iter().zip(analysed) {
        for (i, token) in tokens.iter().enumerate() {
            if token.readings.is_empty() || is_ambiguous(token, kind)? {
                continue;
            }
            debug_assert!(
                !is_ambiguous(token, kind).unwrap(),
                "training must never consume ambiguous targets"
            );
            let label = match kind {
                TargetKind::Pos => vocab.map_pos(token.readings[0].pos),
                TargetKind::Lemma => vocab.map_lemma(&token.readings[0].lemma),
            };
            instances.push(TrainingInstance {
                window: extract_window(doc, i, r)?,
                label,
            });
        }
    }
    Ok(instances)
}

/// One instance per ambiguous gold-annotated token. Option indices are
/// sorted and deduplicated; for lemma models, out-of-vocabulary lemmas fold
/// onto `<UNK>` and digit-only ones onto `<NUM>`.
pub fn build_eval_set(
    docs: &[Document],
    analysed: &[Vec<AnalysedToken>],
    kind: TargetKind,
    r: usize,
    vocab: &LabelVocab,
) -> Result<Vec<EvalInstance>, PipelineError> {
    debug_assert_eq!(docs.len(), analysed.len());
    let mut instances = Vec::new();
    for (doc, tokens) in docs.iter().zip(analysed) {
        for (i, token) in tokens.iter().enumerate() {
            if token.readings.is_empty() || !is_ambiguous(token, kind)? {
                continue;
            }
            let gold_label = match &token.token.gold {
                Some(g) => g,
                None => continue,
            };
            let mut options: Vec<usize> = match kind {
                TargetKind::Pos => token.readings.iter().map(|r| vocab.map_pos(r.pos)).collect(),
                TargetKind::Lemma => token
                    .readings
                    .iter()
                    .map(|r| vocab.map_lemma(&r.lemma))
                    .collect(),
            };
            options.sort_unstable();
            options.dedup();
            let gold = match kind {
                TargetKind::Pos => vocab.map_pos(gold_label.upos),
                TargetKind::Lemma => vocab.map_lemma(&gold_label.lemma),
            };
            instances.push(EvalInstance {
                window: extract_window(doc, i, r)?,
                options,
                gold,
                gold_pos: Some(gold_label.upos),
            });
        }
    }
    Ok(instances)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub dev_guided_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub stopped_early: bool,
}

impl TrainingLog {
    /// Line-oriented form: `epoch,train_loss,dev_guided_acc`.
    pub fn to_lines(&self) -> String {
        let mut out = String::from("epoch,train_loss,dev_guided_acc\n");
        for e in &self.epochs {
            let _ = writeln!(out, "{},{:.6},{:.6}", e.epoch, e.train_loss, e.dev_guided_acc);
        }
        out
    }
}

fn zero_all(tensors: &mut [Tensor]) {
    for t in tensors {
        t.data_mut().fill(0.0);
    }
}

/// Trains on shuffled mini-batches with Adam, logging dev guided accuracy
/// after every epoch and returning the parameters of the best dev epoch.
///
/// Early stopping: after `max(patience, 1)` consecutive epochs without a new
/// best dev accuracy, training stops. With an empty dev set there is nothing
/// to compare, so all epochs run and the final parameters are returned.
pub fn train(
    instances: &[TrainingInstance],
    dev: &[EvalInstance],
    embedder: &Embedder<'_>,
    vocab: &LabelVocab,
    config: &RunConfig,
    seed: u64,
) -> Result<(ModelParams, TrainingLog), PipelineError> {
    if instances.is_empty() {
        return Err(PipelineError::EmptyTrainingSet);
    }
    if embedder.provider.dim() != config.embedding_dim {
        return Err(PipelineError::EmbeddingDimMismatch {
            provider: embedder.provider.dim(),
            config: config.embedding_dim,
        });
    }

    let dims = ModelDims {
        emb: config.embedding_dim,
        hidden: config.hidden,
        mlp_hidden: config.mlp_hidden,
        n_labels: vocab.len(),
        radius: config.radius(),
    };
    let hash = config.trainable_embeddings.then_some(HashConfig {
        buckets: config.buckets,
        min_n: config.min_n,
        max_n: config.max_n,
    });

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut params = ModelParams::init(dims, hash, &mut rng);
    let mut adam = AdamState::new(config.adam(), params.tensors());
    let mut grads: Vec<Tensor> = params.tensors().iter().map(Tensor::zeros_like).collect();

    // Window-to-input resolution (PAD dropping, compound expansion) is
    // stable across epochs, so do it once.
    let prepared: Vec<(ModelInput, usize)> = instances
        .iter()
        .map(|inst| (ModelInput::from_window(&inst.window, embedder), inst.label))
        .collect();
    let dev_prepared = prepare_eval(dev, embedder);

    let mut order: Vec<usize> = (0..prepared.len()).collect();
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, ModelParams, usize)> = None;
    let mut stale = 0usize;
    let effective_patience = config.patience.max(1);

    for epoch in 1..=config.epochs {
        shuffle(&mut order, &mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            zero_all(&mut grads);
            let mut batch_loss = 0.0;
            for &idx in batch {
                let (input, label) = &prepared[idx];
                let (tape, loss) = training_loss(
                    &params,
                    embedder,
                    input,
                    *label,
                    config.dropout,
                    true,
                    &mut rng,
                )?;
                batch_loss += tape.scalar(loss);
                tape.backward(loss, &mut grads);
            }
            let scale = 1.0 / batch.len() as f64;
            for g in &mut grads {
                for v in g.data_mut() {
                    *v *= scale;
                }
            }
            clip_global_norm(&mut grads, config.grad_clip);
            adam_step(&mut adam, params.tensors_mut(), &grads)?;
            epoch_loss += batch_loss;
        }
        let train_loss = epoch_loss / prepared.len() as f64;

        let dev_acc = if dev_prepared.is_empty() {
            0.0
        } else {
            decode_prepared(&params, embedder, &dev_prepared, 1)?
                .iter()
                .filter(|d| d.guided == d.gold)
                .count() as f64
                / dev_prepared.len() as f64
        };
        log.epochs.push(EpochLog {
            epoch,
            train_loss,
            dev_guided_acc: dev_acc,
        });

        if dev_prepared.is_empty() {
            continue;
        }
        let improved = best.as_ref().is_none_or(|(acc, _, _)| dev_acc > *acc);
        if improved {
            best = Some((dev_acc, params.clone(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= effective_patience {
                log.stopped_early = true;
                break;
            }
        }
    }

    match best {
        Some((_, best_params, best_epoch)) => {
            log.best_epoch = best_epoch;
            Ok((best_params, log))
        }
        None => {
            log.best_epoch = log.epochs.len();
            Ok((params, log))
        }
    }
}

fn shuffle<R: Rng>(order: &mut [usize], rng: &mut R) {
    for k in (1..order.len()).rev() {
        let j = rng.gen_range(0..=k);
        order.swap(k, j);
    }
}

/// The raw decode of one evaluation instance, before any thresholding.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecodedInstance {
    pub blind: usize,
    pub blind_conf: f64,
    pub guided: usize,
    pub guided_conf: f64,
    pub gold: usize,
    pub gold_pos: Option<UniversalPos>,
}

struct PreparedEval {
    input: ModelInput,
    options: Vec<usize>,
    gold: usize,
    gold_pos: Option<UniversalPos>,
}

fn prepare_eval(eval_set: &[EvalInstance], embedder: &Embedder<'_>) -> Vec<PreparedEval> {
    eval_set
        .iter()
        .map(|inst| PreparedEval {
            input: ModelInput::from_window(&inst.window, embedder),
            options: inst.options.clone(),
            gold: inst.gold,
            gold_pos: inst.gold_pos,
        })
        .collect()
}

fn decode_one(
    params: &ModelParams,
    embedder: &Embedder<'_>,
    inst: &PreparedEval,
) -> Result<DecodedInstance, PipelineError> {
    // Eval mode consumes no randomness; the rng is only a type witness.
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let pred = forward_input(params, embedder, &inst.input, false, 0.0, &mut rng)?;
    let guided = guided_decode(&pred, &inst.options)?;
    Ok(DecodedInstance {
        blind: pred.blind_label,
        blind_conf: pred.confidence,
        guided,
        guided_conf: pred.confidence_of(guided),
        gold: inst.gold,
        gold_pos: inst.gold_pos,
    })
}

fn decode_prepared(
    params: &ModelParams,
    embedder: &Embedder<'_>,
    prepared: &[PreparedEval],
    jobs: usize,
) -> Result<Vec<DecodedInstance>, PipelineError> {
    if jobs <= 1 || prepared.len() < 2 {
        return prepared
            .iter()
            .map(|inst| decode_one(params, embedder, inst))
            .collect();
    }
    // Chunked fan-out; chunk order is preserved, so the result is
    // independent of the worker count.
    let chunk = prepared.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = prepared
            .chunks(chunk)
            .map(|slice| {
                scope.spawn(move || {
                    slice
                        .iter()
                        .map(|inst| decode_one(params, embedder, inst))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(prepared.len());
        for handle in handles {
            out.extend(handle.join().expect("decode worker panicked")?);
        }
        Ok(out)
    })
}

/// Decodes every instance once (blind and guided), in instance order.
pub fn decode_instances(
    params: &ModelParams,
    embedder: &Embedder<'_>,
    eval_set: &[EvalInstance],
    jobs: usize,
) -> Result<Vec<DecodedInstance>, PipelineError> {
    let prepared = prepare_eval(eval_set, embedder);
    decode_prepared(params, embedder, &prepared, jobs)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub gold_count: usize,
    pub predicted_count: usize,
    pub correct: usize,
}

/// Metrics at one confidence threshold. Per-class and macro rows are over
/// guided picks (the paper's method); blind numbers are reported alongside.
/// A prediction below the threshold is withheld: it counts as wrong for the
/// plain accuracy lines and as not-predicted for precision/recall, and the
/// `*_covered` accuracies exclude it.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub threshold: f64,
    pub n_instances: usize,
    pub per_class: BTreeMap<usize, ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub blind_accuracy: f64,
    pub guided_accuracy: f64,
    pub blind_accuracy_covered: f64,
    pub guided_accuracy_covered: f64,
    /// Fraction of instances whose guided prediction was not withheld.
    pub coverage: f64,
    /// Guided accuracy bucketed by the gold token's POS.
    pub per_pos_accuracy: BTreeMap<UniversalPos, (usize, usize)>,
    /// Token-level accuracy over the whole corpus, when computed.
    pub token_accuracy: Option<f64>,
}

/// Confusion arithmetic over already-decoded instances.
pub fn compute_metrics(decoded: &[DecodedInstance], threshold: f64) -> MetricsReport {
    let n = decoded.len();
    let mut per_class: BTreeMap<usize, ClassMetrics> = BTreeMap::new();
    for d in decoded {
        per_class.entry(d.gold).or_default().gold_count += 1;
    }

    let mut blind_ok = 0usize;
    let mut guided_ok = 0usize;
    let mut blind_kept = 0usize;
    let mut guided_kept = 0usize;
    let mut blind_ok_kept = 0usize;
    let mut guided_ok_kept = 0usize;
    let mut per_pos: BTreeMap<UniversalPos, (usize, usize)> = BTreeMap::new();

    for d in decoded {
        let guided_withheld = d.guided_conf < threshold;
        let blind_withheld = d.blind_conf < threshold;

        if !blind_withheld {
            blind_kept += 1;
            if d.blind == d.gold {
                blind_ok += 1;
                blind_ok_kept += 1;
            }
        }
        let guided_correct = !guided_withheld && d.guided == d.gold;
        if !guided_withheld {
            guided_kept += 1;
            if let Some(entry) = per_class.get_mut(&d.guided) {
                entry.predicted_count += 1;
            }
            if guided_correct {
                guided_ok += 1;
                guided_ok_kept += 1;
                per_class.get_mut(&d.gold).expect("gold class present").correct += 1;
            }
        }
        if let Some(pos) = d.gold_pos {
            let slot = per_pos.entry(pos).or_insert((0, 0));
            slot.1 += 1;
            if guided_correct {
                slot.0 += 1;
            }
        }
    }

    for class in per_class.values_mut() {
        class.precision = if class.predicted_count == 0 {
            0.0
        } else {
            class.correct as f64 / class.predicted_count as f64
        };
        class.recall = if class.gold_count == 0 {
            0.0
        } else {
            class.correct as f64 / class.gold_count as f64
        };
        class.f1 = if class.precision + class.recall == 0.0 {
            0.0
        } else {
            2.0 * class.precision * class.recall / (class.precision + class.recall)
        };
    }

    let classes = per_class.len().max(1) as f64;
    let fraction = |num: usize, den: usize| if den == 0 { 0.0 } else { num as f64 / den as f64 };
    MetricsReport {
        threshold,
        n_instances: n,
        macro_precision: per_class.values().map(|c| c.precision).sum::<f64>() / classes,
        macro_recall: per_class.values().map(|c| c.recall).sum::<f64>() / classes,
        macro_f1: per_class.values().map(|c| c.f1).sum::<f64>() / classes,
        blind_accuracy: fraction(blind_ok, n),
        guided_accuracy: fraction(guided_ok, n),
        blind_accuracy_covered: fraction(blind_ok_kept, blind_kept),
        guided_accuracy_covered: fraction(guided_ok_kept, guided_kept),
        coverage: fraction(guided_kept, n),
        per_class,
        per_pos_accuracy: per_pos,
        token_accuracy: None,
    }
}

/// Blind and guided decoding over the evaluation set at one threshold.
pub fn evaluate(
    params: &ModelParams,
    embedder: &Embedder<'_>,
    eval_set: &[EvalInstance],
    threshold: f64,
    jobs: usize,
) -> Result<MetricsReport, PipelineError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::BadThreshold(threshold));
    }
    if eval_set.is_empty() {
        return Err(PipelineError::EmptyEvalSet);
    }
    let decoded = decode_instances(params, embedder, eval_set, jobs)?;
    Ok(compute_metrics(&decoded, threshold))
}

/// How a token was resolved inside [`token_accuracy`] and the disambiguator:
/// by the analyser alone, by the guided model, or blindly for unknowns.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResolutionRoute {
    Analyser,
    Guided,
    Blind,
}

/// Resolves one analysed token to a concrete label string for the model's
/// target kind. `idx` is the token's position in `doc`.
pub fn resolve_token_label(
    params: &ModelParams,
    embedder: &Embedder<'_>,
    vocab: &LabelVocab,
    doc: &Document,
    idx: usize,
    token: &AnalysedToken,
    threshold: f64,
) -> Result<(String, ResolutionRoute, bool), PipelineError> {
    let kind = vocab.kind();
    let decode_window = |options: Option<&[usize]>| -> Result<(usize, f64), PipelineError> {
        let window = extract_window(doc, idx, params.dims.radius)?;
        let input = ModelInput::from_window(&window, embedder);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let pred = forward_input(params, embedder, &input, false, 0.0, &mut rng)?;
        Ok(match options {
            Some(options) => {
                let pick = guided_decode(&pred, options)?;
                (pick, pred.confidence_of(pick))
            }
            None => (pred.blind_label, pred.confidence),
        })
    };

    if token.readings.is_empty() {
        // Unknown token: only blind prediction is available.
        let (pick, conf) = decode_window(None)?;
        return Ok((vocab.label(pick).to_string(), ResolutionRoute::Blind, conf >= threshold));
    }

    if !is_ambiguous(token, kind)? {
        let label = match kind {
            TargetKind::Pos => token.readings[0].pos.name().to_string(),
            TargetKind::Lemma => token.readings[0].lemma.clone(),
        };
        return Ok((label, ResolutionRoute::Analyser, true));
    }

    match kind {
        TargetKind::Pos => {
            let mut options: Vec<usize> =
                token.readings.iter().map(|r| vocab.map_pos(r.pos)).collect();
            options.sort_unstable();
            options.dedup();
            let (pick, conf) = decode_window(Some(&options))?;
            Ok((
                vocab.label(pick).to_string(),
                ResolutionRoute::Guided,
                conf >= threshold,
            ))
        }
        TargetKind::Lemma => {
            let mut option_strings: Vec<&str> =
                token.readings.iter().map(|r| r.lemma.as_str()).collect();
            option_strings.sort_unstable();
            option_strings.dedup();
            let mut options: Vec<usize> =
                option_strings.iter().map(|l| vocab.map_lemma(l)).collect();
            options.sort_unstable();
            options.dedup();
            let unk = vocab.unk_index().expect("lemma vocab");
            if options.iter().all(|&o| o == unk) {
                // No option is in the model's vocabulary, so the model has no
                // opinion; fall back to the analyser's first option.
                return Ok((
                    option_strings[0].to_string(),
                    ResolutionRoute::Analyser,
                    true,
                ));
            }
            let (pick, conf) = decode_window(Some(&options))?;
            let label = if pick == unk {
                // The pick stands for every out-of-vocabulary option; report
                // the first of them.
                option_strings
                    .iter()
                    .find(|l| vocab.map_lemma(l) == unk)
                    .expect("some option maps to <UNK>")
                    .to_string()
            } else {
                vocab.label(pick).to_string()
            };
            Ok((label, ResolutionRoute::Guided, conf >= threshold))
        }
    }
}

fn label_matches_gold(kind: TargetKind, label: &str, gold: &crate::corpus::GoldLabel) -> bool {
    match kind {
        TargetKind::Pos => label == gold.upos.name(),
        TargetKind::Lemma => {
            label == gold.lemma || (label == NUM_LEMMA && is_digit_only(&gold.lemma))
        }
    }
}

/// Token-level accuracy over a fully annotated corpus: unambiguous tokens
/// are scored by their single analyser label, ambiguous ones by guided
/// decoding, unknown ones by blind decoding. Withheld predictions count as
/// wrong.
pub fn token_accuracy(
    params: &ModelParams,
    embedder: &Embedder<'_>,
    vocab: &LabelVocab,
    docs: &[Document],
    analysed: &[Vec<AnalysedToken>],
    threshold: f64,
) -> Result<f64, PipelineError> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(PipelineError::BadThreshold(threshold));
    }
    let mut total = 0usize;
    let mut correct = 0usize;
    for (doc, tokens) in docs.iter().zip(analysed) {
        for (i, token) in tokens.iter().enumerate() {
            let gold = token
                .token
                .gold
                .as_ref()
                .ok_or_else(|| PipelineError::MissingGold(token.token.text.clone()))?;
            total += 1;
            let (label, _route, kept) =
                resolve_token_label(params, embedder, vocab, doc, i, token, threshold)?;
            if kept && label_matches_gold(vocab.kind(), &label, gold) {
                correct += 1;
            }
        }
    }
    if total == 0 {
        return Err(PipelineError::EmptyEvalSet);
    }
    Ok(correct as f64 / total as f64)
}

/// One metrics row per threshold, over a single decoding pass.
pub fn confidence_sweep(
    params: &ModelParams,
    embedder: &Embedder<'_>,
    eval_set: &[EvalInstance],
    thresholds: &[f64],
    jobs: usize,
) -> Result<Vec<MetricsReport>, PipelineError> {
    if thresholds.windows(2).any(|w| w[0] > w[1])
        || thresholds.iter().any(|t| !(0.0..=1.0).contains(t))
    {
        return Err(PipelineError::UnsortedThresholds);
    }
    if eval_set.is_empty() {
        return Err(PipelineError::EmptyEvalSet);
    }
    let decoded = decode_instances(params, embedder, eval_set, jobs)?;
    Ok(thresholds
        .iter()
        .map(|&t| compute_metrics(&decoded, t))
        .collect())
}

/// Curve CSV: `threshold,precision,recall,f1,coverage`, six decimal places,
/// macro metrics over guided decoding.
pub fn sweep_to_csv(rows: &[MetricsReport]) -> String {
    let mut out = String::from("threshold,precision,recall,f1,coverage\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.threshold, r.macro_precision, r.macro_recall, r.macro_f1, r.coverage
        );
    }
    out
}

/// Inputs shared by every repetition of the experiment.
pub struct ExperimentInputs<'a> {
    pub train_docs: &'a [Document],
    pub train_analysed: &'a [Vec<AnalysedToken>],
    pub gold_docs: &'a [Document],
    pub gold_analysed: &'a [Vec<AnalysedToken>],
    pub embedder: Embedder<'a>,
    pub vocab: &'a LabelVocab,
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub seed: u64,
    pub report: MetricsReport,
}

#[derive(Debug, Clone)]
pub struct ExperimentReport {
    pub averaged: MetricsReport,
    pub runs: Vec<ExperimentRun>,
}

/// Repeats train/evaluate once per seed, each time with a fresh random
/// dev/eval split of the gold corpus (by sentence), and averages the
/// resulting metrics arithmetically.
pub fn repeated_experiment(
    inputs: &ExperimentInputs<'_>,
    config: &RunConfig,
    seeds: &[u64],
) -> Result<ExperimentReport, PipelineError> {
    assert!(!seeds.is_empty(), "at least one repetition required");
    let mut runs = Vec::with_capacity(seeds.len());
    for &seed in seeds {
        let (dev_docs, eval_docs) = split_dev_eval(inputs.gold_docs.len(), config.dev_fraction, seed);
        let (dev_d, dev_a) = select(inputs.gold_docs, inputs.gold_analysed, &dev_docs);
        let (eval_d, eval_a) = select(inputs.gold_docs, inputs.gold_analysed, &eval_docs);

        let training = build_training_set(
            inputs.train_docs,
            inputs.train_analysed,
            inputs.vocab.kind(),
            config.radius(),
            inputs.vocab,
        )?;
        let dev = build_eval_set(&dev_d, &dev_a, inputs.vocab.kind(), config.radius(), inputs.vocab)?;
        let eval =
            build_eval_set(&eval_d, &eval_a, inputs.vocab.kind(), config.radius(), inputs.vocab)?;

        let (params, _log) = train(&training, &dev, &inputs.embedder, inputs.vocab, config, seed)?;
        let report = evaluate(&params, &inputs.embedder, &eval, config.threshold, config.jobs)?;
        runs.push(ExperimentRun { seed, report });
    }
    let averaged = average_reports(runs.iter().map(|r| &r.report));
    Ok(ExperimentReport { averaged, runs })
}

/// Document-index split: `dev_fraction` of the documents (at least one) go
/// to the development set.
pub fn split_dev_eval(n_docs: usize, dev_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut indices: Vec<usize> = (0..n_docs).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    shuffle(&mut indices, &mut rng);
    let n_dev = ((n_docs as f64 * dev_fraction).ceil() as usize).clamp(1, n_docs.saturating_sub(1).max(1));
    let dev = indices[..n_dev].to_vec();
    let eval = indices[n_dev..].to_vec();
    (dev, eval)
}

fn select(
    docs: &[Document],
    analysed: &[Vec<AnalysedToken>],
    indices: &[usize],
) -> (Vec<Document>, Vec<Vec<AnalysedToken>>) {
    let d = indices.iter().map(|&i| docs[i].clone()).collect();
    let a = indices.iter().map(|&i| analysed[i].clone()).collect();
    (d, a)
}

/// Arithmetic mean of scalar metrics; per-class and per-POS entries are
/// averaged over the runs in which they appear, counts are summed.
pub fn average_reports<'a, I: Iterator<Item = &'a MetricsReport>>(reports: I) -> MetricsReport {
    let reports: Vec<&MetricsReport> = reports.collect();
    assert!(!reports.is_empty());
    let n = reports.len() as f64;
    let mean = |f: &dyn Fn(&MetricsReport) -> f64| reports.iter().map(|r| f(r)).sum::<f64>() / n;

    let mut per_class: BTreeMap<usize, (ClassMetrics, usize)> = BTreeMap::new();
    for report in &reports {
        for (&label, m) in &report.per_class {
            let (acc, count) = per_class.entry(label).or_default();
            acc.precision += m.precision;
            acc.recall += m.recall;
            acc.f1 += m.f1;
            acc.gold_count += m.gold_count;
            acc.predicted_count += m.predicted_count;
            acc.correct += m.correct;
            *count += 1;
        }
    }
    let per_class = per_class
        .into_iter()
        .map(|(label, (mut m, count))| {
            m.precision /= count as f64;
            m.recall /= count as f64;
            m.f1 /= count as f64;
            (label, m)
        })
        .collect();

    let mut per_pos: BTreeMap<UniversalPos, (usize, usize)> = BTreeMap::new();
    for report in &reports {
        for (&pos, &(ok, total)) in &report.per_pos_accuracy {
            let slot = per_pos.entry(pos).or_insert((0, 0));
            slot.0 += ok;
            slot.1 += total;
        }
    }

    let token_accs: Vec<f64> = reports.iter().filter_map(|r| r.token_accuracy).collect();
    MetricsReport {
        threshold: reports[0].threshold,
        n_instances: reports.iter().map(|r| r.n_instances).sum(),
        per_class,
        macro_precision: mean(&|r| r.macro_precision),
        macro_recall: mean(&|r| r.macro_recall),
        macro_f1: mean(&|r| r.macro_f1),
        blind_accuracy: mean(&|r| r.blind_accuracy),
        guided_accuracy: mean(&|r| r.guided_accuracy),
        blind_accuracy_covered: mean(&|r| r.blind_accuracy_covered),
        guided_accuracy_covered: mean(&|r| r.guided_accuracy_covered),
        coverage: mean(&|r| r.coverage),
        per_pos_accuracy: per_pos,
        token_accuracy: if token_accs.is_empty() {
            None
        } else {
            Some(token_accs.iter().sum::<f64>() / token_accs.len() as f64)
        },
    }
}

/// Human-readable report, with label strings resolved through the vocab.
pub fn format_report(report: &MetricsReport, vocab: &LabelVocab) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "instances: {}", report.n_instances);
    let _ = writeln!(out, "threshold: {:.4}", report.threshold);
    let _ = writeln!(
        out,
        "accuracy  blind: {:.4}  guided: {:.4}  (covered only: {:.4} / {:.4})",
        report.blind_accuracy,
        report.guided_accuracy,
        report.blind_accuracy_covered,
        report.guided_accuracy_covered
    );
    let _ = writeln!(out, "coverage: {:.4}", report.coverage);
    let _ = writeln!(
        out,
        "macro     precision: {:.4}  recall: {:.4}  f1: {:.4}",
        report.macro_precision, report.macro_recall, report.macro_f1
    );
    if let Some(acc) = report.token_accuracy {
        let _ = writeln!(out, "token-level accuracy: {:.4}", acc);
    }
    if !report.per_pos_accuracy.is_empty() {
        let _ = writeln!(out, "per-POS guided accuracy:");
        for (pos, (ok, total)) in &report.per_pos_accuracy {
            let _ = writeln!(
                out,
                "  {:<12} {:.4}  ({}/{})",
                pos.name(),
                *ok as f64 / (*total).max(1) as f64,
                ok,
                total
            );
        }
    }
    let _ = writeln!(out, "per-class (guided):");
    for (label, m) in &report.per_class {
        let _ = writeln!(
            out,
            "  {:<16} P {:.4}  R {:.4}  F1 {:.4}  (gold {}, predicted {})",
            vocab.label(*label),
            m.precision,
            m.recall,
            m.f1,
            m.gold_count,
            m.predicted_count
        );
    }
    out
}

/// Per-class TSV: `label P R F1 gold predicted correct`.
pub fn report_to_tsv(report: &MetricsReport, vocab: &LabelVocab) -> String {
    let mut out = String::from("label\tprecision\trecall\tf1\tgold\tpredicted\tcorrect\n");
    for (label, m) in &report.per_class {
        let _ = writeln!(
            out,
            "{}\t{:.6}\t{:.6}\t{:.6}\t{}\t{}\t{}",
            vocab.label(*label),
            m.precision,
            m.recall,
            m.f1,
            m.gold_count,
            m.predicted_count,
            m.correct
        );
    }
    out
}
