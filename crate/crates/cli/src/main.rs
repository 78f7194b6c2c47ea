//! `morphdis` — train and run morphological disambiguation models from a
//! single config file.
//!
//! Exit codes: 0 success, 1 validation failure (bad config, malformed data,
//! target-kind mismatch), 2 I/O error (missing or unreadable files).

mod analysed;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use morphdis::config::RunConfig;
use morphdis::corpus::{parse_conllu, serialize_conllu, tokenize, Document, GoldLabel};
use morphdis::disambigmodel::{
    load_checkpoint, save_checkpoint, Embedder, LabelVocab, ModelParams,
};
use morphdis::embeddings::{load_vectors, EmbeddingProvider};
use morphdis::morphology::{
    analyse_documents, AnalysedToken, Lexicon, PosMapping, TargetKind, UniversalPos, NUM_LEMMA,
};
use morphdis::pipeline::{
    build_eval_set, build_label_vocab, build_training_set, confidence_sweep, evaluate,
    format_report, report_to_tsv, resolve_token_label, split_dev_eval, sweep_to_csv,
    token_accuracy, train,
};
use morphdis::taxonomy::{accuracy_ceiling, incidence, IncidenceReport, Strategy};

#[derive(Parser)]
#[command(name = "morphdis", version, about = "Morphological analyser disambiguation")]
struct Cli {
    /// Run configuration file (`key = value` with [sections])
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override [training] seed
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override [model] target (pos or lemma)
    #[arg(long, global = true)]
    target: Option<String>,
    /// Print the resolved configuration and exit
    #[arg(long, global = true)]
    print_config: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Subcommand)]
enum Command {
    /// Analyse a corpus with the lexicon; writes the analysed TSV
    Analyze {
        /// Raw text (blank-line separated documents) or a .conllu file
        input: PathBuf,
        /// Output path (stdout when omitted)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Ambiguity taxonomy statistics over an analysed corpus
    Stats {
        /// Analysed TSV produced by `analyze`
        analysed: PathBuf,
        /// Also write the report to this path
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Count each surface form once instead of each token
        #[arg(long)]
        by_type: bool,
    },
    /// Train on the corpus's unambiguous tokens; writes checkpoint + log
    Train {
        /// Checkpoint path (defaults to [paths] checkpoint)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Evaluate a checkpoint on the gold corpus's ambiguous tokens
    Eval {
        /// Confidence threshold (defaults to [eval] threshold)
        #[arg(long)]
        theta: Option<f64>,
        /// Also write per-class metrics TSV to this path
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Confidence sweep; writes `threshold,precision,recall,f1,coverage` CSV
    Curve {
        /// Output CSV path (stdout when omitted)
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Fill LEMMA and UPOS for every token of a new text, as CoNLL-U
    Disambiguate {
        /// Raw text (blank-line separated documents) or a .conllu file
        input: PathBuf,
        /// Output CoNLL-U path
        #[arg(short, long)]
        output: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(exit_code(&err));
    }
}

fn exit_code(err: &anyhow::Error) -> i32 {
    let io = err
        .chain()
        .any(|cause| cause.downcast_ref::<std::io::Error>().is_some());
    if io {
        2
    } else {
        1
    }
}

fn run(cli: Cli) -> Result<()> {
    let config = resolve_config(&cli)?;
    if cli.print_config {
        print!("{}", config.print());
        return Ok(());
    }
    match cli.command {
        Some(Command::Analyze { input, output }) => cmd_analyze(&config, &input, output.as_deref()),
        Some(Command::Stats {
            analysed,
            output,
            by_type,
        }) => cmd_stats(&analysed, output.as_deref(), by_type),
        Some(Command::Train { output }) => cmd_train(&config, output.as_deref()),
        Some(Command::Eval { theta, output }) => cmd_eval(&config, theta, output.as_deref()),
        Some(Command::Curve { output }) => cmd_curve(&config, output.as_deref()),
        Some(Command::Disambiguate { input, output }) => {
            cmd_disambiguate(&config, &input, &output)
        }
        None => bail!("no command given (try --help)"),
    }
}

fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        config
            .apply(&text)
            .with_context(|| format!("in config {}", path.display()))?;
    }
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(target) = &cli.target {
        config
            .set("model", "target", target)
            .context("bad --target")?;
    }
    config.validate()?;
    Ok(config)
}

fn load_lexicon(config: &RunConfig) -> Result<Lexicon> {
    let path = config
        .paths
        .lexicon
        .as_ref()
        .ok_or_else(|| anyhow!("[paths] lexicon is required for this command"))?;
    let mapping = match &config.paths.pos_mapping {
        Some(path) => {
            let file = fs::File::open(path)
                .with_context(|| format!("cannot open pos mapping {}", path.display()))?;
            PosMapping::load(std::io::BufReader::new(file))?
        }
        None => PosMapping::default(),
    };
    let file =
        fs::File::open(path).with_context(|| format!("cannot open lexicon {}", path.display()))?;
    Ok(Lexicon::load(std::io::BufReader::new(file), &mapping)?)
}

/// Raw text becomes one document per blank-line-separated block; `.conllu`
/// input becomes one document per sentence.
fn load_corpus_file(path: &Path) -> Result<Vec<Document>> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    if path.extension().is_some_and(|e| e == "conllu") {
        return Ok(parse_conllu(text.as_bytes())?);
    }
    let docs: Vec<Document> = text
        .split("\n\n")
        .filter(|block| !block.trim().is_empty())
        .enumerate()
        .map(|(i, block)| tokenize(format!("d{:04}", i + 1), block))
        .collect();
    Ok(docs)
}

fn load_gold(config: &RunConfig) -> Result<Vec<Document>> {
    let path = config
        .paths
        .gold
        .as_ref()
        .ok_or_else(|| anyhow!("[paths] gold is required for this command"))?;
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read gold {}", path.display()))?;
    Ok(parse_conllu(text.as_bytes())?)
}

fn training_provider(config: &RunConfig) -> Result<EmbeddingProvider> {
    if config.trainable_embeddings {
        return Ok(EmbeddingProvider::hashed(
            config.embedding_dim,
            config.buckets,
            config.min_n,
            config.max_n,
        ));
    }
    let path = config.paths.embeddings.as_ref().ok_or_else(|| {
        anyhow!("[paths] embeddings is required unless [embedding] trainable = true")
    })?;
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open embeddings {}", path.display()))?;
    let provider = load_vectors(std::io::BufReader::new(file))?
        .with_subwords(config.buckets, config.min_n, config.max_n);
    if provider.dim() != config.embedding_dim {
        bail!(
            "embedding file has dimension {} but [embedding] dim = {}",
            provider.dim(),
            config.embedding_dim
        );
    }
    Ok(provider)
}

/// The provider matching a loaded checkpoint: its own hash settings when the
/// subword table was trained, otherwise the configured vector file.
fn checkpoint_provider(config: &RunConfig, params: &ModelParams) -> Result<EmbeddingProvider> {
    if let Some(hash) = params.hash {
        return Ok(EmbeddingProvider::hashed(
            params.dims.emb,
            hash.buckets,
            hash.min_n,
            hash.max_n,
        ));
    }
    let path = config.paths.embeddings.as_ref().ok_or_else(|| {
        anyhow!("[paths] embeddings is required to use this checkpoint")
    })?;
    let file = fs::File::open(path)
        .with_context(|| format!("cannot open embeddings {}", path.display()))?;
    let provider = load_vectors(std::io::BufReader::new(file))?
        .with_subwords(config.buckets, config.min_n, config.max_n);
    if provider.dim() != params.dims.emb {
        bail!(
            "embedding file has dimension {} but the checkpoint expects {}",
            provider.dim(),
            params.dims.emb
        );
    }
    Ok(provider)
}

fn load_model(config: &RunConfig) -> Result<(ModelParams, LabelVocab)> {
    let path = config
        .paths
        .checkpoint
        .as_ref()
        .ok_or_else(|| anyhow!("[paths] checkpoint is required for this command"))?;
    let (params, vocab, _digest) = load_checkpoint(path)
        .with_context(|| format!("cannot load checkpoint {}", path.display()))?;
    if vocab.kind() != config.target {
        bail!(
            "checkpoint targets {} but the task targets {}",
            vocab.kind().name(),
            config.target.name()
        );
    }
    Ok((params, vocab))
}

fn write_or_print(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text)
            .with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(())
}

fn cmd_analyze(config: &RunConfig, input: &Path, output: Option<&Path>) -> Result<()> {
    let lexicon = load_lexicon(config)?;
    let docs = load_corpus_file(input)?;
    let analysed = analyse_documents(&lexicon, &docs);
    write_or_print(output, &analysed::write_analysed(&docs, &analysed))?;
    Ok(())
}

fn stats_text(report: &IncidenceReport, by_type: bool) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "# counting\t{}",
        if by_type { "by-type" } else { "by-token" }
    );
    let _ = writeln!(out, "# ambiguous_tokens\t{}", report.total_ambiguous());
    if report.is_empty() {
        let _ = writeln!(out, "# 0 ambiguous tokens; nothing to report");
        return out;
    }
    let _ = writeln!(out, "pair\tpos\tlemma\tfraction");
    for (class, fraction) in report.cells() {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{:.6}",
            class.pair.label(),
            if class.pos_equal { "eq" } else { "ne" },
            if class.lemma_equal { "eq" } else { "ne" },
            fraction
        );
    }
    let pos = accuracy_ceiling(report, Strategy::PosDisamb).unwrap_or(0.0);
    let lemma = accuracy_ceiling(report, Strategy::LemmaDisamb).unwrap_or(0.0);
    let ensemble = accuracy_ceiling(report, Strategy::Either).unwrap_or(0.0);
    let _ = writeln!(out, "# pos_ceiling\t{pos:.4}");
    let _ = writeln!(out, "# lemma_ceiling\t{lemma:.4}");
    let _ = writeln!(out, "# ensemble_ceiling\t{ensemble:.4}");
    let _ = writeln!(out, "# note: II cells with pos=ne are extra-morphological");
    out
}

fn cmd_stats(analysed_path: &Path, output: Option<&Path>, by_type: bool) -> Result<()> {
    let text = fs::read_to_string(analysed_path)
        .with_context(|| format!("cannot read {}", analysed_path.display()))?;
    let (_docs, analysed) = analysed::parse_analysed(&text)?;
    let mut tokens: Vec<AnalysedToken> = analysed.into_iter().flatten().collect();
    if by_type {
        let mut seen = std::collections::HashSet::new();
        tokens.retain(|t| seen.insert(t.token.text.clone()));
    }
    let report = incidence(&tokens);
    let text = stats_text(&report, by_type);
    print!("{text}");
    if let Some(path) = output {
        fs::write(path, &text).with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_train(config: &RunConfig, output: Option<&Path>) -> Result<()> {
    let checkpoint_path = output
        .map(Path::to_path_buf)
        .or_else(|| config.paths.checkpoint.clone())
        .ok_or_else(|| anyhow!("no checkpoint path (use -o or [paths] checkpoint)"))?;

    let lexicon = load_lexicon(config)?;
    let corpus_path = config
        .paths
        .corpus
        .as_ref()
        .ok_or_else(|| anyhow!("[paths] corpus is required to train"))?;
    let docs = load_corpus_file(corpus_path)?;
    let analysed = analyse_documents(&lexicon, &docs);
    let vocab = build_label_vocab(&analysed, config.target);
    let training = build_training_set(&docs, &analysed, config.target, config.radius(), &vocab)?;

    // The dev set for the stopping criterion comes from the gold corpus; a
    // dev_fraction slice of its sentences, seeded like the run itself.
    let dev = match &config.paths.gold {
        Some(_) => {
            let gold_docs = load_gold(config)?;
            let gold_analysed = analyse_documents(&lexicon, &gold_docs);
            let (dev_idx, _) = split_dev_eval(gold_docs.len(), config.dev_fraction, config.seed);
            let dev_docs: Vec<Document> = dev_idx.iter().map(|&i| gold_docs[i].clone()).collect();
            let dev_analysed: Vec<Vec<AnalysedToken>> =
                dev_idx.iter().map(|&i| gold_analysed[i].clone()).collect();
            build_eval_set(&dev_docs, &dev_analysed, config.target, config.radius(), &vocab)?
        }
        None => Vec::new(),
    };

    let provider = training_provider(config)?;
    let embedder = Embedder::new(&provider, Some(&lexicon));
    let (params, log) = train(&training, &dev, &embedder, &vocab, config, config.seed)?;

    save_checkpoint(&params, &vocab, &config.digest(), &checkpoint_path)
        .with_context(|| format!("cannot write checkpoint {}", checkpoint_path.display()))?;
    let log_path = PathBuf::from(format!("{}.log", checkpoint_path.display()));
    fs::write(&log_path, log.to_lines())
        .with_context(|| format!("cannot write log {}", log_path.display()))?;

    println!(
        "trained {} target on {} instances ({} labels); {} epochs, best epoch {}{}",
        config.target.name(),
        training.len(),
        vocab.len(),
        log.epochs.len(),
        log.best_epoch,
        if log.stopped_early { " (early stop)" } else { "" }
    );
    println!("checkpoint: {}", checkpoint_path.display());
    println!("log: {}", log_path.display());
    Ok(())
}

fn cmd_eval(config: &RunConfig, theta: Option<f64>, output: Option<&Path>) -> Result<()> {
    let (params, vocab) = load_model(config)?;
    let provider = checkpoint_provider(config, &params)?;
    let lexicon = load_lexicon(config)?;
    let embedder = Embedder::new(&provider, Some(&lexicon));

    let gold_docs = load_gold(config)?;
    let gold_analysed = analyse_documents(&lexicon, &gold_docs);
    let eval_set = build_eval_set(
        &gold_docs,
        &gold_analysed,
        vocab.kind(),
        params.dims.radius,
        &vocab,
    )?;
    let theta = theta.unwrap_or(config.threshold);
    let mut report = evaluate(&params, &embedder, &eval_set, theta, config.jobs)?;

    let fully_annotated = gold_docs
        .iter()
        .all(|d| d.tokens.iter().all(|t| t.gold.is_some()));
    if fully_annotated {
        report.token_accuracy = Some(token_accuracy(
            &params,
            &embedder,
            &vocab,
            &gold_docs,
            &gold_analysed,
            0.0,
        )?);
    }

    print!("{}", format_report(&report, &vocab));
    if let Some(path) = output {
        fs::write(path, report_to_tsv(&report, &vocab))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    Ok(())
}

fn cmd_curve(config: &RunConfig, output: Option<&Path>) -> Result<()> {
    let (params, vocab) = load_model(config)?;
    let provider = checkpoint_provider(config, &params)?;
    let lexicon = load_lexicon(config)?;
    let embedder = Embedder::new(&provider, Some(&lexicon));

    let gold_docs = load_gold(config)?;
    let gold_analysed = analyse_documents(&lexicon, &gold_docs);
    let eval_set = build_eval_set(
        &gold_docs,
        &gold_analysed,
        vocab.kind(),
        params.dims.radius,
        &vocab,
    )?;
    let rows = confidence_sweep(&params, &embedder, &eval_set, &config.thresholds, config.jobs)?;
    write_or_print(output, &sweep_to_csv(&rows))?;
    Ok(())
}

/// Placeholder labels never leak into CoNLL-U output; digit tokens keep
/// their surface as lemma and unknown lemmas fall back to the surface form.
fn lemma_for_output(label: &str, surface: &str) -> String {
    if label == NUM_LEMMA || label == morphdis::disambigmodel::UNK_LABEL {
        surface.to_string()
    } else {
        label.to_string()
    }
}

fn cmd_disambiguate(config: &RunConfig, input: &Path, output: &Path) -> Result<()> {
    let (params, vocab) = load_model(config)?;
    let provider = checkpoint_provider(config, &params)?;
    let lexicon = load_lexicon(config)?;
    let embedder = Embedder::new(&provider, Some(&lexicon));

    let docs = load_corpus_file(input)?;
    let analysed = analyse_documents(&lexicon, &docs);

    let mut out_docs = Vec::with_capacity(docs.len());
    for (doc, tokens) in docs.iter().zip(&analysed) {
        let mut out_doc = doc.clone();
        for (i, token) in tokens.iter().enumerate() {
            let (label, _route, _kept) =
                resolve_token_label(&params, &embedder, &vocab, doc, i, token, 0.0)?;
            // The model fills its own target; the other field comes from the
            // analyser's first reading, or the surface form for unknowns.
            let first = token.readings.first();
            let (lemma, upos) = match vocab.kind() {
                TargetKind::Pos => {
                    let upos = UniversalPos::ALL
                        .iter()
                        .copied()
                        .find(|p| p.name() == label)
                        .unwrap_or(UniversalPos::Other);
                    let lemma = first
                        .map(|r| lemma_for_output(&r.lemma, &token.token.text))
                        .unwrap_or_else(|| token.token.text.clone());
                    (lemma, upos)
                }
                TargetKind::Lemma => {
                    let lemma = lemma_for_output(&label, &token.token.text);
                    let upos = first.map(|r| r.pos).unwrap_or(UniversalPos::Other);
                    (lemma, upos)
                }
            };
            out_doc.tokens[i].gold = Some(GoldLabel { lemma, upos });
        }
        out_docs.push(out_doc);
    }
    fs::write(output, serialize_conllu(&out_docs))
        .with_context(|| format!("cannot write {}", output.display()))?;
    Ok(())
}
