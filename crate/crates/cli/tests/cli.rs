//! End-to-end checks of the `morphdis` binary: exit codes, file artefacts
//! and determinism of the train/eval/curve/disambiguate flow.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_morphdis"))
}

fn data(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

fn write_config(dir: &Path, checkpoint: &Path) -> PathBuf {
    let text = format!(
        "\
[paths]
lexicon = {lexicon}
corpus = {corpus}
gold = {gold}
checkpoint = {checkpoint}

[model]
target = pos
window = 5
hidden = 4
mlp_hidden = 8

[embedding]
dim = 16
buckets = 64
min_n = 3
max_n = 4
trainable = true

[training]
batch_size = 10
epochs = 2
seed = 7

[eval]
thresholds = 0,0.4,0.8
",
        lexicon = data("lexicon.tsv").display(),
        corpus = data("corpus.txt").display(),
        gold = data("gold.conllu").display(),
        checkpoint = checkpoint.display(),
    );
    let path = dir.join("run.conf");
    fs::write(&path, text).unwrap();
    path
}

fn ok(output: &Output) -> String {
    assert!(
        output.status.success(),
        "command failed ({:?}):\n{}",
        output.status.code(),
        String::from_utf8_lossy(&output.stderr)
    );
    String::from_utf8_lossy(&output.stdout).into_owned()
}

#[test]
fn print_config_emits_reference_defaults() {
    let out = ok(&bin().arg("--print-config").output().unwrap());
    for line in [
        "window = 21",
        "hidden = 512",
        "mlp_hidden = 1024",
        "dim = 300",
        "batch_size = 50",
        "dropout = 0.1",
        "adam_epsilon = 0.001",
        "epochs = 20",
    ] {
        assert!(out.contains(line), "missing {line:?} in:\n{out}");
    }
}

#[test]
fn analyze_lists_readings_deterministically() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &dir.path().join("model.mdk"));
    let out = ok(&bin()
        .args(["--config", config.to_str().unwrap(), "analyze"])
        .arg(data("corpus.txt"))
        .output()
        .unwrap());
    let tuli_line = out
        .lines()
        .find(|l| l.split('\t').nth(2) == Some("tuli"))
        .expect("a tuli row");
    assert!(
        tuli_line.ends_with("tuli/noun/Sg|Nom/D;tulla/verb/Past|Sg3/D"),
        "unexpected readings: {tuli_line}"
    );
    // An unknown token has an empty readings column.
    let unknown = out
        .lines()
        .find(|l| l.split('\t').nth(2) == Some("eläinlääkäriasema"))
        .expect("unknown compound row");
    assert!(unknown.ends_with('\t'), "expected empty readings: {unknown:?}");
    // A single-reading token has exactly one field.
    let asema = out
        .lines()
        .find(|l| l.split('\t').nth(2) == Some("asema"))
        .unwrap();
    assert!(!asema.split('\t').nth(3).unwrap().contains(';'));
}

#[test]
fn stats_reports_cells_and_ceilings() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &dir.path().join("model.mdk"));
    let analysed = dir.path().join("analysed.tsv");
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "analyze"])
        .arg(data("corpus.txt"))
        .args(["-o", analysed.to_str().unwrap()])
        .output()
        .unwrap());
    let out = ok(&bin().arg("stats").arg(&analysed).output().unwrap());
    assert!(out.contains("pair\tpos\tlemma\tfraction"), "{out}");
    assert!(out.contains("# pos_ceiling"), "{out}");
    assert!(out.contains("DD\tne\tne"), "tuli cell missing:\n{out}");

    // By-type counting is exposed as a switch.
    let by_type = ok(&bin()
        .arg("stats")
        .arg(&analysed)
        .arg("--by-type")
        .output()
        .unwrap());
    assert!(by_type.contains("# counting\tby-type"));

    // A corpus with no ambiguous tokens reports exactly that.
    let unambiguous = dir.path().join("unambiguous.tsv");
    fs::write(&unambiguous, "d\t0\tasema\tasema/noun//D\n\n").unwrap();
    let out = ok(&bin().arg("stats").arg(&unambiguous).output().unwrap());
    assert!(out.contains("# ambiguous_tokens\t0"), "{out}");
    assert!(out.contains("0 ambiguous tokens"), "{out}");
}

#[test]
fn train_is_deterministic_and_eval_runs() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt_a = dir.path().join("a.mdk");
    let ckpt_b = dir.path().join("b.mdk");
    let config = write_config(dir.path(), &ckpt_a);

    let out = ok(&bin()
        .args(["--config", config.to_str().unwrap(), "train"])
        .output()
        .unwrap());
    assert!(out.contains("checkpoint:"), "{out}");
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "train", "-o"])
        .arg(&ckpt_b)
        .output()
        .unwrap());
    assert_eq!(
        fs::read(&ckpt_a).unwrap(),
        fs::read(&ckpt_b).unwrap(),
        "same config + seed must give identical checkpoints"
    );
    assert_eq!(
        fs::read_to_string(format!("{}.log", ckpt_a.display())).unwrap(),
        fs::read_to_string(format!("{}.log", ckpt_b.display())).unwrap()
    );

    let tsv = dir.path().join("metrics.tsv");
    let out = ok(&bin()
        .args(["--config", config.to_str().unwrap(), "eval", "-o"])
        .arg(&tsv)
        .output()
        .unwrap());
    assert!(out.contains("guided"), "{out}");
    assert!(out.contains("token-level accuracy"), "{out}");
    let tsv_text = fs::read_to_string(&tsv).unwrap();
    assert!(tsv_text.starts_with("label\tprecision\trecall\tf1"), "{tsv_text}");

    // Threshold override is accepted.
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "eval", "--theta", "0.5"])
        .output()
        .unwrap());
}

#[test]
fn curve_writes_one_row_per_threshold() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.mdk");
    let config = write_config(dir.path(), &ckpt);
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "train"])
        .output()
        .unwrap());
    let csv_path = dir.path().join("curve.csv");
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "curve", "-o"])
        .arg(&csv_path)
        .output()
        .unwrap());
    let csv = fs::read_to_string(&csv_path).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("threshold,precision,recall,f1,coverage"));
    assert_eq!(lines.count(), 3, "thresholds = 0,0.4,0.8 in the config");
}

#[test]
fn disambiguate_fills_every_token() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("model.mdk");
    let config = write_config(dir.path(), &ckpt);
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "train"])
        .output()
        .unwrap());
    let out_path = dir.path().join("out.conllu");
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "disambiguate"])
        .arg(data("corpus.txt"))
        .args(["-o", out_path.to_str().unwrap()])
        .output()
        .unwrap());

    let text = fs::read_to_string(&out_path).unwrap();
    let docs = morphdis::corpus::parse_conllu(text.as_bytes()).expect("valid CoNLL-U");
    assert!(!docs.is_empty());
    for doc in &docs {
        for token in &doc.tokens {
            let gold = token.gold.as_ref().unwrap_or_else(|| {
                panic!("token {:?} left without lemma/upos", token.text)
            });
            assert!(!gold.lemma.is_empty());
            assert!(!gold.lemma.contains("<"), "placeholder leaked: {}", gold.lemma);
        }
    }
    // The ambiguous "tuli" rows got one of the two analyser POS values.
    let tuli_tags: Vec<&str> = text
        .lines()
        .filter(|l| l.split('\t').nth(1) == Some("tuli"))
        .map(|l| l.split('\t').nth(3).unwrap())
        .collect();
    assert!(!tuli_tags.is_empty());
    assert!(tuli_tags.iter().all(|t| *t == "NOUN" || *t == "VERB"), "{tuli_tags:?}");
}

#[test]
fn missing_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &dir.path().join("missing.mdk"));
    // Checkpoint does not exist yet: I/O failure.
    let out = bin()
        .args(["--config", config.to_str().unwrap(), "eval"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));

    // Unreadable config path as well.
    let out = bin()
        .args(["--config", "/definitely/not/here.conf", "analyze", "x.txt"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    let out = bin()
        .args(["--config", config.to_str().unwrap(), "analyze"])
        .arg(dir.path().join("no-such-corpus.txt"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn validation_failures_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    // Even window size is rejected by config validation.
    let bad = dir.path().join("bad.conf");
    fs::write(&bad, "[model]\nwindow = 20\n").unwrap();
    let out = bin()
        .args(["--config", bad.to_str().unwrap(), "--print-config"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));

    // Target-kind mismatch between checkpoint and task.
    let ckpt = dir.path().join("model.mdk");
    let config = write_config(dir.path(), &ckpt);
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "train"])
        .output()
        .unwrap());
    let out = bin()
        .args(["--config", config.to_str().unwrap(), "--target", "lemma", "eval"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("targets"), "{err}");
}

#[test]
fn lemma_model_round_trips_too() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = dir.path().join("lemma.mdk");
    let config = write_config(dir.path(), &ckpt);
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "--target", "lemma", "train"])
        .output()
        .unwrap());
    let out = ok(&bin()
        .args(["--config", config.to_str().unwrap(), "--target", "lemma", "eval"])
        .output()
        .unwrap());
    assert!(out.contains("guided"), "{out}");

    let out_path = dir.path().join("lemma.conllu");
    ok(&bin()
        .args(["--config", config.to_str().unwrap(), "--target", "lemma", "disambiguate"])
        .arg(data("corpus.txt"))
        .args(["-o", out_path.to_str().unwrap()])
        .output()
        .unwrap());
    let docs = morphdis::corpus::parse_conllu(
        fs::read_to_string(&out_path).unwrap().as_bytes(),
    )
    .unwrap();
    // The digit token must come back with its surface as lemma, not <NUM>.
    let digit = docs
        .iter()
        .flat_map(|d| &d.tokens)
        .find(|t| t.text == "2019")
        .expect("digit token present");
    assert_eq!(digit.gold.as_ref().unwrap().lemma, "2019");
}
