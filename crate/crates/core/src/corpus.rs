//! Documents as flat token sequences, CoNLL-U reading/writing, and
//! fixed-radius context windows with boundary padding.
//!
//! A [`Document`] is the hard boundary for context windows. CoNLL-U input maps
//! one sentence to one document; raw text callers decide what a document is
//! (the CLI treats blank-line-separated blocks as documents). Windows slide
//! freely inside a document, crossing sentence punctuation.

use std::fmt::Write as _;
use std::io::BufRead;

use thiserror::Error;

use crate::morphology::{map_pos_default, UniversalPos};

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("target index {index} out of range for document of {len} tokens")]
    TargetOutOfRange { index: usize, len: usize },
    #[error("window radius must be >= 1, got {0}")]
    BadRadius(usize),
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
}

/// Gold annotation carried by tokens sourced from annotated CoNLL-U data.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GoldLabel {
    pub lemma: String,
    pub upos: UniversalPos,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SurfaceToken {
    pub text: String,
    pub is_punctuation: bool,
    pub gold: Option<GoldLabel>,
}

impl SurfaceToken {
    pub fn new(text: impl Into<String>) -> Self {
        let text = text.into();
        debug_assert!(!text.is_empty(), "token text must be non-empty");
        let is_punctuation = !text.is_empty() && text.chars().all(is_punct_char);
        SurfaceToken {
            text,
            is_punctuation,
            gold: None,
        }
    }

    pub fn with_gold(mut self, lemma: impl Into<String>, upos: UniversalPos) -> Self {
        self.gold = Some(GoldLabel {
            lemma: lemma.into(),
            upos,
        });
        self
    }
}

/// A flat, ordered token sequence. Token order is preserved from source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub id: String,
    pub tokens: Vec<SurfaceToken>,
}

impl Document {
    pub fn new(id: impl Into<String>, tokens: Vec<SurfaceToken>) -> Self {
        Document {
            id: id.into(),
            tokens,
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }
}

/// One position in a context window: a real token's surface text, or padding
/// for positions beyond the document edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum WindowSlot {
    Pad,
    Token(String),
}

impl WindowSlot {
    pub fn is_pad(&self) -> bool {
        matches!(self, WindowSlot::Pad)
    }
}

/// A context window of exactly `2r + 1` slots centred on the target token.
///
/// The centre slot is always a real token; PAD only appears where the window
/// extends past a document edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Window {
    pub target_index: usize,
    pub context: Vec<WindowSlot>,
}

impl Window {
    pub fn radius(&self) -> usize {
        (self.context.len() - 1) / 2
    }

    /// The centre slot's surface text.
    pub fn target_text(&self) -> &str {
        match &self.context[self.radius()] {
            WindowSlot::Token(t) => t,
            WindowSlot::Pad => unreachable!("window centre is never PAD"),
        }
    }

    /// Slots strictly left of the target, in left-to-right order.
    pub fn left_slots(&self) -> &[WindowSlot] {
        &self.context[..self.radius()]
    }

    /// Slots strictly right of the target, in left-to-right order.
    pub fn right_slots(&self) -> &[WindowSlot] {
        &self.context[self.radius() + 1..]
    }
}

/// Character class used by the tokenizer: anything that is neither
/// alphanumeric nor whitespace counts as punctuation.
pub fn is_punct_char(c: char) -> bool {
    !c.is_alphanumeric() && !c.is_whitespace()
}

/// Splits raw text into a flat token sequence. Whitespace is discarded;
/// leading/trailing punctuation of each chunk is detached into separate
/// single-character tokens; interior punctuation (hyphens etc.) stays put.
pub fn tokenize(id: impl Into<String>, text: &str) -> Document {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut start = 0;
        let mut end = chars.len();
        while start < end && is_punct_char(chars[start]) {
            start += 1;
        }
        while end > start && is_punct_char(chars[end - 1]) {
            end -= 1;
        }
        for &c in &chars[..start] {
            tokens.push(SurfaceToken::new(c.to_string()));
        }
        if start < end {
            tokens.push(SurfaceToken::new(chars[start..end].iter().collect::<String>()));
        }
        for &c in &chars[end..] {
            tokens.push(SurfaceToken::new(c.to_string()));
        }
    }
    Document::new(id, tokens)
}

/// Reads CoNLL-U sentences, one [`Document`] per sentence.
///
/// Multi-word-token ranges (`1-2`) and empty nodes (`1.1`) are skipped in
/// favour of their component rows. `FORM` becomes the token text; `LEMMA` and
/// `UPOS` become the gold label unless both are `_`. UPOS values are folded
/// onto the universal 10-POS set.
pub fn parse_conllu<R: BufRead>(reader: R) -> Result<Vec<Document>, CorpusError> {
    fn flush(docs: &mut Vec<Document>, tokens: &mut Vec<SurfaceToken>, sent_id: &mut Option<String>) {
        if !tokens.is_empty() {
            let id = sent_id
                .take()
                .unwrap_or_else(|| format!("s{}", docs.len()));
            docs.push(Document::new(id, std::mem::take(tokens)));
        }
        *sent_id = None;
    }

    let mut docs = Vec::new();
    let mut tokens: Vec<SurfaceToken> = Vec::new();
    let mut sent_id: Option<String> = None;

    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = lineno + 1;
        let trimmed = line.trim_end_matches(['\r', '\n']);
        if trimmed.is_empty() {
            flush(&mut docs, &mut tokens, &mut sent_id);
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            if let Some(val) = comment.trim().strip_prefix("sent_id") {
                let val = val.trim_start().strip_prefix('=').unwrap_or(val).trim();
                if !val.is_empty() {
                    sent_id = Some(val.to_string());
                }
            }
            continue;
        }
        let cols: Vec<&str> = trimmed.split('\t').collect();
        if cols.len() != 10 {
            return Err(CorpusError::Malformed {
                line: lineno,
                msg: format!("expected 10 tab-separated columns, found {}", cols.len()),
            });
        }
        let id_col = cols[0];
        if id_col.contains('-') || id_col.contains('.') {
            // MWT range or empty node; component rows carry the tokens.
            continue;
        }
        if id_col.parse::<u32>().is_err() {
            return Err(CorpusError::Malformed {
                line: lineno,
                msg: format!("unparseable token id {id_col:?}"),
            });
        }
        let form = cols[1];
        if form.is_empty() {
            return Err(CorpusError::Malformed {
                line: lineno,
                msg: "empty FORM column".to_string(),
            });
        }
        let mut token = SurfaceToken::new(form);
        let (lemma, upos) = (cols[2], cols[3]);
        if lemma != "_" || upos != "_" {
            token.gold = Some(GoldLabel {
                lemma: lemma.to_string(),
                upos: map_pos_default(upos),
            });
        }
        tokens.push(token);
    }
    flush(&mut docs, &mut tokens, &mut sent_id);
    Ok(docs)
}

/// Writes documents back out as CoNLL-U. Columns we do not model are emitted
/// as `_`; parsing the output reproduces the (text, lemma, upos) fields.
pub fn serialize_conllu(docs: &[Document]) -> String {
    let mut out = String::new();
    for doc in docs {
        if !doc.id.is_empty() {
            let _ = writeln!(out, "# sent_id = {}", doc.id);
        }
        for (i, token) in doc.tokens.iter().enumerate() {
            let (lemma, upos) = match &token.gold {
                Some(g) => (g.lemma.as_str(), g.upos.conllu_tag()),
                None => ("_", "_"),
            };
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t_\t_\t_\t_\t_\t_",
                i + 1,
                token.text,
                lemma,
                upos
            );
        }
        out.push('\n');
    }
    out
}

/// Extracts the `2r + 1` slot window around `target_index`. Positions beyond
/// either document edge are PAD; sentence punctuation inside the document is
/// crossed freely.
pub fn extract_window(doc: &Document, target_index: usize, r: usize) -> Result<Window, CorpusError> {
    if r < 1 {
        return Err(CorpusError::BadRadius(r));
    }
    if target_index >= doc.len() {
        return Err(CorpusError::TargetOutOfRange {
            index: target_index,
            len: doc.len(),
        });
    }
    let mut context = Vec::with_capacity(2 * r + 1);
    let lo = target_index as isize - r as isize;
    let hi = target_index as isize + r as isize;
    for pos in lo..=hi {
        if pos < 0 || pos as usize >= doc.len() {
            context.push(WindowSlot::Pad);
        } else {
            context.push(WindowSlot::Token(doc.tokens[pos as usize].text.clone()));
        }
    }
    Ok(Window {
        target_index,
        context,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn tokenize_empty_text() {
        assert_eq!(tokenize("d", "").len(), 0);
    }

    #[test]
    fn tokenize_detaches_trailing_punctuation() {
        let doc = tokenize("d", "Isä tuli.");
        let texts: Vec<&str> = doc.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["Isä", "tuli", "."]);
        assert!(doc.tokens[2].is_punctuation);
        assert!(!doc.tokens[0].is_punctuation);
    }

    #[test]
    fn tokenize_cyrillic() {
        let doc = tokenize("d", "белки и медведи");
        assert_eq!(doc.len(), 3);
        assert!(doc.tokens.iter().all(|t| !t.is_punctuation));
    }

    #[test]
    fn tokenize_peels_both_sides() {
        let doc = tokenize("d", "(hello)! co-pilot");
        let texts: Vec<&str> = doc.tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["(", "hello", ")", "!", "co-pilot"]);
    }

    #[test]
    fn parse_two_row_sentence_with_gold() {
        let src = "1\tvino\tvino\tNOUN\t_\t_\t_\t_\t_\t_\n2\tvino\tvenir\tVERB\t_\t_\t_\t_\t_\t_\n";
        let docs = parse_conllu(src.as_bytes()).unwrap();
        assert_eq!(docs.len(), 1);
        let gold = docs[0].tokens[1].gold.as_ref().unwrap();
        assert_eq!(gold.lemma, "venir");
        assert_eq!(gold.upos, UniversalPos::Verb);
    }

    #[test]
    fn parse_empty_stream() {
        assert!(parse_conllu("".as_bytes()).unwrap().is_empty());
    }

    #[test]
    fn parse_rejects_short_row() {
        let src = "1\tvino\tvenir\tVERB\t_\t_\t_\t_\t_\n";
        let err = parse_conllu(src.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 1"), "got: {err}");
    }

    #[test]
    fn parse_skips_mwt_ranges() {
        let src = "\
# sent_id = es-1
1-2\tdel\t_\t_\t_\t_\t_\t_\t_\t_
1\tde\tde\tADP\t_\t_\t_\t_\t_\t_
2\tel\tel\tDET\t_\t_\t_\t_\t_\t_

";
        let docs = parse_conllu(src.as_bytes()).unwrap();
        assert_eq!(docs[0].id, "es-1");
        let texts: Vec<&str> = docs[0].tokens.iter().map(|t| t.text.as_str()).collect();
        assert_eq!(texts, ["de", "el"]);
    }

    #[test]
    fn serialize_token_without_gold_uses_underscores() {
        let doc = Document::new("d", vec![SurfaceToken::new("tuli")]);
        let text = serialize_conllu(&[doc]);
        assert!(text.contains("1\ttuli\t_\t_"));
    }

    #[test]
    fn serialize_empty_sequence() {
        assert_eq!(serialize_conllu(&[]), "");
    }

    #[test]
    fn conllu_round_trip_preserves_fields() {
        let src = "\
# sent_id = fi-1
1\tIsä\tisä\tNOUN\t_\t_\t_\t_\t_\t_
2\ttuli\ttulla\tVERB\t_\t_\t_\t_\t_\t_
3\t.\t.\tPUNCT\t_\t_\t_\t_\t_\t_

1\tkotiin\tkoti\tNOUN\t_\t_\t_\t_\t_\t_
";
        let parsed = parse_conllu(src.as_bytes()).unwrap();
        let reparsed = parse_conllu(serialize_conllu(&parsed).as_bytes()).unwrap();
        assert_eq!(parsed, reparsed);
    }

    #[test]
    fn window_at_document_start() {
        let doc = tokenize("d", "a b c");
        let w = extract_window(&doc, 0, 2).unwrap();
        assert_eq!(w.context.len(), 5);
        assert!(w.context[0].is_pad() && w.context[1].is_pad());
        assert_eq!(w.target_text(), "a");
        assert_eq!(w.context[3], WindowSlot::Token("b".into()));
    }

    #[test]
    fn window_fully_inside_document() {
        let words: Vec<String> = (0..25).map(|i| format!("w{i}")).collect();
        let doc = tokenize("d", &words.join(" "));
        let w = extract_window(&doc, 12, 10).unwrap();
        assert_eq!(w.context.len(), 21);
        assert!(w.context.iter().all(|s| !s.is_pad()));
    }

    #[test]
    fn window_on_single_token_document() {
        let doc = tokenize("d", "yksin");
        let w = extract_window(&doc, 0, 10).unwrap();
        assert_eq!(w.context.iter().filter(|s| s.is_pad()).count(), 20);
        assert_eq!(w.target_text(), "yksin");
    }

    #[test]
    fn window_target_out_of_range() {
        let doc = tokenize("d", "a b");
        assert!(extract_window(&doc, 2, 1).is_err());
    }

    proptest! {
        #[test]
        fn window_length_and_pad_count(len in 1usize..40, r in 1usize..12, seed in 0usize..40) {
            let words: Vec<String> = (0..len).map(|i| format!("w{i}")).collect();
            let doc = tokenize("d", &words.join(" "));
            let i = seed % len;
            let w = extract_window(&doc, i, r).unwrap();
            prop_assert_eq!(w.context.len(), 2 * r + 1);
            let expected_pads = r.saturating_sub(i) + r.saturating_sub(len - 1 - i);
            prop_assert_eq!(w.context.iter().filter(|s| s.is_pad()).count(), expected_pads);
            prop_assert!(!w.context[r].is_pad());
        }

        #[test]
        fn tokenizer_is_deterministic(text in "\\PC{0,60}") {
            let a = tokenize("d", &text);
            let b = tokenize("d", &text);
            prop_assert_eq!(a, b);
        }

        #[test]
        fn tokenizer_never_emits_empty_tokens(text in "\\PC{0,60}") {
            for t in tokenize("d", &text).tokens {
                prop_assert!(!t.text.is_empty());
            }
        }
    }
}
