//! Analyser readings, the lexicon-file analyser, POS folding onto the
//! universal 10-tag set, compound splitting, and target-specific ambiguity.
//!
//! The lexicon file stands in for a real morphological analyser so the
//! pipeline is self-contained; analyser output can be imported through the
//! same TSV format (`surface<TAB>lemma<TAB>pos_tag<TAB>tag1|tag2<TAB>D-or-I`).

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::BufRead;

use thiserror::Error;

use crate::corpus::{Document, SurfaceToken};

/// Lemma used for digit-only surface forms, which share one embedding and one
/// label.
pub const NUM_LEMMA: &str = "<NUM>";

#[derive(Debug, Error)]
pub enum MorphologyError {
    #[error("lexicon line {line}: {msg}")]
    BadLexiconLine { line: usize, msg: String },
    #[error("pos mapping line {line}: {msg}")]
    BadMappingLine { line: usize, msg: String },
    #[error("token {0:?} has no readings; unknown tokens are neither ambiguous nor unambiguous")]
    NoReadings(String),
    #[error("coverage is undefined over zero non-punctuation tokens")]
    EmptyCorpus,
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
}

/// The universal 10-POS set. Integer codes are stable and double as label
/// vocabulary indices for POS models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UniversalPos {
    Noun = 0,
    Pronoun = 1,
    Numeral = 2,
    Adjective = 3,
    Verb = 4,
    Adverb = 5,
    Adposition = 6,
    Conjunction = 7,
    Punctuation = 8,
    Other = 9,
}

impl UniversalPos {
    pub const ALL: [UniversalPos; 10] = [
        UniversalPos::Noun,
        UniversalPos::Pronoun,
        UniversalPos::Numeral,
        UniversalPos::Adjective,
        UniversalPos::Verb,
        UniversalPos::Adverb,
        UniversalPos::Adposition,
        UniversalPos::Conjunction,
        UniversalPos::Punctuation,
        UniversalPos::Other,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<UniversalPos> {
        UniversalPos::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            UniversalPos::Noun => "noun",
            UniversalPos::Pronoun => "pronoun",
            UniversalPos::Numeral => "numeral",
            UniversalPos::Adjective => "adjective",
            UniversalPos::Verb => "verb",
            UniversalPos::Adverb => "adverb",
            UniversalPos::Adposition => "adposition",
            UniversalPos::Conjunction => "conjunction",
            UniversalPos::Punctuation => "punctuation",
            UniversalPos::Other => "other",
        }
    }

    /// UPOS column value used when writing CoNLL-U.
    pub fn conllu_tag(self) -> &'static str {
        match self {
            UniversalPos::Noun => "NOUN",
            UniversalPos::Pronoun => "PRON",
            UniversalPos::Numeral => "NUM",
            UniversalPos::Adjective => "ADJ",
            UniversalPos::Verb => "VERB",
            UniversalPos::Adverb => "ADV",
            UniversalPos::Adposition => "ADP",
            UniversalPos::Conjunction => "CONJ",
            UniversalPos::Punctuation => "PUNCT",
            UniversalPos::Other => "X",
        }
    }
}

impl fmt::Display for UniversalPos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which of the two prediction targets a model resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Pos,
    Lemma,
}

impl TargetKind {
    pub fn name(self) -> &'static str {
        match self {
            TargetKind::Pos => "pos",
            TargetKind::Lemma => "lemma",
        }
    }
}

/// One analysis of a surface form. Two readings are "the same reading" iff
/// their (lemma, pos) pair is equal; tags are excluded from that identity.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Reading {
    pub lemma: String,
    pub pos: UniversalPos,
    pub tags: Vec<String>,
    pub declinable: bool,
}

impl Reading {
    pub fn new(lemma: impl Into<String>, pos: UniversalPos, declinable: bool) -> Self {
        Reading {
            lemma: lemma.into(),
            pos,
            tags: Vec::new(),
            declinable,
        }
    }

    pub fn with_tags(mut self, tags: &[&str]) -> Self {
        self.tags = tags.iter().map(|t| t.to_string()).collect();
        self
    }

    pub fn same_reading(&self, other: &Reading) -> bool {
        self.lemma == other.lemma && self.pos == other.pos
    }
}

/// A surface token together with every analyser reading it admits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnalysedToken {
    pub token: SurfaceToken,
    pub readings: Vec<Reading>,
}

impl AnalysedToken {
    /// Distinct (lemma, pos) pairs, i.e. distinct readings in the paper's
    /// sense.
    pub fn distinct_readings(&self) -> Vec<(&str, UniversalPos)> {
        let mut seen = BTreeSet::new();
        for r in &self.readings {
            seen.insert((r.lemma.as_str(), r.pos));
        }
        seen.into_iter().collect()
    }

    pub fn is_unknown(&self) -> bool {
        self.readings.is_empty()
    }
}

fn sorted_deduped(mut readings: Vec<Reading>) -> Vec<Reading> {
    readings.sort();
    readings.dedup_by(|a, b| a.lemma == b.lemma && a.pos == b.pos && a.tags == b.tags);
    readings
}

/// Mapping from analyser-specific POS tags onto the universal set. Total:
/// unmapped tags fall through to `other`.
#[derive(Debug, Clone)]
pub struct PosMapping {
    table: HashMap<String, UniversalPos>,
}

impl Default for PosMapping {
    fn default() -> Self {
        let mut table = HashMap::new();
        // Universal names map to themselves.
        for pos in UniversalPos::ALL {
            table.insert(pos.name().to_string(), pos);
        }
        // UD v2 tags, with proper nouns folded onto nouns and determiners
        // onto pronouns.
        let ud = [
            ("NOUN", UniversalPos::Noun),
            ("PROPN", UniversalPos::Noun),
            ("PRON", UniversalPos::Pronoun),
            ("DET", UniversalPos::Pronoun),
            ("NUM", UniversalPos::Numeral),
            ("ADJ", UniversalPos::Adjective),
            ("VERB", UniversalPos::Verb),
            ("AUX", UniversalPos::Verb),
            ("ADV", UniversalPos::Adverb),
            ("ADP", UniversalPos::Adposition),
            ("CCONJ", UniversalPos::Conjunction),
            ("SCONJ", UniversalPos::Conjunction),
            ("CONJ", UniversalPos::Conjunction),
            ("PUNCT", UniversalPos::Punctuation),
            ("SYM", UniversalPos::Other),
            ("INTJ", UniversalPos::Other),
            ("PART", UniversalPos::Other),
            ("X", UniversalPos::Other),
        ];
        // Analyser-style long and short names seen in Giellatekno-like output.
        let analyser = [
            ("N", UniversalPos::Noun),
            ("Prop", UniversalPos::Noun),
            ("V", UniversalPos::Verb),
            ("A", UniversalPos::Adjective),
            ("Adv", UniversalPos::Adverb),
            ("Pron", UniversalPos::Pronoun),
            ("Num", UniversalPos::Numeral),
            ("Po", UniversalPos::Adposition),
            ("Pr", UniversalPos::Adposition),
            ("Post-position", UniversalPos::Adposition),
            ("Preposition", UniversalPos::Adposition),
            ("CC", UniversalPos::Conjunction),
            ("CS", UniversalPos::Conjunction),
        ];
        for (tag, pos) in ud.into_iter().chain(analyser) {
            table.insert(tag.to_string(), pos);
        }
        PosMapping { table }
    }
}

impl PosMapping {
    /// Loads a `analyser_tag<TAB>universal_pos` table, layered over the
    /// built-in defaults.
    pub fn load<R: BufRead>(reader: R) -> Result<PosMapping, MorphologyError> {
        let mut mapping = PosMapping::default();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut parts = trimmed.split('\t');
            let (tag, target) = match (parts.next(), parts.next()) {
                (Some(t), Some(u)) => (t.trim(), u.trim()),
                _ => {
                    return Err(MorphologyError::BadMappingLine {
                        line: lineno,
                        msg: "expected `analyser_tag<TAB>universal_pos`".to_string(),
                    })
                }
            };
            let pos = UniversalPos::ALL
                .iter()
                .copied()
                .find(|p| p.name() == target.to_lowercase())
                .ok_or_else(|| MorphologyError::BadMappingLine {
                    line: lineno,
                    msg: format!("unknown universal pos {target:?}"),
                })?;
            mapping.table.insert(tag.to_string(), pos);
        }
        Ok(mapping)
    }

    pub fn map(&self, analyser_tag: &str) -> UniversalPos {
        self.table
            .get(analyser_tag)
            .copied()
            .unwrap_or(UniversalPos::Other)
    }
}

/// Folds an analyser tag via the table; unmapped tags become `other`.
pub fn map_pos(analyser_tag: &str, mapping: &PosMapping) -> UniversalPos {
    mapping.map(analyser_tag)
}

/// Folds a tag through the built-in default table (universal names, UD v2,
/// common analyser abbreviations).
pub fn map_pos_default(analyser_tag: &str) -> UniversalPos {
    thread_local! {
        static DEFAULT: PosMapping = PosMapping::default();
    }
    DEFAULT.with(|m| m.map(analyser_tag))
}

/// Surface form → readings table, plus the lemma/surface inventory used for
/// compound splitting. Immutable after load.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: HashMap<String, Vec<Reading>>,
    inventory: HashSet<String>,
}

impl Lexicon {
    pub fn new() -> Lexicon {
        Lexicon::default()
    }

    pub fn insert(&mut self, surface: impl Into<String>, reading: Reading) {
        let surface = surface.into();
        self.inventory.insert(reading.lemma.clone());
        self.inventory.insert(surface.clone());
        self.entries.entry(surface).or_default().push(reading);
    }

    /// Loads the TSV lexicon format. The POS column holds analyser tags,
    /// folded through `mapping` at load time. The declinability column must
    /// be `D` or `I`.
    pub fn load<R: BufRead>(reader: R, mapping: &PosMapping) -> Result<Lexicon, MorphologyError> {
        let mut lexicon = Lexicon::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let lineno = lineno + 1;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(MorphologyError::BadLexiconLine {
                    line: lineno,
                    msg: format!("expected 5 tab-separated columns, found {}", cols.len()),
                });
            }
            let (surface, lemma, pos_tag, tags, decl) =
                (cols[0], cols[1], cols[2], cols[3], cols[4]);
            if surface.is_empty() || lemma.is_empty() {
                return Err(MorphologyError::BadLexiconLine {
                    line: lineno,
                    msg: "surface and lemma must be non-empty".to_string(),
                });
            }
            let declinable = match decl {
                "D" => true,
                "I" => false,
                other => {
                    return Err(MorphologyError::BadLexiconLine {
                        line: lineno,
                        msg: format!("declinability must be D or I, found {other:?}"),
                    })
                }
            };
            let mut reading = Reading::new(lemma, mapping.map(pos_tag), declinable);
            if !tags.is_empty() {
                reading.tags = tags.split('|').map(String::from).collect();
            }
            lexicon.insert(surface, reading);
        }
        Ok(lexicon)
    }

    /// Exact-match lookup first, then lowercase fallback, so sentence-initial
    /// capitalisation does not create spurious unknowns.
    pub fn lookup(&self, surface: &str) -> Option<&[Reading]> {
        if let Some(rs) = self.entries.get(surface) {
            return Some(rs);
        }
        let lower = surface.to_lowercase();
        if lower != surface {
            if let Some(rs) = self.entries.get(&lower) {
                return Some(rs);
            }
        }
        None
    }

    pub fn contains_piece(&self, piece: &str) -> bool {
        if self.inventory.contains(piece) {
            return true;
        }
        let lower = piece.to_lowercase();
        lower != piece && self.inventory.contains(&lower)
    }

    pub fn surface_count(&self) -> usize {
        self.entries.len()
    }
}

/// True iff the text is entirely ASCII digits; such tokens collapse onto the
/// shared `<NUM>` lemma and embedding.
pub fn is_digit_only(text: &str) -> bool {
    !text.is_empty() && text.bytes().all(|b| b.is_ascii_digit())
}

/// Looks up all readings for a token. Punctuation gets a single synthetic
/// reading (lemma = text, pos = punctuation); digit-only tokens get the
/// shared `<NUM>` numeral reading; unknown words get an empty set.
pub fn analyse(lexicon: &Lexicon, token: &SurfaceToken) -> AnalysedToken {
    let readings = if token.is_punctuation {
        vec![Reading::new(token.text.clone(), UniversalPos::Punctuation, false)]
    } else if is_digit_only(&token.text) {
        vec![Reading::new(NUM_LEMMA, UniversalPos::Numeral, false)]
    } else {
        sorted_deduped(lexicon.lookup(&token.text).map(<[_]>::to_vec).unwrap_or_default())
    };
    AnalysedToken {
        token: token.clone(),
        readings,
    }
}

/// Analyses every token of every document.
pub fn analyse_documents(lexicon: &Lexicon, docs: &[Document]) -> Vec<Vec<AnalysedToken>> {
    docs.iter()
        .map(|d| d.tokens.iter().map(|t| analyse(lexicon, t)).collect())
        .collect()
}

/// Greedy longest-known-prefix segmentation with backtracking over the
/// lexicon's lemma/surface inventory. Returns the surface unsplit when no
/// full segmentation into known pieces exists.
pub fn split_compound(lexicon: &Lexicon, surface: &str) -> Vec<String> {
    debug_assert!(!surface.is_empty());
    let chars: Vec<char> = surface.chars().collect();
    let mut pieces = Vec::new();
    if segment(lexicon, &chars, 0, &mut pieces) && pieces.len() > 1 {
        return pieces;
    }
    vec![surface.to_string()]
}

fn segment(lexicon: &Lexicon, chars: &[char], start: usize, pieces: &mut Vec<String>) -> bool {
    if start == chars.len() {
        return true;
    }
    // Longest candidate first; maximal pieces win when several cover the
    // remainder.
    for end in (start + 1..=chars.len()).rev() {
        let piece: String = chars[start..end].iter().collect();
        if lexicon.contains_piece(&piece) {
            pieces.push(piece);
            if segment(lexicon, chars, end, pieces) {
                return true;
            }
            pieces.pop();
        }
    }
    false
}

/// Whether the analyser readings disagree on the given prediction target.
/// Unknown tokens (empty reading set) are neither and produce an error.
pub fn is_ambiguous(token: &AnalysedToken, target: TargetKind) -> Result<bool, MorphologyError> {
    if token.readings.is_empty() {
        return Err(MorphologyError::NoReadings(token.token.text.clone()));
    }
    Ok(match target {
        TargetKind::Pos => {
            let mut kinds: Vec<UniversalPos> = token.readings.iter().map(|r| r.pos).collect();
            kinds.sort_unstable();
            kinds.dedup();
            kinds.len() >= 2
        }
        TargetKind::Lemma => {
            let mut lemmas: Vec<&str> = token.readings.iter().map(|r| r.lemma.as_str()).collect();
            lemmas.sort_unstable();
            lemmas.dedup();
            lemmas.len() >= 2
        }
    })
}

/// Fraction of non-punctuation tokens with at least one analysis.
pub fn coverage(lexicon: &Lexicon, docs: &[Document]) -> Result<f64, MorphologyError> {
    let mut total = 0usize;
    let mut analysed = 0usize;
    for doc in docs {
        for token in &doc.tokens {
            if token.is_punctuation {
                continue;
            }
            total += 1;
            if !analyse(lexicon, token).readings.is_empty() {
                analysed += 1;
            }
        }
    }
    if total == 0 {
        return Err(MorphologyError::EmptyCorpus);
    }
    Ok(analysed as f64 / total as f64)
}

#[cfg(test)]
pub(crate) fn fixture_lexicon() -> Lexicon {
    use UniversalPos::*;
    let mut lex = Lexicon::new();
    lex.insert("tuli", Reading::new("tuli", Noun, true).with_tags(&["Sg", "Nom"]));
    lex.insert("tuli", Reading::new("tulla", Verb, true).with_tags(&["Past", "Sg3"]));
    lex.insert("jälkeen", Reading::new("jälkeen", Adposition, false));
    lex.insert("jälkeen", Reading::new("jälki", Noun, true).with_tags(&["Sg", "Ill"]));
    lex.insert("nostaa", Reading::new("nostaa", Verb, true).with_tags(&["Inf"]));
    lex.insert("nostaa", Reading::new("nostaa", Verb, true).with_tags(&["Pres", "Sg3"]));
    lex.insert("alusta", Reading::new("alusta", Noun, true).with_tags(&["Sg", "Nom"]));
    lex.insert("alusta", Reading::new("alus", Noun, true).with_tags(&["Sg", "Par"]));
    lex.insert("alusta", Reading::new("alunen", Noun, true).with_tags(&["Sg", "Par"]));
    lex.insert("знать", Reading::new("знать", Verb, true).with_tags(&["Inf"]));
    lex.insert("знать", Reading::new("знать", Noun, true).with_tags(&["Sg", "Nom"]));
    lex.insert("eläinlääkäri", Reading::new("eläinlääkäri", Noun, true));
    lex.insert("eläin", Reading::new("eläin", Noun, true));
    lex.insert("lääkäri", Reading::new("lääkäri", Noun, true));
    lex.insert("asema", Reading::new("asema", Noun, true));
    lex.insert("isänsä", Reading::new("isä", Noun, true).with_tags(&["Sg", "Px3"]));
    lex.insert("aamuyöllä", Reading::new("aamuyö", Noun, true).with_tags(&["Sg", "Ade"]));
    lex
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn analyse_ambiguous_surface() {
        let lex = fixture_lexicon();
        let t = analyse(&lex, &SurfaceToken::new("tuli"));
        let readings = t.distinct_readings();
        assert_eq!(
            readings,
            vec![("tuli", UniversalPos::Noun), ("tulla", UniversalPos::Verb)]
        );
    }

    #[test]
    fn analyse_punctuation_is_synthetic() {
        let lex = Lexicon::new();
        let t = analyse(&lex, &SurfaceToken::new(","));
        assert_eq!(t.readings.len(), 1);
        assert_eq!(t.readings[0].pos, UniversalPos::Punctuation);
        assert_eq!(t.readings[0].lemma, ",");
        assert!(!t.readings[0].declinable);
    }

    #[test]
    fn analyse_unknown_is_empty() {
        let lex = fixture_lexicon();
        assert!(analyse(&lex, &SurfaceToken::new("zzzzz")).is_unknown());
    }

    #[test]
    fn analyse_digit_only_collapses_to_num() {
        let lex = Lexicon::new();
        let t = analyse(&lex, &SurfaceToken::new("2019"));
        assert_eq!(t.readings[0].lemma, NUM_LEMMA);
        assert_eq!(t.readings[0].pos, UniversalPos::Numeral);
    }

    #[test]
    fn analyse_falls_back_to_lowercase() {
        let lex = fixture_lexicon();
        let t = analyse(&lex, &SurfaceToken::new("Tuli"));
        assert_eq!(t.distinct_readings().len(), 2);
    }

    #[test]
    fn map_pos_examples() {
        let mapping = PosMapping::default();
        assert_eq!(map_pos("Post-position", &mapping), UniversalPos::Adposition);
        assert_eq!(map_pos("PROPN", &mapping), UniversalPos::Noun);
        assert_eq!(map_pos("SYM", &mapping), UniversalPos::Other);
    }

    #[test]
    fn map_pos_table_overrides() {
        let table = "Pcle\tadverb\n";
        let mapping = PosMapping::load(table.as_bytes()).unwrap();
        assert_eq!(mapping.map("Pcle"), UniversalPos::Adverb);
        assert_eq!(mapping.map("NOUN"), UniversalPos::Noun);
    }

    #[test]
    fn split_compound_maximal_pieces() {
        let lex = fixture_lexicon();
        assert_eq!(
            split_compound(&lex, "eläinlääkäriasema"),
            vec!["eläinlääkäri", "asema"]
        );
    }

    #[test]
    fn split_compound_identity() {
        let lex = fixture_lexicon();
        assert_eq!(split_compound(&lex, "asema"), vec!["asema"]);
    }

    #[test]
    fn split_compound_fallback_unsplit() {
        let lex = fixture_lexicon();
        assert_eq!(split_compound(&lex, "xyzzy"), vec!["xyzzy"]);
    }

    #[test]
    fn split_compound_backtracks() {
        let mut lex = Lexicon::new();
        for piece in ["aaa", "aa", "ab"] {
            lex.insert(piece, Reading::new(piece, UniversalPos::Noun, true));
        }
        // Greedy "aaa" leaves "b" uncovered; backtracking finds "aa"+"ab".
        assert_eq!(split_compound(&lex, "aaab"), vec!["aa", "ab"]);
    }

    #[test]
    fn ambiguity_per_target() {
        let lex = fixture_lexicon();
        let tuli = analyse(&lex, &SurfaceToken::new("tuli"));
        assert!(is_ambiguous(&tuli, TargetKind::Pos).unwrap());
        assert!(is_ambiguous(&tuli, TargetKind::Lemma).unwrap());

        let nostaa = analyse(&lex, &SurfaceToken::new("nostaa"));
        assert!(!is_ambiguous(&nostaa, TargetKind::Pos).unwrap());
        assert!(!is_ambiguous(&nostaa, TargetKind::Lemma).unwrap());

        let znat = analyse(&lex, &SurfaceToken::new("знать"));
        assert!(is_ambiguous(&znat, TargetKind::Pos).unwrap());
        assert!(!is_ambiguous(&znat, TargetKind::Lemma).unwrap());
    }

    #[test]
    fn ambiguity_requires_readings() {
        let lex = Lexicon::new();
        let unknown = analyse(&lex, &SurfaceToken::new("zzzzz"));
        assert!(is_ambiguous(&unknown, TargetKind::Pos).is_err());
    }

    #[test]
    fn coverage_counts_non_punctuation_only() {
        let lex = fixture_lexicon();
        let doc = crate::corpus::tokenize("d", "tuli zzzzz .");
        assert!((coverage(&lex, &[doc]).unwrap() - 0.5).abs() < 1e-12);

        let all_known = crate::corpus::tokenize("d", "tuli asema");
        assert_eq!(coverage(&lex, &[all_known]).unwrap(), 1.0);

        let empty = crate::corpus::tokenize("d", ". . .");
        assert!(coverage(&lex, &[empty]).is_err());
    }

    #[test]
    fn coverage_fixture_at_reference_scale() {
        // 4757 of 5000 known tokens: the same ratio the Finnish analyser
        // reports on its news corpus.
        let mut lex = Lexicon::new();
        lex.insert("sana", Reading::new("sana", UniversalPos::Noun, true));
        let mut tokens = Vec::new();
        for i in 0..5000 {
            if i < 4757 {
                tokens.push(SurfaceToken::new("sana"));
            } else {
                tokens.push(SurfaceToken::new(format!("tuntematon{i}")));
            }
        }
        let doc = Document::new("d", tokens);
        assert!((coverage(&lex, &[doc]).unwrap() - 0.9514).abs() < 1e-12);
    }

    #[test]
    fn lexicon_rejects_malformed_rows() {
        let bad = "tuli\ttuli\tN\tSg\n";
        let err = Lexicon::load(bad.as_bytes(), &PosMapping::default()).unwrap_err();
        assert!(err.to_string().contains("line 1"));

        let bad_flag = "tuli\ttuli\tN\tSg\tQ\n";
        assert!(Lexicon::load(bad_flag.as_bytes(), &PosMapping::default()).is_err());
    }

    #[test]
    fn lexicon_load_round_trip() {
        let tsv = "tuli\ttuli\tN\tSg|Nom\tD\ntuli\ttulla\tV\tPast|Sg3\tD\njälkeen\tjälkeen\tPo\t\tI\n";
        let lex = Lexicon::load(tsv.as_bytes(), &PosMapping::default()).unwrap();
        assert_eq!(lex.lookup("tuli").unwrap().len(), 2);
        let adp = &lex.lookup("jälkeen").unwrap()[0];
        assert_eq!(adp.pos, UniversalPos::Adposition);
        assert!(!adp.declinable);
        assert!(adp.tags.is_empty());
    }

    proptest! {
        #[test]
        fn map_pos_is_total(tag in "\\PC{0,12}") {
            let mapping = PosMapping::default();
            let pos = map_pos(&tag, &mapping);
            prop_assert!(UniversalPos::ALL.contains(&pos));
        }

        #[test]
        fn split_pieces_concatenate_to_input(surface in "[a-z]{1,12}") {
            let lex = fixture_lexicon();
            let pieces = split_compound(&lex, &surface);
            prop_assert_eq!(pieces.concat(), surface);
        }

        #[test]
        fn analyse_is_pure(word in "[a-zа-я]{1,10}") {
            let lex = fixture_lexicon();
            let t = SurfaceToken::new(word);
            prop_assert_eq!(analyse(&lex, &t), analyse(&lex, &t));
        }
    }

    #[test]
    fn unambiguous_pos_means_single_pos_value() {
        let lex = fixture_lexicon();
        for word in ["tuli", "nostaa", "alusta", "знать", "jälkeen"] {
            let t = analyse(&lex, &SurfaceToken::new(word));
            if !is_ambiguous(&t, TargetKind::Pos).unwrap() {
                let mut kinds: Vec<_> = t.readings.iter().map(|r| r.pos).collect();
                kinds.dedup();
                assert_eq!(kinds.len(), 1, "{word} should span one POS");
            }
        }
    }
}
