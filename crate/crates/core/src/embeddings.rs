//! Surface-form embeddings: a word2vec-text-format table for known words,
//! deterministic subword-hash composition for everything else, and the
//! special zero (PAD) and shared number vectors.
//!
//! Out-of-vocabulary words are embedded as the mean of their character
//! n-gram bucket vectors. In frozen mode the bucket vectors are synthesised
//! from the bucket index alone, so any OOV word gets the same vector in every
//! run regardless of what was loaded; in trainable mode the bucket matrix is
//! a model parameter and this module only supplies the bucket indices.

use std::collections::HashMap;
use std::io::BufRead;

use thiserror::Error;

use crate::morphology::{is_digit_only, NUM_LEMMA};

pub const DEFAULT_BUCKETS: usize = 100_000;
pub const DEFAULT_MIN_N: usize = 3;
pub const DEFAULT_MAX_N: usize = 6;

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("line {line}: {msg}")]
    BadLine { line: usize, msg: String },
    #[error("missing `count dim` header")]
    MissingHeader,
    #[error("header declares {declared} rows but {found} were read")]
    RowCountMismatch { declared: usize, found: usize },
    #[error("read error: {0}")]
    Io(#[from] std::io::Error),
}

/// One position handed to the embedder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TokenSlot<'a> {
    Pad,
    Num,
    Word(&'a str),
}

#[derive(Debug, Clone)]
pub struct EmbeddingProvider {
    dim: usize,
    table: HashMap<String, Vec<f64>>,
    buckets: usize,
    min_n: usize,
    max_n: usize,
}

impl EmbeddingProvider {
    /// An empty table: every word goes through the subword path. This is the
    /// base for the trainable-hash mode, where the bucket matrix lives in the
    /// model parameters.
    pub fn hashed(dim: usize, buckets: usize, min_n: usize, max_n: usize) -> EmbeddingProvider {
        assert!(dim >= 1 && buckets >= 1 && min_n >= 1 && max_n >= min_n);
        EmbeddingProvider {
            dim,
            table: HashMap::new(),
            buckets,
            min_n,
            max_n,
        }
    }

    pub fn with_subwords(mut self, buckets: usize, min_n: usize, max_n: usize) -> Self {
        assert!(buckets >= 1 && min_n >= 1 && max_n >= min_n);
        self.buckets = buckets;
        self.min_n = min_n;
        self.max_n = max_n;
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn buckets(&self) -> usize {
        self.buckets
    }

    pub fn known_words(&self) -> usize {
        self.table.len()
    }

    pub fn contains(&self, word: &str) -> bool {
        self.table.contains_key(word)
    }

    /// Bucket indices of the word's character n-grams, in enumeration order.
    /// Words too short for any n-gram hash the whole bracketed form.
    pub fn subword_indices(&self, word: &str) -> Vec<usize> {
        let grams = ngrams(word, self.min_n, self.max_n);
        grams
            .iter()
            .map(|g| subword_hash(g, self.buckets))
            .collect()
    }

    fn oov_vector(&self, word: &str) -> Vec<f64> {
        let indices = self.subword_indices(word);
        let mut v = vec![0.0; self.dim];
        for &b in &indices {
            let bucket = bucket_vector(b, self.dim);
            for (acc, x) in v.iter_mut().zip(bucket) {
                *acc += x;
            }
        }
        let scale = 1.0 / indices.len() as f64;
        for x in &mut v {
            *x *= scale;
        }
        v
    }

    fn num_vector(&self) -> Vec<f64> {
        match self.table.get(NUM_LEMMA) {
            Some(v) => v.clone(),
            None => self.oov_vector(NUM_LEMMA),
        }
    }

    /// The frozen embedding of one slot: PAD is all zeros, digit-only tokens
    /// share the number vector, known words come from the table, everything
    /// else from the subword path.
    pub fn embed(&self, slot: TokenSlot<'_>) -> Vec<f64> {
        match slot {
            TokenSlot::Pad => vec![0.0; self.dim],
            TokenSlot::Num => self.num_vector(),
            TokenSlot::Word(w) => {
                if is_digit_only(w) {
                    self.num_vector()
                } else if let Some(v) = self.table.get(w) {
                    v.clone()
                } else {
                    self.oov_vector(w)
                }
            }
        }
    }
}

/// Loads a word2vec-text-format vector file: a `count dim` header, then one
/// `word v1 ... v_dim` row per word.
pub fn load_vectors<R: BufRead>(reader: R) -> Result<EmbeddingProvider, EmbeddingError> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or(EmbeddingError::MissingHeader)??;
    let mut parts = header.split_whitespace();
    let (count, dim) = match (
        parts.next().and_then(|s| s.parse::<usize>().ok()),
        parts.next().and_then(|s| s.parse::<usize>().ok()),
    ) {
        (Some(c), Some(d)) if d >= 1 && parts.next().is_none() => (c, d),
        _ => return Err(EmbeddingError::MissingHeader),
    };

    let mut table = HashMap::with_capacity(count);
    let mut rows = 0usize;
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        let lineno = lineno + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split_whitespace();
        let word = fields.next().expect("non-empty line has a first field");
        let values: Vec<f64> = fields
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| EmbeddingError::BadLine {
                line: lineno,
                msg: format!("unparseable value: {e}"),
            })?;
        if values.len() != dim {
            return Err(EmbeddingError::BadLine {
                line: lineno,
                msg: format!("expected {dim} values, found {}", values.len()),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::BadLine {
                line: lineno,
                msg: "non-finite value".to_string(),
            });
        }
        if table.insert(word.to_string(), values).is_some() {
            return Err(EmbeddingError::BadLine {
                line: lineno,
                msg: format!("duplicate word {word:?}"),
            });
        }
        rows += 1;
    }
    if rows != count {
        return Err(EmbeddingError::RowCountMismatch {
            declared: count,
            found: rows,
        });
    }
    Ok(EmbeddingProvider {
        dim,
        table,
        buckets: DEFAULT_BUCKETS,
        min_n: DEFAULT_MIN_N,
        max_n: DEFAULT_MAX_N,
    })
}

/// Character n-grams of the word wrapped in `<` and `>` boundary markers, for
/// n in `[min_n, max_n]`. Falls back to the whole bracketed form when it is
/// shorter than `min_n`.
pub fn ngrams(word: &str, min_n: usize, max_n: usize) -> Vec<String> {
    let bracketed: Vec<char> = std::iter::once('<')
        .chain(word.chars())
        .chain(std::iter::once('>'))
        .collect();
    let mut grams = Vec::new();
    for n in min_n..=max_n.min(bracketed.len()) {
        for start in 0..=bracketed.len() - n {
            grams.push(bracketed[start..start + n].iter().collect());
        }
    }
    if grams.is_empty() {
        grams.push(bracketed.into_iter().collect());
    }
    grams
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// FNV-1a (64-bit) over the n-gram's UTF-8 bytes, reduced modulo the bucket
/// count. Pure and platform-independent.
pub fn subword_hash(ngram: &str, buckets: usize) -> usize {
    assert!(buckets >= 1, "bucket count must be >= 1");
    let mut h = FNV_OFFSET;
    for b in ngram.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    (h % buckets as u64) as usize
}

/// The frozen-mode vector of one bucket, synthesised from the index alone via
/// a splitmix64 stream: components uniform in `(-1/dim, 1/dim)`.
pub fn bucket_vector(bucket: usize, dim: usize) -> Vec<f64> {
    let mut state = (bucket as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    (0..dim)
        .map(|_| {
            let z = splitmix64(&mut state);
            let unit = (z >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
            (2.0 * unit - 1.0) / dim as f64
        })
        .collect()
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn tiny_provider() -> EmbeddingProvider {
        let file = "2 3\nkoti 0.1 0.2 0.3\ntuli -1 0 1\n";
        load_vectors(file.as_bytes()).unwrap()
    }

    #[test]
    fn load_header_and_rows() {
        let p = tiny_provider();
        assert_eq!(p.dim(), 3);
        assert_eq!(p.known_words(), 2);
        assert_eq!(p.embed(TokenSlot::Word("tuli")), vec![-1.0, 0.0, 1.0]);
    }

    #[test]
    fn load_rejects_short_row() {
        let file = "1 3\nkoti 0.1 0.2\n";
        let err = load_vectors(file.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"), "got {err}");
    }

    #[test]
    fn load_rejects_empty_file() {
        assert!(matches!(
            load_vectors("".as_bytes()),
            Err(EmbeddingError::MissingHeader)
        ));
    }

    #[test]
    fn load_rejects_row_count_mismatch() {
        let file = "3 2\na 0 1\nb 1 0\n";
        assert!(matches!(
            load_vectors(file.as_bytes()),
            Err(EmbeddingError::RowCountMismatch { declared: 3, found: 2 })
        ));
    }

    #[test]
    fn pad_is_all_zeros() {
        let p = tiny_provider();
        let v = p.embed(TokenSlot::Pad);
        assert!(v.iter().all(|&x| x == 0.0));
        assert_eq!(v.len(), 3);
    }

    #[test]
    fn digit_only_tokens_share_the_number_vector() {
        let p = tiny_provider();
        assert_eq!(p.embed(TokenSlot::Word("2019")), p.embed(TokenSlot::Word("777")));
        assert_eq!(p.embed(TokenSlot::Word("2019")), p.embed(TokenSlot::Num));
    }

    #[test]
    fn num_vector_prefers_table_row() {
        let file = "1 2\n<NUM> 5 6\n";
        let p = load_vectors(file.as_bytes()).unwrap();
        assert_eq!(p.embed(TokenSlot::Num), vec![5.0, 6.0]);
    }

    #[test]
    fn oov_is_deterministic() {
        let p = tiny_provider();
        assert_eq!(p.embed(TokenSlot::Word("qzx")), p.embed(TokenSlot::Word("qzx")));
    }

    #[test]
    fn oov_independent_of_load_order() {
        let a = load_vectors("2 3\nkoti 0.1 0.2 0.3\ntuli -1 0 1\n".as_bytes()).unwrap();
        let b = load_vectors("2 3\ntuli -1 0 1\nkoti 0.1 0.2 0.3\n".as_bytes()).unwrap();
        assert_eq!(a.embed(TokenSlot::Word("qzx")), b.embed(TokenSlot::Word("qzx")));
    }

    #[test]
    fn ngram_enumeration() {
        let grams = ngrams("cat", 3, 6);
        assert_eq!(grams, vec!["<ca", "cat", "at>", "<cat", "cat>", "<cat>"]);
    }

    #[test]
    fn ngram_fallback_for_short_forms() {
        assert_eq!(ngrams("a", 5, 6), vec!["<a>"]);
    }

    #[test]
    fn hash_modulus_one_is_zero() {
        assert_eq!(subword_hash("anything", 1), 0);
    }

    #[test]
    fn hash_matches_independent_fnv1a() {
        // Reference implementation, written out separately from the one under
        // test.
        fn reference(bytes: &[u8]) -> u64 {
            let mut h: u64 = 14_695_981_039_346_656_037;
            for &b in bytes {
                h ^= b as u64;
                h = h.wrapping_mul(1_099_511_628_211);
            }
            h
        }
        assert_eq!(subword_hash("<ab", 100), (reference(b"<ab") % 100) as usize);
        assert_eq!(
            subword_hash("<ab", usize::MAX.min(u64::MAX as usize)),
            (reference(b"<ab") % u64::MAX.min(usize::MAX as u64)) as usize
        );
    }

    proptest! {
        #[test]
        fn embeddings_have_provider_dimension(word in "\\PC{1,12}") {
            let p = tiny_provider();
            prop_assert_eq!(p.embed(TokenSlot::Word(&word)).len(), p.dim());
        }

        #[test]
        fn hash_is_stable(gram in "\\PC{1,8}", buckets in 1usize..5000) {
            prop_assert_eq!(subword_hash(&gram, buckets), subword_hash(&gram, buckets));
            prop_assert!(subword_hash(&gram, buckets) < buckets);
        }
    }
}
