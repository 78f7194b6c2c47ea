//! Shared setup for the criterion benchmarks: reference-sized model
//! parameters and a deterministic toy window.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use morphdis::corpus::{extract_window, tokenize, Window};
use morphdis::disambigmodel::{ModelDims, ModelParams};
use morphdis::embeddings::EmbeddingProvider;

pub const REFERENCE_DIMS: ModelDims = ModelDims {
    emb: 300,
    hidden: 512,
    mlp_hidden: 1024,
    n_labels: 10,
    radius: 10,
};

pub fn reference_params(seed: u64) -> ModelParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    ModelParams::init(REFERENCE_DIMS, None, &mut rng)
}

pub fn hashed_provider(dim: usize) -> EmbeddingProvider {
    EmbeddingProvider::hashed(dim, 100_000, 3, 6)
}

pub fn sample_window() -> Window {
    let words: Vec<String> = (0..25).map(|i| format!("sana{i}")).collect();
    let doc = tokenize("bench", &words.join(" "));
    extract_window(&doc, 12, REFERENCE_DIMS.radius).unwrap()
}

pub fn sample_paragraph() -> String {
    let mut text = String::new();
    for i in 0..120 {
        text.push_str(&format!("sana{i} tuli aamuyöllä, eläinlääkäriasema (nro {i}). "));
    }
    text
}
