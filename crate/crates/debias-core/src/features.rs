//! Deterministic tokenization and hashed n-gram feature extraction.
//!
//! This is the feature front-end for the classifier: text is case-folded,
//! split on Unicode whitespace, stripped of leading/trailing punctuation per
//! token and truncated to `max_tokens`. Token n-grams are then hashed with
//! FNV-1a (64-bit) into a fixed-dimension sparse vector. The hash is a fixed,
//! published function, so feature vectors are byte-stable across runs and
//! platforms.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::math;

/// Default truncation point for input token sequences.
pub const DEFAULT_MAX_TOKENS: usize = 128;

/// Default hashed feature space size (must be a power of two).
pub const DEFAULT_DIMENSION: usize = 1 << 18;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FeatureConfigError {
    #[error("max_tokens must be at least 1")]
    ZeroMaxTokens,
    #[error("dimension must be a power of two >= 2, got {0}")]
    BadDimension(usize),
    #[error("ngram_orders must be nonempty and contain only values >= 1")]
    BadNgramOrders,
}

/// Configuration for [`tokenize`] and [`featurize`].
///
/// Stored inside saved models so that a model file fully describes how to
/// turn text into its input features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    /// Token sequences are truncated to this many tokens.
    #[serde(default = "default_max_tokens")]
    pub max_tokens: usize,
    /// The n-gram sizes that contribute features, e.g. `[1, 2]` for unigrams
    /// plus bigrams. Normalized to sorted, deduplicated form by `validate`.
    #[serde(default = "default_ngram_orders")]
    pub ngram_orders: Vec<usize>,
    /// Size of the hashed feature space; must be a power of two.
    #[serde(default = "default_dimension")]
    pub dimension: usize,
    /// Apply L2 normalization to nonempty feature vectors.
    #[serde(default = "default_normalize")]
    pub normalize: bool,
}

fn default_max_tokens() -> usize {
    DEFAULT_MAX_TOKENS
}

fn default_ngram_orders() -> Vec<usize> {
    alloc::vec![1, 2]
}

fn default_dimension() -> usize {
    DEFAULT_DIMENSION
}

fn default_normalize() -> bool {
    true
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            max_tokens: DEFAULT_MAX_TOKENS,
            ngram_orders: default_ngram_orders(),
            dimension: DEFAULT_DIMENSION,
            normalize: true,
        }
    }
}

impl FeatureConfig {
    /// Checks the config invariants and canonicalizes `ngram_orders`
    /// (sorted, deduplicated).
    pub fn validate(&mut self) -> Result<(), FeatureConfigError> {
        if self.max_tokens == 0 {
            return Err(FeatureConfigError::ZeroMaxTokens);
        }
        if self.dimension < 2 || !self.dimension.is_power_of_two() {
            return Err(FeatureConfigError::BadDimension(self.dimension));
        }
        self.ngram_orders.sort_unstable();
        self.ngram_orders.dedup();
        if self.ngram_orders.is_empty() || self.ngram_orders[0] == 0 {
            return Err(FeatureConfigError::BadNgramOrders);
        }
        Ok(())
    }
}

/// A sparse feature vector: map from hashed index to weight.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FeatureVector {
    weights: BTreeMap<usize, f64>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of nonzero entries.
    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn get(&self, index: usize) -> f64 {
        self.weights.get(&index).copied().unwrap_or(0.0)
    }

    /// Entries in ascending index order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().map(|(&i, &w)| (i, w))
    }

    /// Largest index present, if any.
    pub fn max_index(&self) -> Option<usize> {
        self.weights.keys().next_back().copied()
    }

    pub fn l2_norm(&self) -> f64 {
        math::sqrt(self.weights.values().map(|w| w * w).sum())
    }
}

/// FNV-1a 64-bit hash (offset basis `0xcbf29ce484222325`, prime
/// `0x100000001b3`). Fixed here so feature indices never depend on the
/// process or platform.
pub fn fnv1a_64(bytes: &[u8]) -> u64 {
    const OFFSET_BASIS: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    let mut hash = OFFSET_BASIS;
    for &b in bytes {
        hash ^= b as u64;
        hash = hash.wrapping_mul(PRIME);
    }
    hash
}

/// Splits text into lowercased tokens.
///
/// Rules, in order: case-fold, split on Unicode whitespace, strip leading and
/// trailing non-alphanumeric characters from each token, drop tokens that end
/// up empty, truncate the list to `config.max_tokens`.
pub fn tokenize(text: &str, config: &FeatureConfig) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for raw in lowered.split_whitespace() {
        let stripped = raw.trim_matches(|c: char| !c.is_alphanumeric());
        if !stripped.is_empty() {
            tokens.push(String::from(stripped));
            if tokens.len() == config.max_tokens {
                break;
            }
        }
    }
    tokens
}

/// Hashes token n-grams into a sparse vector.
///
/// For each order `n` in `config.ngram_orders`, every contiguous n-gram
/// (tokens joined with a single space) adds `+1.0` at index
/// `fnv1a_64(ngram) % dimension`. Hash collisions accumulate. If
/// `config.normalize` is set the nonempty result is scaled to unit L2 norm.
pub fn featurize(tokens: &[String], config: &FeatureConfig) -> FeatureVector {
    let mut weights: BTreeMap<usize, f64> = BTreeMap::new();
    for &n in &config.ngram_orders {
        if n == 0 || n > tokens.len() {
            continue;
        }
        for window in tokens.windows(n) {
            let gram = window.join(" ");
            let index = (fnv1a_64(gram.as_bytes()) % config.dimension as u64) as usize;
            *weights.entry(index).or_insert(0.0) += 1.0;
        }
    }
    let mut vector = FeatureVector { weights };
    if config.normalize && !vector.is_empty() {
        let norm = vector.l2_norm();
        for w in vector.weights.values_mut() {
            *w /= norm;
        }
    }
    vector
}
