//! Labeled corpora: construction, per-class descriptive statistics,
//! class rebalancing, and stratified train/eval splitting.
//!
//! All randomized operations ([`balance`], [`split`]) are seeded and
//! deterministic: the same corpus and seed produce byte-identical output on
//! every run and platform.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{tokenize, FeatureConfig};
use crate::math;

/// Binary class label.
///
/// The derived `Ord` puts `Hate` before `NoHate`; seeded operations visit
/// classes in that canonical order so their random streams are reproducible.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Hate,
    NoHate,
}

impl Label {
    /// Parses a label, case-insensitively, from `"hate"` / `"nohate"`.
    pub fn parse(value: &str) -> Option<Label> {
        let lowered = value.trim().to_lowercase();
        match lowered.as_str() {
            "hate" => Some(Label::Hate),
            "nohate" => Some(Label::NoHate),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Label::Hate => "hate",
            Label::NoHate => "nohate",
        }
    }
}

impl core::fmt::Display for Label {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One labeled text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: u64,
    pub text: String,
    pub label: Label,
}

impl LabeledExample {
    pub fn new(id: u64, text: impl Into<String>, label: Label) -> Self {
        Self {
            id,
            text: text.into(),
            label,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CorpusError {
    #[error("example {id} has empty text")]
    EmptyText { id: u64 },
    #[error("duplicate example id {0}")]
    DuplicateId(u64),
}

/// An ordered collection of [`LabeledExample`]s with a per-class position
/// index.
///
/// Invariants enforced on construction: every text is nonempty after
/// whitespace trimming, and ids are unique.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Corpus {
    examples: Vec<LabeledExample>,
    class_index: BTreeMap<Label, Vec<usize>>,
}

impl Corpus {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_examples(
        examples: impl IntoIterator<Item = LabeledExample>,
    ) -> Result<Self, CorpusError> {
        let mut corpus = Corpus::new();
        for example in examples {
            corpus.push(example)?;
        }
        Ok(corpus)
    }

    /// Appends an example, validating the corpus invariants.
    pub fn push(&mut self, example: LabeledExample) -> Result<(), CorpusError> {
        if example.text.trim().is_empty() {
            return Err(CorpusError::EmptyText { id: example.id });
        }
        if self.examples.iter().any(|e| e.id == example.id) {
            return Err(CorpusError::DuplicateId(example.id));
        }
        self.class_index
            .entry(example.label)
            .or_default()
            .push(self.examples.len());
        self.examples.push(example);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn iter(&self) -> core::slice::Iter<'_, LabeledExample> {
        self.examples.iter()
    }

    /// Positions (into [`Corpus::examples`]) of the given class, in corpus
    /// order.
    pub fn positions(&self, label: Label) -> &[usize] {
        self.class_index
            .get(&label)
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn count(&self, label: Label) -> usize {
        self.positions(label).len()
    }

    fn max_id(&self) -> Option<u64> {
        self.examples.iter().map(|e| e.id).max()
    }
}

impl<'a> IntoIterator for &'a Corpus {
    type Item = &'a LabeledExample;
    type IntoIter = core::slice::Iter<'a, LabeledExample>;

    fn into_iter(self) -> Self::IntoIter {
        self.examples.iter()
    }
}

/// Descriptive statistics for one class.
///
/// Field names match the JSON stats report exactly.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ClassStats {
    /// Number of sentences (examples).
    pub sentences: u64,
    /// Mean token count per sentence.
    pub mean_len: f64,
    /// Population standard deviation of token counts.
    pub sd_len: f64,
    /// Total token count.
    pub word_count: u64,
    /// Number of distinct case-folded tokens.
    pub vocab: u64,
}

/// Per-class statistics for a corpus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CorpusStats {
    pub hate: ClassStats,
    pub nohate: ClassStats,
}

impl CorpusStats {
    pub fn class(&self, label: Label) -> &ClassStats {
        match label {
            Label::Hate => &self.hate,
            Label::NoHate => &self.nohate,
        }
    }
}

/// Computes per-class sentence counts, token-length mean and population
/// standard deviation, total word counts, and case-folded vocabulary sizes.
///
/// Token counts use the standard tokenizer without truncation, so statistics
/// describe the full text even when the classifier later truncates it.
pub fn compute_stats(corpus: &Corpus) -> CorpusStats {
    let untruncated = FeatureConfig {
        max_tokens: usize::MAX,
        ..FeatureConfig::default()
    };
    let mut stats = CorpusStats::default();
    for &label in &[Label::Hate, Label::NoHate] {
        let mut lengths: Vec<f64> = Vec::new();
        let mut vocab: BTreeSet<String> = BTreeSet::new();
        let mut word_count: u64 = 0;
        for &pos in corpus.positions(label) {
            let tokens = tokenize(&corpus.examples[pos].text, &untruncated);
            lengths.push(tokens.len() as f64);
            word_count += tokens.len() as u64;
            vocab.extend(tokens);
        }
        let n = lengths.len() as f64;
        let (mean, sd) = if lengths.is_empty() {
            (0.0, 0.0)
        } else {
            let mean = lengths.iter().sum::<f64>() / n;
            let var = lengths.iter().map(|l| (l - mean) * (l - mean)).sum::<f64>() / n;
            (mean, math::sqrt(var))
        };
        let entry = ClassStats {
            sentences: lengths.len() as u64,
            mean_len: mean,
            sd_len: sd,
            word_count,
            vocab: vocab.len() as u64,
        };
        match label {
            Label::Hate => stats.hate = entry,
            Label::NoHate => stats.nohate = entry,
        }
    }
    stats
}

/// Per-class target size for [`balance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BalanceTarget {
    /// Midpoint of the two class counts, rounded half up.
    Auto,
    /// An explicit per-class count (must be ≥ 1).
    Exact(usize),
}

impl Default for BalanceTarget {
    fn default() -> Self {
        BalanceTarget::Auto
    }
}

/// Configuration for [`balance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BalanceConfig {
    pub target_per_class: BalanceTarget,
    pub seed: u64,
}

impl Default for BalanceConfig {
    fn default() -> Self {
        Self {
            target_per_class: BalanceTarget::Auto,
            seed: 0,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BalanceError {
    #[error("class {0} has no examples")]
    EmptyClass(Label),
    #[error("target_per_class must be at least 1")]
    TargetBelowOne,
}

/// Rebalances the corpus so both classes have exactly the target count.
///
/// Classes above the target are reduced by seeded uniform sampling without
/// replacement; classes below it are grown by seeded duplication with
/// replacement. All original examples of a grown class are retained, and
/// duplicates get fresh ids (text and label copied verbatim). Survivors keep
/// their relative corpus order; duplicates are appended after them in draw
/// order, `Hate` class first.
pub fn balance(corpus: &Corpus, config: &BalanceConfig) -> Result<Corpus, BalanceError> {
    for &label in &[Label::Hate, Label::NoHate] {
        if corpus.count(label) == 0 {
            return Err(BalanceError::EmptyClass(label));
        }
    }
    let hate = corpus.count(Label::Hate);
    let nohate = corpus.count(Label::NoHate);
    let target = match config.target_per_class {
        // Integer round-half-up of (hate + nohate) / 2.
        BalanceTarget::Auto => (hate + nohate + 1) / 2,
        BalanceTarget::Exact(0) => return Err(BalanceError::TargetBelowOne),
        BalanceTarget::Exact(t) => t,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut kept: Vec<usize> = Vec::new();
    let mut duplicates: Vec<usize> = Vec::new();
    for &label in &[Label::Hate, Label::NoHate] {
        let positions = corpus.positions(label);
        let count = positions.len();
        if count > target {
            let mut chosen: Vec<usize> = rand::seq::index::sample(&mut rng, count, target).into_vec();
            chosen.sort_unstable();
            kept.extend(chosen.into_iter().map(|i| positions[i]));
        } else {
            kept.extend_from_slice(positions);
            for _ in count..target {
                duplicates.push(positions[rng.gen_range(0..count)]);
            }
        }
    }
    kept.sort_unstable();

    let mut next_id = corpus.max_id().map_or(0, |id| id + 1);
    let mut examples: Vec<LabeledExample> = kept
        .into_iter()
        .map(|pos| corpus.examples[pos].clone())
        .collect();
    for pos in duplicates {
        let source = &corpus.examples[pos];
        examples.push(LabeledExample::new(next_id, source.text.clone(), source.label));
        next_id += 1;
    }
    Ok(Corpus::from_examples(examples).expect("balancing preserves corpus invariants"))
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplitError {
    #[error("corpus needs at least 2 examples to split")]
    TooFewExamples,
    #[error("eval_fraction must lie strictly between 0 and 1, got {0}")]
    InvalidFraction(f64),
}

/// Splits a corpus into disjoint (train, eval) parts.
///
/// The split is stratified: within each class the positions are shuffled
/// with a seeded generator and `round(eval_fraction * class_count)` of them
/// go to the eval part, so each class's eval share is within one example of
/// `eval_fraction`. Both parts keep original ids and corpus-relative order.
pub fn split(corpus: &Corpus, eval_fraction: f64, seed: u64) -> Result<(Corpus, Corpus), SplitError> {
    if corpus.len() < 2 {
        return Err(SplitError::TooFewExamples);
    }
    if !(eval_fraction > 0.0 && eval_fraction < 1.0) {
        return Err(SplitError::InvalidFraction(eval_fraction));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut eval_positions: Vec<usize> = Vec::new();
    let mut train_positions: Vec<usize> = Vec::new();
    for &label in &[Label::Hate, Label::NoHate] {
        let positions = corpus.positions(label);
        let count = positions.len();
        if count == 0 {
            continue;
        }
        let mut order: Vec<usize> = (0..count).collect();
        // Fisher–Yates; identical results on every platform for a fixed seed.
        for i in (1..count).rev() {
            let j = rng.gen_range(0..=i);
            order.swap(i, j);
        }
        // Round half up without relying on float rounding intrinsics.
        let k = (eval_fraction * count as f64 + 0.5) as usize;
        let k = k.min(count);
        eval_positions.extend(order[..k].iter().map(|&i| positions[i]));
        train_positions.extend(order[k..].iter().map(|&i| positions[i]));
    }
    eval_positions.sort_unstable();
    train_positions.sort_unstable();

    let collect = |positions: &[usize]| -> Corpus {
        Corpus::from_examples(positions.iter().map(|&p| corpus.examples[p].clone()))
            .expect("splitting preserves corpus invariants")
    };
    Ok((collect(&train_positions), collect(&eval_positions)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn example(id: u64, text: &str, label: Label) -> LabeledExample {
        LabeledExample::new(id, text, label)
    }

    fn corpus_of(counts: (usize, usize)) -> Corpus {
        let (hate, nohate) = counts;
        let mut examples = Vec::new();
        for i in 0..hate {
            examples.push(example(i as u64, &format!("hateful text {i}"), Label::Hate));
        }
        for i in 0..nohate {
            examples.push(example(
                (hate + i) as u64,
                &format!("friendly text {i}"),
                Label::NoHate,
            ));
        }
        Corpus::from_examples(examples).unwrap()
    }

    #[test]
    fn label_parsing_is_case_insensitive() {
        assert_eq!(Label::parse("hate"), Some(Label::Hate));
        assert_eq!(Label::parse("NOHATE"), Some(Label::NoHate));
        assert_eq!(Label::parse(" NoHate "), Some(Label::NoHate));
        assert_eq!(Label::parse("hateful"), None);
    }

    #[test]
    fn push_rejects_empty_text_and_duplicate_ids() {
        let mut corpus = Corpus::new();
        assert_eq!(
            corpus.push(example(0, "   ", Label::Hate)),
            Err(CorpusError::EmptyText { id: 0 })
        );
        corpus.push(example(0, "ok", Label::Hate)).unwrap();
        assert_eq!(
            corpus.push(example(0, "again", Label::NoHate)),
            Err(CorpusError::DuplicateId(0))
        );
    }

    #[test]
    fn class_index_partitions_positions() {
        let corpus = corpus_of((2, 3));
        assert_eq!(corpus.positions(Label::Hate), &[0, 1]);
        assert_eq!(corpus.positions(Label::NoHate), &[2, 3, 4]);
        assert_eq!(corpus.count(Label::Hate) + corpus.count(Label::NoHate), corpus.len());
    }

    #[test]
    fn stats_for_known_sentences() {
        let corpus = Corpus::from_examples(vec![
            example(0, "you people are awful", Label::Hate),
            example(1, "they are bad", Label::Hate),
        ])
        .unwrap();
        let stats = compute_stats(&corpus);
        assert_eq!(stats.hate.sentences, 2);
        assert!((stats.hate.mean_len - 3.5).abs() < 1e-12);
        assert!((stats.hate.sd_len - 0.5).abs() < 1e-12);
        assert_eq!(stats.hate.word_count, 7);
        assert_eq!(stats.hate.vocab, 6);
        assert_eq!(stats.nohate, ClassStats::default());
    }

    #[test]
    fn stats_for_empty_corpus_are_zero() {
        let stats = compute_stats(&Corpus::new());
        assert_eq!(stats, CorpusStats::default());
    }

    #[test]
    fn stats_ignore_truncation() {
        let long_text = vec!["word"; 300].join(" ");
        let corpus = Corpus::from_examples(vec![example(0, &long_text, Label::Hate)]).unwrap();
        let stats = compute_stats(&corpus);
        assert_eq!(stats.hate.word_count, 300);
        assert!((stats.hate.mean_len - 300.0).abs() < 1e-12);
    }

    #[test]
    fn balance_auto_meets_midpoint_target() {
        let corpus = corpus_of((2, 6));
        let balanced = balance(&corpus, &BalanceConfig::default()).unwrap();
        assert_eq!(balanced.count(Label::Hate), 4);
        assert_eq!(balanced.count(Label::NoHate), 4);
        // Both original minority texts survive.
        for original in corpus.positions(Label::Hate) {
            let text = &corpus.examples()[*original].text;
            assert!(balanced.iter().any(|e| &e.text == text));
        }
        // Every survivor's text comes from the input.
        for survivor in balanced.iter() {
            assert!(corpus.iter().any(|e| e.text == survivor.text));
        }
    }

    #[test]
    fn balance_identity_when_already_at_target() {
        let corpus = corpus_of((3, 3));
        let config = BalanceConfig {
            target_per_class: BalanceTarget::Exact(3),
            seed: 9,
        };
        let balanced = balance(&corpus, &config).unwrap();
        assert_eq!(balanced, corpus);
    }

    #[test]
    fn balance_is_deterministic() {
        let corpus = corpus_of((3, 9));
        let config = BalanceConfig {
            target_per_class: BalanceTarget::Auto,
            seed: 42,
        };
        let a = balance(&corpus, &config).unwrap();
        let b = balance(&corpus, &config).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn balance_rejects_empty_class_and_zero_target() {
        let only_hate = Corpus::from_examples(vec![example(0, "x y", Label::Hate)]).unwrap();
        assert_eq!(
            balance(&only_hate, &BalanceConfig::default()),
            Err(BalanceError::EmptyClass(Label::NoHate))
        );
        let corpus = corpus_of((1, 1));
        let config = BalanceConfig {
            target_per_class: BalanceTarget::Exact(0),
            seed: 0,
        };
        assert_eq!(balance(&corpus, &config), Err(BalanceError::TargetBelowOne));
    }

    #[test]
    fn balance_duplicates_get_fresh_ids() {
        let corpus = corpus_of((1, 4));
        let config = BalanceConfig {
            target_per_class: BalanceTarget::Exact(4),
            seed: 7,
        };
        let balanced = balance(&corpus, &config).unwrap();
        assert_eq!(balanced.count(Label::Hate), 4);
        let mut ids: Vec<u64> = balanced.iter().map(|e| e.id).collect();
        let unique: BTreeSet<u64> = ids.iter().copied().collect();
        assert_eq!(unique.len(), ids.len());
        ids.sort_unstable();
        assert!(ids.iter().any(|&id| id > 4), "duplicates use ids above the input range");
    }

    #[test]
    fn split_is_stratified() {
        let corpus = corpus_of((5, 5));
        let (train, eval) = split(&corpus, 0.2, 1).unwrap();
        assert_eq!(eval.len(), 2);
        assert_eq!(eval.count(Label::Hate), 1);
        assert_eq!(eval.count(Label::NoHate), 1);
        assert_eq!(train.len(), 8);
    }

    #[test]
    fn split_half_and_half() {
        let corpus = corpus_of((2, 2));
        let (train, eval) = split(&corpus, 0.5, 3).unwrap();
        assert_eq!(train.len(), 2);
        assert_eq!(eval.len(), 2);
        let train_ids: BTreeSet<u64> = train.iter().map(|e| e.id).collect();
        let eval_ids: BTreeSet<u64> = eval.iter().map(|e| e.id).collect();
        assert!(train_ids.is_disjoint(&eval_ids));
    }

    #[test]
    fn split_same_seed_is_identical() {
        let corpus = corpus_of((6, 4));
        let a = split(&corpus, 0.3, 11).unwrap();
        let b = split(&corpus, 0.3, 11).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn split_rejects_bad_inputs() {
        let tiny = Corpus::from_examples(vec![example(0, "x", Label::Hate)]).unwrap();
        assert_eq!(split(&tiny, 0.5, 0), Err(SplitError::TooFewExamples));
        let corpus = corpus_of((2, 2));
        assert!(matches!(split(&corpus, 0.0, 0), Err(SplitError::InvalidFraction(_))));
        assert!(matches!(split(&corpus, 1.0, 0), Err(SplitError::InvalidFraction(_))));
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        fn arb_corpus() -> impl Strategy<Value = Corpus> {
            (1usize..12, 1usize..12).prop_map(corpus_of)
        }

        proptest! {
            #[test]
            fn balance_equalizes_class_counts(corpus in arb_corpus(), seed in any::<u64>()) {
                let config = BalanceConfig { target_per_class: BalanceTarget::Auto, seed };
                let balanced = balance(&corpus, &config).unwrap();
                prop_assert_eq!(balanced.count(Label::Hate), balanced.count(Label::NoHate));
                for e in balanced.iter() {
                    prop_assert!(corpus.iter().any(|o| o.text == e.text && o.label == e.label));
                }
            }

            #[test]
            fn stats_word_count_matches_naive_recount(corpus in arb_corpus()) {
                let stats = compute_stats(&corpus);
                let untruncated = FeatureConfig { max_tokens: usize::MAX, ..FeatureConfig::default() };
                for &label in &[Label::Hate, Label::NoHate] {
                    let recount: u64 = corpus
                        .iter()
                        .filter(|e| e.label == label)
                        .map(|e| tokenize(&e.text, &untruncated).len() as u64)
                        .sum();
                    prop_assert_eq!(stats.class(label).word_count, recount);
                    prop_assert!(stats.class(label).vocab <= recount.max(1));
                }
            }

            #[test]
            fn split_partitions_the_corpus(
                corpus in (2usize..10, 2usize..10).prop_map(corpus_of),
                fraction in 0.1f64..0.9,
                seed in any::<u64>(),
            ) {
                let (train, eval) = split(&corpus, fraction, seed).unwrap();
                prop_assert_eq!(train.len() + eval.len(), corpus.len());
                let mut ids: Vec<u64> = train.iter().chain(eval.iter()).map(|e| e.id).collect();
                ids.sort_unstable();
                let mut original: Vec<u64> = corpus.iter().map(|e| e.id).collect();
                original.sort_unstable();
                prop_assert_eq!(ids, original);
            }
        }
    }
}
