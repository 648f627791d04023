//! Core algorithms for a two-stage content-moderation pipeline: a trainable
//! hate-speech classifier and a prompt-based debiaser that rewrites flagged
//! text through a pluggable generation backend.
//!
//! Everything in this crate is pure computation over owned data: labeled
//! corpora, hashed n-gram features, a two-class softmax head trained with
//! binary cross-entropy and Adam, few-shot prompt rendering, temperature
//! sampling, the classify-then-rewrite pipeline, and the evaluation metrics.
//! All randomized operations take an explicit 64-bit seed and are
//! deterministic given their inputs.
//!
//! The crate is `no_std`-compatible (`alloc` required); disable the default
//! `std` feature to use it in embedded or wasm contexts. File formats, the
//! CLI, the HTTP service and the remote generation client live in the
//! companion `debias` crate.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod classifier;
pub mod corpus;
pub mod features;
pub mod generation;
pub mod metrics;
pub mod pipeline;
pub mod prompt;
pub mod sampling;

mod math;

pub use classifier::{Classification, ClassifierModel, TrainConfig};
pub use corpus::{BalanceConfig, Corpus, CorpusStats, Label, LabeledExample};
pub use features::{FeatureConfig, FeatureVector};
pub use generation::{DebiasResult, GenerationBackend, GenerationConfig, MockRewriter};
pub use metrics::{BiasReport, ConfusionMatrix, EvalReport};
pub use pipeline::{PipelineConfig, PipelineOutcome};
pub use prompt::{ExampleBank, FewShotExample, PromptTemplate};
