//! Pluggable text-generation backends, the retry wrapper around them, and
//! the end-to-end `debias` operation (prompt → completion → rewritten text).
//!
//! The crate ships [`MockRewriter`], a deterministic lexicon-redaction
//! backend for hermetic tests; the companion crate adds an HTTP client for
//! real completion services. Both implement [`GenerationBackend`].

use alloc::borrow::ToOwned;
use alloc::collections::BTreeSet;
use alloc::string::{String, ToString};
use core::sync::atomic::{AtomicU64, Ordering};
use core::time::Duration;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::prompt::{build_prompt, ExampleBank, PromptError, PromptTemplate};

/// Completions are cut at the first occurrence of this stop sequence, so a
/// generator that keeps writing after the rewritten line cannot leak extra
/// text into the result.
pub const STOP_SEQUENCE: &str = "\n";

/// Base delay of the exponential retry backoff, in milliseconds. Attempt
/// `n` (0-based) sleeps a uniformly drawn ("full jitter") duration in
/// `[0, 250·2^n]` ms.
pub const BACKOFF_BASE_MS: u64 = 250;

/// Generation settings forwarded to the backend plus the local
/// timeout/retry policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationConfig {
    /// Sampling temperature. The supported tuning range is `[0.1, 1.0]`;
    /// values outside it are rejected unless
    /// `allow_temperature_out_of_range` is set.
    #[serde(default = "d_temperature")]
    pub temperature: f64,
    #[serde(default = "d_max_new_tokens")]
    pub max_new_tokens: usize,
    /// Seed for backoff jitter and any seeded backend behavior.
    #[serde(default)]
    pub seed: u64,
    /// Per-attempt timeout budget for remote backends.
    #[serde(default = "d_timeout_ms")]
    pub timeout_ms: u64,
    /// Additional attempts after the first failure.
    #[serde(default = "d_max_retries")]
    pub max_retries: u32,
    /// Escape hatch for experimenting outside the supported temperature
    /// range.
    #[serde(default)]
    pub allow_temperature_out_of_range: bool,
}

fn d_temperature() -> f64 {
    0.7
}
fn d_max_new_tokens() -> usize {
    64
}
fn d_timeout_ms() -> u64 {
    10_000
}
fn d_max_retries() -> u32 {
    2
}

impl Default for GenerationConfig {
    fn default() -> Self {
        Self {
            temperature: 0.7,
            max_new_tokens: 64,
            seed: 0,
            timeout_ms: 10_000,
            max_retries: 2,
            allow_temperature_out_of_range: false,
        }
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GenerationConfigError {
    #[error("temperature {0} is outside the supported range [0.1, 1.0] (set allow_temperature_out_of_range to override)")]
    TemperatureOutOfRange(f64),
    #[error("temperature must be a positive finite number, got {0}")]
    InvalidTemperature(f64),
    #[error("max_new_tokens must be at least 1")]
    ZeroMaxTokens,
    #[error("timeout_ms must be at least 1")]
    ZeroTimeout,
}

impl GenerationConfig {
    pub fn validate(&self) -> Result<(), GenerationConfigError> {
        if !self.temperature.is_finite() || self.temperature <= 0.0 {
            return Err(GenerationConfigError::InvalidTemperature(self.temperature));
        }
        if !self.allow_temperature_out_of_range
            && !(0.1..=1.0).contains(&self.temperature)
        {
            return Err(GenerationConfigError::TemperatureOutOfRange(self.temperature));
        }
        if self.max_new_tokens == 0 {
            return Err(GenerationConfigError::ZeroMaxTokens);
        }
        if self.timeout_ms == 0 {
            return Err(GenerationConfigError::ZeroTimeout);
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GenerateError {
    #[error("prompt must be nonempty")]
    EmptyPrompt,
    #[error("backend timed out")]
    Timeout,
    #[error("backend error{}: {message}", status.map(|s| alloc::format!(" (status {s})")).unwrap_or_default())]
    Backend {
        /// HTTP-style status when one exists; `None` for transport errors.
        status: Option<u16>,
        message: String,
    },
    #[error("backend returned an empty completion")]
    EmptyGeneration,
}

impl GenerateError {
    /// Whether another attempt could plausibly succeed: timeouts, transport
    /// errors, server-side (5xx) failures, and empty completions are
    /// retried; client-side (4xx) errors and empty prompts are not.
    pub fn is_retryable(&self) -> bool {
        match self {
            GenerateError::Timeout | GenerateError::EmptyGeneration => true,
            GenerateError::Backend { status: None, .. } => true,
            GenerateError::Backend {
                status: Some(status),
                ..
            } => *status >= 500,
            GenerateError::EmptyPrompt => false,
        }
    }
}

/// A text-completion provider.
///
/// Implementations must be safe for concurrent `complete` calls; each call
/// carries independent timeout/retry state (retries live in [`generate`],
/// not in the backend).
pub trait GenerationBackend {
    /// Short stable identifier recorded in results (for instance `"mock"`).
    fn id(&self) -> &str;

    /// One completion attempt for the prompt. Must respect
    /// `config.timeout_ms` where applicable and return the raw completion
    /// text (everything after the generation point).
    fn complete(&self, prompt: &str, config: &GenerationConfig) -> Result<String, GenerateError>;

    /// Retry pacing hook: called by [`generate`] between attempts with the
    /// jittered delay. The default is a no-op so pure computational
    /// backends (and tests) retry instantly; IO-backed implementations
    /// should sleep.
    fn pause(&self, _delay: Duration) {}
}

/// A successful completion plus how many attempts it took.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Generation {
    pub text: String,
    pub attempts: u32,
}

/// Calls the backend with retry: up to `1 + config.max_retries` attempts,
/// with full-jitter exponential backoff between them.
///
/// The backoff delay before retry `n` is drawn uniformly from
/// `[0, 250·2^n]` milliseconds using a generator seeded from `config.seed`,
/// and is delivered to the backend's [`GenerationBackend::pause`] hook.
/// Non-retryable errors (see [`GenerateError::is_retryable`]) are returned
/// immediately.
pub fn generate<B: GenerationBackend + ?Sized>(
    backend: &B,
    prompt: &str,
    config: &GenerationConfig,
) -> Result<Generation, GenerateError> {
    if prompt.trim().is_empty() {
        return Err(GenerateError::EmptyPrompt);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut attempt: u32 = 0;
    loop {
        let outcome = match backend.complete(prompt, config) {
            Ok(text) if text.trim().is_empty() => Err(GenerateError::EmptyGeneration),
            other => other,
        };
        match outcome {
            Ok(text) => {
                return Ok(Generation {
                    text,
                    attempts: attempt + 1,
                })
            }
            Err(error) => {
                if !error.is_retryable() || attempt >= config.max_retries {
                    return Err(error);
                }
                let cap = BACKOFF_BASE_MS.saturating_mul(1u64 << attempt.min(20));
                let delay = rng.gen_range(0..=cap);
                backend.pause(Duration::from_millis(delay));
                attempt += 1;
            }
        }
    }
}

/// A deterministic test backend: redacts lexicon terms from the input line
/// of the prompt.
///
/// It locates the last input-marker line in the prompt (the input block of
/// the default template starts with `"Biased:"`), then rewrites it by
/// replacing every token that matches the lexicon — case-insensitively, at
/// alphanumeric-token boundaries — with `"[redacted]"`. Temperature is
/// ignored; output depends only on the prompt. Every `complete` call bumps
/// an atomic counter so tests can assert how often the backend was invoked.
#[derive(Debug)]
pub struct MockRewriter {
    lexicon: BTreeSet<String>,
    marker: String,
    calls: AtomicU64,
}

impl MockRewriter {
    pub fn new<I, S>(lexicon: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self {
            lexicon: lexicon
                .into_iter()
                .map(|s| s.as_ref().to_lowercase())
                .collect(),
            marker: "Biased:".to_string(),
            calls: AtomicU64::new(0),
        }
    }

    /// Overrides the input-block marker for non-default templates.
    pub fn with_marker(mut self, marker: impl Into<String>) -> Self {
        self.marker = marker.into();
        self
    }

    /// Number of `complete` calls made so far.
    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::SeqCst)
    }

    /// The line the generator is being asked to rewrite: the remainder of
    /// the last marker line, or the last nonempty line when the marker is
    /// absent.
    fn extract_input<'a>(&self, prompt: &'a str) -> &'a str {
        if let Some(at) = prompt.rfind(self.marker.as_str()) {
            let rest = &prompt[at + self.marker.len()..];
            rest.split('\n').next().unwrap_or("").trim()
        } else {
            prompt
                .lines()
                .rev()
                .map(str::trim)
                .find(|line| !line.is_empty())
                .unwrap_or("")
        }
    }

    fn redact(&self, text: &str) -> String {
        let mut output = String::with_capacity(text.len());
        let mut token = String::new();
        let flush = |token: &mut String, output: &mut String| {
            if !token.is_empty() {
                if self.lexicon.contains(&token.to_lowercase()) {
                    output.push_str("[redacted]");
                } else {
                    output.push_str(token);
                }
                token.clear();
            }
        };
        for c in text.chars() {
            if c.is_alphanumeric() {
                token.push(c);
            } else {
                flush(&mut token, &mut output);
                output.push(c);
            }
        }
        flush(&mut token, &mut output);
        output
    }
}

impl GenerationBackend for MockRewriter {
    fn id(&self) -> &str {
        "mock"
    }

    fn complete(&self, prompt: &str, _config: &GenerationConfig) -> Result<String, GenerateError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.redact(self.extract_input(prompt)))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DebiasError {
    #[error(transparent)]
    Prompt(#[from] PromptError),
    #[error(transparent)]
    Generate(#[from] GenerateError),
    #[error(transparent)]
    Config(#[from] GenerationConfigError),
}

/// The debiaser's output for one text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DebiasResult {
    /// The input, echoed verbatim.
    pub original: String,
    /// The completion cut at the stop sequence and trimmed; nonempty.
    pub rewritten: String,
    /// The exact prompt sent to the backend.
    pub prompt_rendered: String,
    pub backend_id: String,
    pub k_used: usize,
    pub attempts: u32,
}

/// Rewrites one text: build the k-shot prompt, run the backend with retry,
/// and cut the completion at the first [`STOP_SEQUENCE`].
///
/// Prompt-construction errors (empty input, `k` larger than the bank)
/// surface before any backend call. `config.seed` drives both example
/// selection and backoff jitter.
pub fn debias<B: GenerationBackend + ?Sized>(
    text: &str,
    template: &PromptTemplate,
    bank: &ExampleBank,
    k: usize,
    config: &GenerationConfig,
    backend: &B,
) -> Result<DebiasResult, DebiasError> {
    config.validate()?;
    let prompt = build_prompt(template, bank, k, text, config.seed)?;
    let generation = generate(backend, &prompt, config)?;
    let rewritten = generation
        .text
        .split(STOP_SEQUENCE)
        .next()
        .unwrap_or("")
        .trim()
        .to_owned();
    if rewritten.is_empty() {
        return Err(GenerateError::EmptyGeneration.into());
    }
    Ok(DebiasResult {
        original: text.to_owned(),
        rewritten,
        prompt_rendered: prompt,
        backend_id: backend.id().to_owned(),
        k_used: k,
        attempts: generation.attempts,
    })
}
