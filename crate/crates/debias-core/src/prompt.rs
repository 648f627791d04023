//! Few-shot prompt construction for the debiaser.
//!
//! A prompt is three kinds of blocks joined by a separator: the instruction,
//! `k` rendered biased→unbiased example pairs, and the input block that ends
//! at the generation point. Rendering is byte-deterministic given the
//! template, bank, `k`, input, and seed.

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const BIASED_PLACEHOLDER: &str = "{biased}";
pub const UNBIASED_PLACEHOLDER: &str = "{unbiased}";
pub const INPUT_PLACEHOLDER: &str = "{input}";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template field {field} must contain placeholder {placeholder} exactly once, found {found}")]
    BadPlaceholder {
        field: &'static str,
        placeholder: &'static str,
        found: usize,
    },
    #[error("requested {requested} examples but the bank holds only {available}")]
    NotEnoughExamples { requested: usize, available: usize },
    #[error("input text must be nonempty")]
    EmptyInput,
}

/// The text around the examples: instruction, per-example format, input
/// block format, and the separator between blocks.
///
/// The default wording ships with the artifact and is fully overridable via
/// a template file; see the companion crate's template loader.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub instruction: String,
    /// Must contain `{biased}` and `{unbiased}` exactly once each.
    pub example_format: String,
    /// Must contain `{input}` exactly once; ends at the generation point.
    pub input_format: String,
    pub separator: String,
}

impl Default for PromptTemplate {
    fn default() -> Self {
        Self {
            instruction: "Rewrite the following comment to remove hateful or biased language."
                .to_string(),
            example_format: "Biased: {biased}\nUnbiased: {unbiased}".to_string(),
            input_format: "Biased: {input}\nUnbiased:".to_string(),
            separator: "\n\n".to_string(),
        }
    }
}

impl PromptTemplate {
    /// Checks that every placeholder appears exactly once in its format
    /// string.
    pub fn validate(&self) -> Result<(), PromptError> {
        let check = |field: &'static str,
                     text: &str,
                     placeholder: &'static str|
         -> Result<(), PromptError> {
            let found = text.matches(placeholder).count();
            if found != 1 {
                return Err(PromptError::BadPlaceholder {
                    field,
                    placeholder,
                    found,
                });
            }
            Ok(())
        };
        check("example_format", &self.example_format, BIASED_PLACEHOLDER)?;
        check("example_format", &self.example_format, UNBIASED_PLACEHOLDER)?;
        check("input_format", &self.input_format, INPUT_PLACEHOLDER)?;
        Ok(())
    }

    fn render_example(&self, example: &FewShotExample) -> String {
        self.example_format
            .replace(BIASED_PLACEHOLDER, &example.biased)
            .replace(UNBIASED_PLACEHOLDER, &example.unbiased)
    }

    fn render_input(&self, input: &str) -> String {
        self.input_format.replace(INPUT_PLACEHOLDER, input)
    }
}

/// One worked biased→unbiased rewrite pair, optionally tagged with a
/// category (for instance a target-group axis).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotExample {
    pub biased: String,
    pub unbiased: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
}

impl FewShotExample {
    pub fn new(biased: impl Into<String>, unbiased: impl Into<String>) -> Self {
        Self {
            biased: biased.into(),
            unbiased: unbiased.into(),
            category: None,
        }
    }

    pub fn with_category(mut self, category: impl Into<String>) -> Self {
        self.category = Some(category.into());
        self
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BankError {
    #[error("example {index}: {field} text must be nonempty")]
    EmptyExampleText { index: usize, field: &'static str },
}

/// An ordered list of [`FewShotExample`]s; selection groups them by
/// category.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ExampleBank {
    examples: Vec<FewShotExample>,
}

impl ExampleBank {
    pub fn from_examples(
        examples: impl IntoIterator<Item = FewShotExample>,
    ) -> Result<Self, BankError> {
        let examples: Vec<FewShotExample> = examples.into_iter().collect();
        for (index, example) in examples.iter().enumerate() {
            if example.biased.trim().is_empty() {
                return Err(BankError::EmptyExampleText {
                    index,
                    field: "biased",
                });
            }
            if example.unbiased.trim().is_empty() {
                return Err(BankError::EmptyExampleText {
                    index,
                    field: "unbiased",
                });
            }
        }
        Ok(Self { examples })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn examples(&self) -> &[FewShotExample] {
        &self.examples
    }

    /// Deterministic k-shot selection: examples are grouped by category (in
    /// order of first appearance, untagged examples forming their own
    /// group), the group order is shuffled by `seed`, and selection
    /// round-robins across groups taking each group's examples in bank
    /// order. For a fixed `(bank, seed)` the selection for `k` is a prefix
    /// of the selection for `k + 1`.
    pub fn select(&self, k: usize, seed: u64) -> Result<Vec<&FewShotExample>, PromptError> {
        if k > self.examples.len() {
            return Err(PromptError::NotEnoughExamples {
                requested: k,
                available: self.examples.len(),
            });
        }
        let mut groups: Vec<(Option<&str>, Vec<usize>)> = Vec::new();
        for (index, example) in self.examples.iter().enumerate() {
            let key = example.category.as_deref();
            match groups.iter_mut().find(|(g, _)| *g == key) {
                Some((_, members)) => members.push(index),
                None => groups.push((key, alloc::vec![index])),
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        groups.shuffle(&mut rng);

        let mut selected = Vec::with_capacity(k);
        let mut cursors = alloc::vec![0usize; groups.len()];
        while selected.len() < k {
            let mut advanced = false;
            for (group, cursor) in groups.iter().zip(cursors.iter_mut()) {
                if *cursor < group.1.len() {
                    selected.push(&self.examples[group.1[*cursor]]);
                    *cursor += 1;
                    advanced = true;
                    if selected.len() == k {
                        break;
                    }
                }
            }
            debug_assert!(advanced, "selection cannot stall while k <= bank size");
        }
        Ok(selected)
    }
}

/// Renders the full prompt: instruction, `k` selected example blocks, and
/// the input block, joined by the template separator.
///
/// `k = 0` yields the zero-shot form (instruction + input block). The
/// result is byte-identical across runs for identical arguments.
pub fn build_prompt(
    template: &PromptTemplate,
    bank: &ExampleBank,
    k: usize,
    input: &str,
    seed: u64,
) -> Result<String, PromptError> {
    template.validate()?;
    if input.trim().is_empty() {
        return Err(PromptError::EmptyInput);
    }
    let selected = bank.select(k, seed)?;
    let mut blocks = Vec::with_capacity(k + 2);
    blocks.push(template.instruction.clone());
    for example in selected {
        blocks.push(template.render_example(example));
    }
    blocks.push(template.render_input(input));
    Ok(blocks.join(&template.separator))
}
