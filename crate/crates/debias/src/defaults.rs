//! Built-in assets compiled into the binary, mirrored one-to-one by the
//! files under `assets/` so the shipped samples and the compiled defaults
//! cannot drift apart.

use debias_core::prompt::ExampleBank;

use crate::template::load_bank_source;

/// Source of the default prompt template (`assets/default_template.txt`).
pub const TEMPLATE_SOURCE: &str = include_str!("../assets/default_template.txt");
/// Source of the default few-shot example bank (`assets/example_bank.jsonl`).
pub const BANK_SOURCE: &str = include_str!("../assets/example_bank.jsonl");
/// Source of the default mock-rewriter lexicon (`assets/mock_lexicon.txt`).
pub const LEXICON_SOURCE: &str = include_str!("../assets/mock_lexicon.txt");

/// The default example bank.
pub fn builtin_bank() -> ExampleBank {
    load_bank_source(BANK_SOURCE).expect("the embedded example bank is valid")
}

/// The default mock-rewriter lexicon, in file order.
pub fn builtin_lexicon() -> Vec<String> {
    parse_lexicon(LEXICON_SOURCE)
}

/// Parses a lexicon file: one term per line, `#` comments, blanks skipped.
pub fn parse_lexicon(source: &str) -> Vec<String> {
    source
        .lines()
        .map(str::trim)
        .filter(|line| !line.is_empty() && !line.starts_with('#'))
        .map(str::to_string)
        .collect()
}
