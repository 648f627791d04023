//! Prompt-template files and few-shot example banks.
//!
//! A template file is divided into `[section]` headers — `[instruction]`,
//! `[example_format]`, `[input_format]`, and `[separator]` — each followed by
//! the section body. Bodies keep interior newlines, drop leading/trailing
//! blank lines, and then have the escapes `\n`, `\t`, and `\\` expanded, so a
//! separator of two newlines is written as the literal two characters `\n\n`
//! on one line.
//!
//! An example bank is JSONL: one `{"biased": …, "unbiased": …}` object per
//! line with an optional `"category"`.

use std::fs;
use std::path::Path;

use thiserror::Error;

use debias_core::prompt::{BankError, ExampleBank, FewShotExample, PromptError, PromptTemplate};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: content before the first [section] header")]
    ContentBeforeSection { line: usize },
    #[error("line {line}: unknown section [{name}]")]
    UnknownSection { name: String, line: usize },
    #[error("line {line}: duplicate section [{name}]")]
    DuplicateSection { name: String, line: usize },
    #[error("missing required section [{name}]")]
    MissingSection { name: &'static str },
    #[error("line {line}: bad escape \\{found} (supported: \\n, \\t, \\\\)")]
    BadEscape { found: char, line: usize },
    #[error(transparent)]
    Prompt(#[from] PromptError),
}

const SECTIONS: [&str; 4] = ["instruction", "example_format", "input_format", "separator"];

/// Expands `\n`, `\t`, and `\\`; any other backslash sequence is an error.
fn unescape(raw: &str, line: usize) -> Result<String, TemplateError> {
    let mut out = String::with_capacity(raw.len());
    let mut chars = raw.chars();
    while let Some(c) = chars.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        match chars.next() {
            Some('n') => out.push('\n'),
            Some('t') => out.push('\t'),
            Some('\\') => out.push('\\'),
            Some(other) => return Err(TemplateError::BadEscape { found: other, line }),
            None => return Err(TemplateError::BadEscape { found: ' ', line }),
        }
    }
    Ok(out)
}

/// Joins a section's lines, trimming leading/trailing blank lines and
/// expanding escapes.
fn finish_section(lines: &[(usize, &str)]) -> Result<String, TemplateError> {
    let first = lines.iter().position(|(_, l)| !l.trim().is_empty());
    let body = match first {
        None => return Ok(String::new()),
        Some(first) => {
            let last = lines
                .iter()
                .rposition(|(_, l)| !l.trim().is_empty())
                .expect("nonempty by construction");
            &lines[first..=last]
        }
    };
    let mut out = String::new();
    for (i, (line_no, text)) in body.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(&unescape(text, *line_no)?);
    }
    Ok(out)
}

fn flush_section<'a>(
    bodies: &mut [Option<String>; 4],
    current: Option<usize>,
    pending: &mut Vec<(usize, &'a str)>,
) -> Result<(), TemplateError> {
    if let Some(index) = current {
        bodies[index] = Some(finish_section(pending)?);
    }
    pending.clear();
    Ok(())
}

/// Parses template text into a validated [`PromptTemplate`].
pub fn parse_template(source: &str) -> Result<PromptTemplate, TemplateError> {
    let mut bodies: [Option<String>; 4] = [None, None, None, None];
    let mut current: Option<usize> = None;
    let mut pending: Vec<(usize, &str)> = Vec::new();

    for (index, raw_line) in source.lines().enumerate() {
        let line = index + 1;
        let trimmed = raw_line.trim();
        if trimmed.starts_with('[') && trimmed.ends_with(']') {
            let name = &trimmed[1..trimmed.len() - 1];
            let section = SECTIONS.iter().position(|s| *s == name).ok_or_else(|| {
                TemplateError::UnknownSection {
                    name: name.to_string(),
                    line,
                }
            })?;
            flush_section(&mut bodies, current, &mut pending)?;
            if bodies[section].is_some() {
                return Err(TemplateError::DuplicateSection {
                    name: name.to_string(),
                    line,
                });
            }
            // Mark the section as seen so a later duplicate header is caught
            // before its body is flushed over the first one.
            bodies[section] = Some(String::new());
            current = Some(section);
            continue;
        }
        if current.is_none() {
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue; // leading blanks and comments before any section
            }
            return Err(TemplateError::ContentBeforeSection { line });
        }
        pending.push((line, raw_line));
    }
    flush_section(&mut bodies, current, &mut pending)?;

    let mut take = |name: &'static str| -> Result<String, TemplateError> {
        let index = SECTIONS.iter().position(|s| *s == name).expect("known name");
        bodies[index].take().ok_or(TemplateError::MissingSection { name })
    };
    let template = PromptTemplate {
        instruction: take("instruction")?,
        example_format: take("example_format")?,
        input_format: take("input_format")?,
        separator: take("separator")?,
    };
    template.validate()?;
    Ok(template)
}

/// Loads and validates a template file.
pub fn load_template(path: &Path) -> Result<PromptTemplate, TemplateError> {
    parse_template(&fs::read_to_string(path)?)
}

#[derive(Debug, Error)]
pub enum BankFileError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {message}")]
    MalformedRecord { line: usize, message: String },
    #[error(transparent)]
    Bank(#[from] BankError),
}

/// Parses JSONL example-bank text, keeping line order (selection depends on
/// it).
pub fn load_bank_source(source: &str) -> Result<ExampleBank, BankFileError> {
    let mut examples = Vec::new();
    for (index, line) in source.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let example: FewShotExample =
            serde_json::from_str(line).map_err(|e| BankFileError::MalformedRecord {
                line: index + 1,
                message: e.to_string(),
            })?;
        examples.push(example);
    }
    Ok(ExampleBank::from_examples(examples)?)
}

/// Loads a JSONL example bank from disk.
pub fn load_bank(path: &Path) -> Result<ExampleBank, BankFileError> {
    load_bank_source(&fs::read_to_string(path)?)
}
