//! Labeled-dataset files (CSV and JSONL), plain text-batch files, and the
//! stats report.
//!
//! CSV files carry a `text,label` header with RFC 4180 quoting; JSONL files
//! hold one `{"text": …, "label": "hate"|"nohate"}` object per line. Labels
//! are case-insensitive. Loading assigns ids `0..n-1` in file order.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use debias_core::corpus::{Corpus, CorpusError, Label, LabeledExample};

/// On-disk dataset encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DataFormat {
    Csv,
    Jsonl,
}

impl DataFormat {
    /// Picks the format from the file extension (`.csv` vs `.jsonl`/`.json`).
    pub fn infer(path: &Path) -> Result<DataFormat, DatasetError> {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => Ok(DataFormat::Csv),
            Some(ext)
                if ext.eq_ignore_ascii_case("jsonl") || ext.eq_ignore_ascii_case("json") =>
            {
                Ok(DataFormat::Jsonl)
            }
            _ => Err(DatasetError::UnknownFormat {
                path: path.to_path_buf(),
            }),
        }
    }
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot infer data format from path {path} (expected .csv or .jsonl); pass the format explicitly")]
    UnknownFormat { path: PathBuf },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column: {column}")]
    MissingColumn { column: &'static str },
    #[error("unknown label {value:?} on line {line} (expected \"hate\" or \"nohate\")")]
    UnknownLabel { value: String, line: u64 },
    #[error("empty text on line {line}")]
    EmptyText { line: u64 },
    #[error("malformed record on line {line}: {message}")]
    MalformedRecord { line: u64, message: String },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
}

#[derive(Debug, Serialize, Deserialize)]
struct JsonlRecord {
    text: String,
    label: String,
}

fn push_example(
    corpus: &mut Corpus,
    text: &str,
    label: &str,
    line: u64,
) -> Result<(), DatasetError> {
    if text.trim().is_empty() {
        return Err(DatasetError::EmptyText { line });
    }
    let label = Label::parse(label).ok_or_else(|| DatasetError::UnknownLabel {
        value: label.to_string(),
        line,
    })?;
    let id = corpus.len() as u64;
    corpus.push(LabeledExample::new(id, text, label))?;
    Ok(())
}

/// Loads a labeled corpus, assigning ids `0..n-1` in file order.
pub fn load_corpus(path: &Path, format: DataFormat) -> Result<Corpus, DatasetError> {
    match format {
        DataFormat::Csv => load_csv(path),
        DataFormat::Jsonl => load_jsonl(path),
    }
}

/// [`load_corpus`] with the format inferred from the extension.
pub fn load_corpus_auto(path: &Path) -> Result<Corpus, DatasetError> {
    load_corpus(path, DataFormat::infer(path)?)
}

fn load_csv(path: &Path) -> Result<Corpus, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_path(path)?;
    let headers = reader.headers()?.clone();
    let text_at = headers
        .iter()
        .position(|h| h == "text")
        .ok_or(DatasetError::MissingColumn { column: "text" })?;
    let label_at = headers
        .iter()
        .position(|h| h == "label")
        .ok_or(DatasetError::MissingColumn { column: "label" })?;

    let mut corpus = Corpus::new();
    for result in reader.records() {
        // csv::Error's own Display carries record/line positions, so `?` is
        // enough for structurally malformed rows.
        let record = result?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let text = record.get(text_at).ok_or(DatasetError::MalformedRecord {
            line,
            message: "missing text field".into(),
        })?;
        let label = record.get(label_at).ok_or(DatasetError::MalformedRecord {
            line,
            message: "missing label field".into(),
        })?;
        push_example(&mut corpus, text, label, line)?;
    }
    Ok(corpus)
}

fn load_jsonl(path: &Path) -> Result<Corpus, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut corpus = Corpus::new();
    for (index, line) in reader.lines().enumerate() {
        let line_no = index as u64 + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue; // tolerate blank lines and trailing newlines
        }
        let record: JsonlRecord =
            serde_json::from_str(&line).map_err(|e| DatasetError::MalformedRecord {
                line: line_no,
                message: e.to_string(),
            })?;
        push_example(&mut corpus, &record.text, &record.label, line_no)?;
    }
    Ok(corpus)
}

/// Writes a corpus back out; ids are not stored (reloading reassigns
/// `0..n-1` in the same order, so load → save → load round-trips).
pub fn save_corpus(path: &Path, corpus: &Corpus, format: DataFormat) -> Result<(), DatasetError> {
    match format {
        DataFormat::Csv => {
            let mut writer = csv::Writer::from_path(path)?;
            writer.write_record(["text", "label"])?;
            for example in corpus.iter() {
                writer.write_record([example.text.as_str(), example.label.as_str()])?;
            }
            writer.flush()?;
        }
        DataFormat::Jsonl => {
            let mut file = File::create(path)?;
            for example in corpus.iter() {
                let record = JsonlRecord {
                    text: example.text.clone(),
                    label: example.label.as_str().to_string(),
                };
                serde_json::to_writer(&mut file, &record)
                    .map_err(|e| std::io::Error::new(std::io::ErrorKind::Other, e))?;
                file.write_all(b"\n")?;
            }
        }
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct TextRecord {
    text: String,
}

/// Reads a batch of unlabeled texts: JSONL objects with a `"text"` key for
/// `.jsonl`/`.json` files, otherwise one text per nonempty line.
pub fn read_texts(path: &Path) -> Result<Vec<String>, DatasetError> {
    let jsonl = matches!(DataFormat::infer(path), Ok(DataFormat::Jsonl));
    let reader = BufReader::new(File::open(path)?);
    let mut texts = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if jsonl {
            let record: TextRecord =
                serde_json::from_str(&line).map_err(|e| DatasetError::MalformedRecord {
                    line: index as u64 + 1,
                    message: e.to_string(),
                })?;
            texts.push(record.text);
        } else {
            texts.push(line.trim().to_string());
        }
    }
    Ok(texts)
}
