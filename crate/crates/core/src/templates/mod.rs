//! Instruction-response template construction: questioner trait sampling,
//! length and placeholder filters, ROUGE-L deduplication with a bounded
//! rewrite loop, filling, and splitting.
//!
//! Candidate texts come from a [`TemplateSource`]; the canned JSON-lines
//! source is offline and deterministic, the HTTP source talks to an
//! external text generator.

mod fill;
mod filter;
mod pipeline;
mod rouge;
mod source;
mod traits;

use std::fmt;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expr::{split_assignments, ExprError, Split};

pub use fill::{fill_template, placeholders, render_options};
pub use filter::{check_instruction, check_response, word_count, Rejection, DEFAULT_MAX_WORDS};
pub use pipeline::{dedup_pipeline, DedupConfig, DedupOutcome, DedupStats, DEFAULT_MAX_REWRITES, DEFAULT_THRESHOLD};
pub use rouge::{lcs_len, rouge_l, tokenize};
pub use source::{Candidate, CannedSource, GenerationRequest, HttpSource, HttpSourceConfig, TemplateSource};
pub use traits::{sample_traits, TraitKind, TraitPools, TraitSample, OPTION_PROBABILITY, TRAIT_COUNT_PROBS};

#[derive(Debug, Error)]
pub enum TemplateError {
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("template needs a value for `{{{0}}}`")]
    MissingAttribute(String),
    #[error("template source failed: {0}")]
    Source(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {source}")]
    Json {
        line: usize,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Expr(#[from] ExprError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Task {
    /// Cell type annotation.
    #[serde(rename = "CTA")]
    Cta,
    /// Drug sensitivity prediction.
    #[serde(rename = "DSP")]
    Dsp,
    /// Conditional pseudo-cell generation.
    #[serde(rename = "CPCG")]
    Cpcg,
}

/// Placeholder for the cell expression profile.
pub const CELL_PLACEHOLDER: &str = "input";
/// Placeholder for the answer.
pub const OUTPUT_PLACEHOLDER: &str = "output";
/// Placeholder for the multiple-choice list.
pub const OPTION_PLACEHOLDER: &str = "option";

impl Task {
    pub const ALL: [Task; 3] = [Task::Cta, Task::Dsp, Task::Cpcg];

    pub fn as_str(self) -> &'static str {
        match self {
            Task::Cta => "CTA",
            Task::Dsp => "DSP",
            Task::Cpcg => "CPCG",
        }
    }

    /// Placeholders every instruction of the task must contain.
    pub fn required_placeholders(self) -> &'static [&'static str] {
        match self {
            Task::Cta => &[CELL_PLACEHOLDER],
            Task::Dsp => &[CELL_PLACEHOLDER, "drug"],
            Task::Cpcg => &["cell_type", "species"],
        }
    }

    /// Placeholders that may appear and are elided when no value is given.
    pub fn optional_placeholders(self) -> &'static [&'static str] {
        match self {
            Task::Cta | Task::Dsp => &["species", "tissue", "sequencing_method", OPTION_PLACEHOLDER],
            Task::Cpcg => &["tissue", "sequencing_method"],
        }
    }

    /// Classification tasks may carry a multiple-choice list.
    pub fn supports_options(self) -> bool {
        matches!(self, Task::Cta | Task::Dsp)
    }
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Task {
    type Err = TemplateError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "CTA" => Ok(Task::Cta),
            "DSP" => Ok(Task::Dsp),
            "CPCG" => Ok(Task::Cpcg),
            _ => Err(TemplateError::Argument(format!("unknown task `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TemplateRecord {
    pub task: Task,
    pub instruction: String,
    pub response: String,
    #[serde(default)]
    pub traits: Option<TraitSample>,
    #[serde(default)]
    pub has_options: bool,
    #[serde(default)]
    pub split: Option<Split>,
}

/// One JSON object per non-blank line.
pub fn read_jsonl<T: serde::de::DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>, TemplateError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line.map_err(|source| TemplateError::Io { path: PathBuf::from("<jsonl>"), source })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|source| TemplateError::Json { line: i + 1, source })?);
    }
    Ok(out)
}

pub fn read_templates(path: &Path) -> Result<Vec<TemplateRecord>, TemplateError> {
    let f = fs::File::open(path).map_err(|source| TemplateError::Io { path: path.to_path_buf(), source })?;
    read_jsonl(std::io::BufReader::new(f))
}

pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut w: W) -> std::io::Result<()> {
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

/// Assigns train/valid/test tags with the same rule as cell splits.
pub fn split_templates(
    records: &mut [TemplateRecord],
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<(), TemplateError> {
    let tags = split_assignments(records.len(), ratios, seed)?;
    for (r, t) in records.iter_mut().zip(tags) {
        r.split = Some(t);
    }
    Ok(())
}
