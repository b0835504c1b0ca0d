use std::fmt;
use std::sync::LazyLock;

use regex::Regex;

use super::{fill::placeholders, rouge::tokenize, Task, OPTION_PLACEHOLDER, OUTPUT_PLACEHOLDER};

pub const DEFAULT_MAX_WORDS: usize = 70;

// Whole-token match: "Gene A" and "gene 12" are banned, "gene expression" is not.
static BANNED_ENTITY: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bgene\s+(?:[a-z]|[0-9]+)\b").expect("valid pattern"));

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Rejection {
    TooLong { words: usize, max: usize },
    MissingPlaceholder(String),
    MissingOutput,
    OutputNotLast,
    BannedEntity(String),
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Rejection::TooLong { words, max } => write!(f, "{words} words exceed the limit of {max}"),
            Rejection::MissingPlaceholder(p) => write!(f, "missing placeholder {{{p}}}"),
            Rejection::MissingOutput => write!(f, "response lacks {{{OUTPUT_PLACEHOLDER}}}"),
            Rejection::OutputNotLast => write!(f, "response must end with {{{OUTPUT_PLACEHOLDER}}}"),
            Rejection::BannedEntity(e) => write!(f, "ambiguous entity `{e}`"),
        }
    }
}

/// Tokens after lowercasing and punctuation stripping; a placeholder is
/// one word.
pub fn word_count(text: &str) -> usize {
    tokenize(text).len()
}

fn check_length(text: &str, max_words: usize) -> Result<(), Rejection> {
    let words = word_count(text);
    if words > max_words {
        return Err(Rejection::TooLong { words, max: max_words });
    }
    Ok(())
}

/// Length limit plus every required placeholder of `task`, and the option
/// placeholder when `has_options` is set.
pub fn check_instruction(text: &str, task: Task, has_options: bool, max_words: usize) -> Result<(), Rejection> {
    check_length(text, max_words)?;
    let present = placeholders(text);
    let needs_option = has_options && task.supports_options();
    for &p in task.required_placeholders().iter().chain(needs_option.then_some(&OPTION_PLACEHOLDER)) {
        if !present.iter().any(|x| x == p) {
            return Err(Rejection::MissingPlaceholder(p.to_string()));
        }
    }
    Ok(())
}

/// Length limit and `{output}`; generation responses must also end with
/// `{output}` and avoid placeholder gene names.
pub fn check_response(text: &str, task: Task, max_words: usize) -> Result<(), Rejection> {
    check_length(text, max_words)?;
    let marker = format!("{{{OUTPUT_PLACEHOLDER}}}");
    if !text.contains(&marker) {
        return Err(Rejection::MissingOutput);
    }
    if task == Task::Cpcg {
        if !text.trim_end().ends_with(&marker) {
            return Err(Rejection::OutputNotLast);
        }
        if let Some(m) = BANNED_ENTITY.find(text) {
            return Err(Rejection::BannedEntity(m.as_str().to_string()));
        }
    }
    Ok(())
}
