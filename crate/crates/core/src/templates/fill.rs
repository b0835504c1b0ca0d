use std::collections::BTreeMap;
use std::sync::LazyLock;

use rand::seq::SliceRandom;
use regex::{Captures, Regex};

use super::{TemplateError, TemplateRecord, CELL_PLACEHOLDER, OPTION_PLACEHOLDER, OUTPUT_PLACEHOLDER};
use crate::numkit::RngStream;

static PLACEHOLDER: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\{([A-Za-z_][A-Za-z0-9_]*)\}").unwrap());
static SPACE_RUN: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[ \t]{2,}").unwrap());
static SPACE_BEFORE_PUNCT: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[ \t]+([,.;:!?)])").unwrap());
static EMPTY_BRACKETS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\(\s*\)|\[\s*\]").unwrap());
static DOUBLE_COMMA: LazyLock<Regex> = LazyLock::new(|| Regex::new(r",\s*,").unwrap());

/// Placeholder names in order of appearance, repeats included.
pub fn placeholders(text: &str) -> Vec<String> {
    PLACEHOLDER.captures_iter(text).map(|c| c[1].to_string()).collect()
}

/// `labels` shuffled under `seed` and joined with ", ".
pub fn render_options(labels: &[String], seed: u64) -> String {
    let mut v = labels.to_vec();
    v.shuffle(&mut RngStream::new(seed));
    v.join(", ")
}

fn tidy(s: &str) -> String {
    let s = EMPTY_BRACKETS.replace_all(s, "");
    let s = DOUBLE_COMMA.replace_all(&s, ",");
    let s = SPACE_RUN.replace_all(&s, " ");
    let s = SPACE_BEFORE_PUNCT.replace_all(&s, "$1");
    s.lines().map(str::trim).collect::<Vec<_>>().join("\n")
}

/// Substitutes `attrs` into a template pair. `{input}` becomes
/// `cell_marker` and `{option}` the seeded shuffle of `options`. Optional
/// placeholders of the task without a value are removed and the spacing
/// around them repaired; any other unresolved placeholder is an error.
pub fn fill_template(
    t: &TemplateRecord,
    attrs: &BTreeMap<String, String>,
    cell_marker: &str,
    options: &[String],
    seed: u64,
) -> Result<(String, String), TemplateError> {
    let optional = t.task.optional_placeholders();
    let option_text = (!options.is_empty()).then(|| render_options(options, seed));
    if t.has_options && option_text.is_none() {
        return Err(TemplateError::MissingAttribute(OPTION_PLACEHOLDER.into()));
    }
    let render = |text: &str| -> Result<String, TemplateError> {
        let mut missing = None;
        let mut elided = false;
        let out = PLACEHOLDER.replace_all(text, |c: &Captures| {
            let name = &c[1];
            let value = match name {
                CELL_PLACEHOLDER => Some(cell_marker.to_string()),
                OPTION_PLACEHOLDER => option_text.clone(),
                _ => attrs.get(name).cloned(),
            };
            match value {
                Some(v) => v,
                None if optional.contains(&name) && name != OUTPUT_PLACEHOLDER => {
                    elided = true;
                    String::new()
                }
                None => {
                    missing.get_or_insert_with(|| name.to_string());
                    String::new()
                }
            }
        });
        if let Some(m) = missing {
            return Err(TemplateError::MissingAttribute(m));
        }
        Ok(if elided { tidy(&out) } else { out.into_owned() })
    };
    Ok((render(&t.instruction)?, render(&t.response)?))
}
