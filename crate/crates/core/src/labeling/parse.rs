use serde::{Deserialize, Serialize};

use super::LabelingError;

/// A provider reply decomposed into a fine-grained label and an optional
/// base class, e.g. `Dachshund (Dog)` → fine `Dachshund`, base `Dog`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ParsedLabel {
    /// Verbatim provider text.
    pub raw: String,
    pub fine: String,
    pub base: Option<String>,
}

impl ParsedLabel {
    /// `fine (base)` or just `fine`.
    pub fn display(&self) -> String {
        match &self.base {
            Some(base) => format!("{} ({})", self.fine, base),
            None => self.fine.clone(),
        }
    }
}

const TRAILING_PUNCT: [char; 6] = ['.', ',', ';', ':', '!', '?'];

/// Parses a label reply.
///
/// Only the first non-blank line is considered. A single trailing
/// parenthesized group becomes the base class; anything else is the fine
/// label as-is.
pub fn parse_label_text(raw: &str) -> Result<ParsedLabel, LabelingError> {
    let line = raw.lines().map(str::trim).find(|l| !l.is_empty()).ok_or(LabelingError::EmptyLabel)?;
    let (fine, base) = split_base(line);
    Ok(ParsedLabel { raw: raw.to_string(), fine, base })
}

fn split_base(line: &str) -> (String, Option<String>) {
    let core = line.trim_end_matches(TRAILING_PUNCT).trim_end();
    if let Some(inner_and_head) = core.strip_suffix(')') {
        if let Some(open) = inner_and_head.rfind('(') {
            let base = inner_and_head[open + 1..].trim();
            let fine = inner_and_head[..open].trim();
            if !base.is_empty() && !fine.is_empty() && !base.contains(['(', ')']) {
                return (fine.to_string(), Some(base.to_string()));
            }
        }
    }
    (line.to_string(), None)
}
