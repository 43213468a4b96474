//! Deterministic provider backed by recorded responses.
//!
//! Fixture file format (UTF-8, one record per line):
//!
//! ```text
//! # comment
//! <content_hash>\t<response text>
//! <content_hash>@<x>,<y>,<w>,<h>\t<response text>
//! ```
//!
//! A key with a `@box` suffix answers for that region only; a bare hash
//! answers for any region of the image. `\n` and `\t` escapes in the
//! response are expanded, `\\` is a literal backslash. A file whose first
//! non-blank character is `{` is read as a JSON object of key → response.

use std::collections::BTreeMap;
use std::path::Path;

use super::prompt::PromptItem;
use super::provider::{ItemReply, Provider, ProviderError, ProviderReply, TokenUsage};
use crate::annotation::RegionKind;

#[derive(Debug, thiserror::Error)]
pub enum FixtureError {
    #[error("cannot read fixture: {0}")]
    Io(#[from] std::io::Error),
    #[error("fixture line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("fixture json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MockProvider {
    responses: BTreeMap<String, String>,
}

pub fn region_key(hash: &str, region: &RegionKind) -> String {
    match region {
        RegionKind::Box(b) => format!("{hash}@{},{},{},{}", b.x, b.y, b.width, b.height),
        RegionKind::WholeImage => hash.to_string(),
    }
}

impl MockProvider {
    pub fn new(responses: impl IntoIterator<Item = (String, String)>) -> Self {
        Self { responses: responses.into_iter().collect() }
    }

    pub fn from_path(path: &Path) -> Result<Self, FixtureError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn parse(text: &str) -> Result<Self, FixtureError> {
        if text.trim_start().starts_with('{') {
            let map: BTreeMap<String, String> = serde_json::from_str(text)?;
            return Ok(Self { responses: map });
        }
        let mut responses = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('\t')
                .ok_or_else(|| FixtureError::Syntax { line: n + 1, reason: "expected `<key>\\t<response>`".into() })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(FixtureError::Syntax { line: n + 1, reason: "empty key".into() });
            }
            if responses.insert(key.to_string(), unescape(value)).is_some() {
                return Err(FixtureError::Syntax { line: n + 1, reason: format!("duplicate key `{key}`") });
            }
        }
        Ok(Self { responses })
    }

    /// Serializes back into the line format.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.responses {
            out.push_str(k);
            out.push('\t');
            out.push_str(&escape(v));
            out.push('\n');
        }
        out
    }

    pub fn len(&self) -> usize {
        self.responses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.responses.is_empty()
    }

    pub fn lookup(&self, hash: &str, region: &RegionKind) -> Option<&str> {
        self.responses.get(&region_key(hash, region)).or_else(|| self.responses.get(hash)).map(String::as_str)
    }
}

fn word_count(s: &str) -> u64 {
    s.split_whitespace().count() as u64
}

impl Provider for MockProvider {
    fn name(&self) -> &str {
        "mock"
    }

    fn complete(&self, _model_id: &str, prompt: &str, items: &[PromptItem]) -> Result<ProviderReply, ProviderError> {
        let items = items
            .iter()
            .map(|item| {
                let result = self
                    .lookup(&item.source_hash, &item.region)
                    .map(str::to_string)
                    .ok_or_else(|| format!("no recorded response for {}", region_key(&item.source_hash, &item.region)));
                let usage = result
                    .as_ref()
                    .ok()
                    .map(|text| TokenUsage { input_tokens: word_count(prompt), output_tokens: word_count(text) });
                ItemReply { annotation_id: item.annotation_id.clone(), result, usage }
            })
            .collect();
        Ok(ProviderReply { items, usage: None })
    }
}

fn unescape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut chars = s.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('n') => out.push('\n'),
                Some('t') => out.push('\t'),
                Some('\\') => out.push('\\'),
                Some(other) => {
                    out.push('\\');
                    out.push(other);
                }
                None => out.push('\\'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn escape(s: &str) -> String {
    s.replace('\\', "\\\\").replace('\n', "\\n").replace('\t', "\\t")
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::annotation::BoundingBox;

    fn item(id: &str, hash: &str, region: RegionKind) -> PromptItem {
        PromptItem { annotation_id: id.into(), source_hash: hash.into(), region, payload: Arc::new(vec![]) }
    }

    #[test]
    fn parses_lines_and_escapes() {
        let mock = MockProvider::parse("# recorded\nabc\tGiraffe\n\nabc@1,2,3,4\tStork\\nlong text\n").unwrap();
        assert_eq!(mock.len(), 2);
        assert_eq!(mock.lookup("abc", &RegionKind::WholeImage), Some("Giraffe"));
        assert_eq!(mock.lookup("abc", &RegionKind::Box(BoundingBox::new(1, 2, 3, 4))), Some("Stork\nlong text"));
        assert_eq!(mock.lookup("abc", &RegionKind::Box(BoundingBox::new(0, 0, 3, 4))), Some("Giraffe"));
        assert_eq!(MockProvider::parse(&mock.to_text()).unwrap(), mock);
    }

    #[test]
    fn parses_json_documents() {
        let mock = MockProvider::parse(r#"{"abc": "Dachshund (Dog)"}"#).unwrap();
        assert_eq!(mock.lookup("abc", &RegionKind::WholeImage), Some("Dachshund (Dog)"));
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(matches!(MockProvider::parse("no tab here"), Err(FixtureError::Syntax { line: 1, .. })));
        assert!(matches!(MockProvider::parse("a\tx\na\ty"), Err(FixtureError::Syntax { line: 2, .. })));
    }

    #[test]
    fn echoes_fixture_and_reports_missing_per_item() {
        let mock = MockProvider::new([("img_a".to_string(), "Giraffe".to_string())]);
        let reply = mock
            .complete(
                "m",
                "two words",
                &[item("1", "img_a", RegionKind::WholeImage), item("2", "img_b", RegionKind::WholeImage)],
            )
            .unwrap();
        assert_eq!(reply.items[0].result, Ok("Giraffe".into()));
        assert_eq!(reply.items[0].usage, Some(TokenUsage { input_tokens: 2, output_tokens: 1 }));
        assert!(reply.items[1].result.is_err());
    }
}
