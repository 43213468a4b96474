use std::collections::BTreeMap;

use super::{Project, ProjectError};

/// Externally supplied ground truth: `key<TAB>class` per line, `#` comments.
///
/// A key is matched, in order, against annotation ids, image content hashes
/// and image source names. Image-level keys apply to every annotation on
/// that image.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TruthTable {
    entries: BTreeMap<String, String>,
}

impl TruthTable {
    pub fn parse(text: &str) -> Result<Self, ProjectError> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let bad = |reason: &str| ProjectError::CorruptProject {
                file: "truth table".into(),
                reason: format!("line {}: {reason}", n + 1),
            };
            let (key, class) = trimmed.split_once('\t').ok_or_else(|| bad("expected `<key>\\t<class>`"))?;
            let (key, class) = (key.trim(), class.trim());
            if key.is_empty() || class.is_empty() {
                return Err(bad("blank key or class"));
            }
            if entries.insert(key.to_string(), class.to_string()).is_some() {
                return Err(bad(&format!("duplicate key `{key}`")));
            }
        }
        Ok(Self { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn from_project(project: &Project) -> Self {
        Self { entries: project.truth().clone() }
    }

    /// Ground truth per annotation id, plus the keys that matched nothing.
    pub fn resolve(&self, project: &Project) -> (BTreeMap<String, String>, Vec<String>) {
        let mut resolved = BTreeMap::new();
        let mut used = std::collections::BTreeSet::new();
        for a in project.annotations() {
            let image = project.image(&a.image_id);
            let candidates = [
                Some(a.id.as_str()),
                image.map(|r| r.content_hash.as_str()),
                image.map(|r| r.source_name.as_str()),
            ];
            if let Some((key, class)) = candidates.into_iter().flatten().find_map(|k| self.entries.get_key_value(k)) {
                resolved.insert(a.id.clone(), class.clone());
                used.insert(key.clone());
            }
        }
        let unmatched = self.entries.keys().filter(|k| !used.contains(*k)).cloned().collect();
        (resolved, unmatched)
    }
}
