use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use boxlab_core::{Annotation, AnnotationStatus, Project};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FilterError {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
}

/// Which annotations a label run covers. With neither field set the run
/// covers every `BoxDrawn` annotation.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelFilter {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub status: Vec<AnnotationStatus>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ids: Vec<String>,
}

const LABELABLE: [AnnotationStatus; 2] = [AnnotationStatus::BoxDrawn, AnnotationStatus::AiLabeled];

impl LabelFilter {
    /// Parses CLI terms such as `status=BoxDrawn,AiLabeled` or `ids=a,b`.
    pub fn parse_terms<S: AsRef<str>>(terms: &[S]) -> Result<Self, FilterError> {
        let mut filter = LabelFilter::default();
        for term in terms.iter().flat_map(|t| t.as_ref().split(';')) {
            let term = term.trim();
            if term.is_empty() {
                continue;
            }
            let (key, values) = term
                .split_once('=')
                .ok_or_else(|| FilterError::InvalidFilter(format!("expected key=value, got `{term}`")))?;
            let values = values.split(',').map(str::trim).filter(|v| !v.is_empty());
            match key.trim() {
                "status" => {
                    for v in values {
                        filter.status.push(v.parse().map_err(FilterError::InvalidFilter)?);
                    }
                }
                "id" | "ids" => filter.ids.extend(values.map(str::to_string)),
                other => return Err(FilterError::InvalidFilter(format!("unknown filter key `{other}`"))),
            }
        }
        Ok(filter)
    }

    /// Resolves the filter against a project, in annotation-id order.
    pub fn select(&self, project: &Project) -> Result<Vec<Annotation>, FilterError> {
        if let Some(bad) = self.status.iter().find(|s| !LABELABLE.contains(s)) {
            return Err(FilterError::InvalidFilter(format!("status {bad} cannot be labeled")));
        }
        let ids: BTreeSet<&str> = self.ids.iter().map(String::as_str).collect();
        if let Some(missing) = ids.iter().find(|id| project.annotation(id).is_none()) {
            return Err(FilterError::InvalidFilter(format!("unknown annotation `{missing}`")));
        }
        let statuses: &[AnnotationStatus] = if self.status.is_empty() && ids.is_empty() {
            &LABELABLE[..1]
        } else {
            &self.status
        };
        Ok(project
            .annotations()
            .filter(|a| ids.is_empty() || ids.contains(a.id.as_str()))
            .filter(|a| statuses.is_empty() || statuses.contains(&a.status))
            .cloned()
            .collect())
    }
}
