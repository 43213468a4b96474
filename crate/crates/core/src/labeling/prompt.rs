use std::collections::{BTreeMap, HashSet};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::LabelingError;
use crate::annotation::RegionKind;
use crate::image_store::OverlayStyle;
use crate::taxonomy::Tier;

/// Prompt used when the box is drawn onto the submitted image.
pub const OVERLAY_PROMPT: &str = "Please tell me what is selected by the bounding box in each image.";

/// Prompt used when only the cropped region is submitted. This wording is a
/// project default, not taken from any published workflow.
pub const CROP_PROMPT: &str = "Please tell me what is shown in this image region.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SubmissionMode {
    /// Full image with the box outline rendered on it.
    #[default]
    Overlay,
    /// Only the pixels inside the box.
    Crop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RetryConfig {
    pub max_attempts: u32,
    pub base_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryConfig {
    fn default() -> Self {
        Self { max_attempts: 3, base_backoff_ms: 500, max_backoff_ms: 30_000 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaskConfig {
    /// `None` selects the default prompt for the submission mode.
    pub prompt_template: Option<String>,
    /// Values for `{name}` placeholders in the template.
    pub variables: BTreeMap<String, String>,
    pub submission_mode: SubmissionMode,
    pub model_id: String,
    pub batch_size: usize,
    pub retry: RetryConfig,
    pub granularity_target: Option<Tier>,
    /// Upper bound on concurrent provider requests.
    pub max_in_flight: usize,
    /// Keep only the text before the first comma of a reply.
    pub split_on_comma: bool,
    pub overlay_style: OverlayStyle,
}

impl Default for TaskConfig {
    fn default() -> Self {
        Self {
            prompt_template: None,
            variables: BTreeMap::new(),
            submission_mode: SubmissionMode::Overlay,
            model_id: "mock".to_string(),
            batch_size: 1,
            retry: RetryConfig::default(),
            granularity_target: None,
            max_in_flight: 4,
            split_on_comma: false,
            overlay_style: OverlayStyle::default(),
        }
    }
}

impl TaskConfig {
    pub fn template(&self) -> &str {
        match (&self.prompt_template, self.submission_mode) {
            (Some(t), _) => t,
            (None, SubmissionMode::Overlay) => OVERLAY_PROMPT,
            (None, SubmissionMode::Crop) => CROP_PROMPT,
        }
    }

    pub fn validate(&self) -> Result<(), LabelingError> {
        if self.batch_size == 0 {
            return Err(LabelingError::InvalidConfig("batch_size must be at least 1".into()));
        }
        if self.max_in_flight == 0 {
            return Err(LabelingError::InvalidConfig("max_in_flight must be at least 1".into()));
        }
        if self.retry.max_attempts == 0 {
            return Err(LabelingError::InvalidConfig("retry.max_attempts must be at least 1".into()));
        }
        if self.overlay_style.stroke_width == 0 {
            return Err(LabelingError::InvalidConfig("overlay stroke width must be at least 1".into()));
        }
        resolve_template(self.template(), &self.variables).map(|_| ())
    }
}

/// Substitutes `{name}` placeholders. `{{` and `}}` are literal braces.
pub fn resolve_template(template: &str, variables: &BTreeMap<String, String>) -> Result<String, LabelingError> {
    let mut out = String::with_capacity(template.len());
    let mut chars = template.chars().peekable();
    while let Some(c) = chars.next() {
        match c {
            '{' if chars.peek() == Some(&'{') => {
                chars.next();
                out.push('{');
            }
            '}' if chars.peek() == Some(&'}') => {
                chars.next();
                out.push('}');
            }
            '{' => {
                let mut name = String::new();
                let mut closed = false;
                for n in chars.by_ref() {
                    if n == '}' {
                        closed = true;
                        break;
                    }
                    name.push(n);
                }
                let key = name.trim();
                match variables.get(key) {
                    Some(v) if closed => out.push_str(v),
                    _ => return Err(LabelingError::UnresolvedPlaceholder(key.to_string())),
                }
            }
            other => out.push(other),
        }
    }
    Ok(out)
}

/// One image submitted for labeling.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptItem {
    pub annotation_id: String,
    /// Content hash of the original image the payload was derived from.
    pub source_hash: String,
    pub region: RegionKind,
    /// Encoded image (PNG).
    pub payload: Arc<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptRequest {
    pub request_id: String,
    pub text: String,
    pub items: Vec<PromptItem>,
}

/// Resolves the prompt and packages the items into a request.
pub fn build_prompt(config: &TaskConfig, items: Vec<PromptItem>) -> Result<PromptRequest, LabelingError> {
    if items.is_empty() {
        return Err(LabelingError::EmptyBatch);
    }
    if items.len() > config.batch_size {
        return Err(LabelingError::BatchTooLarge { len: items.len(), max: config.batch_size });
    }
    let mut seen = HashSet::new();
    if let Some(dup) = items.iter().find(|i| !seen.insert(i.annotation_id.as_str())) {
        return Err(LabelingError::DuplicateItem(dup.annotation_id.clone()));
    }
    let text = resolve_template(config.template(), &config.variables)?;

    let mut hasher = Sha256::new();
    hasher.update(text.as_bytes());
    for item in &items {
        hasher.update([0u8]);
        hasher.update(item.annotation_id.as_bytes());
        hasher.update([0u8]);
        hasher.update(item.source_hash.as_bytes());
    }
    let request_id = format!("req-{}", &hex::encode(hasher.finalize())[..16]);
    Ok(PromptRequest { request_id, text, items })
}
