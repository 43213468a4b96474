//! Prompt construction, provider calls and label parsing.

mod mock;
mod parse;
mod pipeline;
mod prompt;
mod provider;

pub use mock::{region_key, FixtureError, MockProvider};
pub use parse::{parse_label_text, ParsedLabel};
pub use pipeline::{label_batch, render_payload, LabelOutcome};
pub use prompt::{
    build_prompt, resolve_template, PromptItem, PromptRequest, RetryConfig, SubmissionMode, TaskConfig, CROP_PROMPT,
    OVERLAY_PROMPT,
};
pub use provider::{
    backoff_ceiling, request_labels, ItemReply, Provider, ProviderError, ProviderReply, ProviderResponse, ResponseItem,
    TokenUsage,
};

use crate::annotation::AnnotationStatus;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LabelingError {
    #[error("label text is blank")]
    EmptyLabel,
    #[error("prompt batch is empty")]
    EmptyBatch,
    #[error("batch of {len} exceeds batch_size {max}")]
    BatchTooLarge { len: usize, max: usize },
    #[error("annotation `{0}` appears twice in one request")]
    DuplicateItem(String),
    #[error("unresolved placeholder `{{{0}}}` in prompt template")]
    UnresolvedPlaceholder(String),
    #[error("invalid task config: {0}")]
    InvalidConfig(String),
    #[error("provider still failing after {attempts} attempts: {last}")]
    ProviderExhausted { attempts: u32, last: String },
    #[error("provider authentication failed after {attempts} attempt(s): {message}")]
    AuthError { attempts: u32, message: String },
    #[error("malformed provider response: {0}")]
    MalformedResponse(String),
    #[error("provider could not label item: {0}")]
    ItemFailed(String),
    #[error("annotation in status {0} cannot be labeled")]
    NotLabelable(AnnotationStatus),
    #[error("cannot render region: {0}")]
    Image(String),
    #[error("cannot apply label: {0}")]
    Annotation(String),
}

impl LabelingError {
    /// Short machine-readable tag.
    pub fn code(&self) -> &'static str {
        match self {
            LabelingError::EmptyLabel => "EmptyLabel",
            LabelingError::EmptyBatch => "EmptyBatch",
            LabelingError::BatchTooLarge { .. } => "BatchTooLarge",
            LabelingError::DuplicateItem(_) => "DuplicateItem",
            LabelingError::UnresolvedPlaceholder(_) => "UnresolvedPlaceholder",
            LabelingError::InvalidConfig(_) => "InvalidConfig",
            LabelingError::ProviderExhausted { .. } => "ProviderExhausted",
            LabelingError::AuthError { .. } => "AuthError",
            LabelingError::MalformedResponse(_) => "MalformedResponse",
            LabelingError::ItemFailed(_) => "ItemFailed",
            LabelingError::NotLabelable(_) => "NotLabelable",
            LabelingError::Image(_) => "Image",
            LabelingError::Annotation(_) => "Annotation",
        }
    }
}
