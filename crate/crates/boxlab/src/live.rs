//! Provider backed by an OpenAI-compatible chat-completions endpoint.
//!
//! Credentials come only from the environment: `BOXLAB_API_KEY` (required)
//! and `BOXLAB_API_BASE` (optional, defaults to [`DEFAULT_API_BASE`]).

use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use boxlab_core::labeling::{ItemReply, PromptItem, ProviderError, ProviderReply, TokenUsage};
use boxlab_core::Provider;

pub const API_KEY_ENV: &str = "BOXLAB_API_KEY";
pub const API_BASE_ENV: &str = "BOXLAB_API_BASE";
pub const DEFAULT_API_BASE: &str = "https://api.openai.com/v1";

#[derive(Debug, thiserror::Error)]
pub enum LiveConfigError {
    #[error("environment variable {API_KEY_ENV} is not set")]
    MissingKey,
}

pub struct LiveProvider {
    base: String,
    key: String,
    agent: ureq::Agent,
}

impl std::fmt::Debug for LiveProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LiveProvider").field("base", &self.base).finish_non_exhaustive()
    }
}

impl LiveProvider {
    pub fn new(base: impl Into<String>, key: impl Into<String>, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { base: base.into().trim_end_matches('/').to_string(), key: key.into(), agent }
    }

    pub fn from_env() -> Result<Self, LiveConfigError> {
        let key = std::env::var(API_KEY_ENV).ok().filter(|k| !k.trim().is_empty()).ok_or(LiveConfigError::MissingKey)?;
        let base = std::env::var(API_BASE_ENV).unwrap_or_else(|_| DEFAULT_API_BASE.to_string());
        Ok(Self::new(base, key, Duration::from_secs(120)))
    }

    fn complete_one(&self, model_id: &str, prompt: &str, item: &PromptItem) -> Result<(String, Option<TokenUsage>), ProviderError> {
        let image = base64::engine::general_purpose::STANDARD.encode(item.payload.as_slice());
        let body = json!({
            "model": model_id,
            "messages": [{
                "role": "user",
                "content": [
                    {"type": "text", "text": prompt},
                    {"type": "image_url", "image_url": {"url": format!("data:image/png;base64,{image}")}},
                ],
            }],
        });
        let mut response = self
            .agent
            .post(format!("{}/chat/completions", self.base))
            .header("Authorization", format!("Bearer {}", self.key))
            .send_json(&body)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) | ureq::Error::Io(_) | ureq::Error::ConnectionFailed | ureq::Error::HostNotFound => {
                    ProviderError::Transient(e.to_string())
                }
                other => ProviderError::Malformed(other.to_string()),
            })?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| ProviderError::Transient(e.to_string()))?;
        match status {
            200..=299 => {}
            401 | 403 => return Err(ProviderError::Auth(format!("status {status}"))),
            408 | 429 | 500..=599 => return Err(ProviderError::Transient(format!("status {status}"))),
            _ => return Err(ProviderError::Malformed(format!("status {status}: {}", truncate(&text, 200)))),
        }
        parse_completion(&text)
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

/// Extracts the reply text and token usage from a chat-completions body.
pub fn parse_completion(body: &str) -> Result<(String, Option<TokenUsage>), ProviderError> {
    let value: Value = serde_json::from_str(body).map_err(|e| ProviderError::Malformed(e.to_string()))?;
    let text = value
        .pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .ok_or_else(|| ProviderError::Malformed("no choices[0].message.content".into()))?;
    let usage = value.get("usage").map(|u| TokenUsage {
        input_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
        output_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
    });
    Ok((text.to_string(), usage))
}

impl Provider for LiveProvider {
    fn name(&self) -> &str {
        "live"
    }

    /// One HTTP call per item. Transport, auth and rate-limit failures fail
    /// the whole request so the caller's retry covers every item.
    fn complete(&self, model_id: &str, prompt: &str, items: &[PromptItem]) -> Result<ProviderReply, ProviderError> {
        let mut replies = Vec::with_capacity(items.len());
        for item in items {
            let (result, usage) = match self.complete_one(model_id, prompt, item) {
                Ok((text, usage)) => (Ok(text), usage),
                Err(ProviderError::Malformed(reason)) => (Err(reason), None),
                Err(e) => return Err(e),
            };
            replies.push(ItemReply { annotation_id: item.annotation_id.clone(), result, usage });
        }
        Ok(ProviderReply { items: replies, usage: None })
    }
}
