use std::collections::HashSet;
use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::prompt::{PromptItem, PromptRequest, RetryConfig};
use super::LabelingError;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub input_tokens: u64,
    pub output_tokens: u64,
}

impl std::ops::Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: Self) -> Self {
        TokenUsage {
            input_tokens: self.input_tokens + rhs.input_tokens,
            output_tokens: self.output_tokens + rhs.output_tokens,
        }
    }
}

impl std::iter::Sum for TokenUsage {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(TokenUsage::default(), |a, b| a + b)
    }
}

/// Failure of a whole provider call.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ProviderError {
    /// Timeouts, rate limiting and server-side errors. Retried.
    #[error("transient provider failure: {0}")]
    Transient(String),
    #[error("provider rejected credentials: {0}")]
    Auth(String),
    #[error("undecodable provider payload: {0}")]
    Malformed(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ItemReply {
    pub annotation_id: String,
    /// Raw reply text, or a per-item failure description.
    pub result: Result<String, String>,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProviderReply {
    pub items: Vec<ItemReply>,
    /// Aggregate usage, when the provider reports it separately from items.
    pub usage: Option<TokenUsage>,
}

/// A multimodal model behind a single call: model id, prompt text and image
/// payloads in, one raw reply per item out.
pub trait Provider: Send + Sync {
    fn name(&self) -> &str;

    fn complete(&self, model_id: &str, prompt: &str, items: &[PromptItem]) -> Result<ProviderReply, ProviderError>;
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ResponseItem {
    pub annotation_id: String,
    pub result: Result<String, String>,
    pub usage: Option<TokenUsage>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProviderResponse {
    pub request_id: String,
    pub items: Vec<ResponseItem>,
    pub usage: TokenUsage,
    pub latency: Duration,
    pub attempts: u32,
}

/// Upper bound of the backoff window before `attempt + 1`:
/// `base × 2^(attempt−1)`, capped at `max_backoff`.
pub fn backoff_ceiling(retry: &RetryConfig, attempt: u32) -> Duration {
    let exp = attempt.saturating_sub(1).min(32);
    let ms = retry.base_backoff_ms.saturating_mul(1u64 << exp).min(retry.max_backoff_ms);
    Duration::from_millis(ms)
}

/// Full jitter: uniform in `[0, ceiling]`.
fn jittered(ceiling: Duration) -> Duration {
    if ceiling.is_zero() {
        return ceiling;
    }
    let ms = rand::rng().random_range(0..=ceiling.as_millis() as u64);
    Duration::from_millis(ms)
}

/// Sends a request, retrying transient failures with exponential backoff.
///
/// Authentication failures and undecodable payloads are not retried.
pub fn request_labels(
    provider: &dyn Provider,
    model_id: &str,
    request: &PromptRequest,
    retry: &RetryConfig,
) -> Result<ProviderResponse, LabelingError> {
    let max_attempts = retry.max_attempts.max(1);
    let started = Instant::now();
    let mut attempt = 0;
    let reply = loop {
        attempt += 1;
        match provider.complete(model_id, &request.text, &request.items) {
            Ok(reply) => break reply,
            Err(ProviderError::Transient(msg)) if attempt < max_attempts => {
                log_retry(provider.name(), attempt, &msg);
                std::thread::sleep(jittered(backoff_ceiling(retry, attempt)));
            }
            Err(ProviderError::Transient(msg)) => {
                return Err(LabelingError::ProviderExhausted { attempts: attempt, last: msg });
            }
            Err(ProviderError::Auth(msg)) => return Err(LabelingError::AuthError { attempts: attempt, message: msg }),
            Err(ProviderError::Malformed(msg)) => return Err(LabelingError::MalformedResponse(msg)),
        }
    };
    let latency = started.elapsed();

    let expected: HashSet<&str> = request.items.iter().map(|i| i.annotation_id.as_str()).collect();
    let mut seen = HashSet::new();
    for item in &reply.items {
        if !expected.contains(item.annotation_id.as_str()) {
            return Err(LabelingError::MalformedResponse(format!("reply for unknown item `{}`", item.annotation_id)));
        }
        if !seen.insert(item.annotation_id.as_str()) {
            return Err(LabelingError::MalformedResponse(format!("duplicate reply for `{}`", item.annotation_id)));
        }
    }
    if seen.len() != expected.len() {
        return Err(LabelingError::MalformedResponse(format!(
            "{} of {} items answered",
            seen.len(),
            expected.len()
        )));
    }

    let usage = reply.usage.unwrap_or_else(|| reply.items.iter().filter_map(|i| i.usage).sum());
    let items = request
        .items
        .iter()
        .map(|req| {
            let r = reply.items.iter().find(|i| i.annotation_id == req.annotation_id).expect("checked above");
            ResponseItem { annotation_id: r.annotation_id.clone(), result: r.result.clone(), usage: r.usage }
        })
        .collect();
    Ok(ProviderResponse { request_id: request.request_id.clone(), items, usage, latency, attempts: attempt })
}

fn log_retry(provider: &str, attempt: u32, msg: &str) {
    if std::env::var_os("BOXLAB_LOG_RETRIES").is_some() {
        eprintln!("{provider}: attempt {attempt} failed ({msg}), backing off");
    }
}
