use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::routing::post;
use axum::{Json, Router};
use boxlab::live::LiveProvider;
use boxlab_core::labeling::{build_prompt, request_labels, LabelingError, PromptItem, ProviderError, RetryConfig, TaskConfig};
use boxlab_core::{Provider, RegionKind};
use serde_json::Value;

#[derive(Clone)]
struct Stub {
    /// Status codes to return, in order; afterwards 200.
    script: Arc<Mutex<Vec<u16>>>,
    hits: Arc<AtomicUsize>,
    last: Arc<Mutex<Option<(String, Value)>>>,
    reply: &'static str,
}

async fn completions(State(stub): State<Stub>, headers: HeaderMap, Json(body): Json<Value>) -> (StatusCode, String) {
    stub.hits.fetch_add(1, Ordering::SeqCst);
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).unwrap_or("").to_string();
    *stub.last.lock().unwrap() = Some((auth, body));
    let next = {
        let mut script = stub.script.lock().unwrap();
        if script.is_empty() { 200 } else { script.remove(0) }
    };
    if next != 200 {
        return (StatusCode::from_u16(next).unwrap(), "{}".into());
    }
    (StatusCode::OK, stub.reply.to_string())
}

fn serve(script: Vec<u16>, reply: &'static str) -> (String, Stub) {
    let stub = Stub { script: Arc::new(Mutex::new(script)), hits: Arc::default(), last: Arc::default(), reply };
    let app = Router::new().route("/v1/chat/completions", post(completions)).with_state(stub.clone());
    let (tx, rx) = std::sync::mpsc::channel();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
            tx.send(listener.local_addr().unwrap()).unwrap();
            axum::serve(listener, app).await.unwrap();
        });
    });
    let addr = rx.recv().unwrap();
    (format!("http://{addr}/v1"), stub)
}

const OK_REPLY: &str = r#"{"choices":[{"message":{"role":"assistant","content":"Siamese cat (Cat)"}}],"usage":{"prompt_tokens":120,"completion_tokens":5}}"#;

fn item() -> PromptItem {
    PromptItem { annotation_id: "ann-1".into(), source_hash: "h".into(), region: RegionKind::WholeImage, payload: Arc::new(vec![137, 80, 78, 71]) }
}

fn provider(base: &str) -> LiveProvider {
    LiveProvider::new(base, "test-key", Duration::from_secs(5))
}

#[test]
fn sends_prompt_image_and_bearer_key() {
    let (base, stub) = serve(vec![], OK_REPLY);
    let reply = provider(&base).complete("gpt-test", "Please label.", &[item()]).unwrap();
    assert_eq!(reply.items[0].result, Ok("Siamese cat (Cat)".to_string()));
    assert_eq!(reply.items[0].usage.unwrap().input_tokens, 120);
    let (auth, body) = stub.last.lock().unwrap().clone().unwrap();
    assert_eq!(auth, "Bearer test-key");
    assert_eq!(body["model"], "gpt-test");
    assert_eq!(body["messages"][0]["content"][0]["text"], "Please label.");
    assert_eq!(body["messages"][0]["content"][1]["image_url"]["url"], "data:image/png;base64,iVBORw==");
}

#[test]
fn maps_status_codes() {
    for (code, want) in [(401, "auth"), (403, "auth"), (429, "transient"), (503, "transient")] {
        let (base, _) = serve(vec![code], OK_REPLY);
        let err = provider(&base).complete("m", "p", &[item()]).unwrap_err();
        let got = match err {
            ProviderError::Auth(_) => "auth",
            ProviderError::Transient(_) => "transient",
            ProviderError::Malformed(_) => "malformed",
        };
        assert_eq!(got, want, "status {code}");
    }
    // A rejected request fails that item only.
    let (base, _) = serve(vec![400], OK_REPLY);
    let reply = provider(&base).complete("m", "p", &[item()]).unwrap();
    assert!(reply.items[0].result.is_err());
    let (base, _) = serve(vec![], "not json");
    assert!(provider(&base).complete("m", "p", &[item()]).unwrap().items[0].result.is_err());
}

#[test]
fn transient_failures_are_retried() {
    let (base, stub) = serve(vec![429, 500], OK_REPLY);
    let request = build_prompt(&TaskConfig::default(), vec![item()]).unwrap();
    let retry = RetryConfig { max_attempts: 3, base_backoff_ms: 1, max_backoff_ms: 5 };
    let response = request_labels(&provider(&base), "m", &request, &retry).unwrap();
    assert_eq!(response.attempts, 3);
    assert_eq!(stub.hits.load(Ordering::SeqCst), 3);

    let (base, stub) = serve(vec![401, 401, 401], OK_REPLY);
    let err = request_labels(&provider(&base), "m", &request, &retry).unwrap_err();
    assert!(matches!(err, LabelingError::AuthError { attempts: 1, .. }));
    assert_eq!(stub.hits.load(Ordering::SeqCst), 1);
}

#[test]
fn unreachable_endpoint_is_transient() {
    let err = provider("http://127.0.0.1:9").complete("m", "p", &[item()]).unwrap_err();
    assert!(matches!(err, ProviderError::Transient(_)), "{err:?}");
}
