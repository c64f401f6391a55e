use std::time::Duration;

use base64::Engine;
use serde_json::{json, Value};

use super::{ChatRequest, ChatResponse, FinishReason, GatewayError, Part, Usage};

pub const API_KEY_ENV: &str = "HINTGRAPH_API_KEY";
pub const DEFAULT_BASE_URL: &str = "https://api.openai.com/v1";

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TransportError {
    /// Timeouts, connection failures, 429 and 5xx.
    #[error("transient: {0}")]
    Transient(String),
    /// Anything a retry cannot fix, including other 4xx.
    #[error("fatal: {0}")]
    Fatal(String),
}

/// One network round trip. Retries live in the gateway.
pub trait Transport: Send + Sync {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError>;
}

/// Transport for replay-only gateways.
#[derive(Debug, Default)]
pub struct NoNetwork;

impl Transport for NoNetwork {
    fn send(&self, _req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        Err(TransportError::Fatal("network disabled".into()))
    }
}

pub(crate) fn api_key_from_env() -> Result<String, GatewayError> {
    match std::env::var(API_KEY_ENV) {
        Ok(k) if !k.trim().is_empty() => Ok(k),
        _ => Err(GatewayError::MissingCredential),
    }
}

pub(crate) fn http_client() -> reqwest::blocking::Client {
    reqwest::blocking::Client::builder()
        .timeout(Duration::from_secs(180))
        .build()
        .expect("http client builds")
}

pub(crate) fn classify_status(status: reqwest::StatusCode, body: &str) -> TransportError {
    let msg = format!("HTTP {}: {}", status.as_u16(), body.chars().take(500).collect::<String>());
    if status.as_u16() == 429 || status.is_server_error() {
        TransportError::Transient(msg)
    } else {
        TransportError::Fatal(msg)
    }
}

pub(crate) fn classify_reqwest(e: reqwest::Error) -> TransportError {
    if e.is_timeout() || e.is_connect() || e.is_request() {
        TransportError::Transient(e.to_string())
    } else {
        TransportError::Fatal(e.to_string())
    }
}

/// Chat-completions style HTTP adapter.
pub struct OpenAiTransport {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
}

impl OpenAiTransport {
    pub fn new(base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        OpenAiTransport {
            client: http_client(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key.into(),
        }
    }

    /// Reads the key from `HINTGRAPH_API_KEY`.
    pub fn from_env(base_url: impl Into<String>) -> Result<Self, GatewayError> {
        Ok(OpenAiTransport::new(base_url, api_key_from_env()?))
    }

    fn body(req: &ChatRequest) -> Value {
        let messages: Vec<Value> = req
            .messages
            .iter()
            .map(|m| {
                let content: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => json!({"type": "text", "text": t}),
                        Part::Image { media_type, data } => {
                            let b64 = base64::engine::general_purpose::STANDARD.encode(data);
                            json!({"type": "image_url", "image_url": {"url": format!("data:{media_type};base64,{b64}")}})
                        }
                    })
                    .collect();
                json!({"role": m.role.as_str(), "content": content})
            })
            .collect();
        json!({
            "model": req.model_id,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
            "messages": messages,
        })
    }
}

impl Transport for OpenAiTransport {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        let resp = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&Self::body(req))
            .send()
            .map_err(classify_reqwest)?;
        let status = resp.status();
        let text = resp.text().map_err(classify_reqwest)?;
        if !status.is_success() {
            return Err(classify_status(status, &text));
        }
        parse_chat_body(&text)
    }
}

fn parse_chat_body(body: &str) -> Result<ChatResponse, TransportError> {
    let v: Value = serde_json::from_str(body).map_err(|e| TransportError::Fatal(format!("bad response json: {e}")))?;
    let choice = &v["choices"][0];
    let text = choice["message"]["content"].as_str().unwrap_or_default().to_string();
    let finish_reason = match choice["finish_reason"].as_str() {
        Some("length") => FinishReason::Length,
        Some("content_filter") => FinishReason::Filtered,
        _ => FinishReason::Stop,
    };
    let usage = match (v["usage"]["prompt_tokens"].as_u64(), v["usage"]["completion_tokens"].as_u64()) {
        (Some(prompt_tokens), Some(completion_tokens)) => Some(Usage {
            prompt_tokens,
            completion_tokens,
        }),
        _ => None,
    };
    Ok(ChatResponse {
        text,
        finish_reason,
        usage,
    })
}
