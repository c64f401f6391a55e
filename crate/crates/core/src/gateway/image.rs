use std::sync::Arc;

use base64::Engine;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::cache::Cache;
use super::transport::{api_key_from_env, classify_reqwest, classify_status, http_client};
use super::{GatewayError, Mode, RetryPolicy, TransportError};
use crate::hashing::sha256_hex;
use crate::svg::RasterImage;

pub const DEFAULT_IMAGE_MODEL: &str = "dall-e-3";
pub const DEFAULT_IMAGE_SIZE: &str = "1024x1024";

/// Text-to-image backend used by the t2i variant.
pub trait ImageBackend: Send + Sync {
    fn generate_image(&self, description: &str) -> Result<RasterImage, GatewayError>;
}

fn decode(png: &[u8]) -> Result<RasterImage, GatewayError> {
    RasterImage::from_png(png, sha256_hex(png)).map_err(|e| GatewayError::Provider {
        attempts: 1,
        message: format!("image backend returned undecodable PNG: {e}"),
    })
}

/// Returns the same PNG for every description.
pub struct StubImageBackend {
    png: Vec<u8>,
}

impl StubImageBackend {
    pub fn new(png: Vec<u8>) -> Self {
        StubImageBackend { png }
    }
}

impl ImageBackend for StubImageBackend {
    fn generate_image(&self, _description: &str) -> Result<RasterImage, GatewayError> {
        decode(&self.png)
    }
}

/// One network image generation call returning PNG bytes.
pub trait ImageTransport: Send + Sync {
    fn generate(&self, model: &str, prompt: &str, size: &str) -> Result<Vec<u8>, TransportError>;
}

impl ImageTransport for super::NoNetwork {
    fn generate(&self, _: &str, _: &str, _: &str) -> Result<Vec<u8>, TransportError> {
        Err(TransportError::Fatal("network disabled".into()))
    }
}

pub struct OpenAiImageTransport {
    client: reqwest::blocking::Client,
    base_url: String,
    api_key: String,
}

impl OpenAiImageTransport {
    pub fn from_env(base_url: impl Into<String>) -> Result<Self, GatewayError> {
        Ok(OpenAiImageTransport {
            client: http_client(),
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: api_key_from_env()?,
        })
    }
}

impl ImageTransport for OpenAiImageTransport {
    fn generate(&self, model: &str, prompt: &str, size: &str) -> Result<Vec<u8>, TransportError> {
        let resp = self
            .client
            .post(format!("{}/images/generations", self.base_url))
            .bearer_auth(&self.api_key)
            .json(&json!({"model": model, "prompt": prompt, "size": size, "n": 1, "response_format": "b64_json"}))
            .send()
            .map_err(classify_reqwest)?;
        let status = resp.status();
        let text = resp.text().map_err(classify_reqwest)?;
        if !status.is_success() {
            return Err(classify_status(status, &text));
        }
        let v: Value = serde_json::from_str(&text).map_err(|e| TransportError::Fatal(e.to_string()))?;
        let b64 = v["data"][0]["b64_json"]
            .as_str()
            .ok_or_else(|| TransportError::Fatal("no b64_json in image response".into()))?;
        base64::engine::general_purpose::STANDARD
            .decode(b64)
            .map_err(|e| TransportError::Fatal(e.to_string()))
    }
}

#[derive(Serialize, Deserialize)]
struct ImageEntry {
    request: Value,
    png_base64: String,
    recorded_at: String,
}

/// Image backend with the same live/record/replay semantics and cache layout
/// as the chat gateway.
pub struct CachedImageBackend {
    mode: Mode,
    cache: Cache,
    model: String,
    size: String,
    transport: Arc<dyn ImageTransport>,
    retry: RetryPolicy,
    recorded_at: Arc<dyn Fn() -> String + Send + Sync>,
}

impl CachedImageBackend {
    pub fn new(mode: Mode, cache: Cache, transport: Arc<dyn ImageTransport>) -> Self {
        CachedImageBackend {
            mode,
            cache,
            model: DEFAULT_IMAGE_MODEL.into(),
            size: DEFAULT_IMAGE_SIZE.into(),
            transport,
            retry: RetryPolicy::default(),
            recorded_at: Arc::new(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> String + Send + Sync + 'static) -> Self {
        self.recorded_at = Arc::new(clock);
        self
    }

    fn request(&self, description: &str) -> Value {
        json!({"kind": "image", "model": self.model, "prompt": description.replace("\r\n", "\n"), "size": self.size})
    }

    pub fn key(&self, description: &str) -> String {
        sha256_hex(serde_json::to_string(&self.request(description)).expect("json").as_bytes())
    }

    fn fetch(&self, description: &str) -> Result<Vec<u8>, GatewayError> {
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.generate(&self.model, description, &self.size) {
                Ok(png) => return Ok(png),
                Err(TransportError::Transient(m)) if attempt <= self.retry.max_retries => {
                    log::warn!("transient image backend error (attempt {attempt}): {m}");
                    std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
                }
                Err(TransportError::Transient(message) | TransportError::Fatal(message)) => {
                    return Err(GatewayError::Provider { attempts: attempt, message })
                }
            }
        }
    }
}

impl ImageBackend for CachedImageBackend {
    fn generate_image(&self, description: &str) -> Result<RasterImage, GatewayError> {
        let key = self.key(description);
        let png = match self.mode {
            Mode::Replay => {
                let entry: ImageEntry = self.cache.read_json(&key)?.ok_or(GatewayError::CacheMiss { key: key.clone() })?;
                base64::engine::general_purpose::STANDARD
                    .decode(entry.png_base64)
                    .map_err(|e| GatewayError::Cache {
                        path: self.cache.path_for(&key),
                        message: e.to_string(),
                    })?
            }
            Mode::Live => self.fetch(description)?,
            Mode::Record => {
                let png = self.fetch(description)?;
                self.cache.write_json(
                    &key,
                    &ImageEntry {
                        request: self.request(description),
                        png_base64: base64::engine::general_purpose::STANDARD.encode(&png),
                        recorded_at: (self.recorded_at)(),
                    },
                )?;
                png
            }
        };
        decode(&png)
    }
}
