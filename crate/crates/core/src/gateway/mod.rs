//! Uniform access to text and multimodal model backends, with live, record
//! and replay modes.

mod cache;
mod image;
pub mod testing;
mod transport;

use std::fmt;
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::hashing::sha256_hex;

pub use cache::{Cache, CacheEntry};
pub use image::{CachedImageBackend, ImageBackend, ImageTransport, OpenAiImageTransport, StubImageBackend};
pub use transport::{NoNetwork, OpenAiTransport, Transport, TransportError, API_KEY_ENV, DEFAULT_BASE_URL};

pub const DEFAULT_TEMPERATURE: f64 = 0.5;
pub const DEFAULT_MAX_OUTPUT_TOKENS: u32 = 4096;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
        }
    }
}

#[derive(Clone, PartialEq, Eq)]
pub enum Part {
    Text(String),
    Image { media_type: String, data: Vec<u8> },
}

impl fmt::Debug for Part {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Part::Text(t) => f.debug_tuple("Text").field(t).finish(),
            Part::Image { media_type, data } => f
                .debug_struct("Image")
                .field("media_type", media_type)
                .field("sha256", &sha256_hex(data))
                .finish(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub role: Role,
    pub parts: Vec<Part>,
}

impl Message {
    pub fn text(role: Role, text: impl Into<String>) -> Self {
        Message {
            role,
            parts: vec![Part::Text(text.into())],
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        Message::text(Role::User, text)
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        Message::text(Role::Assistant, text)
    }

    /// Concatenated text parts.
    pub fn text_content(&self) -> String {
        self.parts
            .iter()
            .filter_map(|p| match p {
                Part::Text(t) => Some(t.as_str()),
                Part::Image { .. } => None,
            })
            .collect::<Vec<_>>()
            .join("\n")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Purpose {
    Generation,
    QuestionGen,
    Vqa,
    T2iDescription,
}

impl Purpose {
    pub fn as_str(self) -> &'static str {
        match self {
            Purpose::Generation => "generation",
            Purpose::QuestionGen => "question_gen",
            Purpose::Vqa => "vqa",
            Purpose::T2iDescription => "t2i_description",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_output_tokens: u32,
    pub purpose: Purpose,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, purpose: Purpose, messages: Vec<Message>) -> Self {
        ChatRequest {
            model_id: model_id.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_output_tokens: DEFAULT_MAX_OUTPUT_TOKENS,
            purpose,
        }
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        let invalid = |m: &str| Err(GatewayError::InvalidRequest(m.to_string()));
        if self.messages.is_empty() {
            return invalid("request has no messages");
        }
        if !(0.0..=2.0).contains(&self.temperature) {
            return invalid("temperature outside [0, 2]");
        }
        if self.max_output_tokens == 0 {
            return invalid("max_output_tokens must be positive");
        }
        let has_image = self
            .messages
            .iter()
            .flat_map(|m| &m.parts)
            .any(|p| matches!(p, Part::Image { .. }));
        if has_image && self.purpose != Purpose::Vqa {
            return invalid(&format!("image part under purpose {}", self.purpose.as_str()));
        }
        Ok(())
    }

    /// Canonical JSON transcript: sorted keys, LF line endings, images
    /// replaced by their content hash.
    pub fn canonical_transcript(&self) -> Value {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| {
                let parts: Vec<Value> = m
                    .parts
                    .iter()
                    .map(|p| match p {
                        Part::Text(t) => json!({"type": "text", "text": t.replace("\r\n", "\n")}),
                        Part::Image { media_type, data } => {
                            json!({"type": "image", "media_type": media_type, "sha256": sha256_hex(data)})
                        }
                    })
                    .collect();
                json!({"role": m.role.as_str(), "parts": parts})
            })
            .collect();
        json!({
            "model_id": self.model_id,
            "temperature": self.temperature,
            "max_output_tokens": self.max_output_tokens,
            "purpose": self.purpose.as_str(),
            "messages": messages,
        })
    }
}

/// Content hash of the canonical transcript, 64 lowercase hex chars.
pub fn cache_key(req: &ChatRequest) -> String {
    let canonical = serde_json::to_string(&req.canonical_transcript()).expect("json value serializes");
    sha256_hex(canonical.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Filtered,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Usage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub finish_reason: FinishReason,
    pub usage: Option<Usage>,
}

impl ChatResponse {
    pub fn stop(text: impl Into<String>) -> Self {
        ChatResponse {
            text: text.into(),
            finish_reason: FinishReason::Stop,
            usage: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Live,
    Record,
    Replay,
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "live" => Ok(Mode::Live),
            "record" => Ok(Mode::Record),
            "replay" => Ok(Mode::Replay),
            _ => Err(format!("unknown mode {s:?}")),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum GatewayError {
    #[error("cache miss for key {}", &.key[..12.min(.key.len())])]
    CacheMiss { key: String },
    #[error("provider error after {attempts} attempt(s): {message}")]
    Provider { attempts: u32, message: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("cache I/O at {path}: {message}")]
    Cache { path: PathBuf, message: String },
    #[error("credential missing: set {API_KEY_ENV}")]
    MissingCredential,
}

#[derive(Debug, Clone, Copy)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub base_delay: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy {
            max_retries: 3,
            base_delay: Duration::from_millis(500),
        }
    }
}

impl RetryPolicy {
    pub fn no_delay() -> Self {
        RetryPolicy {
            base_delay: Duration::ZERO,
            ..Default::default()
        }
    }
}

struct Semaphore {
    available: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a Semaphore);

impl Semaphore {
    fn new(n: usize) -> Self {
        Semaphore {
            available: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.available.lock().unwrap_or_else(|e| e.into_inner());
        while *n == 0 {
            n = self.cv.wait(n).unwrap_or_else(|e| e.into_inner());
        }
        *n -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.available.lock().unwrap_or_else(|e| e.into_inner()) += 1;
        self.0.cv.notify_one();
    }
}

type Clock = Arc<dyn Fn() -> String + Send + Sync>;

/// Single entry point for every model call. Safe for concurrent use.
pub struct Gateway {
    mode: Mode,
    cache: Option<Cache>,
    transport: Arc<dyn Transport>,
    retry: RetryPolicy,
    limiter: Semaphore,
    clock: Clock,
}

impl Gateway {
    pub fn new(mode: Mode, cache_dir: Option<PathBuf>, transport: Arc<dyn Transport>) -> Self {
        Gateway {
            mode,
            cache: cache_dir.map(Cache::new),
            transport,
            retry: RetryPolicy::default(),
            limiter: Semaphore::new(DEFAULT_MAX_IN_FLIGHT),
            clock: Arc::new(|| chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
        }
    }

    /// Offline gateway over a cache directory; any network attempt errors.
    pub fn replay(cache_dir: impl Into<PathBuf>) -> Self {
        Gateway::new(Mode::Replay, Some(cache_dir.into()), Arc::new(NoNetwork))
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limiter = Semaphore::new(n);
        self
    }

    /// Overrides the `recorded_at` source.
    pub fn with_clock(mut self, clock: impl Fn() -> String + Send + Sync + 'static) -> Self {
        self.clock = Arc::new(clock);
        self
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn cache(&self) -> Option<&Cache> {
        self.cache.as_ref()
    }

    /// Whether a replay of `req` would hit.
    pub fn is_cached(&self, req: &ChatRequest) -> bool {
        self.cache.as_ref().is_some_and(|c| c.contains(&cache_key(req)))
    }

    pub fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        self.complete_in(req, self.mode)
    }

    pub fn complete_in(&self, req: &ChatRequest, mode: Mode) -> Result<ChatResponse, GatewayError> {
        req.validate()?;
        match mode {
            Mode::Replay => {
                let key = cache_key(req);
                let cache = self.require_cache()?;
                match cache.get(&key)? {
                    Some(entry) => Ok(entry.response),
                    None => Err(GatewayError::CacheMiss { key }),
                }
            }
            Mode::Live => self.send_with_retry(req),
            Mode::Record => {
                let cache = self.require_cache()?;
                let response = self.send_with_retry(req)?;
                cache.put(&CacheEntry {
                    key: cache_key(req),
                    request: req.canonical_transcript(),
                    response: response.clone(),
                    recorded_at: (self.clock)(),
                })?;
                Ok(response)
            }
        }
    }

    fn require_cache(&self) -> Result<&Cache, GatewayError> {
        self.cache.as_ref().ok_or_else(|| GatewayError::Cache {
            path: PathBuf::new(),
            message: "no cache directory configured".into(),
        })
    }

    fn send_with_retry(&self, req: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        let _permit = self.limiter.acquire();
        let mut attempt = 0;
        loop {
            attempt += 1;
            match self.transport.send(req) {
                Ok(resp) if resp.text.is_empty() && resp.finish_reason != FinishReason::Filtered => {
                    return Err(GatewayError::Provider {
                        attempts: attempt,
                        message: "empty response text".into(),
                    })
                }
                Ok(resp) => return Ok(resp),
                Err(TransportError::Transient(message)) => {
                    if attempt > self.retry.max_retries {
                        return Err(GatewayError::Provider { attempts: attempt, message });
                    }
                    log::warn!("transient provider error (attempt {attempt}): {message}");
                    std::thread::sleep(self.retry.base_delay * 2u32.pow(attempt - 1));
                }
                Err(TransportError::Fatal(message)) => {
                    return Err(GatewayError::Provider { attempts: attempt, message })
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::testing::{FailingTransport, FnTransport};
    use super::*;
    use std::sync::atomic::{AtomicUsize, Ordering};

    fn req(text: &str) -> ChatRequest {
        ChatRequest::new("m", Purpose::Generation, vec![Message::user(text)])
    }

    #[test]
    fn key_is_stable_and_sensitive() {
        let a = req("draw");
        assert_eq!(cache_key(&a), cache_key(&a.clone()));
        assert_eq!(cache_key(&a).len(), 64);
        let mut b = a.clone();
        b.temperature = 0.7;
        assert_ne!(cache_key(&a), cache_key(&b));
        let mut c = a.clone();
        c.model_id = "n".into();
        assert_ne!(cache_key(&a), cache_key(&c));
        assert_ne!(cache_key(&a), cache_key(&req("draw ")));
    }

    #[test]
    fn key_ignores_line_ending_style() {
        assert_eq!(cache_key(&req("a\r\nb")), cache_key(&req("a\nb")));
    }

    #[test]
    fn image_only_under_vqa() {
        let msg = Message {
            role: Role::User,
            parts: vec![Part::Image {
                media_type: "image/png".into(),
                data: vec![1, 2, 3],
            }],
        };
        let mut r = ChatRequest::new("m", Purpose::Generation, vec![msg]);
        assert!(matches!(r.validate(), Err(GatewayError::InvalidRequest(_))));
        r.purpose = Purpose::Vqa;
        assert!(r.validate().is_ok());
    }

    #[test]
    fn replay_miss_names_key_prefix() {
        let dir = tempfile::tempdir().unwrap();
        let gw = Gateway::replay(dir.path());
        let r = req("x");
        let err = gw.complete(&r).unwrap_err();
        assert!(err.to_string().contains(&cache_key(&r)[..12]), "{err}");
    }

    #[test]
    fn record_then_replay_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let transport = Arc::new(FnTransport::new(|r: &ChatRequest| {
            Ok(ChatResponse::stop(format!("echo {}", r.messages[0].text_content())))
        }));
        let rec = Gateway::new(Mode::Record, Some(dir.path().into()), transport).with_clock(|| "t0".into());
        let r = req("hello");
        let live = rec.complete(&r).unwrap();
        let failing = Arc::new(FailingTransport::default());
        let rep = Gateway::new(Mode::Replay, Some(dir.path().into()), failing.clone());
        assert_eq!(rep.complete(&r).unwrap(), live);
        assert_eq!(failing.calls(), 0);
        let key = cache_key(&r);
        assert!(dir.path().join(&key[..2]).join(format!("{key}.json")).is_file());
    }

    #[test]
    fn transient_errors_retry_three_times() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let t = Arc::new(FnTransport::new(move |_: &ChatRequest| {
            c.fetch_add(1, Ordering::SeqCst);
            Err(TransportError::Transient("503".into()))
        }));
        let gw = Gateway::new(Mode::Live, None, t).with_retry(RetryPolicy::no_delay());
        match gw.complete(&req("x")) {
            Err(GatewayError::Provider { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("{other:?}"),
        }
        assert_eq!(calls.load(Ordering::SeqCst), 4);
    }

    #[test]
    fn transient_then_success() {
        let calls = Arc::new(AtomicUsize::new(0));
        let c = calls.clone();
        let t = Arc::new(FnTransport::new(move |_: &ChatRequest| {
            if c.fetch_add(1, Ordering::SeqCst) < 2 {
                Err(TransportError::Transient("timeout".into()))
            } else {
                Ok(ChatResponse::stop("ok"))
            }
        }));
        let gw = Gateway::new(Mode::Live, None, t).with_retry(RetryPolicy::no_delay());
        assert_eq!(gw.complete(&req("x")).unwrap().text, "ok");
        assert_eq!(calls.load(Ordering::SeqCst), 3);
    }

    #[test]
    fn fatal_errors_never_retry() {
        let failing = Arc::new(FailingTransport::default());
        let gw = Gateway::new(Mode::Live, None, failing.clone()).with_retry(RetryPolicy::no_delay());
        assert!(gw.complete(&req("x")).is_err());
        assert_eq!(failing.calls(), 1);
    }

    #[test]
    fn in_flight_limit_is_respected() {
        let current = Arc::new(AtomicUsize::new(0));
        let peak = Arc::new(AtomicUsize::new(0));
        let (c, p) = (current.clone(), peak.clone());
        let t = Arc::new(FnTransport::new(move |_: &ChatRequest| {
            let now = c.fetch_add(1, Ordering::SeqCst) + 1;
            p.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(20));
            c.fetch_sub(1, Ordering::SeqCst);
            Ok(ChatResponse::stop("ok"))
        }));
        let gw = Gateway::new(Mode::Live, None, t).with_max_in_flight(2);
        std::thread::scope(|s| {
            for i in 0..8 {
                let gw = &gw;
                s.spawn(move || gw.complete(&req(&i.to_string())).unwrap());
            }
        });
        assert!(peak.load(Ordering::SeqCst) <= 2);
        assert!(peak.load(Ordering::SeqCst) >= 1);
    }

    #[test]
    fn empty_text_requires_filtered() {
        let t = Arc::new(FnTransport::new(|_: &ChatRequest| Ok(ChatResponse::stop(""))));
        let gw = Gateway::new(Mode::Live, None, t);
        assert!(matches!(gw.complete(&req("x")), Err(GatewayError::Provider { .. })));
    }
}
