//! Transports for tests and fixture authoring.

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{ChatRequest, ChatResponse, Transport, TransportError};

/// Fails every call and counts attempts. Used to prove replay is offline.
#[derive(Debug, Default)]
pub struct FailingTransport {
    calls: AtomicUsize,
}

impl FailingTransport {
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl Transport for FailingTransport {
    fn send(&self, _req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Err(TransportError::Fatal("network use forbidden".into()))
    }
}

/// Answers calls in order from a fixed script of texts.
#[derive(Debug, Default)]
pub struct ScriptedTransport {
    replies: Mutex<VecDeque<String>>,
    seen: Mutex<Vec<ChatRequest>>,
}

impl ScriptedTransport {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        ScriptedTransport {
            replies: Mutex::new(replies.into_iter().map(Into::into).collect()),
            seen: Mutex::new(Vec::new()),
        }
    }

    /// Requests received so far, in order.
    pub fn requests(&self) -> Vec<ChatRequest> {
        self.seen.lock().unwrap().clone()
    }

    pub fn remaining(&self) -> usize {
        self.replies.lock().unwrap().len()
    }
}

impl Transport for ScriptedTransport {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        self.seen.lock().unwrap().push(req.clone());
        self.replies
            .lock()
            .unwrap()
            .pop_front()
            .map(ChatResponse::stop)
            .ok_or_else(|| TransportError::Fatal("script exhausted".into()))
    }
}

type Handler = Box<dyn Fn(&ChatRequest) -> Result<ChatResponse, TransportError> + Send + Sync>;

/// Delegates each call to a closure.
pub struct FnTransport(Handler);

impl FnTransport {
    pub fn new(f: impl Fn(&ChatRequest) -> Result<ChatResponse, TransportError> + Send + Sync + 'static) -> Self {
        FnTransport(Box::new(f))
    }
}

impl Transport for FnTransport {
    fn send(&self, req: &ChatRequest) -> Result<ChatResponse, TransportError> {
        (self.0)(req)
    }
}
