//! Chat-completion transports: live HTTP, a write-through response cache,
//! and a replay of recorded responses.
//!
//! Cache and replay directories share one layout: `<prompt hash>.txt` holds
//! the raw response text for the request with that hash.

use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::throttle::Throttle;
use crate::agents::ProviderError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: "system".into(), content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: "user".into(), content: content.into() }
    }
}

/// Request body of an OpenAI-compatible `chat/completions` call.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Hex sha256 over the model name and messages. Temperature is left out
    /// so that recorded answers stay addressable when it is tuned.
    pub fn prompt_hash(&self) -> String {
        let key = serde_json::json!({ "model": self.model, "messages": self.messages });
        hex::encode(Sha256::digest(key.to_string().as_bytes()))
    }
}

pub trait Transport: Send + Sync {
    /// Returns the assistant message text.
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError>;

    /// Number of requests that reached the network.
    fn network_calls(&self) -> usize {
        0
    }
}

impl<T: Transport + ?Sized> Transport for std::sync::Arc<T> {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        (**self).complete(req)
    }

    fn network_calls(&self) -> usize {
        (**self).network_calls()
    }
}

pub struct HttpTransport {
    url: String,
    api_key: String,
    agent: ureq::Agent,
    throttle: Throttle,
    calls: AtomicUsize,
}

impl std::fmt::Debug for HttpTransport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpTransport")
            .field("url", &self.url)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ChatMessage,
}

impl HttpTransport {
    pub fn new(endpoint_url: &str, api_key: String, timeout: Duration, requests_per_minute: u32) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build();
        Self {
            url: format!("{}/chat/completions", endpoint_url.trim_end_matches('/')),
            api_key,
            agent: ureq::Agent::new_with_config(config),
            throttle: Throttle::new(requests_per_minute),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn url(&self) -> &str {
        &self.url
    }
}

impl Transport for HttpTransport {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        self.throttle.acquire();
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut resp = self
            .agent
            .post(&self.url)
            .header("Authorization", &format!("Bearer {}", self.api_key))
            .send_json(req)
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.body_mut().read_to_string().unwrap_or_default();
            let snippet: String = body.chars().take(200).collect();
            return Err(ProviderError::Transport(format!("HTTP {status}: {snippet}")));
        }
        let completion: Completion = resp
            .body_mut()
            .read_json()
            .map_err(|e| ProviderError::Malformed(format!("completion body: {e}")))?;
        completion
            .choices
            .into_iter()
            .next()
            .map(|c| c.message.content)
            .ok_or_else(|| ProviderError::Malformed("completion has no choices".into()))
    }

    fn network_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

fn response_path(dir: &Path, req: &ChatRequest) -> PathBuf {
    dir.join(format!("{}.txt", req.prompt_hash()))
}

/// Serves repeated prompts from disk and records fresh answers.
pub struct CachedTransport<T> {
    inner: T,
    dir: PathBuf,
}

impl<T: Transport> CachedTransport<T> {
    pub fn new(inner: T, dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { inner, dir })
    }

    pub fn inner(&self) -> &T {
        &self.inner
    }
}

impl<T: Transport> Transport for CachedTransport<T> {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let path = response_path(&self.dir, req);
        if let Ok(text) = std::fs::read_to_string(&path) {
            return Ok(text);
        }
        let text = self.inner.complete(req)?;
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        let written = std::fs::write(&tmp, &text).and_then(|()| std::fs::rename(&tmp, &path));
        if let Err(e) = written {
            log::warn!("could not cache response {}: {e}", path.display());
        }
        Ok(text)
    }

    fn network_calls(&self) -> usize {
        self.inner.network_calls()
    }
}

/// Answers only from recorded responses; never touches the network.
#[derive(Debug)]
pub struct ReplayTransport {
    dir: PathBuf,
    served: AtomicUsize,
}

impl ReplayTransport {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into(), served: AtomicUsize::new(0) }
    }

    /// Records `response` as the answer to `req`.
    pub fn record(dir: &Path, req: &ChatRequest, response: &str) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = response_path(dir, req);
        std::fs::write(&path, response)?;
        Ok(path)
    }

    pub fn served(&self) -> usize {
        self.served.load(Ordering::SeqCst)
    }
}

impl Transport for ReplayTransport {
    fn complete(&self, req: &ChatRequest) -> Result<String, ProviderError> {
        let path = response_path(&self.dir, req);
        let text = std::fs::read_to_string(&path).map_err(|_| {
            ProviderError::Unavailable(format!("no recorded response for prompt {}", req.prompt_hash()))
        })?;
        self.served.fetch_add(1, Ordering::SeqCst);
        Ok(text)
    }
}
