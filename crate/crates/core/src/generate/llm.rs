//! Chat-model generator over a pluggable transport.
//!
//! The transport speaks an OpenAI-compatible chat-completions exchange; the
//! HTTP implementation lives in the service crate, so the core stays free
//! of network code.

use serde::{Deserialize, Serialize};

use super::{Generator, GeneratorError, PromptBundle, ProposalRequest};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        Self {
            role: "system".into(),
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

/// Request body for `POST {api_base}/chat/completions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
    pub n: usize,
}

impl ChatRequest {
    pub fn from_prompt(model: &str, prompt: &PromptBundle, temperature: f64, n: usize) -> Self {
        Self {
            model: model.to_string(),
            messages: vec![ChatMessage::system(&prompt.system), ChatMessage::user(prompt.user_message())],
            temperature,
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TransportError {
    /// Worth retrying: timeouts, connection resets, 429 and 5xx.
    Transient(String),
    /// Retrying will not help: bad credentials, malformed requests.
    Fatal(String),
}

impl std::fmt::Display for TransportError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TransportError::Transient(m) | TransportError::Fatal(m) => f.write_str(m),
        }
    }
}

/// Sends one chat-completions request and returns the message contents of
/// its choices, in choice order.
pub trait ChatTransport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, TransportError>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub model: String,
    pub max_retries: usize,
    /// Base delay between retries, doubled after each failure.
    pub retry_backoff_ms: u64,
}

impl Default for LlmSettings {
    fn default() -> Self {
        Self {
            model: "gpt-4".into(),
            max_retries: 3,
            retry_backoff_ms: 500,
        }
    }
}

pub struct LlmGenerator<T: ChatTransport> {
    transport: T,
    settings: LlmSettings,
    sleep: fn(std::time::Duration),
}

impl<T: ChatTransport> LlmGenerator<T> {
    pub fn new(transport: T, settings: LlmSettings) -> Self {
        Self {
            transport,
            settings,
            sleep: std::thread::sleep,
        }
    }

    /// Replace the retry delay function (tests use a no-op).
    pub fn with_sleep(mut self, sleep: fn(std::time::Duration)) -> Self {
        self.sleep = sleep;
        self
    }

    pub fn transport(&self) -> &T {
        &self.transport
    }

    fn request_with_retries(&self, request: &ChatRequest) -> Result<Vec<String>, GeneratorError> {
        let mut attempts = 0;
        loop {
            attempts += 1;
            match self.transport.complete(request) {
                Ok(choices) => return Ok(choices),
                Err(TransportError::Transient(m)) if attempts <= self.settings.max_retries => {
                    log::warn!("chat request failed (attempt {attempts}): {m}");
                    let delay = self.settings.retry_backoff_ms.saturating_mul(1 << (attempts - 1).min(10));
                    (self.sleep)(std::time::Duration::from_millis(delay));
                }
                Err(e) => {
                    return Err(GeneratorError::Transport {
                        attempts,
                        message: e.to_string(),
                    })
                }
            }
        }
    }
}

impl<T: ChatTransport> Generator for LlmGenerator<T> {
    fn kind(&self) -> &'static str {
        "llm"
    }

    /// Asks for all `k` samples at once, then tops up if the service returns
    /// fewer choices than requested.
    fn propose_raw(&mut self, request: &ProposalRequest<'_>) -> Result<Vec<String>, GeneratorError> {
        let mut out: Vec<String> = Vec::with_capacity(request.k);
        let mut empty_rounds = 0;
        while out.len() < request.k {
            let want = request.k - out.len();
            let chat = ChatRequest::from_prompt(&self.settings.model, request.prompt, request.temperature, want);
            let choices = self.request_with_retries(&chat)?;
            if choices.is_empty() {
                empty_rounds += 1;
                if empty_rounds > self.settings.max_retries {
                    return Err(GeneratorError::Transport {
                        attempts: empty_rounds,
                        message: "service returned no choices".into(),
                    });
                }
                continue;
            }
            out.extend(choices.into_iter().take(want));
        }
        Ok(out)
    }

    fn is_deterministic(&self) -> bool {
        false
    }
}

impl ChatTransport for Box<dyn ChatTransport> {
    fn complete(&self, request: &ChatRequest) -> Result<Vec<String>, TransportError> {
        (**self).complete(request)
    }
}
