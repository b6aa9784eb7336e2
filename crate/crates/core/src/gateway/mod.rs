//! Provider-agnostic chat-completion gateway.
//!
//! All LLM traffic flows through [`Gateway`], which retries transport
//! failures with exponential backoff, repairs and validates structured
//! replies, and records every backend reply in a per-stage [`Ledger`].

mod ledger;
mod retry;
pub mod scripted;
mod structured;
pub mod synthetic;
mod tokenizer;

#[cfg(feature = "http")]
pub mod http;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::exec::ExecMode;

pub use ledger::{CostLedger, Ledger, Stage, Usage};
pub use retry::RetryPolicy;
pub use scripted::ScriptedBackend;
pub use structured::{extract_json_block, StructuredShape, ValueKind};
pub use synthetic::SyntheticBackend;
pub use tokenizer::{estimate_tokens, Tokenizer};

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error: {0}")]
    Transport(String),
    #[error("backend refused to answer: {0}")]
    BackendRefusal(String),
    #[error("no valid structured reply after {attempts} attempts ({reason}); last reply: {last_raw:?}")]
    Structure {
        attempts: u32,
        reason: String,
        last_raw: String,
    },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
}

/// Sampling settings forwarded to the backend.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecodingParams {
    pub temperature: f64,
    pub top_p: f64,
    pub max_output_tokens: u32,
}

impl Default for DecodingParams {
    fn default() -> Self {
        DecodingParams {
            temperature: 0.7,
            top_p: 0.8,
            max_output_tokens: 4096,
        }
    }
}

impl DecodingParams {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(GatewayError::InvalidRequest("temperature must be >= 0".into()));
        }
        if !(0.0..=1.0).contains(&self.top_p) || self.top_p == 0.0 {
            return Err(GatewayError::InvalidRequest("top_p must lie in (0, 1]".into()));
        }
        if self.max_output_tokens == 0 {
            return Err(GatewayError::InvalidRequest(
                "max_output_tokens must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub system_text: String,
    pub user_text: String,
    pub decoding: DecodingParams,
    pub tag: Stage,
}

impl ChatRequest {
    pub fn new(tag: Stage, user_text: impl Into<String>) -> Self {
        ChatRequest {
            system_text: String::new(),
            user_text: user_text.into(),
            decoding: DecodingParams::default(),
            tag,
        }
    }

    pub fn with_system(mut self, system_text: impl Into<String>) -> Self {
        self.system_text = system_text.into();
        self
    }

    pub fn with_decoding(mut self, decoding: DecodingParams) -> Self {
        self.decoding = decoding;
        self
    }

    pub fn validate(&self) -> Result<(), GatewayError> {
        if self.user_text.trim().is_empty() {
            return Err(GatewayError::InvalidRequest("user_text is empty".into()));
        }
        self.decoding.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub text: String,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub backend_id: String,
}

/// What a backend returns for one call. `usage` is `(input, output)` when
/// the provider reports it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackendReply {
    pub text: String,
    pub usage: Option<(u64, u64)>,
}

impl BackendReply {
    pub fn text(text: impl Into<String>) -> Self {
        BackendReply {
            text: text.into(),
            usage: None,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum BackendError {
    #[error("{message}")]
    Transport { message: String, retryable: bool },
    /// The backend has no answer for this request (e.g. a mock without a
    /// matching script entry). Not retried.
    #[error("{0}")]
    NoAnswer(String),
}

/// A chat-completion provider.
pub trait Backend: Send + Sync {
    fn id(&self) -> &str;

    fn call(&self, request: &ChatRequest) -> Result<BackendReply, BackendError>;

    /// True when replies depend on the order calls arrive in (e.g. ordinal
    /// script entries). Callers then run sequentially to stay deterministic.
    fn order_sensitive(&self) -> bool {
        false
    }
}

/// Chat client bound to one ledger.
#[derive(Clone)]
pub struct Gateway {
    backend: Arc<dyn Backend>,
    ledger: Arc<Ledger>,
    tokenizer: Tokenizer,
    retry: RetryPolicy,
    exec: ExecMode,
}

impl std::fmt::Debug for Gateway {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Gateway")
            .field("backend", &self.backend.id())
            .field("tokenizer", &self.tokenizer)
            .field("retry", &self.retry)
            .field("exec", &self.exec)
            .finish()
    }
}

impl Gateway {
    pub fn new(backend: Arc<dyn Backend>) -> Self {
        let exec = if backend.order_sensitive() {
            ExecMode::Sequential
        } else {
            ExecMode::Parallel
        };
        Gateway {
            backend,
            ledger: Arc::new(Ledger::new()),
            tokenizer: Tokenizer::Default,
            retry: RetryPolicy::default(),
            exec,
        }
    }

    pub fn with_tokenizer(mut self, tokenizer: Tokenizer) -> Self {
        self.tokenizer = tokenizer;
        self
    }

    pub fn with_retry(mut self, retry: RetryPolicy) -> Self {
        self.retry = retry;
        self
    }

    /// Requested scheduling; order-sensitive backends always run sequentially.
    pub fn with_exec(mut self, exec: ExecMode) -> Self {
        self.exec = if self.backend.order_sensitive() {
            ExecMode::Sequential
        } else {
            exec
        };
        self
    }

    /// Same backend and settings, fresh ledger.
    pub fn fork(&self) -> Gateway {
        Gateway {
            ledger: Arc::new(Ledger::new()),
            ..self.clone()
        }
    }

    pub fn tokenizer(&self) -> Tokenizer {
        self.tokenizer
    }

    pub fn retry_policy(&self) -> &RetryPolicy {
        &self.retry
    }

    pub fn exec(&self) -> ExecMode {
        self.exec
    }

    pub fn backend_id(&self) -> &str {
        self.backend.id()
    }

    pub fn ledger(&self) -> CostLedger {
        self.ledger.snapshot()
    }

    pub fn estimate_tokens(&self, text: &str) -> usize {
        self.tokenizer.count(text)
    }

    /// One chat completion. Every backend reply (including empty replies
    /// that get retried) is recorded in the ledger under the request's tag.
    pub fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, GatewayError> {
        request.validate()?;
        let mut attempt = 0u32;
        loop {
            match self.backend.call(request) {
                Ok(reply) => {
                    let (input_tokens, output_tokens) = reply.usage.unwrap_or_else(|| {
                        let prompt =
                            self.tokenizer.count(&request.system_text) + self.tokenizer.count(&request.user_text);
                        (prompt as u64, self.tokenizer.count(&reply.text) as u64)
                    });
                    self.ledger.record(request.tag, input_tokens, output_tokens);
                    if reply.text.trim().is_empty() {
                        if attempt < self.retry.transport_retries {
                            attempt += 1;
                            self.retry.sleep(attempt);
                            continue;
                        }
                        return Err(GatewayError::BackendRefusal(format!(
                            "empty reply after {} attempts",
                            attempt + 1
                        )));
                    }
                    return Ok(ChatResponse {
                        text: reply.text,
                        input_tokens,
                        output_tokens,
                        backend_id: self.backend.id().to_string(),
                    });
                }
                Err(BackendError::Transport { message, retryable }) => {
                    if retryable && attempt < self.retry.transport_retries {
                        attempt += 1;
                        tracing::warn!(attempt, %message, "transport failure, retrying");
                        self.retry.sleep(attempt);
                        continue;
                    }
                    return Err(GatewayError::Transport(message));
                }
                Err(BackendError::NoAnswer(msg)) => return Err(GatewayError::BackendRefusal(msg)),
            }
        }
    }

    /// Completion whose reply must contain a JSON object matching `shape`.
    pub fn complete_structured(
        &self,
        request: &ChatRequest,
        shape: &StructuredShape,
        max_retries: u32,
    ) -> Result<serde_json::Value, GatewayError> {
        self.complete_parsed(request, max_retries, |raw| shape.parse(raw))
    }

    /// Completion with a caller-supplied parser. A rejected reply triggers a
    /// re-issue of the request with a corrective instruction appended, up to
    /// `max_retries` times.
    pub fn complete_parsed<T, F>(&self, request: &ChatRequest, max_retries: u32, parse: F) -> Result<T, GatewayError>
    where
        F: Fn(&str) -> Result<T, String>,
    {
        let mut current = request.clone();
        let mut attempts = 0;
        loop {
            attempts += 1;
            let response = self.complete(&current)?;
            match parse(&response.text) {
                Ok(v) => return Ok(v),
                Err(reason) if attempts > max_retries => {
                    return Err(GatewayError::Structure {
                        attempts,
                        reason,
                        last_raw: response.text,
                    })
                }
                Err(reason) => {
                    tracing::debug!(attempts, %reason, "structured reply rejected");
                    current.user_text = corrective(&request.user_text, &reason);
                }
            }
        }
    }
}

fn corrective(original: &str, reason: &str) -> String {
    format!(
        "{original}\n\nYour previous reply could not be used ({reason}). \
         Answer again with ONLY the requested JSON object and no other text."
    )
}
