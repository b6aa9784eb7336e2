//! Live backend speaking the chat-completions wire format.
//!
//! `POST {endpoint}` with
//! `{"model", "messages": [{"role":"system"},{"role":"user"}], "temperature", "top_p", "max_tokens"}`
//! and reads `choices[0].message.content` plus `usage.prompt_tokens` /
//! `usage.completion_tokens` from the reply. The bearer token is read from an
//! environment variable.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Backend, BackendError, BackendReply, ChatRequest};

pub const DEFAULT_API_KEY_ENV: &str = "DISCOURSE_MT_API_KEY";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HttpConfig {
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    DEFAULT_API_KEY_ENV.to_string()
}

fn default_timeout() -> u64 {
    300
}

pub struct HttpBackend {
    id: String,
    config: HttpConfig,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| BackendError::Transport {
                message: format!("cannot build HTTP client: {e}"),
                retryable: false,
            })?;
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Ok(HttpBackend {
            id: format!("http:{}", config.model),
            config,
            api_key,
            client,
        })
    }

    fn body(&self, request: &ChatRequest) -> serde_json::Value {
        let mut messages = Vec::new();
        if !request.system_text.is_empty() {
            messages.push(json!({"role": "system", "content": request.system_text}));
        }
        messages.push(json!({"role": "user", "content": request.user_text}));
        json!({
            "model": self.config.model,
            "messages": messages,
            "temperature": request.decoding.temperature,
            "top_p": request.decoding.top_p,
            "max_tokens": request.decoding.max_output_tokens,
        })
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
    usage: Option<WireUsage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u64,
    completion_tokens: u64,
}

/// Decodes a chat-completions response body.
pub fn parse_completion(body: &str) -> Result<BackendReply, BackendError> {
    let c: Completion = serde_json::from_str(body).map_err(|e| BackendError::Transport {
        message: format!("malformed completion body: {e}"),
        retryable: false,
    })?;
    let text = c
        .choices
        .into_iter()
        .next()
        .and_then(|ch| ch.message.content)
        .unwrap_or_default();
    Ok(BackendReply {
        text,
        usage: c.usage.map(|u| (u.prompt_tokens, u.completion_tokens)),
    })
}

impl Backend for HttpBackend {
    fn id(&self) -> &str {
        &self.id
    }

    fn call(&self, request: &ChatRequest) -> Result<BackendReply, BackendError> {
        let mut req = self.client.post(&self.config.endpoint).json(&self.body(request));
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| BackendError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        let status = resp.status();
        let body = resp.text().map_err(|e| BackendError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        if !status.is_success() {
            return Err(BackendError::Transport {
                message: format!("HTTP {status}: {}", body.chars().take(300).collect::<String>()),
                retryable: status.as_u16() == 429 || status.is_server_error(),
            });
        }
        parse_completion(&body)
    }
}
