//! Blocking chat-completions client with retry and exponential backoff.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

pub const API_KEY_ENV: &str = "ELICAL_JUDGE_API_KEY";

/// Connection settings for an OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChatEndpoint {
    pub endpoint_url: String,
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_retries")]
    pub max_retries: u32,
    /// First backoff delay; doubles on every retry.
    #[serde(default = "default_backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
}

fn default_retries() -> u32 {
    3
}

fn default_backoff_ms() -> u64 {
    1000
}

fn default_timeout_secs() -> u64 {
    120
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum TransportError {
    #[error("request failed after {attempts} attempts: {message}")]
    Exhausted { attempts: u32, message: String },
    #[error("malformed completion body: {0}")]
    Body(String),
}

/// Anything that turns a single user prompt into a reply.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, prompt: &str) -> Result<String, TransportError>;
}

pub struct HttpChat {
    endpoint: ChatEndpoint,
    agent: ureq::Agent,
    api_key: Option<String>,
}

impl HttpChat {
    pub fn new(endpoint: ChatEndpoint) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(endpoint.timeout_secs)))
            .build()
            .into();
        Self {
            endpoint,
            agent,
            api_key: std::env::var(API_KEY_ENV).ok().filter(|k| !k.is_empty()),
        }
    }

    fn url(&self) -> String {
        format!("{}/chat/completions", self.endpoint.endpoint_url.trim_end_matches('/'))
    }

    fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.endpoint.model,
            "messages": [{ "role": "user", "content": prompt }],
            "temperature": self.endpoint.temperature,
        })
    }

    fn attempt(&self, prompt: &str) -> Result<Value, String> {
        let mut req = self.agent.post(&self.url());
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(self.request_body(prompt))
            .map_err(|e| e.to_string())?;
        resp.body_mut().read_json::<Value>().map_err(|e| e.to_string())
    }
}

pub fn reply_content(body: &Value) -> Result<String, TransportError> {
    body.pointer("/choices/0/message/content")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| TransportError::Body(body.to_string()))
}

impl ChatBackend for HttpChat {
    fn complete(&self, prompt: &str) -> Result<String, TransportError> {
        let attempts = self.endpoint.max_retries + 1;
        let mut delay = Duration::from_millis(self.endpoint.backoff_ms);
        let mut last = String::new();
        for attempt in 0..attempts {
            match self.attempt(prompt) {
                Ok(body) => return reply_content(&body),
                Err(e) => {
                    log::warn!("chat request attempt {} of {attempts} failed: {e}", attempt + 1);
                    last = e;
                }
            }
            if attempt + 1 < attempts {
                std::thread::sleep(delay);
                delay *= 2;
            }
        }
        Err(TransportError::Exhausted {
            attempts,
            message: last,
        })
    }
}
