//! Chat-completions client (POST `{base_url}/chat/completions`).

use std::time::Duration;

use serde::Deserialize;
use serde_json::json;

use super::{net, GenerationBackend, GenerationError, GenerationRequest};

/// Environment variable holding the bearer token.
pub const API_KEY_ENV: &str = "MEMQ_API_KEY";

pub struct ChatCompletionsBackend {
    name: String,
    base_url: String,
    model: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    content: Option<String>,
}

impl ChatCompletionsBackend {
    /// Reads the API key from [`API_KEY_ENV`] if set.
    pub fn new(base_url: &str, model: &str) -> Result<Self, GenerationError> {
        Self::with_key(base_url, model, std::env::var(API_KEY_ENV).ok())
    }

    pub fn with_key(base_url: &str, model: &str, api_key: Option<String>) -> Result<Self, GenerationError> {
        let client = reqwest::blocking::Client::builder()
            .build()
            .map_err(|e| GenerationError::Transport(e.to_string()))?;
        Ok(ChatCompletionsBackend {
            name: format!("chat:{model}"),
            base_url: base_url.trim_end_matches('/').to_string(),
            model: model.to_string(),
            api_key,
            client,
        })
    }

    pub fn model(&self) -> &str {
        &self.model
    }
}

fn retry_after(headers: &reqwest::header::HeaderMap) -> Option<Duration> {
    let v = headers.get(reqwest::header::RETRY_AFTER)?.to_str().ok()?;
    v.trim().parse::<f64>().ok().filter(|s| *s >= 0.0).map(Duration::from_secs_f64)
}

impl GenerationBackend for ChatCompletionsBackend {
    fn name(&self) -> &str {
        &self.name
    }

    fn is_remote(&self) -> bool {
        true
    }

    fn complete(&self, request: &GenerationRequest<'_>) -> Result<String, GenerationError> {
        if !net::network_allowed() {
            return Err(GenerationError::NetworkDenied);
        }
        let body = json!({
            "model": self.model,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.params.temperature,
            "max_tokens": request.params.max_tokens,
        });
        let mut req = self
            .client
            .post(format!("{}/chat/completions", self.base_url))
            .timeout(request.params.timeout)
            .json(&body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        net::record_request();
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                GenerationError::Timeout
            } else {
                GenerationError::Transport(e.to_string())
            }
        })?;
        let status = resp.status();
        if status.as_u16() == 429 {
            return Err(GenerationError::RateLimited {
                retry_after: retry_after(resp.headers()),
            });
        }
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(GenerationError::Endpoint {
                status: status.as_u16(),
                body,
            });
        }
        let parsed: Completion = resp.json().map_err(|e| {
            if e.is_timeout() {
                GenerationError::Timeout
            } else {
                GenerationError::Malformed(e.to_string())
            }
        })?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| GenerationError::Malformed("no choices in response".into()))
    }
}
