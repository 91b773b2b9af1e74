//! OpenAI-compatible chat-completions adapter.

use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{CallMeta, Provider, ProviderError, Request};

pub const API_KEY_ENV: &str = "FLEXNAV_API_KEY";
pub const API_BASE_ENV: &str = "FLEXNAV_API_BASE";

/// Connection settings for one role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChatBinding {
    /// Base URL; `/chat/completions` is appended. Empty means `$FLEXNAV_API_BASE`.
    pub endpoint: String,
    pub model: String,
    pub timeout_secs: u64,
    pub retries: u32,
    pub max_concurrency: Option<usize>,
    pub temperature: f64,
    /// Inline key; the environment variable is used when absent.
    pub api_key: Option<String>,
}

impl Default for ChatBinding {
    fn default() -> Self {
        Self {
            endpoint: String::new(),
            model: String::new(),
            timeout_secs: 60,
            retries: 2,
            max_concurrency: Some(4),
            temperature: 0.0,
            api_key: None,
        }
    }
}

pub struct ChatAdapter {
    binding: ChatBinding,
    url: String,
    api_key: Option<String>,
    client: reqwest::blocking::Client,
}

impl ChatAdapter {
    pub fn new(binding: ChatBinding) -> Result<Self, ProviderError> {
        let base = if binding.endpoint.is_empty() {
            std::env::var(API_BASE_ENV)
                .map_err(|_| ProviderError::Failed(format!("no endpoint configured and ${API_BASE_ENV} unset")))?
        } else {
            binding.endpoint.clone()
        };
        let url = format!("{}/chat/completions", base.trim_end_matches('/'));
        let api_key = binding.api_key.clone().or_else(|| std::env::var(API_KEY_ENV).ok());
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(binding.timeout_secs.max(1)))
            .build()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        Ok(Self {
            binding,
            url,
            api_key,
            client,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, ProviderError> {
        let mut req = self.client.post(&self.url).json(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status();
        let text = resp.text().map_err(|e| ProviderError::Transport(e.to_string()))?;
        if !status.is_success() {
            return Err(ProviderError::Http {
                status: status.as_u16(),
                body: text,
            });
        }
        extract_content(&text)
    }
}

fn extract_content(body: &str) -> Result<String, ProviderError> {
    let value: serde_json::Value =
        serde_json::from_str(body).map_err(|e| ProviderError::Failed(format!("response is not JSON: {e}")))?;
    value["choices"][0]["message"]["content"]
        .as_str()
        .map(str::to_string)
        .ok_or_else(|| ProviderError::Failed("response has no choices[0].message.content".into()))
}

fn retryable(e: &ProviderError) -> bool {
    match e {
        ProviderError::Transport(_) => true,
        ProviderError::Http { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl Provider for ChatAdapter {
    fn respond(&self, meta: &CallMeta, request: &Request) -> Result<String, ProviderError> {
        let body = json!({
            "model": self.binding.model,
            "temperature": self.binding.temperature,
            "messages": request.messages(),
        });
        let mut delay = Duration::from_millis(250);
        let mut attempt = 0;
        loop {
            match self.attempt(&body) {
                Err(e) if attempt < self.binding.retries && retryable(&e) => {
                    log::warn!("[{}] {} call #{} failed ({e}); retrying", meta.episode_id, meta.role, meta.seq);
                    std::thread::sleep(delay);
                    delay *= 2;
                    attempt += 1;
                }
                other => return other,
            }
        }
    }

    fn max_concurrency(&self) -> Option<usize> {
        self.binding.max_concurrency
    }
}
