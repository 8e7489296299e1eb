//! Remote chat-completion backend: JSON POST with bearer-token auth,
//! bounded retry with exponential backoff, and an optional replay log.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::PathBuf;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use cogcmd_core::gateway::{
    CompletionBackend, CompletionRequest, CompletionResponse, GatewayError, RoleTag, TokenUsage,
};

pub const DEFAULT_API_KEY_ENV: &str = "COGCMD_API_KEY";

#[derive(Debug, Clone)]
pub struct HttpBackendConfig {
    pub base_url: String,
    pub model: String,
    pub api_key_env: String,
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    pub replay_log: Option<PathBuf>,
}

impl HttpBackendConfig {
    pub fn new(base_url: String, model: String) -> Self {
        HttpBackendConfig {
            base_url,
            model,
            api_key_env: DEFAULT_API_KEY_ENV.to_string(),
            max_attempts: 3,
            initial_backoff: Duration::from_millis(200),
            replay_log: None,
        }
    }
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireContent,
}

#[derive(Deserialize)]
struct WireContent {
    content: String,
}

#[derive(Deserialize)]
struct WireUsage {
    prompt_tokens: u32,
    completion_tokens: u32,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
    usage: Option<WireUsage>,
}

#[derive(Serialize)]
struct ReplayEntry<'a> {
    role_tag: RoleTag,
    request: &'a serde_json::Value,
    response: &'a str,
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    api_key: String,
    client: reqwest::blocking::Client,
    replay: Option<Mutex<std::fs::File>>,
}

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<Self, GatewayError> {
        let api_key = std::env::var(&config.api_key_env).map_err(|_| {
            GatewayError::Config(format!(
                "API key environment variable {} is not set",
                config.api_key_env
            ))
        })?;
        let replay = match &config.replay_log {
            Some(path) => Some(Mutex::new(
                OpenOptions::new()
                    .create(true)
                    .append(true)
                    .open(path)
                    .map_err(|e| GatewayError::Config(format!("replay log: {e}")))?,
            )),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(60))
            .build()
            .map_err(|e| GatewayError::Config(e.to_string()))?;
        Ok(HttpBackend {
            config,
            api_key,
            client,
            replay,
        })
    }

    fn attempt(&self, body: &serde_json::Value) -> Result<String, GatewayError> {
        let response = self
            .client
            .post(&self.config.base_url)
            .bearer_auth(&self.api_key)
            .json(body)
            .send()
            .map_err(|e| GatewayError::Transport {
                message: e.to_string(),
                retryable: true,
            })?;
        let status = response.status();
        let text = response.text().map_err(|e| GatewayError::Transport {
            message: e.to_string(),
            retryable: true,
        })?;
        if !status.is_success() {
            // Server-side and rate-limit failures are worth retrying;
            // client errors are not.
            let retryable = status.is_server_error() || status.as_u16() == 429;
            return Err(GatewayError::Transport {
                message: format!("HTTP {status}: {text}"),
                retryable,
            });
        }
        Ok(text)
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let wire = WireRequest {
            model: &self.config.model,
            messages: vec![
                WireMessage { role: "system", content: &request.prompt_text },
                WireMessage { role: "user", content: &request.input_text },
            ],
            temperature: request.temperature,
            max_tokens: request.max_tokens,
        };
        let body = serde_json::to_value(&wire)
            .map_err(|e| GatewayError::Config(e.to_string()))?;

        let started = Instant::now();
        let mut backoff = self.config.initial_backoff;
        let mut last_err = None;
        let mut raw = None;
        for attempt in 0..self.config.max_attempts {
            match self.attempt(&body) {
                Ok(text) => {
                    raw = Some(text);
                    break;
                }
                Err(err) => {
                    let retryable = matches!(
                        err,
                        GatewayError::Transport { retryable: true, .. }
                    );
                    last_err = Some(err);
                    if !retryable || attempt + 1 == self.config.max_attempts {
                        break;
                    }
                    std::thread::sleep(backoff);
                    backoff *= 2;
                }
            }
        }
        let raw = match raw {
            Some(raw) => raw,
            None => return Err(last_err.unwrap()),
        };

        let parsed: WireResponse = serde_json::from_str(&raw).map_err(|e| {
            GatewayError::Transport {
                message: format!("unparseable completion body: {e}"),
                retryable: false,
            }
        })?;
        let text = parsed
            .choices
            .first()
            .map(|c| c.message.content.clone())
            .unwrap_or_default();
        if text.is_empty() {
            return Err(GatewayError::EmptyResponse);
        }

        if let Some(replay) = &self.replay {
            let entry = ReplayEntry {
                role_tag: request.role_tag,
                request: &body,
                response: &text,
            };
            let mut file = replay.lock().unwrap();
            let _ = serde_json::to_writer(&mut *file, &entry);
            let _ = file.write_all(b"\n");
        }

        Ok(CompletionResponse {
            text,
            backend_id: self.backend_id().to_string(),
            usage: parsed.usage.map(|u| TokenUsage {
                prompt_tokens: u.prompt_tokens,
                completion_tokens: u.completion_tokens,
            }),
            latency: Some(started.elapsed()),
        })
    }

    fn backend_id(&self) -> &str {
        "http"
    }
}
