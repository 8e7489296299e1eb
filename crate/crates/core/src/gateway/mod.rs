//! One completion interface over interchangeable backends.
//!
//! Three backends implement [`CompletionBackend`]: a remote HTTP
//! chat-completion client (lives in the companion CLI crate), a table-driven
//! fixture backend for scripted tests, and a rule-based pseudo-LLM that
//! scores marker statistics deterministically. Everything LLM-dependent in
//! the pipeline runs offline through the latter two.

mod fixture;
mod rule;

pub use fixture::{FixtureBackend, FixtureEntry};
pub use rule::{RuleBackend, WeightDirectives};

use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textutil::tokenize;
use crate::types::Label;

/// The Algorithm-level role issuing a completion request.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoleTag {
    Extractor,
    Classifier,
    Refiner,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    pub role_tag: RoleTag,
    pub prompt_text: String,
    pub input_text: String,
    pub temperature: f64,
    pub max_tokens: u32,
}

impl CompletionRequest {
    /// Temperature defaults to 0 for reproducibility.
    pub fn new(role_tag: RoleTag, prompt_text: String, input_text: String) -> Self {
        CompletionRequest {
            role_tag,
            prompt_text,
            input_text,
            temperature: 0.0,
            max_tokens: 1024,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u32,
    pub completion_tokens: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub text: String,
    pub backend_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub usage: Option<TokenUsage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub latency: Option<Duration>,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("transport error talking to completion backend: {message}")]
    Transport { message: String, retryable: bool },
    #[error("fixture exhausted for role {role:?}: {consumed} responses consumed")]
    FixtureExhausted { role: RoleTag, consumed: usize },
    #[error("backend returned an empty completion")]
    EmptyResponse,
    #[error("gateway configuration error: {0}")]
    Config(String),
}

/// A completion backend. Implementations must be safe for concurrent calls.
pub trait CompletionBackend: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError>;
    fn backend_id(&self) -> &str;
}

/// Scans `text` case-insensitively for the last standalone occurrence of
/// "MCI" or "HC". Returns `None` (abstain) when neither appears; abstention
/// is a value, not an error, and is scored as a misclassification downstream.
pub fn parse_label(text: &str) -> Option<Label> {
    for token in tokenize(text).iter().rev() {
        match token.as_str() {
            "mci" => return Some(Label::Mci),
            "hc" => return Some(Label::Hc),
            _ => {}
        }
    }
    None
}
