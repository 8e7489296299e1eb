//! Table-driven fixture backend for scripted, deterministic tests.

use std::collections::HashMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{CompletionBackend, CompletionRequest, CompletionResponse, GatewayError, RoleTag};

/// One scripted response, keyed by role; responses for the same role are
/// consumed in order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub role_tag: RoleTag,
    pub response: String,
}

#[derive(Debug, Default)]
struct Cursors {
    consumed: HashMap<RoleTag, usize>,
}

/// Replays a scripted response table. Requesting more responses than were
/// scripted for a role is a test-harness error, not a silent fallback.
pub struct FixtureBackend {
    responses: HashMap<RoleTag, Vec<String>>,
    cursors: Mutex<Cursors>,
}

impl FixtureBackend {
    pub fn new(entries: Vec<FixtureEntry>) -> Self {
        let mut responses: HashMap<RoleTag, Vec<String>> = HashMap::new();
        for entry in entries {
            responses.entry(entry.role_tag).or_default().push(entry.response);
        }
        FixtureBackend {
            responses,
            cursors: Mutex::new(Cursors::default()),
        }
    }

    pub fn from_json(json: &str) -> Result<Self, GatewayError> {
        let entries: Vec<FixtureEntry> = serde_json::from_str(json)
            .map_err(|e| GatewayError::Config(format!("invalid fixture file: {e}")))?;
        Ok(FixtureBackend::new(entries))
    }

    /// Resets all cursors; two identically scripted runs then replay
    /// identically.
    pub fn rewind(&self) {
        self.cursors.lock().unwrap().consumed.clear();
    }
}

impl CompletionBackend for FixtureBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResponse, GatewayError> {
        let mut cursors = self.cursors.lock().unwrap();
        let consumed = cursors.consumed.entry(request.role_tag).or_insert(0);
        let scripted = self.responses.get(&request.role_tag);
        match scripted.and_then(|v| v.get(*consumed)) {
            Some(text) => {
                *consumed += 1;
                if text.is_empty() {
                    return Err(GatewayError::EmptyResponse);
                }
                Ok(CompletionResponse {
                    text: text.clone(),
                    backend_id: self.backend_id().to_string(),
                    usage: None,
                    latency: None,
                })
            }
            None => Err(GatewayError::FixtureExhausted {
                role: request.role_tag,
                consumed: *consumed,
            }),
        }
    }

    fn backend_id(&self) -> &str {
        "fixture"
    }
}
