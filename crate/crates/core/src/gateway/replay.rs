//! Deterministic replay backend: completions keyed by request hash.

use std::collections::HashMap;
use std::path::Path;

use crate::error::{Error, Result};

use super::fixture::{load_fixture, FixtureEntry};
use super::{Completion, CompletionRequest, Usage};

pub(super) struct ReplayBackend {
    backend_id: String,
    entries: HashMap<String, FixtureEntry>,
}

impl ReplayBackend {
    pub(super) fn load(backend_id: &str, path: &Path) -> Result<Self> {
        let entries = load_fixture(path)?;
        Ok(ReplayBackend {
            backend_id: backend_id.to_string(),
            entries,
        })
    }

    /// Pure lookup; latency comes from the fixture, not a clock.
    pub(super) fn complete(&self, request: &CompletionRequest) -> Result<Completion> {
        let key = request.request_key();
        let entry = self.entries.get(&key).ok_or_else(|| Error::FixtureMiss {
            backend_id: self.backend_id.clone(),
            key: key.clone(),
        })?;
        Ok(Completion {
            text: entry.text.clone(),
            usage: Usage {
                prompt_tokens: entry.prompt_tokens,
                completion_tokens: entry.completion_tokens,
            },
            latency_ms: entry.latency_ms,
            retries_used: 0,
            backend_id: self.backend_id.clone(),
        })
    }
}
