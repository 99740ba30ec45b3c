//! Replay fixture files and transcript logs.
//!
//! Both are line-delimited JSON. A fixture line holds one recorded
//! completion keyed by request hash:
//!
//! ```text
//! {"key":"sha256:..","text":"..","prompt_tokens":n,"completion_tokens":m,"latency_ms":t}
//! ```
//!
//! A transcript line additionally carries the full request (messages and
//! params), which is what makes recorded runs replayable and lets the
//! harness audit the think-trace handoff after the fact.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Completion, Message};

/// One recorded completion in a replay fixture.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureEntry {
    pub key: String,
    pub text: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
}

/// One request/response pair in a transcript log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptEntry {
    pub key: String,
    pub backend_id: String,
    pub stage: String,
    pub problem_id: String,
    pub messages: Vec<Message>,
    pub params: super::GenerationParams,
    pub completion: Completion,
}

/// Counts reported by [`record_fixture`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureStats {
    pub entries: usize,
    pub duplicate_keys_collapsed: usize,
}

pub(super) fn load_fixture(path: &Path) -> Result<HashMap<String, FixtureEntry>> {
    let file = File::open(path)
        .map_err(|e| Error::io(format!("opening fixture {}", path.display()), e))?;
    let mut entries = HashMap::new();
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(format!("reading fixture {}", path.display()), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: FixtureEntry = serde_json::from_str(&line).map_err(|e| {
            Error::data(format!(
                "{}:{}: malformed fixture entry: {e}",
                path.display(),
                lineno + 1
            ))
        })?;
        // Last write wins, mirroring record_fixture.
        entries.insert(entry.key.clone(), entry);
    }
    Ok(entries)
}

/// Condenses a transcript log into a replay fixture.
///
/// Duplicate request keys collapse last-write-wins; output preserves
/// first-seen key order so regenerated fixtures diff cleanly.
pub fn record_fixture(transcript_log: &Path, out: &Path) -> Result<FixtureStats> {
    let file = File::open(transcript_log).map_err(|e| {
        Error::io(
            format!("opening transcript {}", transcript_log.display()),
            e,
        )
    })?;
    let mut order: Vec<String> = Vec::new();
    let mut latest: HashMap<String, FixtureEntry> = HashMap::new();
    let mut collapsed = 0usize;
    for (lineno, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| {
            Error::io(
                format!("reading transcript {}", transcript_log.display()),
                e,
            )
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: TranscriptEntry = serde_json::from_str(&line).map_err(|e| {
            Error::data(format!(
                "{}:{}: malformed transcript entry: {e}",
                transcript_log.display(),
                lineno + 1
            ))
        })?;
        let fixture = FixtureEntry {
            key: entry.key.clone(),
            text: entry.completion.text,
            prompt_tokens: entry.completion.usage.prompt_tokens,
            completion_tokens: entry.completion.usage.completion_tokens,
            latency_ms: entry.completion.latency_ms,
        };
        if latest.insert(entry.key.clone(), fixture).is_some() {
            collapsed += 1;
        } else {
            order.push(entry.key);
        }
    }
    let mut out_file =
        File::create(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    for key in &order {
        let line = serde_json::to_string(&latest[key])
            .map_err(|e| Error::Internal(format!("fixture serialization: {e}")))?;
        writeln!(out_file, "{line}")
            .map_err(|e| Error::io(format!("writing {}", out.display()), e))?;
    }
    Ok(FixtureStats {
        entries: order.len(),
        duplicate_keys_collapsed: collapsed,
    })
}
