//! Canonical JSON serialization and content digests.
//!
//! Replay fixtures and run manifests must be portable across machines, so
//! every content hash in this crate is computed the same way: serialize to
//! JSON with object keys sorted bytewise, no insignificant whitespace,
//! UTF-8 encoding, then SHA-256 over those bytes. Digests are rendered as
//! lowercase hex with a `sha256:` prefix.

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

/// Renders a JSON value in canonical form: sorted keys, compact separators.
pub fn canonical_json(value: &Value) -> String {
    let mut out = String::new();
    write_canonical(value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let mut keys: Vec<&String> = map.keys().collect();
            keys.sort_unstable();
            out.push('{');
            for (i, key) in keys.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&serde_json::to_string(key).expect("string serializes"));
                out.push(':');
                write_canonical(&map[*key], out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(item, out);
            }
            out.push(']');
        }
        // Scalars already have a single compact rendering.
        other => out.push_str(&serde_json::to_string(other).expect("scalar serializes")),
    }
}

/// SHA-256 over the canonical JSON form of any serializable value.
pub fn digest_value<T: Serialize>(value: &T) -> Result<String> {
    let json = serde_json::to_value(value)
        .map_err(|e| Error::Internal(format!("digest serialization failed: {e}")))?;
    Ok(digest_str(&canonical_json(&json)))
}

/// SHA-256 over raw text.
pub fn digest_str(text: &str) -> String {
    digest_bytes(text.as_bytes())
}

/// SHA-256 over raw bytes.
pub fn digest_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("sha256:{:x}", hasher.finalize())
}
