//! The harness config file: backend registry, sandbox command, and
//! template paths in one JSON document.
//!
//! ```text
//! {
//!   "backends":  [ {"id": "nar", "kind": "replay", ...}, ... ],
//!   "sandbox":   { "command": ["python3", "{source}"] },
//!   "templates": {
//!     "think_math":  "templates/think_math.json",
//!     "think_code":  "templates/think_code.json",
//!     "answer_math": "templates/answer_math.json",
//!     "answer_code": "templates/answer_code.json"
//!   }
//! }
//! ```
//!
//! Relative fixture and template paths resolve against the config file's
//! directory, so a checked-in config works from any working directory.
//! The backend digest is taken over the document as authored (before path
//! resolution), keeping run manifests portable across machines.

use std::path::{Path, PathBuf};

use serde::Deserialize;

use handoff_core::canon;
use handoff_core::error::{Error, Result};
use handoff_core::gateway::{parse_backend_configs, resolve_fixture_paths, BackendRegistry};
use handoff_core::grading::SandboxConfig;
use handoff_core::protocol::{PromptTemplate, TemplateSet};

#[derive(Debug, Deserialize)]
struct RawConfig {
    backends: serde_json::Value,
    #[serde(default)]
    sandbox: Option<SandboxConfig>,
    templates: TemplatePaths,
}

#[derive(Debug, Deserialize)]
struct TemplatePaths {
    think_math: PathBuf,
    think_code: PathBuf,
    answer_math: PathBuf,
    answer_code: PathBuf,
}

/// Everything a run needs, loaded and validated.
pub struct LoadedConfig {
    pub registry: BackendRegistry,
    pub templates: TemplateSet,
    pub sandbox: SandboxConfig,
    /// Digest over the backends section as authored.
    pub backend_digest: String,
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
    let raw: RawConfig = serde_json::from_str(&text)
        .map_err(|e| Error::config(format!("config {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));

    let backend_digest = canon::digest_str(&canon::canonical_json(&raw.backends));
    let mut backend_configs = parse_backend_configs(&raw.backends.to_string())?;
    resolve_fixture_paths(&mut backend_configs, base);
    let registry = BackendRegistry::from_configs(backend_configs)?;

    let resolve = |p: &PathBuf| {
        if p.is_relative() {
            base.join(p)
        } else {
            p.clone()
        }
    };
    let templates = TemplateSet {
        think_math: PromptTemplate::from_file(&resolve(&raw.templates.think_math))?,
        think_code: PromptTemplate::from_file(&resolve(&raw.templates.think_code))?,
        answer_math: PromptTemplate::from_file(&resolve(&raw.templates.answer_math))?,
        answer_code: PromptTemplate::from_file(&resolve(&raw.templates.answer_code))?,
    };
    templates.validate()?;

    Ok(LoadedConfig {
        registry,
        templates,
        sandbox: raw.sandbox.unwrap_or_default(),
        backend_digest,
    })
}
