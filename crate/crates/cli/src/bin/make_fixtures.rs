//! Regenerates the demo corpus under fixtures/ (problems, replay
//! fixtures, demo config, and the two materialized run directories).
//!
//! Usage: `make_fixtures [repo_root]`

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use handoff_core::protocol::{PromptTemplate, TemplateSet};

fn load_templates(root: &Path) -> Result<TemplateSet, handoff_core::error::Error> {
    let dir = root.join("config/templates");
    Ok(TemplateSet {
        think_math: PromptTemplate::from_file(&dir.join("think_math.json"))?,
        think_code: PromptTemplate::from_file(&dir.join("think_code.json"))?,
        answer_math: PromptTemplate::from_file(&dir.join("answer_math.json"))?,
        answer_code: PromptTemplate::from_file(&dir.join("answer_code.json"))?,
    })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .format_timestamp(None)
        .init();
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."));
    let result = load_templates(&root)
        .and_then(|templates| handoff_cli::demo::generate(&root.join("fixtures"), &templates));
    match result {
        Ok(()) => {
            println!(
                "demo corpus written under {}",
                root.join("fixtures").display()
            );
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("error[{}]: {}", error.category(), error);
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
