//! The `<think>`/`<answer>` textual protocol.
//!
//! Prompt construction for each stage, extraction of the think trace from
//! the first-stage output, verbatim handoff of that trace into the
//! answer-stage prompt, and extraction of the candidate answer from the
//! second-stage output. All operations here are pure functions of their
//! inputs.
//!
//! Placeholder substitution is literal and single-pass: `{statement}`,
//! `{think}`, and `{format_hint}` are expanded from the template pattern
//! only, never from substituted content, so a statement containing the
//! literal text `{think}` passes through untouched.

use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::canon;
use crate::corpus::{Problem, TaskKind};
use crate::error::{Error, Result};
use crate::gateway::Message;
use crate::grading::math::{normalize_math_answer, render_rational};

pub const THINK_OPEN: &str = "<think>";
pub const THINK_CLOSE: &str = "</think>";
pub const ANSWER_OPEN: &str = "<answer>";
pub const ANSWER_CLOSE: &str = "</answer>";

/// Instruction appended to every think-stage user message.
const THINK_INSTRUCTION: &str =
    "Write your step-by-step reasoning between <think> and </think> tags.";
/// Instruction appended to every answer-stage user message.
const ANSWER_INSTRUCTION: &str = "Write your final response between <answer> and </answer> tags.";

/// Pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Think,
    Answer,
}

impl Stage {
    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Think => "think",
            Stage::Answer => "answer",
        }
    }
}

/// An editable prompt template, one per (stage, task kind).
///
/// Templates ship as JSON data files under `config/templates/` and can be
/// swapped without code changes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub stage: Stage,
    #[serde(default)]
    pub system_text: String,
    pub user_pattern: String,
    #[serde(default)]
    pub format_hint: String,
}

impl PromptTemplate {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(format!("reading template {}", path.display()), e))?;
        let template: PromptTemplate = serde_json::from_str(&text)
            .map_err(|e| Error::config(format!("template {}: {e}", path.display())))?;
        template.validate()?;
        Ok(template)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.user_pattern.contains("{statement}") {
            return Err(Error::config(format!(
                "{}-stage template pattern must contain {{statement}}",
                self.stage.as_str()
            )));
        }
        if self.stage == Stage::Answer && !self.user_pattern.contains("{think}") {
            return Err(Error::config(
                "answer-stage template pattern must contain {think}".to_string(),
            ));
        }
        Ok(())
    }
}

/// The four templates a run needs, one per (stage, task kind).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSet {
    pub think_math: PromptTemplate,
    pub think_code: PromptTemplate,
    pub answer_math: PromptTemplate,
    pub answer_code: PromptTemplate,
}

impl TemplateSet {
    pub fn get(&self, stage: Stage, kind: TaskKind) -> &PromptTemplate {
        match (stage, kind) {
            (Stage::Think, TaskKind::Math) => &self.think_math,
            (Stage::Think, TaskKind::Code) => &self.think_code,
            (Stage::Answer, TaskKind::Math) => &self.answer_math,
            (Stage::Answer, TaskKind::Code) => &self.answer_code,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (template, stage) in [
            (&self.think_math, Stage::Think),
            (&self.think_code, Stage::Think),
            (&self.answer_math, Stage::Answer),
            (&self.answer_code, Stage::Answer),
        ] {
            template.validate()?;
            if template.stage != stage {
                return Err(Error::config(format!(
                    "template slot expects stage {}, file declares {}",
                    stage.as_str(),
                    template.stage.as_str()
                )));
            }
        }
        Ok(())
    }

    /// Content digest used to key cached run records.
    pub fn digest(&self) -> String {
        canon::digest_value(self).unwrap_or_else(|_| "sha256:unhashable".to_string())
    }
}

/// How the think trace was recovered from raw model output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThinkExtraction {
    /// Both opening and closing tags present; first tagged span kept.
    Tagged,
    /// No opening tag; the whole output is used as the trace.
    Untagged,
    /// Opening tag with no closing tag; everything after it is used.
    Unclosed,
}

/// The reasoning trace handed from the think stage to the answer stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ThinkTrace {
    pub text: String,
    pub extraction: ThinkExtraction,
    pub char_len: usize,
    pub source_backend: String,
}

/// Recovers the think trace from arbitrary first-stage output.
///
/// Total over arbitrary text: imperfectly formatted traces are used as-is
/// with the extraction flag preserving auditability. When tags repeat, the
/// first well-formed span is the trace.
pub fn extract_think(raw: &str, source_backend: &str) -> ThinkTrace {
    let (text, extraction) = match raw.find(THINK_OPEN) {
        Some(open) => {
            let after = &raw[open + THINK_OPEN.len()..];
            match after.find(THINK_CLOSE) {
                Some(close) => (&after[..close], ThinkExtraction::Tagged),
                None => (after, ThinkExtraction::Unclosed),
            }
        }
        None => (raw, ThinkExtraction::Untagged),
    };
    let text = text.trim().to_string();
    ThinkTrace {
        char_len: text.chars().count(),
        text,
        extraction,
        source_backend: source_backend.to_string(),
    }
}

/// Builds the think-stage messages: the user message carries the problem
/// statement verbatim plus the think-tag instruction.
pub fn build_think_prompt(problem: &Problem, template: &PromptTemplate) -> Result<Vec<Message>> {
    if template.stage != Stage::Think {
        return Err(Error::usage(format!(
            "build_think_prompt needs a think-stage template, got {}",
            template.stage.as_str()
        )));
    }
    let user = fill(
        &template.user_pattern,
        &[
            ("statement", problem.statement.as_str()),
            ("format_hint", template.format_hint.as_str()),
        ],
    );
    Ok(assemble(&template.system_text, user, THINK_INSTRUCTION))
}

/// Builds the answer-stage messages: the user message carries both the
/// problem statement and the think trace, each verbatim, with no escaping.
pub fn build_answer_prompt(
    problem: &Problem,
    think: &ThinkTrace,
    template: &PromptTemplate,
) -> Result<Vec<Message>> {
    if template.stage != Stage::Answer {
        return Err(Error::usage(format!(
            "build_answer_prompt needs an answer-stage template, got {}",
            template.stage.as_str()
        )));
    }
    let user = fill(
        &template.user_pattern,
        &[
            ("statement", problem.statement.as_str()),
            ("think", think.text.as_str()),
            ("format_hint", template.format_hint.as_str()),
        ],
    );
    Ok(assemble(&template.system_text, user, ANSWER_INSTRUCTION))
}

/// Builds the one-shot prompt for single-stage baselines: the answer-stage
/// template with an empty handoff section.
pub fn build_single_stage_prompt(
    problem: &Problem,
    template: &PromptTemplate,
) -> Result<Vec<Message>> {
    if template.stage != Stage::Answer {
        return Err(Error::usage(
            "single-stage prompts use the answer-stage template".to_string(),
        ));
    }
    let user = fill(
        &template.user_pattern,
        &[
            ("statement", problem.statement.as_str()),
            ("think", ""),
            ("format_hint", template.format_hint.as_str()),
        ],
    );
    Ok(assemble(&template.system_text, user, ANSWER_INSTRUCTION))
}

fn assemble(system_text: &str, user: String, instruction: &str) -> Vec<Message> {
    let user = format!("{user}\n\n{instruction}");
    if system_text.is_empty() {
        vec![Message::user(user)]
    } else {
        vec![Message::system(system_text), Message::user(user)]
    }
}

/// Single-pass literal substitution of `{key}` placeholders.
fn fill(pattern: &str, substitutions: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(pattern.len());
    let mut rest = pattern;
    'scan: while let Some(pos) = rest.find('{') {
        out.push_str(&rest[..pos]);
        let after = &rest[pos..];
        for (key, value) in substitutions {
            if after[1..].starts_with(key) && after[1 + key.len()..].starts_with('}') {
                out.push_str(value);
                rest = &after[key.len() + 2..];
                continue 'scan;
            }
        }
        out.push('{');
        rest = &after[1..];
    }
    out.push_str(rest);
    out
}

/// Which extraction rule produced the candidate payload.
///
/// The math ladder is ordered most-to-least explicit; the first matching
/// rule always wins and the recorded rule is the one that fired.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtractionRule {
    /// Content of the first `<answer>...</answer>` pair.
    AnswerTag,
    /// Content of the last balanced `\boxed{...}`.
    Boxed,
    /// Everything after the last `####` marker (GSM8K gold convention).
    HashMarker,
    /// The last numeric literal anywhere in the text (documented last resort).
    LastNumber,
    /// Content of the first fenced code block (code).
    FencedBlock,
    /// The whole trimmed text (code fallback).
    WholeText,
    /// No rule matched; grading reports a format error.
    NoMatch,
}

/// The answer-stage output with its extracted payload.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateAnswer {
    pub task_kind: TaskKind,
    /// Full answer-stage text, kept so records can be re-graded offline.
    pub raw: String,
    /// Math: the canonical normalized value when normalization succeeded,
    /// otherwise the rule's raw payload. Code: the program source text.
    pub extracted: String,
    pub extraction_rule: ExtractionRule,
    /// Math normalization failure, carried into the verdict rather than
    /// thrown. Holds the post-N3 residue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format_failure: Option<String>,
}

fn number_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"[+-]?(?:\d[\d,]*(?:\.\d+)?|\.\d+)(?:/\d+)?%?").expect("valid regex")
    })
}

/// Extracts the candidate answer from arbitrary answer-stage output.
/// Total: failures are recorded in the candidate, never thrown.
pub fn extract_answer(raw: &str, task_kind: TaskKind) -> CandidateAnswer {
    match task_kind {
        TaskKind::Math => extract_math(raw),
        TaskKind::Code => extract_code(raw),
    }
}

fn extract_math(raw: &str) -> CandidateAnswer {
    let Some((rule, payload)) = extract_math_payload(raw) else {
        return CandidateAnswer {
            task_kind: TaskKind::Math,
            raw: raw.to_string(),
            extracted: String::new(),
            extraction_rule: ExtractionRule::NoMatch,
            format_failure: Some("no numeric payload found".to_string()),
        };
    };
    match normalize_math_answer(&payload) {
        Ok(value) => CandidateAnswer {
            task_kind: TaskKind::Math,
            raw: raw.to_string(),
            extracted: render_rational(&value),
            extraction_rule: rule,
            format_failure: None,
        },
        Err(e) => CandidateAnswer {
            task_kind: TaskKind::Math,
            raw: raw.to_string(),
            extracted: payload,
            extraction_rule: rule,
            format_failure: Some(e.residue),
        },
    }
}

fn extract_math_payload(raw: &str) -> Option<(ExtractionRule, String)> {
    if let Some(open) = raw.find(ANSWER_OPEN) {
        let after = &raw[open + ANSWER_OPEN.len()..];
        if let Some(close) = after.find(ANSWER_CLOSE) {
            return Some((ExtractionRule::AnswerTag, after[..close].to_string()));
        }
    }
    if let Some(inner) = last_balanced_boxed(raw) {
        return Some((ExtractionRule::Boxed, inner));
    }
    if let Some(pos) = raw.rfind("####") {
        return Some((ExtractionRule::HashMarker, raw[pos + 4..].to_string()));
    }
    number_regex()
        .find_iter(raw)
        .last()
        .map(|m| (ExtractionRule::LastNumber, m.as_str().to_string()))
}

fn last_balanced_boxed(text: &str) -> Option<String> {
    const MARKER: &str = "\\boxed{";
    let bytes = text.as_bytes();
    let mut best = None;
    let mut from = 0;
    while let Some(rel) = text[from..].find(MARKER) {
        let start = from + rel + MARKER.len();
        let mut depth = 1u32;
        for (offset, &b) in bytes[start..].iter().enumerate() {
            match b {
                b'{' => depth += 1,
                b'}' => {
                    depth -= 1;
                    if depth == 0 {
                        best = Some(text[start..start + offset].to_string());
                        break;
                    }
                }
                _ => {}
            }
        }
        from = from + rel + 1;
    }
    best
}

fn extract_code(raw: &str) -> CandidateAnswer {
    let (rule, extracted) = match first_fenced_block(raw) {
        Some(block) => (ExtractionRule::FencedBlock, block),
        None => (ExtractionRule::WholeText, raw.trim().to_string()),
    };
    CandidateAnswer {
        task_kind: TaskKind::Code,
        raw: raw.to_string(),
        extracted,
        extraction_rule: rule,
        format_failure: None,
    }
}

fn first_fenced_block(raw: &str) -> Option<String> {
    const FENCE: &str = "```";
    let open = raw.find(FENCE)?;
    let after = &raw[open + FENCE.len()..];
    let close = after.find(FENCE)?;
    let mut block = &after[..close];
    // Drop a language tag line like "python" right after the fence.
    if let Some(nl) = block.find('\n') {
        let first_line = block[..nl].trim();
        let is_lang_tag = first_line
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '+' | '#'));
        if is_lang_tag {
            block = &block[nl + 1..];
        }
    }
    Some(block.strip_suffix('\n').unwrap_or(block).to_string())
}

/// Wraps a canonical answer in answer tags; inverse of the answer-tag
/// extraction rule for canonical payloads.
pub fn render_canonical_answer(canonical: &str) -> String {
    format!("{ANSWER_OPEN}{canonical}{ANSWER_CLOSE}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grading::{AnswerConvention, GoldAnswer};

    fn math_problem(statement: &str) -> Problem {
        Problem {
            id: "p1".to_string(),
            set_name: "test".to_string(),
            task_kind: TaskKind::Math,
            statement: statement.to_string(),
            gold: GoldAnswer::Math {
                value: "4".to_string(),
                convention: AnswerConvention::Gsm8kNumeric,
            },
            difficulty: None,
        }
    }

    fn think_template() -> PromptTemplate {
        PromptTemplate {
            stage: Stage::Think,
            system_text: "You reason carefully.".to_string(),
            user_pattern: "Solve: {statement}".to_string(),
            format_hint: String::new(),
        }
    }

    fn answer_template() -> PromptTemplate {
        PromptTemplate {
            stage: Stage::Answer,
            system_text: String::new(),
            user_pattern: "Problem: {statement}\nTrace:\n{think}\n{format_hint}".to_string(),
            format_hint: "Box the number.".to_string(),
        }
    }

    #[test]
    fn think_prompt_substitutes_statement() {
        let messages =
            build_think_prompt(&math_problem("What is 2+2?"), &think_template()).unwrap();
        assert_eq!(messages.len(), 2);
        let user = &messages[1].content;
        assert!(user.starts_with("Solve: What is 2+2?"));
        assert!(user.contains("<think>"));
    }

    #[test]
    fn placeholder_in_statement_is_not_expanded() {
        let messages =
            build_think_prompt(&math_problem("literal {think} here"), &think_template()).unwrap();
        assert!(messages[1].content.contains("literal {think} here"));
    }

    #[test]
    fn stage_mismatch_is_usage_error() {
        let err = build_think_prompt(&math_problem("x"), &answer_template()).unwrap_err();
        assert_eq!(err.category(), "usage");
        let trace = extract_think("t", "nar");
        let err = build_answer_prompt(&math_problem("x"), &trace, &think_template()).unwrap_err();
        assert_eq!(err.category(), "usage");
    }

    #[test]
    fn answer_prompt_hands_off_trace_verbatim() {
        let trace = extract_think("<think>use inclusion-exclusion</think>", "nar");
        let messages =
            build_answer_prompt(&math_problem("count them"), &trace, &answer_template()).unwrap();
        assert!(messages[0].content.contains("use inclusion-exclusion"));
        assert!(messages[0].content.contains("count them"));
    }

    #[test]
    fn empty_trace_still_builds_a_prompt() {
        let trace = extract_think("", "nar");
        assert_eq!(trace.char_len, 0);
        let messages = build_answer_prompt(&math_problem("q"), &trace, &answer_template()).unwrap();
        assert!(messages[0].content.contains("Trace:\n\n"));
    }

    #[test]
    fn think_extraction_cases() {
        let t = extract_think("<think>step A</think>ignored", "nar");
        assert_eq!(t.text, "step A");
        assert_eq!(t.extraction, ThinkExtraction::Tagged);

        let t = extract_think("plain reasoning, no tags", "nar");
        assert_eq!(t.text, "plain reasoning, no tags");
        assert_eq!(t.extraction, ThinkExtraction::Untagged);

        let t = extract_think("<think>abc", "nar");
        assert_eq!(t.text, "abc");
        assert_eq!(t.extraction, ThinkExtraction::Unclosed);
    }

    #[test]
    fn first_tagged_span_wins() {
        let t = extract_think("<think>one</think><think>two</think>", "nar");
        assert_eq!(t.text, "one");
    }

    #[test]
    fn char_len_counts_chars() {
        let t = extract_think("<think>héllo</think>", "nar");
        assert_eq!(t.char_len, 5);
    }

    #[test]
    fn math_extraction_precedence() {
        let c = extract_answer("<answer>\\boxed{042}</answer>", TaskKind::Math);
        assert_eq!(c.extraction_rule, ExtractionRule::AnswerTag);
        assert_eq!(c.extracted, "42");

        let c = extract_answer("The result is #### 72", TaskKind::Math);
        assert_eq!(c.extraction_rule, ExtractionRule::HashMarker);
        assert_eq!(c.extracted, "72");

        let c = extract_answer("some \\boxed{9} and #### 8", TaskKind::Math);
        assert_eq!(c.extraction_rule, ExtractionRule::Boxed);
        assert_eq!(c.extracted, "9");
    }

    #[test]
    fn math_no_payload_is_recorded_not_thrown() {
        let c = extract_answer("nothing numeric here", TaskKind::Math);
        assert_eq!(c.extraction_rule, ExtractionRule::NoMatch);
        assert!(c.format_failure.is_some());
    }

    #[test]
    fn code_fenced_block() {
        let c = extract_answer("```\ndef f(): return 1\n```", TaskKind::Code);
        assert_eq!(c.extraction_rule, ExtractionRule::FencedBlock);
        assert_eq!(c.extracted, "def f(): return 1");

        let c = extract_answer("```python\nprint(1)\n```", TaskKind::Code);
        assert_eq!(c.extracted, "print(1)");

        let c = extract_answer("print(2)", TaskKind::Code);
        assert_eq!(c.extraction_rule, ExtractionRule::WholeText);
        assert_eq!(c.extracted, "print(2)");
    }

    #[test]
    fn canonical_round_trip() {
        for canonical in ["42", "-7", "1/3", "0"] {
            let c = extract_answer(&render_canonical_answer(canonical), TaskKind::Math);
            assert_eq!(c.extracted, canonical);
            assert_eq!(c.extraction_rule, ExtractionRule::AnswerTag);
        }
    }
}
