//! Turns candidate answers into verdicts.
//!
//! Math grading normalizes both sides to exact rationals and compares for
//! exact equality (see [`math`]); code grading executes the candidate as a
//! stdin/stdout program against the problem's test suite under sandbox
//! limits (see [`code`]). `pass_at_1` folds verdicts into the single-sample
//! success rate: every non-pass status counts against.

pub mod code;
pub mod math;

use std::time::{SystemTime, UNIX_EPOCH};

use num::bigint::BigInt;
use num::rational::BigRational;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::protocol::CandidateAnswer;

pub use code::{grade_code, SandboxConfig, SandboxSlots};

/// Gold-answer convention for a math set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AnswerConvention {
    /// Plain numeric final answers (integers, decimals, fractions).
    Gsm8kNumeric,
    /// Integer answers in `[0, 999]`; anything else is a format error.
    AimeInteger,
}

/// One test case of a code problem: stdin in, expected stdout out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestCase {
    pub id: String,
    pub stdin: String,
    pub expected_stdout: String,
}

/// Per-case resource limits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxLimits {
    #[serde(default = "default_wall_time_ms")]
    pub wall_time_ms: u64,
    #[serde(default = "default_memory_bytes")]
    pub memory_bytes: u64,
    #[serde(default = "default_max_output_bytes")]
    pub max_output_bytes: u64,
}

fn default_wall_time_ms() -> u64 {
    5_000
}

fn default_memory_bytes() -> u64 {
    256 * 1024 * 1024
}

fn default_max_output_bytes() -> u64 {
    1024 * 1024
}

impl Default for SandboxLimits {
    fn default() -> Self {
        SandboxLimits {
            wall_time_ms: default_wall_time_ms(),
            memory_bytes: default_memory_bytes(),
            max_output_bytes: default_max_output_bytes(),
        }
    }
}

/// How a candidate program is invoked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunnerKind {
    /// Complete program reading stdin and writing stdout.
    #[default]
    StdinStdout,
}

/// A code problem's judge suite. Serialized with the case list under a
/// `tests` key, matching the problem-file schema.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TestSuite {
    #[serde(rename = "tests")]
    pub cases: Vec<TestCase>,
    #[serde(default)]
    pub limits: SandboxLimits,
    #[serde(default)]
    pub runner: RunnerKind,
}

/// The reference answer for one problem.
#[derive(Debug, Clone, PartialEq)]
pub enum GoldAnswer {
    Math {
        /// Raw gold value; validated with the grading normalizer at load.
        value: String,
        convention: AnswerConvention,
    },
    Code {
        tests: TestSuite,
    },
}

/// Graded outcome status. `Pass` iff every applicable check succeeded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerdictStatus {
    Pass,
    Fail,
    FormatError,
    StageError,
    Timeout,
}

impl VerdictStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            VerdictStatus::Pass => "pass",
            VerdictStatus::Fail => "fail",
            VerdictStatus::FormatError => "format_error",
            VerdictStatus::StageError => "stage_error",
            VerdictStatus::Timeout => "timeout",
        }
    }
}

/// Graded outcome of one pipeline execution.
///
/// `graded_at` is an in-memory audit field (unix seconds) excluded from
/// serialization so that persisted records are byte-reproducible;
/// equality ignores it for the same reason.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Verdict {
    pub status: VerdictStatus,
    /// First failing case id, normalization failure reason, or stage name.
    pub detail: String,
    #[serde(skip)]
    pub graded_at: u64,
}

impl PartialEq for Verdict {
    fn eq(&self, other: &Self) -> bool {
        self.status == other.status && self.detail == other.detail
    }
}

impl Eq for Verdict {}

impl Verdict {
    fn new(status: VerdictStatus, detail: impl Into<String>) -> Self {
        Verdict {
            status,
            detail: detail.into(),
            graded_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn pass() -> Self {
        Verdict::new(VerdictStatus::Pass, "")
    }

    pub fn fail(detail: impl Into<String>) -> Self {
        Verdict::new(VerdictStatus::Fail, detail)
    }

    pub fn format_error(detail: impl Into<String>) -> Self {
        Verdict::new(VerdictStatus::FormatError, detail)
    }

    pub fn stage_error(stage: impl Into<String>) -> Self {
        Verdict::new(VerdictStatus::StageError, stage)
    }

    pub fn timeout(detail: impl Into<String>) -> Self {
        Verdict::new(VerdictStatus::Timeout, detail)
    }

    pub fn is_pass(&self) -> bool {
        self.status == VerdictStatus::Pass
    }
}

/// Grades a math candidate against its gold answer.
///
/// Normalization failures become `format_error` verdicts, never errors;
/// under the AIME convention the normalized value must additionally be an
/// integer in `[0, 999]`.
pub fn grade_math(candidate: &CandidateAnswer, gold: &GoldAnswer) -> Result<Verdict> {
    let GoldAnswer::Math { value, convention } = gold else {
        return Err(Error::usage(
            "grade_math called with a code gold answer".to_string(),
        ));
    };
    if candidate.task_kind != crate::corpus::TaskKind::Math {
        return Err(Error::usage(
            "grade_math called with a code candidate".to_string(),
        ));
    }
    if let Some(residue) = &candidate.format_failure {
        return Ok(Verdict::format_error(residue.clone()));
    }
    // The extracted payload is canonical, so this re-parse cannot fail.
    let candidate_value = math::normalize_math_answer(&candidate.extracted)
        .map_err(|e| Error::Internal(format!("canonical payload failed to parse: {e}")))?;
    if *convention == AnswerConvention::AimeInteger && !math::in_aime_range(&candidate_value) {
        return Ok(Verdict::format_error(format!(
            "not an integer in [0, 999]: {}",
            math::render_rational(&candidate_value)
        )));
    }
    let gold_value = math::normalize_math_answer(value)
        .map_err(|e| Error::data(format!("gold value not parseable: {e}")))?;
    if math::math_equivalent(&candidate_value, &gold_value) {
        Ok(Verdict::pass())
    } else {
        Ok(Verdict::fail("wrong answer"))
    }
}

/// Fraction of pass verdicts, as an exact rational in `[0, 1]`.
pub fn pass_at_1(verdicts: &[Verdict]) -> Result<BigRational> {
    if verdicts.is_empty() {
        return Err(Error::usage(
            "pass@1 over an empty verdict list is undefined".to_string(),
        ));
    }
    let passed = verdicts.iter().filter(|v| v.is_pass()).count();
    Ok(BigRational::new(
        BigInt::from(passed),
        BigInt::from(verdicts.len()),
    ))
}
