//! Problem-set schemas, ingestion, validation, and seeded sampling.
//!
//! Problem files are line-delimited JSON, one object per problem:
//!
//! ```text
//! {"id","set_name","task_kind":"math","statement","gold":{"value","convention"}}
//! {"id","set_name","task_kind":"code","statement","gold":{"tests":[...],"limits":{...}}}
//! ```
//!
//! Gold math values are validated with the grading normalizer at load
//! time, so a bad gold never masquerades as a model failure.
//!
//! # Pinned sampling procedure
//!
//! `sample_problems` is reproducible across machines and implementations:
//!
//! 1. PRNG: ChaCha20 (`rand_chacha::ChaCha20Rng`) keyed with the seed as a
//!    little-endian u64 in bytes 0..8 of the 32-byte key, remaining bytes
//!    zero; block counter and stream both start at 0. 64-bit draws are
//!    two consecutive little-endian keystream words, low word first.
//! 2. Sort ids ascending (bytewise) and Fisher-Yates shuffle from the top:
//!    for `i` in `len-1 ..= 1`, swap `ids[i]` with `ids[j]` where
//!    `j = bounded(i + 1)`.
//! 3. `bounded(range)` rejection-samples a u64 `v`, accepting when
//!    `v <= u64::MAX - ((u64::MAX % range) + 1) % range`, and returns
//!    `v % range`.
//! 4. Take the first `n` shuffled ids, then order the selection by id.

use std::collections::HashMap;
use std::fs;
use std::path::Path;

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::canon;
use crate::error::{Error, Result};
use crate::grading::math::{in_aime_range, normalize_math_answer};
use crate::grading::{AnswerConvention, GoldAnswer, TestSuite};

/// What kind of task a problem is, and therefore how it is graded.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    Math,
    Code,
}

impl TaskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskKind::Math => "math",
            TaskKind::Code => "code",
        }
    }
}

/// One evaluation item.
#[derive(Debug, Clone)]
pub struct Problem {
    pub id: String,
    pub set_name: String,
    pub task_kind: TaskKind,
    pub statement: String,
    pub gold: GoldAnswer,
    pub difficulty: Option<String>,
}

/// An ordered, immutable set of problems from one source file.
#[derive(Debug, Clone)]
pub struct ProblemSet {
    pub set_name: String,
    pub problems: Vec<Problem>,
    /// Content hash of the source file bytes.
    pub source_digest: String,
    /// Present iff this set is a seeded sample of its source.
    pub sample_seed: Option<u64>,
}

#[derive(Deserialize)]
struct RawProblem {
    id: String,
    set_name: String,
    task_kind: TaskKind,
    statement: String,
    gold: serde_json::Value,
    #[serde(default)]
    difficulty: Option<String>,
}

#[derive(Deserialize)]
struct RawMathGold {
    value: serde_json::Value,
    convention: AnswerConvention,
}

/// Loads and validates a problem file.
///
/// Hard violations (unparseable lines, duplicate ids, gold/kind mismatch,
/// unparseable math gold) fail the load with a line number; softer
/// anomalies are reported by [`validate_set`].
pub fn load_problems(path: &Path, expected_kind: Option<TaskKind>) -> Result<ProblemSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    let source_digest = canon::digest_bytes(&bytes);
    let text = String::from_utf8(bytes)
        .map_err(|e| Error::data(format!("{}: not UTF-8: {e}", path.display())))?;

    let mut problems: Vec<Problem> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let at = |msg: String| Error::data(format!("{}:{}: {}", path.display(), lineno, msg));
        let raw: RawProblem =
            serde_json::from_str(line).map_err(|e| at(format!("unparseable problem: {e}")))?;
        if let Some(kind) = expected_kind {
            if raw.task_kind != kind {
                return Err(at(format!(
                    "problem '{}' has task_kind {} where {} was expected",
                    raw.id,
                    raw.task_kind.as_str(),
                    kind.as_str()
                )));
            }
        }
        if let Some(first_line) = seen.insert(raw.id.clone(), lineno) {
            return Err(at(format!(
                "duplicate problem id '{}' (first seen on line {first_line})",
                raw.id
            )));
        }
        let gold = parse_gold(&raw, lineno, path)?;
        problems.push(Problem {
            id: raw.id,
            set_name: raw.set_name,
            task_kind: raw.task_kind,
            statement: raw.statement,
            gold,
            difficulty: raw.difficulty,
        });
    }

    let set_name = match problems.first() {
        Some(first) => first.set_name.clone(),
        None => {
            return Err(Error::data(format!(
                "{}: problem file is empty",
                path.display()
            )))
        }
    };
    if let Some(stray) = problems.iter().find(|p| p.set_name != set_name) {
        return Err(Error::data(format!(
            "{}: mixed set names '{}' and '{}' in one file",
            path.display(),
            set_name,
            stray.set_name
        )));
    }

    Ok(ProblemSet {
        set_name,
        problems,
        source_digest,
        sample_seed: None,
    })
}

fn parse_gold(raw: &RawProblem, lineno: usize, path: &Path) -> Result<GoldAnswer> {
    let at = |msg: String| Error::data(format!("{}:{}: {}", path.display(), lineno, msg));
    match raw.task_kind {
        TaskKind::Math => {
            let gold: RawMathGold = serde_json::from_value(raw.gold.clone()).map_err(|e| {
                at(format!(
                    "problem '{}': gold does not match task_kind math: {e}",
                    raw.id
                ))
            })?;
            let value = match &gold.value {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                other => {
                    return Err(at(format!(
                        "problem '{}': gold value must be a string or number, got {other}",
                        raw.id
                    )))
                }
            };
            // Same normalizer as grading: fail fast on unusable golds.
            normalize_math_answer(&value).map_err(|e| {
                at(format!(
                    "problem '{}': gold value not parseable as exact rational: {e}",
                    raw.id
                ))
            })?;
            Ok(GoldAnswer::Math {
                value,
                convention: gold.convention,
            })
        }
        TaskKind::Code => {
            let tests: TestSuite = serde_json::from_value(raw.gold.clone()).map_err(|e| {
                at(format!(
                    "problem '{}': gold does not match task_kind code: {e}",
                    raw.id
                ))
            })?;
            Ok(GoldAnswer::Code { tests })
        }
    }
}

fn chacha_for_seed(seed: u64) -> ChaCha20Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    ChaCha20Rng::from_seed(key)
}

fn bounded(rng: &mut ChaCha20Rng, range: u64) -> u64 {
    debug_assert!(range > 0);
    let zone = u64::MAX - ((u64::MAX % range) + 1) % range;
    loop {
        let v = rng.next_u64();
        if v <= zone {
            return v % range;
        }
    }
}

/// Uniform sample without replacement via the pinned procedure documented
/// in the module docs. Pure: identical `(set, n, seed)` always yields a
/// byte-identical result.
pub fn sample_problems(set: &ProblemSet, n: usize, seed: u64) -> Result<ProblemSet> {
    if n == 0 {
        return Err(Error::usage("sample size must be >= 1".to_string()));
    }
    if n > set.problems.len() {
        return Err(Error::usage(format!(
            "sample size {} exceeds set size {}",
            n,
            set.problems.len()
        )));
    }
    let mut ids: Vec<&str> = set.problems.iter().map(|p| p.id.as_str()).collect();
    ids.sort_unstable();
    let mut rng = chacha_for_seed(seed);
    for i in (1..ids.len()).rev() {
        let j = bounded(&mut rng, (i + 1) as u64) as usize;
        ids.swap(i, j);
    }
    let mut selected: Vec<&str> = ids.into_iter().take(n).collect();
    selected.sort_unstable();

    let by_id: HashMap<&str, &Problem> = set.problems.iter().map(|p| (p.id.as_str(), p)).collect();
    let problems = selected.iter().map(|id| by_id[id].clone()).collect();
    Ok(ProblemSet {
        set_name: set.set_name.clone(),
        problems,
        source_digest: set.source_digest.clone(),
        sample_seed: Some(seed),
    })
}

/// One finding from [`validate_set`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationIssue {
    pub problem_id: String,
    pub message: String,
}

/// Findings over a loaded set; empty means clean.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub set_name: String,
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Pure corpus checks beyond what loading enforces: empty statements,
/// gold anomalies, AIME range violations, degenerate test suites.
pub fn validate_set(set: &ProblemSet) -> ValidationReport {
    let mut issues = Vec::new();
    let mut push = |id: &str, message: String| {
        issues.push(ValidationIssue {
            problem_id: id.to_string(),
            message,
        })
    };
    for problem in &set.problems {
        if problem.statement.trim().is_empty() {
            push(&problem.id, "empty statement".to_string());
        }
        match &problem.gold {
            GoldAnswer::Math { value, convention } => match normalize_math_answer(value) {
                Ok(gold) => {
                    if *convention == AnswerConvention::AimeInteger && !in_aime_range(&gold) {
                        push(&problem.id, format!("aime gold out of range: {value}"));
                    }
                }
                Err(e) => push(&problem.id, format!("gold not parseable: {e}")),
            },
            GoldAnswer::Code { tests } => {
                if tests.cases.is_empty() {
                    push(&problem.id, "empty test suite".to_string());
                }
                let mut case_ids = HashMap::new();
                for case in &tests.cases {
                    if case_ids.insert(case.id.as_str(), ()).is_some() {
                        push(&problem.id, format!("duplicate test case id '{}'", case.id));
                    }
                }
                if tests.limits.wall_time_ms == 0 {
                    push(&problem.id, "wall_time_ms must be positive".to_string());
                }
                if tests.limits.memory_bytes == 0 {
                    push(&problem.id, "memory_bytes must be positive".to_string());
                }
                if tests.limits.max_output_bytes == 0 {
                    push(&problem.id, "max_output_bytes must be positive".to_string());
                }
            }
        }
    }
    ValidationReport {
        set_name: set.set_name.clone(),
        issues,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn math_line(id: &str, gold: &str, convention: &str) -> String {
        format!(
            r#"{{"id":"{id}","set_name":"t","task_kind":"math","statement":"What is it?","gold":{{"value":"{gold}","convention":"{convention}"}}}}"#
        )
    }

    fn write_file(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for line in lines {
            writeln!(f, "{line}").unwrap();
        }
        f.flush().unwrap();
        f
    }

    #[test]
    fn loads_in_file_order() {
        let f = write_file(&[
            math_line("b", "1", "gsm8k_numeric"),
            math_line("a", "2", "gsm8k_numeric"),
            math_line("c", "3", "gsm8k_numeric"),
        ]);
        let set = load_problems(f.path(), Some(TaskKind::Math)).unwrap();
        let ids: Vec<_> = set.problems.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["b", "a", "c"]);
        assert!(set.source_digest.starts_with("sha256:"));
    }

    #[test]
    fn duplicate_id_names_both_lines() {
        let f = write_file(&[
            math_line("p1", "1", "gsm8k_numeric"),
            math_line("p1", "2", "gsm8k_numeric"),
        ]);
        let err = load_problems(f.path(), None).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("'p1'"), "{msg}");
        assert!(msg.contains(":2:") && msg.contains("line 1"), "{msg}");
    }

    #[test]
    fn unparseable_gold_fails_at_load() {
        let f = write_file(&[math_line("p1", "x+1", "gsm8k_numeric")]);
        let err = load_problems(f.path(), None).unwrap_err();
        assert!(err.to_string().contains("not parseable"), "{err}");
    }

    #[test]
    fn kind_mismatch_reports_line() {
        let f = write_file(&[math_line("p1", "1", "gsm8k_numeric")]);
        let err = load_problems(f.path(), Some(TaskKind::Code)).unwrap_err();
        assert!(err.to_string().contains(":1:"), "{err}");
    }

    fn pool(n: usize) -> ProblemSet {
        let problems = (1..=n)
            .map(|i| Problem {
                id: format!("p{i:02}"),
                set_name: "pool".to_string(),
                task_kind: TaskKind::Math,
                statement: "s".to_string(),
                gold: GoldAnswer::Math {
                    value: "1".to_string(),
                    convention: AnswerConvention::Gsm8kNumeric,
                },
                difficulty: None,
            })
            .collect();
        ProblemSet {
            set_name: "pool".to_string(),
            problems,
            source_digest: "sha256:test".to_string(),
            sample_seed: None,
        }
    }

    #[test]
    fn sampling_is_deterministic() {
        let set = pool(30);
        let a = sample_problems(&set, 20, 7).unwrap();
        let b = sample_problems(&set, 20, 7).unwrap();
        let ids = |s: &ProblemSet| s.problems.iter().map(|p| p.id.clone()).collect::<Vec<_>>();
        assert_eq!(ids(&a), ids(&b));
        assert_eq!(a.sample_seed, Some(7));
        let c = sample_problems(&set, 20, 8).unwrap();
        assert_ne!(ids(&a), ids(&c));
    }

    #[test]
    fn full_sample_is_the_whole_set_by_id() {
        let set = pool(5);
        let full = sample_problems(&set, 5, 999).unwrap();
        let ids: Vec<_> = full.problems.iter().map(|p| p.id.as_str()).collect();
        assert_eq!(ids, ["p01", "p02", "p03", "p04", "p05"]);
    }

    #[test]
    fn sample_bounds_are_usage_errors() {
        let set = pool(5);
        assert_eq!(sample_problems(&set, 0, 1).unwrap_err().category(), "usage");
        let err = sample_problems(&set, 6, 1).unwrap_err();
        assert!(err.to_string().contains('6') && err.to_string().contains('5'));
    }

    #[test]
    fn validate_flags_aime_range_and_empty_suite() {
        let mut set = pool(1);
        set.problems[0].gold = GoldAnswer::Math {
            value: "1200".to_string(),
            convention: AnswerConvention::AimeInteger,
        };
        let report = validate_set(&set);
        assert!(report.issues[0].message.contains("out of range"));

        set.problems[0].task_kind = TaskKind::Code;
        set.problems[0].gold = GoldAnswer::Code {
            tests: TestSuite {
                cases: vec![],
                limits: Default::default(),
                runner: Default::default(),
            },
        };
        let report = validate_set(&set);
        assert!(report
            .issues
            .iter()
            .any(|i| i.message.contains("empty test suite")));
    }

    #[test]
    fn clean_set_validates_clean() {
        assert!(validate_set(&pool(3)).is_clean());
    }
}
