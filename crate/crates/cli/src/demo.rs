//! Generator for the shipped demo corpus: synthetic problem sets, replay
//! fixtures, and materialized run directories for both two-stage
//! variants.
//!
//! Everything here is deterministic, so `make_fixtures` can be re-run and
//! diffed: problem statements and golds derive from the problem index,
//! canned completions derive from the problems, and fixture usage and
//! latency numbers derive from request content. The canned answers are
//! arranged to produce fixed verdict counts per set (headline run 10/20,
//! 10/10, 19/20; baseline run 2/20, 9/10, 15/20) so the demo reports are
//! stable targets for the acceptance suite.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde_json::json;

use handoff_core::canon;
use handoff_core::corpus::{self, Problem};
use handoff_core::error::{Error, Result};
use handoff_core::gateway::{
    BackendConfig, BackendKind, BackendRegistry, CompletionRequest, FixtureEntry, GenerationParams,
    Message, RetryPolicy,
};
use handoff_core::grading::SandboxConfig;
use handoff_core::protocol::{
    build_answer_prompt, build_think_prompt, extract_think, Stage, TemplateSet,
};
use handoff_core::router::{run_set, RoutingVariant, RunSpec, SetMeta, VariantName};

const WALL_TIME_MS: u64 = 2000;
const MEMORY_BYTES: u64 = 268_435_456;
const MAX_OUTPUT_BYTES: u64 = 65_536;

/// Generates the full demo corpus under `fixtures_root`. The template set
/// must be the repo defaults the demo config points at.
pub fn generate(fixtures_root: &Path, templates: &TemplateSet) -> Result<()> {
    for sub in ["problems", "replay", "config", "runs"] {
        fs::create_dir_all(fixtures_root.join(sub))
            .map_err(|e| Error::io(format!("creating fixtures/{sub}"), e))?;
    }

    write_problem_files(fixtures_root)?;
    let aime = corpus::load_problems(&fixtures_root.join("problems/aime_demo.jsonl"), None)?;
    let gsm8k = corpus::load_problems(&fixtures_root.join("problems/gsm8k_demo.jsonl"), None)?;
    let leetcode =
        corpus::load_problems(&fixtures_root.join("problems/leetcode_demo.jsonl"), None)?;

    let mut problems: Vec<Problem> = Vec::new();
    let mut set_meta = Vec::new();
    for set in [&aime, &gsm8k, &leetcode] {
        set_meta.push(SetMeta {
            set_name: set.set_name.clone(),
            source_digest: set.source_digest.clone(),
            size: set.problems.len(),
        });
        problems.extend(set.problems.iter().cloned());
    }

    let headline = RoutingVariant::standard(VariantName::NarAr, "nar", "ar");
    let baseline = RoutingVariant::standard(VariantName::NarNar, "nar", "ar");

    // Replay fixtures: think completions live on "nar"; answer
    // completions live on the variant's answer backend.
    let mut nar_entries: Vec<FixtureEntry> = Vec::new();
    let mut ar_entries: Vec<FixtureEntry> = Vec::new();
    for problem in &problems {
        let think_text = think_text(problem);
        let think_messages =
            build_think_prompt(problem, templates.get(Stage::Think, problem.task_kind))?;
        nar_entries.push(fixture_entry("nar", &think_messages, &think_text));

        let trace = extract_think(&think_text, "nar");
        let answer_template = templates.get(Stage::Answer, problem.task_kind);
        let answer_messages = build_answer_prompt(problem, &trace, answer_template)?;
        ar_entries.push(fixture_entry(
            "ar",
            &answer_messages,
            &answer_text(problem, &headline),
        ));
        nar_entries.push(fixture_entry(
            "nar",
            &answer_messages,
            &answer_text(problem, &baseline),
        ));
    }
    write_fixture_file(&fixtures_root.join("replay/nar.jsonl"), &nar_entries)?;
    write_fixture_file(&fixtures_root.join("replay/ar.jsonl"), &ar_entries)?;

    // Demo config, digested as authored (relative paths).
    let backend_for = |id: &str, fixture: &str| BackendConfig {
        id: id.to_string(),
        kind: BackendKind::Replay,
        endpoint: None,
        model_name: Some(format!("{id}-sim")),
        auth_token_env: None,
        fixture_path: Some(PathBuf::from(fixture)),
        retry: RetryPolicy::default(),
        timeout_ms: 30_000,
        default_params: GenerationParams::default(),
    };
    let backends = vec![
        backend_for("nar", "../replay/nar.jsonl"),
        backend_for("ar", "../replay/ar.jsonl"),
    ];
    let backends_value = serde_json::to_value(&backends)
        .map_err(|e| Error::Internal(format!("backend serialization: {e}")))?;
    let backend_digest = canon::digest_str(&canon::canonical_json(&backends_value));
    let sandbox = SandboxConfig::default();
    let config_value = json!({
        "backends": backends_value,
        "sandbox": sandbox,
        "templates": {
            "think_math": "../../config/templates/think_math.json",
            "think_code": "../../config/templates/think_code.json",
            "answer_math": "../../config/templates/answer_math.json",
            "answer_code": "../../config/templates/answer_code.json"
        }
    });
    let config_path = fixtures_root.join("config/demo.json");
    let mut config_text = serde_json::to_string_pretty(&config_value)
        .map_err(|e| Error::Internal(format!("config serialization: {e}")))?;
    config_text.push('\n');
    fs::write(&config_path, config_text)
        .map_err(|e| Error::io(format!("writing {}", config_path.display()), e))?;

    // Materialized runs, one directory per variant.
    let resolved: Vec<BackendConfig> = backends
        .into_iter()
        .map(|mut config| {
            config.fixture_path = config
                .fixture_path
                .map(|p| fixtures_root.join("config").join(p));
            config
        })
        .collect();
    let registry = BackendRegistry::from_configs(resolved)?;
    for (variant, dir) in [(&headline, "nar_ar"), (&baseline, "nar_nar")] {
        let run_dir = fixtures_root.join("runs").join(dir);
        // Regenerate from scratch; resume would keep stale records when
        // canned texts change without a digest change.
        if run_dir.exists() {
            fs::remove_dir_all(&run_dir)
                .map_err(|e| Error::io(format!("clearing {}", run_dir.display()), e))?;
        }
        let spec = RunSpec {
            registry: &registry,
            templates,
            sandbox: &sandbox,
            backend_digest: backend_digest.clone(),
            sample_seed: None,
            set_meta: set_meta.clone(),
        };
        run_set(&problems, variant, &spec, 1, &run_dir)?;
    }
    Ok(())
}

fn fixture_entry(backend_id: &str, messages: &[Message], text: &str) -> FixtureEntry {
    let request =
        CompletionRequest::new(backend_id, messages.to_vec(), GenerationParams::default());
    let key = request.request_key();
    let prompt_chars: usize = messages.iter().map(|m| m.content.len()).sum();
    FixtureEntry {
        key: key.clone(),
        text: text.to_string(),
        prompt_tokens: (prompt_chars / 4 + 1) as u64,
        completion_tokens: (text.len() / 4 + 1) as u64,
        latency_ms: derived_latency(&key),
    }
}

fn derived_latency(key: &str) -> u64 {
    let hex = &key["sha256:".len().."sha256:".len() + 4];
    u64::from_str_radix(hex, 16).unwrap_or(0) % 180 + 20
}

fn write_fixture_file(path: &Path, entries: &[FixtureEntry]) -> Result<()> {
    let mut seen = std::collections::HashSet::new();
    let mut out = String::new();
    for entry in entries {
        if !seen.insert(entry.key.clone()) {
            return Err(Error::Internal(format!(
                "request-key collision in generated fixture {}: {}",
                path.display(),
                entry.key
            )));
        }
        let line = serde_json::to_string(entry)
            .map_err(|e| Error::Internal(format!("fixture serialization: {e}")))?;
        writeln!(out, "{line}").expect("string write");
    }
    fs::write(path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

// --- problem construction ---------------------------------------------

struct AimeParams {
    a: u64,
    b: u64,
    c: u64,
    gold: u64,
}

fn aime_params(i: u64) -> AimeParams {
    let (a, b, c) = (12 + 7 * i, 31 + 3 * i, 5 + 11 * i);
    AimeParams {
        a,
        b,
        c,
        gold: (a * b + c) % 1000,
    }
}

fn pool_params(i: u64) -> AimeParams {
    let (a, b, c) = (17 + 5 * i, 23 + 9 * i, 3 + 4 * i);
    AimeParams {
        a,
        b,
        c,
        gold: (a * b + c) % 1000,
    }
}

struct GsmParams {
    boxes: u64,
    per_box: u64,
    sold: u64,
    gold: u64,
}

fn gsm_params(i: u64) -> GsmParams {
    let (boxes, per_box, sold) = (7 + 3 * i, 11 + 2 * i, 5 * i);
    GsmParams {
        boxes,
        per_box,
        sold,
        gold: boxes * per_box - sold,
    }
}

struct CodeTask {
    statement: String,
    solution: &'static str,
    cases: Vec<(String, String)>,
}

fn code_task(i: u64) -> CodeTask {
    // Statements embed the task number so every problem (and therefore
    // every stage request) is textually distinct.
    match (i - 1) % 4 {
        0 => CodeTask {
            statement: format!(
                "Task {i}: read pairs of integers, one pair per line, from standard input and print their sum, one result per line."
            ),
            solution: "import sys\nfor line in sys.stdin:\n    a, b = line.split()\n    print(int(a) + int(b))\n",
            cases: vec![
                (
                    format!("{} {}\n{} {}\n", i, i + 1, 2 * i, 3 * i),
                    format!("{}\n{}\n", 2 * i + 1, 5 * i),
                ),
                (format!("{} {}\n", 10 * i, 7), format!("{}\n", 10 * i + 7)),
            ],
        },
        1 => CodeTask {
            statement: format!(
                "Task {i}: read a single integer n from standard input and print the sum of the integers from 1 to n."
            ),
            solution: "n = int(input())\nprint(n * (n + 1) // 2)\n",
            cases: vec![
                (format!("{}\n", i + 3), format!("{}\n", (i + 3) * (i + 4) / 2)),
                (format!("{}\n", 20 + i), format!("{}\n", (20 + i) * (21 + i) / 2)),
            ],
        },
        2 => CodeTask {
            statement: format!(
                "Task {i}: read a single line from standard input and print it reversed."
            ),
            solution: "s = input()\nprint(s[::-1])\n",
            cases: vec![
                (
                    format!("stack{i}\n"),
                    format!("{}\n", format!("stack{i}").chars().rev().collect::<String>()),
                ),
                ("ab cd\n".to_string(), "dc ba\n".to_string()),
            ],
        },
        _ => CodeTask {
            statement: format!(
                "Task {i}: read integers separated by whitespace from standard input until end of file and print the maximum."
            ),
            solution: "import sys\nvals = [int(x) for x in sys.stdin.read().split()]\nprint(max(vals))\n",
            cases: vec![
                (format!("3 {} 9\n14\n", 40 + i), format!("{}\n", 40 + i)),
                (format!("-5 -2 -{i}\n"), "-2\n".to_string()),
            ],
        },
    }
}

fn write_problem_files(fixtures_root: &Path) -> Result<()> {
    let write = |name: &str, lines: Vec<String>| -> Result<()> {
        let path = fixtures_root.join("problems").join(name);
        let mut out = String::new();
        for line in lines {
            writeln!(out, "{line}").expect("string write");
        }
        fs::write(&path, out).map_err(|e| Error::io(format!("writing {}", path.display()), e))
    };

    let math_line = |id: String, set: &str, statement: String, gold: u64, convention: &str| {
        json!({
            "id": id,
            "set_name": set,
            "task_kind": "math",
            "statement": statement,
            "gold": {"value": gold.to_string(), "convention": convention}
        })
        .to_string()
    };

    write(
        "aime_demo.jsonl",
        (1..=20)
            .map(|i| {
                let p = aime_params(i);
                math_line(
                    format!("aime-q{i:02}"),
                    "aime_demo",
                    format!(
                        "Find the remainder when {} * {} + {} is divided by 1000.",
                        p.a, p.b, p.c
                    ),
                    p.gold,
                    "aime_integer",
                )
            })
            .collect(),
    )?;

    write(
        "aime_pool.jsonl",
        (1..=30)
            .map(|i| {
                let p = pool_params(i);
                math_line(
                    format!("aime-p{i:02}"),
                    "aime_pool",
                    format!(
                        "Find the remainder when {} * {} + {} is divided by 1000.",
                        p.a, p.b, p.c
                    ),
                    p.gold,
                    "aime_integer",
                )
            })
            .collect(),
    )?;

    write(
        "gsm8k_demo.jsonl",
        (1..=10)
            .map(|i| {
                let p = gsm_params(i);
                math_line(
                    format!("gsm-q{i:02}"),
                    "gsm8k_demo",
                    format!(
                        "A packer fills {} boxes with {} items each, then sells {} items. How many items remain?",
                        p.boxes, p.per_box, p.sold
                    ),
                    p.gold,
                    "gsm8k_numeric",
                )
            })
            .collect(),
    )?;

    write(
        "leetcode_demo.jsonl",
        (1..=20)
            .map(|i| {
                let task = code_task(i);
                let cases: Vec<serde_json::Value> = task
                    .cases
                    .iter()
                    .enumerate()
                    .map(|(idx, (stdin, expected))| {
                        json!({"id": format!("c{}", idx + 1), "stdin": stdin, "expected_stdout": expected})
                    })
                    .collect();
                json!({
                    "id": format!("lc-q{i:02}"),
                    "set_name": "leetcode_demo",
                    "task_kind": "code",
                    "statement": task.statement,
                    "difficulty": "hard",
                    "gold": {
                        "tests": cases,
                        "limits": {
                            "wall_time_ms": WALL_TIME_MS,
                            "memory_bytes": MEMORY_BYTES,
                            "max_output_bytes": MAX_OUTPUT_BYTES
                        },
                        "runner": "stdin_stdout"
                    }
                })
                .to_string()
            })
            .collect(),
    )?;
    Ok(())
}

// --- canned model output ----------------------------------------------

fn problem_index(problem: &Problem) -> u64 {
    problem.id[problem.id.len() - 2..].parse().unwrap_or(0)
}

fn think_text(problem: &Problem) -> String {
    let i = problem_index(problem);
    match problem.set_name.as_str() {
        "aime_demo" => {
            let p = aime_params(i);
            format!(
                "<think>Multiply {} by {} to get {}, add {} for {}, then reduce modulo 1000; the remainder is {}.</think>",
                p.a,
                p.b,
                p.a * p.b,
                p.c,
                p.a * p.b + p.c,
                p.gold
            )
        }
        "gsm8k_demo" => {
            let p = gsm_params(i);
            if i == 3 {
                // Untagged trace: used as-is, flagged by extraction.
                format!(
                    "Plan: total items are {} * {} = {}; subtract the {} sold to leave {}.",
                    p.boxes,
                    p.per_box,
                    p.boxes * p.per_box,
                    p.sold,
                    p.gold
                )
            } else {
                format!(
                    "<think>Total items are {} * {} = {}; subtracting the {} sold leaves {}.</think>",
                    p.boxes,
                    p.per_box,
                    p.boxes * p.per_box,
                    p.sold,
                    p.gold
                )
            }
        }
        _ => {
            if i == 5 {
                // Unclosed trace: everything after the opening tag is kept.
                format!(
                    "<think>Task {i}: stream stdin, apply the transformation, print each result."
                )
            } else {
                format!("<think>Task {i}: parse stdin as described, apply the transformation, and print the results. Mind EOF handling and exact output formatting.</think>")
            }
        }
    }
}

/// Canned answer-stage output for one problem under one variant, arranged
/// to hit the demo verdict counts.
fn answer_text(problem: &Problem, variant: &RoutingVariant) -> String {
    let i = problem_index(problem);
    let strong = variant.name == VariantName::NarAr;
    match problem.set_name.as_str() {
        "aime_demo" => {
            let gold = aime_params(i).gold;
            let wrong = (gold + 1) % 1000;
            let pass = if strong { i <= 10 } else { i <= 2 };
            match i {
                19 => "<answer>2\\sqrt{2}</answer>".to_string(),
                20 => {
                    if strong {
                        "<answer>1005</answer>".to_string()
                    } else {
                        "The quantity has no definite value.".to_string()
                    }
                }
                _ => render_math_answer(i, if pass { gold } else { wrong }),
            }
        }
        "gsm8k_demo" => {
            let gold = gsm_params(i).gold;
            let pass = strong || i <= 9;
            render_math_answer(i, if pass { gold } else { gold + 3 })
        }
        _ => {
            let task = code_task(i);
            let pass = if strong { i <= 19 } else { i <= 15 };
            let program = if pass {
                task.solution.to_string()
            } else if !strong && i == 20 {
                "def broken(:\n    pass\n".to_string()
            } else {
                "print(0)\n".to_string()
            };
            if i.is_multiple_of(3) {
                format!("<answer>\n```python\n{program}```\n</answer>")
            } else {
                format!("Here is the program.\n\n```python\n{program}```")
            }
        }
    }
}

/// Rotates through the extraction formats the graders accept.
fn render_math_answer(i: u64, value: u64) -> String {
    let with_commas = |v: u64| {
        let digits = v.to_string();
        if digits.len() > 3 {
            let split = digits.len() - 3;
            format!("{},{}", &digits[..split], &digits[split..])
        } else {
            digits
        }
    };
    match i % 5 {
        0 => format!("<answer>\\boxed{{{value}}}</answer>"),
        1 => format!("The remainder works out to \\boxed{{{value}}}."),
        2 => format!("<answer>{}</answer>", with_commas(value)),
        3 => format!("#### {value}"),
        _ => format!("So the final count is {value}."),
    }
}
