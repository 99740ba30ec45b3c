//! Property suites over the protocol and grading invariants.

use num::bigint::BigInt;
use num::rational::BigRational;
use proptest::prelude::*;

use handoff_core::corpus::{Problem, TaskKind};
use handoff_core::gateway::{CompletionRequest, GenerationParams, Message};
use handoff_core::grading::math::{math_equivalent, normalize_math_answer, render_rational};
use handoff_core::grading::{pass_at_1, AnswerConvention, GoldAnswer, Verdict};
use handoff_core::protocol::{
    build_answer_prompt, extract_answer, extract_think, render_canonical_answer, ExtractionRule,
    PromptTemplate, Stage,
};

fn math_problem(statement: &str) -> Problem {
    Problem {
        id: "prop".to_string(),
        set_name: "prop".to_string(),
        task_kind: TaskKind::Math,
        statement: statement.to_string(),
        gold: GoldAnswer::Math {
            value: "1".to_string(),
            convention: AnswerConvention::Gsm8kNumeric,
        },
        difficulty: None,
    }
}

fn answer_template() -> PromptTemplate {
    PromptTemplate {
        stage: Stage::Answer,
        system_text: "finalize".to_string(),
        user_pattern: "P: {statement}\nT:\n{think}\n{format_hint}".to_string(),
        format_hint: "hint".to_string(),
    }
}

/// Arbitrary text that frequently contains tag fragments and numerics.
fn adversarial_text() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            Just("<think>".to_string()),
            Just("</think>".to_string()),
            Just("<answer>".to_string()),
            Just("</answer>".to_string()),
            Just("\\boxed{".to_string()),
            Just("}".to_string()),
            Just("####".to_string()),
            Just("```".to_string()),
            "[a-z0-9 ,.%/+-]{0,12}",
            "\\PC{0,8}",
        ],
        0..12,
    )
    .prop_map(|parts| parts.concat())
}

proptest! {
    // Extraction totality: never panics, always classifies.
    #[test]
    fn think_extraction_is_total(raw in adversarial_text()) {
        let trace = extract_think(&raw, "nar");
        prop_assert_eq!(trace.char_len, trace.text.chars().count());
    }

    #[test]
    fn answer_extraction_is_total(raw in adversarial_text()) {
        let math = extract_answer(&raw, TaskKind::Math);
        prop_assert!(math.format_failure.is_some() || !math.extracted.is_empty() || math.raw.is_empty() || math.extracted.is_empty());
        let code = extract_answer(&raw, TaskKind::Code);
        prop_assert!(code.format_failure.is_none());
    }

    // Tag-placement enumeration for think extraction: the first
    // well-formed span wins; an opening tag without a close keeps the
    // tail; no tags keeps everything.
    #[test]
    fn think_extraction_matches_simple_model(
        prefix in "[a-z ]{0,8}",
        body in "[a-z ]{0,8}",
        suffix in "[a-z ]{0,8}",
        open in proptest::bool::ANY,
        close in proptest::bool::ANY,
    ) {
        let mut raw = prefix.clone();
        if open { raw.push_str("<think>"); }
        raw.push_str(&body);
        if close { raw.push_str("</think>"); }
        raw.push_str(&suffix);
        let trace = extract_think(&raw, "nar");
        use handoff_core::protocol::ThinkExtraction::*;
        match (open, close) {
            (true, true) => {
                prop_assert_eq!(trace.extraction, Tagged);
                prop_assert_eq!(trace.text, body.trim());
            }
            (true, false) => {
                prop_assert_eq!(trace.extraction, Unclosed);
                let tail = format!("{body}{suffix}");
                prop_assert_eq!(trace.text, tail.trim());
            }
            (false, true) | (false, false) => {
                // A bare closing tag is not an opening; whole text kept.
                prop_assert_eq!(trace.extraction, Untagged);
                prop_assert_eq!(trace.text, raw.trim());
            }
        }
    }

    // Verbatim handoff: the answer-stage prompt contains the trace as a
    // contiguous substring, tags and all, with no escaping.
    #[test]
    fn handoff_is_verbatim(trace_text in adversarial_text()) {
        let trace = handoff_core::protocol::ThinkTrace {
            text: trace_text.clone(),
            extraction: handoff_core::protocol::ThinkExtraction::Tagged,
            char_len: trace_text.chars().count(),
            source_backend: "nar".to_string(),
        };
        let messages =
            build_answer_prompt(&math_problem("statement"), &trace, &answer_template()).unwrap();
        prop_assert!(messages.iter().any(|m| m.content.contains(&trace_text)));
    }

    // Round trip: canonical answers survive render + extract unchanged.
    #[test]
    fn canonical_answer_round_trips(numer in -1_000_000i64..1_000_000, denom in 1i64..10_000) {
        let value = BigRational::new(BigInt::from(numer), BigInt::from(denom));
        let canonical = render_rational(&value);
        let candidate = extract_answer(&render_canonical_answer(&canonical), TaskKind::Math);
        prop_assert_eq!(candidate.extraction_rule, ExtractionRule::AnswerTag);
        prop_assert_eq!(candidate.extracted, canonical);
    }

    // First-match determinism: with several markers present, the
    // highest-precedence rule is always the one recorded.
    #[test]
    fn highest_precedence_rule_wins(n in 0u32..1000, with_tag in proptest::bool::ANY, with_box in proptest::bool::ANY, with_hash in proptest::bool::ANY) {
        let mut raw = String::new();
        if with_box { raw.push_str(&format!("\\boxed{{{}}} ", n + 1)); }
        if with_hash { raw.push_str(&format!("#### {} ", n + 2)); }
        if with_tag { raw.push_str(&format!("<answer>{n}</answer>")); }
        raw.push_str(&format!(" trailing {}", n + 3));
        let candidate = extract_answer(&raw, TaskKind::Math);
        let expected = if with_tag {
            ExtractionRule::AnswerTag
        } else if with_box {
            ExtractionRule::Boxed
        } else if with_hash {
            ExtractionRule::HashMarker
        } else {
            ExtractionRule::LastNumber
        };
        prop_assert_eq!(candidate.extraction_rule, expected);
    }

    // Normalization idempotence over parseable inputs.
    #[test]
    fn normalization_is_idempotent(numer in -10_000i64..10_000, denom in 1i64..1000, percent in proptest::bool::ANY) {
        let raw = if percent {
            format!("{}%", BigRational::new(BigInt::from(numer), BigInt::from(denom)))
        } else {
            BigRational::new(BigInt::from(numer), BigInt::from(denom)).to_string()
        };
        if let Ok(first) = normalize_math_answer(&raw) {
            let rendered = render_rational(&first);
            let second = normalize_math_answer(&rendered).unwrap();
            prop_assert_eq!(first, second);
        }
    }

    // Exactness: equivalence agrees with cross-multiplication, with no
    // floating point anywhere.
    #[test]
    fn equivalence_agrees_with_cross_multiplication(
        a in -10_000i64..10_000, b in 1i64..10_000,
        c in -10_000i64..10_000, d in 1i64..10_000,
    ) {
        let left = BigRational::new(BigInt::from(a), BigInt::from(b));
        let right = BigRational::new(BigInt::from(c), BigInt::from(d));
        let cross = BigInt::from(a) * BigInt::from(d) == BigInt::from(c) * BigInt::from(b);
        prop_assert_eq!(math_equivalent(&left, &right), cross);
    }

    // pass@1 stays in [0,1] and ignores ordering.
    #[test]
    fn pass_rate_bounds_and_permutation(outcomes in proptest::collection::vec(proptest::bool::ANY, 1..50), rotation in 0usize..50) {
        let verdicts: Vec<Verdict> = outcomes
            .iter()
            .map(|&ok| if ok { Verdict::pass() } else { Verdict::fail("wrong answer") })
            .collect();
        let rate = pass_at_1(&verdicts).unwrap();
        prop_assert!(rate >= BigRational::from_integer(BigInt::from(0)));
        prop_assert!(rate <= BigRational::from_integer(BigInt::from(1)));
        let mut rotated = verdicts.clone();
        let len = rotated.len();
        rotated.rotate_left(rotation % len);
        prop_assert_eq!(pass_at_1(&rotated).unwrap(), rate);
    }

    // Request keys are stable across extra-map insertion order and
    // sensitive to content.
    #[test]
    fn request_key_is_canonical(keys in proptest::collection::btree_map("[a-z]{1,6}", 0u32..100, 0..6)) {
        let forward: serde_json::Map<String, serde_json::Value> = keys
            .iter()
            .map(|(k, v)| (k.clone(), serde_json::json!(v)))
            .collect();
        let reverse: serde_json::Map<String, serde_json::Value> = keys
            .iter()
            .rev()
            .map(|(k, v)| (k.clone(), serde_json::json!(v)))
            .collect();
        let request = |extra: serde_json::Map<String, serde_json::Value>| {
            CompletionRequest::new(
                "backend",
                vec![Message::user("prompt")],
                GenerationParams { extra, ..GenerationParams::default() },
            )
        };
        prop_assert_eq!(request(forward).request_key(), request(reverse).request_key());
    }
}
