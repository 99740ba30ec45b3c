//! Two-stage routing: executes each problem through its variant and
//! produces a complete, re-gradable record.
//!
//! Per-problem isolation is structural: backend failures become
//! `stage_error` verdicts and grading format failures become
//! `format_error` verdicts, so one bad problem never aborts a batch.
//! Errors that do abort are environmental (unknown backend, missing
//! sandbox command, unwritable run directory).

mod batch;

use serde::{Deserialize, Serialize};

use crate::corpus::{Problem, TaskKind};
use crate::error::{Error, Result};
use crate::gateway::{BackendRegistry, Completion, CompletionRequest, Message, TranscriptEntry};
use crate::grading::{self, SandboxConfig, SandboxSlots, Verdict};
use crate::protocol::{
    build_answer_prompt, build_single_stage_prompt, build_think_prompt, extract_answer,
    extract_think, CandidateAnswer, Stage, TemplateSet, ThinkTrace,
};

pub use batch::{
    load_records, run_set, write_record, RunManifest, RunSpec, SetMeta, TranscriptSink,
};

/// The four routing variants: two-stage handoffs and single-stage
/// baselines (the latter are harness extensions for ablation).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    /// Think and answer on the same fast drafting backend.
    NarNar,
    /// Think on the drafting backend, answer on the strong backend.
    NarAr,
    /// Single call to the strong backend, no handoff.
    ArOnly,
    /// Single call to the drafting backend, no handoff.
    NarOnly,
}

impl VariantName {
    pub fn as_str(self) -> &'static str {
        match self {
            VariantName::NarNar => "nar_nar",
            VariantName::NarAr => "nar_ar",
            VariantName::ArOnly => "ar_only",
            VariantName::NarOnly => "nar_only",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "nar_nar" => Ok(VariantName::NarNar),
            "nar_ar" => Ok(VariantName::NarAr),
            "ar_only" => Ok(VariantName::ArOnly),
            "nar_only" => Ok(VariantName::NarOnly),
            other => Err(Error::usage(format!(
                "unknown variant '{other}' (expected nar_nar, nar_ar, ar_only, nar_only)"
            ))),
        }
    }
}

/// Assignment of pipeline stages to backends.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoutingVariant {
    pub name: VariantName,
    pub think_backend: Option<String>,
    pub answer_backend: String,
}

impl RoutingVariant {
    pub fn new(
        name: VariantName,
        think_backend: Option<String>,
        answer_backend: String,
    ) -> Result<Self> {
        let variant = RoutingVariant {
            name,
            think_backend,
            answer_backend,
        };
        variant.validate()?;
        Ok(variant)
    }

    /// Conventional wiring given a drafting backend id and a strong
    /// backend id.
    pub fn standard(name: VariantName, nar_id: &str, ar_id: &str) -> Self {
        match name {
            VariantName::NarNar => RoutingVariant {
                name,
                think_backend: Some(nar_id.to_string()),
                answer_backend: nar_id.to_string(),
            },
            VariantName::NarAr => RoutingVariant {
                name,
                think_backend: Some(nar_id.to_string()),
                answer_backend: ar_id.to_string(),
            },
            VariantName::ArOnly => RoutingVariant {
                name,
                think_backend: None,
                answer_backend: ar_id.to_string(),
            },
            VariantName::NarOnly => RoutingVariant {
                name,
                think_backend: None,
                answer_backend: nar_id.to_string(),
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| {
            Err(Error::usage(format!(
                "variant {}: {msg}",
                self.name.as_str()
            )))
        };
        match self.name {
            VariantName::NarNar => match &self.think_backend {
                Some(t) if *t == self.answer_backend => Ok(()),
                _ => bad("think and answer must use the same backend"),
            },
            VariantName::NarAr => match &self.think_backend {
                Some(t) if *t != self.answer_backend => Ok(()),
                Some(_) => bad("think and answer must use different backends"),
                None => bad("think backend is required"),
            },
            VariantName::ArOnly | VariantName::NarOnly => {
                if self.think_backend.is_some() {
                    bad("single-stage variants take no think backend")
                } else {
                    Ok(())
                }
            }
        }
    }

    pub fn has_think_stage(&self) -> bool {
        self.think_backend.is_some()
    }
}

/// Cost figures for one executed stage, copied from the completion (or
/// zeros with the attempt count when the stage failed in transport).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageStats {
    pub stage: Stage,
    pub backend_id: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub latency_ms: u64,
    pub retries_used: u32,
}

impl StageStats {
    fn from_completion(stage: Stage, completion: &Completion) -> Self {
        StageStats {
            stage,
            backend_id: completion.backend_id.clone(),
            prompt_tokens: completion.usage.prompt_tokens,
            completion_tokens: completion.usage.completion_tokens,
            latency_ms: completion.latency_ms,
            retries_used: completion.retries_used,
        }
    }

    fn from_failure(stage: Stage, backend_id: &str, attempts: u32) -> Self {
        StageStats {
            stage,
            backend_id: backend_id.to_string(),
            prompt_tokens: 0,
            completion_tokens: 0,
            latency_ms: 0,
            retries_used: attempts.saturating_sub(1),
        }
    }
}

/// Full request/response text of one executed stage, embedded in the
/// record so handoff integrity is auditable offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTranscript {
    pub stage: Stage,
    pub backend_id: String,
    pub request_key: String,
    pub messages: Vec<Message>,
    pub response_text: String,
}

/// Non-fatal conditions observed while executing a pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunWarning {
    /// The think stage produced an empty trace; the handoff section was
    /// present but empty.
    EmptyThinkTrace,
}

/// Everything one problem's execution produced: enough to re-grade
/// offline without re-calling any model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub problem_id: String,
    pub variant: RoutingVariant,
    /// At most one trace, ever: the single-trace rule is structural.
    pub think: Option<ThinkTrace>,
    pub candidate: Option<CandidateAnswer>,
    pub verdict: Verdict,
    pub stage_stats: Vec<StageStats>,
    pub stage_transcripts: Vec<StageTranscript>,
    pub warnings: Vec<RunWarning>,
}

impl PipelineRecord {
    /// Sum of prompt and completion tokens over all executed stages.
    pub fn total_tokens(&self) -> u64 {
        self.stage_stats
            .iter()
            .map(|s| s.prompt_tokens + s.completion_tokens)
            .sum()
    }
}

/// Shared execution context for pipeline runs.
pub struct RunContext<'a> {
    pub registry: &'a BackendRegistry,
    pub templates: &'a TemplateSet,
    pub sandbox: &'a SandboxConfig,
    pub transcript: Option<&'a TranscriptSink>,
    pub slots: Option<&'a SandboxSlots>,
}

enum StageResult {
    Completed {
        completion: Completion,
        transcript: StageTranscript,
    },
    Failed(StageStats),
}

/// Executes one problem through one variant.
///
/// Two-stage variants: think prompt, think completion, trace extraction,
/// answer prompt with the verbatim trace, answer completion, candidate
/// extraction, grading. Single-stage variants skip the handoff. Transport
/// failures surface as `stage_error` verdicts on the record.
pub fn run_pipeline(
    problem: &Problem,
    variant: &RoutingVariant,
    ctx: &RunContext<'_>,
) -> Result<PipelineRecord> {
    variant.validate()?;
    let mut stats: Vec<StageStats> = Vec::new();
    let mut transcripts: Vec<StageTranscript> = Vec::new();
    let mut warnings: Vec<RunWarning> = Vec::new();

    // Think stage (two-stage variants only). Exactly one trace per record.
    let think: Option<ThinkTrace> = match &variant.think_backend {
        Some(think_backend) => {
            let template = ctx.templates.get(Stage::Think, problem.task_kind);
            let messages = build_think_prompt(problem, template)?;
            match call_stage(ctx, problem, Stage::Think, think_backend, messages)? {
                StageResult::Failed(failed) => {
                    stats.push(failed);
                    return Ok(PipelineRecord {
                        problem_id: problem.id.clone(),
                        variant: variant.clone(),
                        think: None,
                        candidate: None,
                        verdict: Verdict::stage_error("think"),
                        stage_stats: stats,
                        stage_transcripts: transcripts,
                        warnings,
                    });
                }
                StageResult::Completed {
                    completion,
                    transcript,
                } => {
                    stats.push(StageStats::from_completion(Stage::Think, &completion));
                    let trace = extract_think(&completion.text, think_backend);
                    transcripts.push(transcript);
                    if trace.text.is_empty() {
                        warnings.push(RunWarning::EmptyThinkTrace);
                    }
                    Some(trace)
                }
            }
        }
        None => None,
    };

    // Answer stage (always).
    let template = ctx.templates.get(Stage::Answer, problem.task_kind);
    let messages = match &think {
        Some(trace) => build_answer_prompt(problem, trace, template)?,
        None => build_single_stage_prompt(problem, template)?,
    };
    let completion = match call_stage(
        ctx,
        problem,
        Stage::Answer,
        &variant.answer_backend,
        messages,
    )? {
        StageResult::Failed(failed) => {
            stats.push(failed);
            return Ok(PipelineRecord {
                problem_id: problem.id.clone(),
                variant: variant.clone(),
                think,
                candidate: None,
                verdict: Verdict::stage_error("answer"),
                stage_stats: stats,
                stage_transcripts: transcripts,
                warnings,
            });
        }
        StageResult::Completed {
            completion,
            transcript,
        } => {
            transcripts.push(transcript);
            completion
        }
    };
    stats.push(StageStats::from_completion(Stage::Answer, &completion));

    let candidate = extract_answer(&completion.text, problem.task_kind);
    let verdict = grade(problem, &candidate, ctx)?;

    Ok(PipelineRecord {
        problem_id: problem.id.clone(),
        variant: variant.clone(),
        think,
        candidate: Some(candidate),
        verdict,
        stage_stats: stats,
        stage_transcripts: transcripts,
        warnings,
    })
}

/// Issues one stage call; logs the request/response pair to the run
/// transcript. Transport exhaustion and fixture misses are per-problem
/// failures; anything else aborts the batch.
fn call_stage(
    ctx: &RunContext<'_>,
    problem: &Problem,
    stage: Stage,
    backend_id: &str,
    messages: Vec<Message>,
) -> Result<StageResult> {
    let params = ctx.registry.default_params(backend_id)?;
    let request = CompletionRequest::new(backend_id, messages, params);
    match ctx.registry.complete(&request) {
        Ok(completion) => {
            let key = request.request_key();
            if let Some(sink) = ctx.transcript {
                sink.append(&TranscriptEntry {
                    key: key.clone(),
                    backend_id: backend_id.to_string(),
                    stage: stage.as_str().to_string(),
                    problem_id: problem.id.clone(),
                    messages: request.messages.clone(),
                    params: request.params.clone(),
                    completion: completion.clone(),
                })?;
            }
            let transcript = StageTranscript {
                stage,
                backend_id: backend_id.to_string(),
                request_key: key,
                messages: request.messages,
                response_text: completion.text.clone(),
            };
            Ok(StageResult::Completed {
                completion,
                transcript,
            })
        }
        Err(Error::TransportExhausted {
            attempts,
            backend_id,
            last_error,
        }) => {
            log::warn!(
                "problem {}: {} stage failed after {} attempts: {}",
                problem.id,
                stage.as_str(),
                attempts,
                last_error
            );
            Ok(StageResult::Failed(StageStats::from_failure(
                stage,
                &backend_id,
                attempts,
            )))
        }
        Err(Error::FixtureMiss { backend_id, key }) => {
            log::warn!(
                "problem {}: {} stage replay miss for key {}",
                problem.id,
                stage.as_str(),
                key
            );
            Ok(StageResult::Failed(StageStats::from_failure(
                stage,
                &backend_id,
                1,
            )))
        }
        Err(other) => Err(other),
    }
}

fn grade(problem: &Problem, candidate: &CandidateAnswer, ctx: &RunContext<'_>) -> Result<Verdict> {
    match problem.task_kind {
        TaskKind::Math => grading::grade_math(candidate, &problem.gold),
        TaskKind::Code => {
            let _guard = ctx.slots.map(|slots| slots.acquire());
            grading::grade_code(&candidate.extracted, &problem.gold, ctx.sandbox)
        }
    }
}
