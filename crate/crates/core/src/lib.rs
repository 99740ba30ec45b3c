//! Batch inference orchestration for two-stage think/answer pipelines,
//! plus the evaluation harness (corpus loading, grading, pass@1 scoring,
//! cost accounting, report rendering) needed to score them offline.
//!
//! The pipeline splits each problem into a `think` stage that produces a
//! reasoning trace and an `answer` stage that consumes the trace verbatim
//! and emits the final output. Stages are routed to model backends behind
//! a uniform completion interface; a record/replay backend makes whole
//! runs deterministic and reproducible without network access.

pub mod canon;
pub mod corpus;
pub mod error;
pub mod gateway;
pub mod grading;
pub mod protocol;
pub mod report;
pub mod router;

pub use corpus::{Problem, ProblemSet, TaskKind, ValidationReport};
pub use error::Error;
pub use gateway::{
    BackendConfig, BackendKind, BackendRegistry, Completion, CompletionRequest, GenerationParams,
    Message, RetryPolicy, Role,
};
pub use grading::{
    AnswerConvention, GoldAnswer, SandboxConfig, SandboxLimits, TestSuite, Verdict, VerdictStatus,
};
pub use protocol::{CandidateAnswer, PromptTemplate, Stage, ThinkTrace};
pub use report::{CostSummary, DeltaReport, RunReport, SetSummary};
pub use router::{PipelineRecord, RoutingVariant, RunManifest, StageStats, VariantName};
