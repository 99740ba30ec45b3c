//! Batch driver: runs a problem list over worker threads, persisting one
//! record file per problem as it completes.
//!
//! Run directory layout:
//!
//! ```text
//! <run_dir>/
//!   manifest.json        variant, config/template digests, seed, timestamps
//!   transcript.log       append-only request/response log (JSONL)
//!   records/<id>.json    one PipelineRecord per problem
//! ```
//!
//! Re-invoking with the same run directory resumes: problems whose record
//! files already exist are skipped, keyed by variant + template digest +
//! backend digest recorded in the manifest. A manifest mismatch
//! invalidates every cached record. Record writes go through a temp file
//! and rename, so a killed run never leaves a partial record behind.

use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::canon;
use crate::corpus::Problem;
use crate::error::{Error, Result};
use crate::gateway::{BackendRegistry, TranscriptEntry};
use crate::grading::{SandboxConfig, SandboxSlots};
use crate::protocol::TemplateSet;

use super::{run_pipeline, PipelineRecord, RoutingVariant, RunContext};

/// Serialized-append transcript sink shared by all workers.
pub struct TranscriptSink {
    writer: Mutex<File>,
}

impl TranscriptSink {
    pub fn open_append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(format!("opening transcript {}", path.display()), e))?;
        Ok(TranscriptSink {
            writer: Mutex::new(file),
        })
    }

    /// Appends one entry. Entry ordering across concurrent requests is
    /// unspecified; nothing downstream may depend on it.
    pub fn append(&self, entry: &TranscriptEntry) -> Result<()> {
        let line = serde_json::to_string(entry)
            .map_err(|e| Error::Internal(format!("transcript serialization: {e}")))?;
        let mut writer = self.writer.lock().expect("transcript lock poisoned");
        writeln!(writer, "{line}").map_err(|e| Error::io("writing transcript".to_string(), e))
    }
}

/// Source-set metadata recorded in the manifest.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SetMeta {
    pub set_name: String,
    pub source_digest: String,
    pub size: usize,
}

/// Ties a run directory to everything that shaped it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub variant: RoutingVariant,
    pub template_digest: String,
    pub backend_digest: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_seed: Option<u64>,
    #[serde(default)]
    pub problem_sets: Vec<SetMeta>,
    /// Unix seconds; excluded from the digest so reports reproduce.
    pub created_at: u64,
}

impl RunManifest {
    /// Digest binding reports to config, templates, and seed. Timestamps
    /// and set listings are deliberately outside it.
    pub fn digest(&self) -> String {
        let value = json!({
            "variant": self.variant,
            "template_digest": self.template_digest,
            "backend_digest": self.backend_digest,
            "sample_seed": self.sample_seed,
        });
        canon::digest_str(&canon::canonical_json(&value))
    }

    pub fn load(run_dir: &Path) -> Result<Self> {
        let path = run_dir.join("manifest.json");
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: bad manifest: {e}", path.display())))
    }

    fn matches(&self, other: &RunManifest) -> bool {
        self.variant == other.variant
            && self.template_digest == other.template_digest
            && self.backend_digest == other.backend_digest
            && self.sample_seed == other.sample_seed
    }
}

/// Immutable inputs to a batch run beyond the problems themselves.
pub struct RunSpec<'a> {
    pub registry: &'a BackendRegistry,
    pub templates: &'a TemplateSet,
    pub sandbox: &'a SandboxConfig,
    /// Digest of the backend-registry document.
    pub backend_digest: String,
    pub sample_seed: Option<u64>,
    pub set_meta: Vec<SetMeta>,
}

/// Runs every problem through the variant over up to `parallelism`
/// workers, persisting records incrementally into `run_dir`.
///
/// Returns records sorted by problem id regardless of completion order.
/// Individual problem failures become verdicts; only environmental errors
/// abort. Re-invocation skips problems whose records already exist.
pub fn run_set(
    problems: &[Problem],
    variant: &RoutingVariant,
    spec: &RunSpec<'_>,
    parallelism: usize,
    run_dir: &Path,
) -> Result<Vec<PipelineRecord>> {
    if parallelism == 0 {
        return Err(Error::usage("parallelism must be >= 1".to_string()));
    }
    variant.validate()?;
    spec.templates.validate()?;
    let mut sorted: Vec<&Problem> = problems.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));
    for pair in sorted.windows(2) {
        if pair[0].id == pair[1].id {
            return Err(Error::data(format!(
                "duplicate problem id '{}' across input sets",
                pair[0].id
            )));
        }
    }

    let records_dir = run_dir.join("records");
    fs::create_dir_all(&records_dir)
        .map_err(|e| Error::io(format!("creating {}", records_dir.display()), e))?;

    let manifest = RunManifest {
        variant: variant.clone(),
        template_digest: spec.templates.digest(),
        backend_digest: spec.backend_digest.clone(),
        sample_seed: spec.sample_seed,
        problem_sets: spec.set_meta.clone(),
        created_at: SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0),
    };
    let manifest_path = run_dir.join("manifest.json");
    let resume = match RunManifest::load(run_dir) {
        Ok(existing) if existing.matches(&manifest) => true,
        Ok(_) => {
            // Stale cache: the variant, templates, or backends changed.
            log::info!("run manifest changed; invalidating cached records");
            clear_records(&records_dir)?;
            write_json(&manifest_path, &manifest)?;
            false
        }
        Err(_) => {
            write_json(&manifest_path, &manifest)?;
            false
        }
    };

    let sink = TranscriptSink::open_append(&run_dir.join("transcript.log"))?;
    let slots = SandboxSlots::new(spec.sandbox.slots.unwrap_or(parallelism));

    let total = sorted.len();
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let results: Mutex<Vec<Option<PipelineRecord>>> = Mutex::new(vec![None; total]);
    let first_error: Mutex<Option<Error>> = Mutex::new(None);

    std::thread::scope(|scope| {
        for _ in 0..parallelism.min(total.max(1)) {
            scope.spawn(|| {
                let ctx = RunContext {
                    registry: spec.registry,
                    templates: spec.templates,
                    sandbox: spec.sandbox,
                    transcript: Some(&sink),
                    slots: Some(&slots),
                };
                loop {
                    if stop.load(Ordering::SeqCst) {
                        return;
                    }
                    let index = next.fetch_add(1, Ordering::SeqCst);
                    if index >= total {
                        return;
                    }
                    let problem = sorted[index];
                    let record_path = records_dir.join(format!("{}.json", problem.id));
                    let outcome = run_or_reuse(problem, variant, &ctx, &record_path, resume);
                    match outcome {
                        Ok(record) => {
                            log::info!(
                                "[{}/{}] {} -> {}",
                                index + 1,
                                total,
                                problem.id,
                                record.verdict.status.as_str()
                            );
                            results.lock().expect("results lock")[index] = Some(record);
                        }
                        Err(e) => {
                            stop.store(true, Ordering::SeqCst);
                            let mut slot = first_error.lock().expect("error lock");
                            if slot.is_none() {
                                *slot = Some(e);
                            }
                            return;
                        }
                    }
                }
            });
        }
    });

    if let Some(error) = first_error.into_inner().expect("error lock") {
        return Err(error);
    }
    let records: Vec<PipelineRecord> = results
        .into_inner()
        .expect("results lock")
        .into_iter()
        .map(|slot| slot.ok_or_else(|| Error::Internal("missing record slot".to_string())))
        .collect::<Result<_>>()?;
    Ok(records)
}

fn run_or_reuse(
    problem: &Problem,
    variant: &RoutingVariant,
    ctx: &RunContext<'_>,
    record_path: &Path,
    resume: bool,
) -> Result<PipelineRecord> {
    if resume && record_path.exists() {
        if let Ok(text) = fs::read_to_string(record_path) {
            if let Ok(record) = serde_json::from_str::<PipelineRecord>(&text) {
                if record.problem_id == problem.id {
                    return Ok(record);
                }
            }
        }
        // Unreadable or mismatched cache entry: fall through and re-run.
    }
    let record = run_pipeline(problem, variant, ctx)?;
    write_record(record_path, &record)?;
    Ok(record)
}

fn clear_records(records_dir: &Path) -> Result<()> {
    let entries = fs::read_dir(records_dir)
        .map_err(|e| Error::io(format!("listing {}", records_dir.display()), e))?;
    for entry in entries {
        let entry = entry.map_err(|e| Error::io("listing records".to_string(), e))?;
        if entry.path().extension().is_some_and(|ext| ext == "json") {
            fs::remove_file(entry.path())
                .map_err(|e| Error::io(format!("removing {}", entry.path().display()), e))?;
        }
    }
    Ok(())
}

/// Loads every record in a run directory, sorted by problem id.
pub fn load_records(run_dir: &Path) -> Result<Vec<PipelineRecord>> {
    let records_dir = run_dir.join("records");
    let entries = fs::read_dir(&records_dir)
        .map_err(|e| Error::io(format!("listing {}", records_dir.display()), e))?;
    let mut records = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io("listing records".to_string(), e))?;
        let path = entry.path();
        if path.extension().is_none_or(|ext| ext != "json") {
            continue;
        }
        let text = fs::read_to_string(&path)
            .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
        let record: PipelineRecord = serde_json::from_str(&text)
            .map_err(|e| Error::data(format!("{}: bad record: {e}", path.display())))?;
        records.push(record);
    }
    if records.is_empty() {
        return Err(Error::data(format!(
            "no records found under {}",
            records_dir.display()
        )));
    }
    records.sort_by(|a, b| a.problem_id.cmp(&b.problem_id));
    Ok(records)
}

/// Persists one record (temp file + rename, crash safe).
pub fn write_record(path: &Path, record: &PipelineRecord) -> Result<()> {
    write_json(path, record)
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Internal(format!("serialization: {e}")))?;
    text.push('\n');
    let tmp: PathBuf = path.with_extension("json.tmp");
    fs::write(&tmp, text).map_err(|e| Error::io(format!("writing {}", tmp.display()), e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(format!("renaming into {}", path.display()), e))
}

#[cfg(test)]
mod tests {
    use super::super::tests::{math_problem, replay_registry, test_templates};
    use super::super::{RoutingVariant, VariantName};
    use super::*;

    fn spec_for<'a>(
        registry: &'a BackendRegistry,
        templates: &'a TemplateSet,
        sandbox: &'a SandboxConfig,
    ) -> RunSpec<'a> {
        RunSpec {
            registry,
            templates,
            sandbox,
            backend_digest: "sha256:test-backends".to_string(),
            sample_seed: None,
            set_meta: vec![],
        }
    }

    fn ten_problem_setup(
        dir: &Path,
    ) -> (Vec<Problem>, RoutingVariant, TemplateSet, BackendRegistry) {
        let templates = test_templates();
        let variant = RoutingVariant::standard(VariantName::NarAr, "nar", "ar");
        let problems: Vec<Problem> = (1..=10)
            .map(|i| math_problem(&format!("p{i:02}"), &i.to_string()))
            .collect();
        let scripted: Vec<(String, String)> = (1..=10)
            .map(|i| {
                (
                    format!("<think>plan {i}</think>"),
                    format!("<answer>\\boxed{{{i}}}</answer>"),
                )
            })
            .collect();
        let script_refs: Vec<(&Problem, &RoutingVariant, &str, &str)> = problems
            .iter()
            .zip(scripted.iter())
            .map(|(p, (t, a))| (p, &variant, t.as_str(), a.as_str()))
            .collect();
        let registry = replay_registry(&templates, &script_refs, dir);
        (problems, variant, templates, registry)
    }

    #[test]
    fn batch_runs_sorted_and_deterministic_across_parallelism() {
        let dir = tempfile::tempdir().unwrap();
        let (problems, variant, templates, registry) = ten_problem_setup(dir.path());
        let sandbox = SandboxConfig::default();
        let spec = spec_for(&registry, &templates, &sandbox);

        let run_a = dir.path().join("run_a");
        let run_b = dir.path().join("run_b");
        let records_1 = run_set(&problems, &variant, &spec, 1, &run_a).unwrap();
        let records_8 = run_set(&problems, &variant, &spec, 8, &run_b).unwrap();
        assert_eq!(records_1.len(), 10);
        let ids: Vec<_> = records_1.iter().map(|r| r.problem_id.clone()).collect();
        let mut expected = ids.clone();
        expected.sort();
        assert_eq!(ids, expected);
        assert_eq!(records_1, records_8);

        // Byte-identical record files.
        for record in &records_1 {
            let a = fs::read(
                run_a
                    .join("records")
                    .join(format!("{}.json", record.problem_id)),
            )
            .unwrap();
            let b = fs::read(
                run_b
                    .join("records")
                    .join(format!("{}.json", record.problem_id)),
            )
            .unwrap();
            assert_eq!(a, b);
        }
        assert!(records_1.iter().all(|r| r.verdict.is_pass()));
    }

    #[test]
    fn resume_skips_existing_records() {
        let dir = tempfile::tempdir().unwrap();
        let (problems, variant, templates, registry) = ten_problem_setup(dir.path());
        let sandbox = SandboxConfig::default();
        let spec = spec_for(&registry, &templates, &sandbox);

        let run_dir = dir.path().join("run");
        let first = run_set(&problems, &variant, &spec, 2, &run_dir).unwrap();
        // Delete three records; the rerun must reproduce them identically.
        for id in ["p02", "p05", "p09"] {
            fs::remove_file(run_dir.join("records").join(format!("{id}.json"))).unwrap();
        }
        let second = run_set(&problems, &variant, &spec, 2, &run_dir).unwrap();
        assert_eq!(first, second);
    }

    #[test]
    fn manifest_change_invalidates_cache() {
        let dir = tempfile::tempdir().unwrap();
        let (problems, variant, templates, registry) = ten_problem_setup(dir.path());
        let sandbox = SandboxConfig::default();
        let run_dir = dir.path().join("run");

        let spec = spec_for(&registry, &templates, &sandbox);
        run_set(&problems, &variant, &spec, 2, &run_dir).unwrap();
        let manifest_before = RunManifest::load(&run_dir).unwrap();

        // Same templates/backends: manifest (and created_at) is retained.
        run_set(&problems, &variant, &spec, 2, &run_dir).unwrap();
        assert_eq!(RunManifest::load(&run_dir).unwrap(), manifest_before);

        // Different backend digest: cached records are invalidated.
        let changed = RunSpec {
            backend_digest: "sha256:other".to_string(),
            ..spec_for(&registry, &templates, &sandbox)
        };
        run_set(&problems, &variant, &changed, 2, &run_dir).unwrap();
        let manifest_after = RunManifest::load(&run_dir).unwrap();
        assert_eq!(manifest_after.backend_digest, "sha256:other");
    }

    #[test]
    fn crash_then_resume_equals_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let (problems, variant, templates, registry) = ten_problem_setup(dir.path());
        let sandbox = SandboxConfig::default();
        let spec = spec_for(&registry, &templates, &sandbox);

        // Uninterrupted reference run.
        let full_dir = dir.path().join("full");
        let reference = run_set(&problems, &variant, &spec, 4, &full_dir).unwrap();

        // Simulated crash: only the first four problems completed.
        let crash_dir = dir.path().join("crashed");
        run_set(&problems[..4], &variant, &spec, 4, &crash_dir).unwrap();
        let resumed = run_set(&problems, &variant, &spec, 4, &crash_dir).unwrap();
        assert_eq!(reference, resumed);
        for record in &reference {
            let a = fs::read(
                full_dir
                    .join("records")
                    .join(format!("{}.json", record.problem_id)),
            )
            .unwrap();
            let b = fs::read(
                crash_dir
                    .join("records")
                    .join(format!("{}.json", record.problem_id)),
            )
            .unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn unwritable_run_dir_fails_before_model_calls() {
        let dir = tempfile::tempdir().unwrap();
        let (problems, variant, templates, registry) = ten_problem_setup(dir.path());
        let sandbox = SandboxConfig::default();
        let spec = spec_for(&registry, &templates, &sandbox);
        // A file where the run dir should be.
        let blocked = dir.path().join("blocked");
        fs::write(&blocked, "not a directory").unwrap();
        let err = run_set(&problems, &variant, &spec, 1, &blocked).unwrap_err();
        assert_eq!(err.category(), "io");
    }
}
