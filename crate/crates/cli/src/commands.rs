//! Command implementations behind the CLI surface.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use handoff_core::corpus::{self, Problem, ProblemSet};
use handoff_core::error::{Error, Result};
use handoff_core::gateway;
use handoff_core::protocol::extract_answer;
use handoff_core::report::{self, DeltaReport, RunReport, TableFormat};
use handoff_core::router::{
    self, PipelineRecord, RoutingVariant, RunManifest, RunSpec, SetMeta, VariantName,
};

use crate::config::{load_config, LoadedConfig};

/// Output format for tables and reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Plain,
    Markdown,
    Json,
}

pub struct RunArgs {
    pub config: PathBuf,
    pub variant: String,
    pub problems: Vec<PathBuf>,
    pub sample: Vec<usize>,
    pub seed: u64,
    pub parallelism: usize,
    pub run_dir: PathBuf,
    pub format: OutputFormat,
    pub think_backend: Option<String>,
    pub answer_backend: Option<String>,
}

/// Loads problem files, applying per-set sampling when requested.
///
/// `--sample` pairs with `--problems` by position: one value applies to
/// every set, otherwise there must be exactly one value per file.
fn load_sets(paths: &[PathBuf], sample: &[usize], seed: u64) -> Result<Vec<ProblemSet>> {
    if paths.is_empty() {
        return Err(Error::usage(
            "at least one --problems file is required".to_string(),
        ));
    }
    let per_set_n: Vec<Option<usize>> = match sample.len() {
        0 => vec![None; paths.len()],
        1 => vec![Some(sample[0]); paths.len()],
        n if n == paths.len() => sample.iter().map(|&v| Some(v)).collect(),
        n => {
            return Err(Error::usage(format!(
                "--sample takes one value or one per problem file ({} files, {n} values)",
                paths.len()
            )))
        }
    };
    let mut sets = Vec::with_capacity(paths.len());
    for (path, n) in paths.iter().zip(per_set_n) {
        let set = corpus::load_problems(path, None)?;
        let set = match n {
            Some(n) => corpus::sample_problems(&set, n, seed)?,
            None => set,
        };
        sets.push(set);
    }
    Ok(sets)
}

fn merge_problems(sets: &[ProblemSet]) -> (Vec<Problem>, Vec<SetMeta>, HashMap<String, String>) {
    let mut problems = Vec::new();
    let mut meta = Vec::new();
    let mut index = HashMap::new();
    for set in sets {
        meta.push(SetMeta {
            set_name: set.set_name.clone(),
            source_digest: set.source_digest.clone(),
            size: set.problems.len(),
        });
        for problem in &set.problems {
            index.insert(problem.id.clone(), set.set_name.clone());
            problems.push(problem.clone());
        }
    }
    (problems, meta, index)
}

fn build_variant(args: &RunArgs) -> Result<RoutingVariant> {
    let name = VariantName::parse(&args.variant)?;
    let nar = args.think_backend.as_deref().unwrap_or("nar");
    let ar = args.answer_backend.as_deref().unwrap_or("ar");
    let variant = match name {
        VariantName::NarNar | VariantName::NarOnly => RoutingVariant::standard(name, nar, nar),
        VariantName::NarAr => RoutingVariant::standard(name, nar, ar),
        VariantName::ArOnly => RoutingVariant::standard(name, ar, ar),
    };
    variant.validate()?;
    Ok(variant)
}

pub fn cmd_run(args: &RunArgs) -> Result<String> {
    let config: LoadedConfig = load_config(&args.config)?;
    let sets = load_sets(&args.problems, &args.sample, args.seed)?;
    let (problems, set_meta, set_index) = merge_problems(&sets);
    let variant = build_variant(args)?;
    let sample_seed = if args.sample.is_empty() {
        None
    } else {
        Some(args.seed)
    };
    let spec = RunSpec {
        registry: &config.registry,
        templates: &config.templates,
        sandbox: &config.sandbox,
        backend_digest: config.backend_digest.clone(),
        sample_seed,
        set_meta,
    };
    let records = router::run_set(&problems, &variant, &spec, args.parallelism, &args.run_dir)?;
    let manifest = RunManifest::load(&args.run_dir)?;
    let run_report = report::aggregate(&records, &set_index, &manifest.digest())?;
    render_run_report(&run_report, args.format)
}

fn render_run_report(run_report: &RunReport, format: OutputFormat) -> Result<String> {
    Ok(match format {
        OutputFormat::Plain => run_report.render_table(TableFormat::Plain, 0),
        OutputFormat::Markdown => run_report.render_table(TableFormat::Markdown, 0),
        OutputFormat::Json => report::emit_json(run_report)?,
    })
}

fn render_delta_report(delta: &DeltaReport, format: OutputFormat) -> Result<String> {
    Ok(match format {
        OutputFormat::Plain => delta.render_table(TableFormat::Plain, 0),
        OutputFormat::Markdown => delta.render_table(TableFormat::Markdown, 0),
        OutputFormat::Json => report::emit_json(delta)?,
    })
}

fn gold_index(paths: &[PathBuf]) -> Result<HashMap<String, Problem>> {
    let sets = load_sets(paths, &[], 0)?;
    let mut index = HashMap::new();
    for set in sets {
        for problem in set.problems {
            index.insert(problem.id.clone(), problem);
        }
    }
    Ok(index)
}

/// Re-grades stored records from their recorded raw answer text, for use
/// after normalizer or grader fixes. Prints the number of changed
/// verdicts; a second invocation over unchanged records reports zero.
pub fn cmd_grade(config_path: &Path, run_dir: &Path, problems: &[PathBuf]) -> Result<String> {
    let config = load_config(config_path)?;
    let golds = gold_index(problems)?;
    let records = router::load_records(run_dir)?;
    let mut changed = 0usize;
    for mut record in records {
        let Some(candidate) = record.candidate.clone() else {
            continue; // stage errors have nothing to re-grade
        };
        let problem = golds.get(&record.problem_id).ok_or_else(|| {
            Error::data(format!(
                "record '{}' has no matching problem in the given files",
                record.problem_id
            ))
        })?;
        let fresh_candidate = extract_answer(&candidate.raw, problem.task_kind);
        let fresh_verdict = match problem.task_kind {
            corpus::TaskKind::Math => {
                handoff_core::grading::grade_math(&fresh_candidate, &problem.gold)?
            }
            corpus::TaskKind::Code => handoff_core::grading::grade_code(
                &fresh_candidate.extracted,
                &problem.gold,
                &config.sandbox,
            )?,
        };
        if fresh_verdict != record.verdict || fresh_candidate != candidate {
            record.candidate = Some(fresh_candidate);
            record.verdict = fresh_verdict;
            let path = run_dir
                .join("records")
                .join(format!("{}.json", record.problem_id));
            router::write_record(&path, &record)?;
            changed += 1;
        }
    }
    Ok(format!("{changed} changed verdicts\n"))
}

pub fn cmd_report(run_dir: &Path, problems: &[PathBuf], format: OutputFormat) -> Result<String> {
    let sets = load_sets(problems, &[], 0)?;
    let (_, _, set_index) = merge_problems(&sets);
    let records = router::load_records(run_dir)?;
    let manifest = RunManifest::load(run_dir)?;
    let run_report = report::aggregate(&records, &set_index, &manifest.digest())?;
    render_run_report(&run_report, format)
}

pub fn cmd_compare(
    run_dir_a: &Path,
    run_dir_b: &Path,
    problems: &[PathBuf],
    format: OutputFormat,
) -> Result<String> {
    let sets = load_sets(problems, &[], 0)?;
    let (_, _, set_index) = merge_problems(&sets);
    let report_for = |run_dir: &Path| -> Result<RunReport> {
        let records = router::load_records(run_dir)?;
        let manifest = RunManifest::load(run_dir)?;
        report::aggregate(&records, &set_index, &manifest.digest())
    };
    let a = report_for(run_dir_a)?;
    let b = report_for(run_dir_b)?;
    let delta = report::compare_runs(&a, &b)?;
    render_delta_report(&delta, format)
}

pub fn cmd_record_fixture(transcript: &Path, out: &Path) -> Result<String> {
    let stats = gateway::record_fixture(transcript, out)?;
    Ok(format!(
        "{} entries, {} duplicate keys collapsed\n",
        stats.entries, stats.duplicate_keys_collapsed
    ))
}

/// Validates corpus files; clean sets exit 0, findings exit 3. Findings
/// are listed on stdout, keeping the error itself a single line.
pub fn cmd_validate(problems: &[PathBuf]) -> Result<String> {
    let mut out = String::new();
    let mut issue_count = 0usize;
    for path in problems {
        let set = corpus::load_problems(path, None)?;
        let report = corpus::validate_set(&set);
        if report.is_clean() {
            out.push_str(&format!(
                "{}: clean ({} problems)\n",
                set.set_name,
                set.problems.len()
            ));
        } else {
            for issue in &report.issues {
                out.push_str(&format!(
                    "{}: {}: {}\n",
                    set.set_name, issue.problem_id, issue.message
                ));
            }
            issue_count += report.issues.len();
        }
    }
    if issue_count > 0 {
        print!("{out}");
        Err(Error::data(format!(
            "validation found {issue_count} issue(s)"
        )))
    } else {
        Ok(out)
    }
}

/// Loads every record in a run directory (CLI helper re-export).
pub fn load_records(run_dir: &Path) -> Result<Vec<PipelineRecord>> {
    router::load_records(run_dir)
}
