use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use handoff_cli::commands::{self, OutputFormat, RunArgs};
use handoff_core::error::Error;

/// Two-stage think/answer inference harness: run routing variants over
/// problem sets, grade the results, and render success-rate reports.
#[derive(Parser)]
#[command(name = "handoff", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a routing variant over problem sets into a run directory.
    /// Resumable: existing records are reused when config and templates
    /// are unchanged.
    Run {
        /// Harness config (backends + sandbox + templates).
        #[arg(long)]
        config: PathBuf,
        /// Routing variant: nar_nar, nar_ar, ar_only, nar_only.
        #[arg(long)]
        variant: String,
        /// Problem files (JSONL), one per set.
        #[arg(long, num_args = 1.., required = true)]
        problems: Vec<PathBuf>,
        /// Sample sizes: one value for all sets or one per file.
        #[arg(long, num_args = 0..)]
        sample: Vec<usize>,
        /// Sampling seed.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Concurrent pipeline workers.
        #[arg(long, default_value_t = 1)]
        parallelism: usize,
        /// Output directory for records, manifest, and transcript.
        #[arg(long)]
        run_dir: PathBuf,
        /// Output format: plain, markdown, json.
        #[arg(long, default_value = "plain")]
        format: String,
        /// Backend id for the think stage (default "nar").
        #[arg(long)]
        think_backend: Option<String>,
        /// Backend id for the answer stage (default "ar").
        #[arg(long)]
        answer_backend: Option<String>,
    },
    /// Re-grade stored records from their recorded answer text.
    Grade {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        problems: Vec<PathBuf>,
    },
    /// Aggregate a run directory into a success-rate table.
    Report {
        #[arg(long)]
        run_dir: PathBuf,
        #[arg(long, num_args = 1.., required = true)]
        problems: Vec<PathBuf>,
        #[arg(long, default_value = "plain")]
        format: String,
    },
    /// Percentage-point deltas between two run directories (a minus b).
    Compare {
        #[arg(long, num_args = 1.., required = true)]
        problems: Vec<PathBuf>,
        #[arg(long, default_value = "plain")]
        format: String,
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
    },
    /// Condense a transcript log into a replay fixture.
    RecordFixture { transcript: PathBuf, out: PathBuf },
    /// Check problem files for schema and convention violations.
    Validate {
        #[arg(long, num_args = 1.., required = true)]
        problems: Vec<PathBuf>,
    },
}

fn parse_format(s: &str) -> Result<OutputFormat, Error> {
    match s {
        "plain" => Ok(OutputFormat::Plain),
        "markdown" => Ok(OutputFormat::Markdown),
        "json" => Ok(OutputFormat::Json),
        other => Err(Error::usage(format!(
            "unknown format '{other}' (expected plain, markdown, json)"
        ))),
    }
}

fn dispatch(command: Command) -> Result<String, Error> {
    match command {
        Command::Run {
            config,
            variant,
            problems,
            sample,
            seed,
            parallelism,
            run_dir,
            format,
            think_backend,
            answer_backend,
        } => commands::cmd_run(&RunArgs {
            config,
            variant,
            problems,
            sample,
            seed,
            parallelism,
            run_dir,
            format: parse_format(&format)?,
            think_backend,
            answer_backend,
        }),
        Command::Grade {
            config,
            run_dir,
            problems,
        } => commands::cmd_grade(&config, &run_dir, &problems),
        Command::Report {
            run_dir,
            problems,
            format,
        } => commands::cmd_report(&run_dir, &problems, parse_format(&format)?),
        Command::Compare {
            problems,
            format,
            run_a,
            run_b,
        } => commands::cmd_compare(&run_a, &run_b, &problems, parse_format(&format)?),
        Command::RecordFixture { transcript, out } => {
            commands::cmd_record_fixture(&transcript, &out)
        }
        Command::Validate { problems } => commands::cmd_validate(&problems),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .format_timestamp(None)
        .init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(output) => {
            print!("{output}");
            ExitCode::SUCCESS
        }
        Err(error) => {
            eprintln!("error[{}]: {}", error.category(), error);
            ExitCode::from(error.exit_code() as u8)
        }
    }
}
