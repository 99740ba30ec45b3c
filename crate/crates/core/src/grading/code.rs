//! Sandboxed execution of code candidates against test suites.
//!
//! Candidates are judged under a stdin/stdout program contract: the source
//! is written to an isolated temp workspace and invoked once per test case
//! through the configured command template, with the case's stdin piped in
//! and stdout compared to the expected output (exact, after trimming
//! trailing whitespace per line). Limits are enforced per case: wall time
//! (kill on breach, `timeout` verdict), address-space size via rlimit, and
//! an output cap read-enforced by the grader so a flooding candidate can
//! never balloon grader memory.

use std::io::{Read, Write};
use std::process::{Child, Command, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{GoldAnswer, SandboxLimits, Verdict};

/// How candidate programs are executed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SandboxConfig {
    /// Command template; `{source}` expands to the candidate's file path.
    /// Example: `["python3", "{source}"]`.
    pub command: Vec<String>,
    /// Filename the candidate source is written to inside its workspace.
    #[serde(default = "default_source_filename")]
    pub source_filename: String,
    /// Teardown allowance on top of `wall_time_ms` before a kill is
    /// considered late.
    #[serde(default = "default_grace_ms")]
    pub grace_ms: u64,
    /// Run every case even after a failure (debugging aid); the verdict is
    /// still determined by the first failure.
    #[serde(default)]
    pub full_matrix: bool,
    /// Max concurrent gradings; defaults to the run parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slots: Option<usize>,
}

fn default_source_filename() -> String {
    "program.py".to_string()
}

fn default_grace_ms() -> u64 {
    500
}

impl Default for SandboxConfig {
    fn default() -> Self {
        SandboxConfig {
            command: vec!["python3".to_string(), "{source}".to_string()],
            source_filename: default_source_filename(),
            grace_ms: default_grace_ms(),
            full_matrix: false,
            slots: None,
        }
    }
}

#[derive(Debug, PartialEq, Eq)]
enum CaseOutcome {
    Passed,
    WrongOutput,
    ExitFailure { code: i32, stdout_empty: bool },
    Timeout,
    OutputLimit,
    SpawnFailed,
}

/// Grades a candidate program against the gold test suite.
///
/// Returns a verdict for every candidate behavior; the only `Err` cases
/// are environmental (missing sandbox command, empty suite misuse).
pub fn grade_code(
    candidate_source: &str,
    gold: &GoldAnswer,
    sandbox: &SandboxConfig,
) -> Result<Verdict> {
    let GoldAnswer::Code { tests } = gold else {
        return Err(Error::usage(
            "grade_code called with a math gold answer".to_string(),
        ));
    };
    if tests.cases.is_empty() {
        return Err(Error::data("test suite has no cases".to_string()));
    }
    if sandbox.command.is_empty() {
        return Err(Error::config("sandbox command is empty".to_string()));
    }

    let workspace =
        tempfile::tempdir().map_err(|e| Error::io("creating sandbox workspace".to_string(), e))?;
    let source_path = workspace.path().join(&sandbox.source_filename);
    std::fs::write(&source_path, candidate_source)
        .map_err(|e| Error::io("writing candidate source".to_string(), e))?;
    let source_str = source_path.to_string_lossy().into_owned();

    let mut first_failure: Option<Verdict> = None;
    for (index, case) in tests.cases.iter().enumerate() {
        let outcome = run_case(
            sandbox,
            &source_str,
            &case.stdin,
            &case.expected_stdout,
            &tests.limits,
        )?;
        let failure = match outcome {
            CaseOutcome::Passed => None,
            CaseOutcome::WrongOutput => Some(Verdict::fail(case.id.clone())),
            CaseOutcome::Timeout => Some(Verdict::timeout(case.id.clone())),
            CaseOutcome::OutputLimit => {
                Some(Verdict::fail(format!("{}: output limit exceeded", case.id)))
            }
            CaseOutcome::SpawnFailed => Some(Verdict::fail("startup")),
            CaseOutcome::ExitFailure { code, stdout_empty } => {
                // A nonzero exit with no output on the very first case is
                // indistinguishable from a program that never started
                // (interpreter syntax error, immediate crash).
                if index == 0 && stdout_empty {
                    Some(Verdict::fail("startup"))
                } else {
                    Some(Verdict::fail(format!("{}: exit status {}", case.id, code)))
                }
            }
        };
        if let Some(verdict) = failure {
            if first_failure.is_none() {
                first_failure = Some(verdict);
            }
            if !sandbox.full_matrix {
                break;
            }
        }
    }
    Ok(first_failure.unwrap_or_else(Verdict::pass))
}

fn run_case(
    sandbox: &SandboxConfig,
    source_path: &str,
    stdin: &str,
    expected_stdout: &str,
    limits: &SandboxLimits,
) -> Result<CaseOutcome> {
    let argv: Vec<String> = sandbox
        .command
        .iter()
        .map(|part| part.replace("{source}", source_path))
        .collect();
    let mut command = Command::new(&argv[0]);
    command
        .args(&argv[1..])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped());
    apply_memory_limit(&mut command, limits.memory_bytes);

    // The wall clock runs from launch, so total per-case grading time is
    // bounded by wall_time_ms plus the teardown grace even when process
    // startup is slow.
    let deadline = Instant::now() + Duration::from_millis(limits.wall_time_ms);
    let mut child = match command.spawn() {
        Ok(child) => child,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::config(format!(
                "sandbox command '{}' not found",
                argv[0]
            )));
        }
        Err(_) => return Ok(CaseOutcome::SpawnFailed),
    };

    // Feed stdin from a helper thread so a non-reading candidate cannot
    // deadlock the grader.
    let stdin_pipe = child.stdin.take();
    let stdin_data = stdin.as_bytes().to_vec();
    let stdin_thread = std::thread::spawn(move || {
        if let Some(mut pipe) = stdin_pipe {
            let _ = pipe.write_all(&stdin_data);
        }
    });

    let cap = limits.max_output_bytes as usize;
    let overflow = Arc::new(AtomicBool::new(false));
    let stdout_pipe = child.stdout.take().expect("stdout piped");
    let stdout_overflow = Arc::clone(&overflow);
    let stdout_thread = std::thread::spawn(move || read_capped(stdout_pipe, cap, &stdout_overflow));
    let stderr_pipe = child.stderr.take().expect("stderr piped");
    let stderr_thread = std::thread::spawn(move || drain(stderr_pipe));

    let status = loop {
        if overflow.load(Ordering::SeqCst) {
            kill_and_reap(&mut child);
            join_io(stdin_thread, stdout_thread, stderr_thread);
            return Ok(CaseOutcome::OutputLimit);
        }
        match child.try_wait() {
            Ok(Some(status)) => break status,
            Ok(None) => {
                if Instant::now() >= deadline {
                    kill_and_reap(&mut child);
                    join_io(stdin_thread, stdout_thread, stderr_thread);
                    return Ok(CaseOutcome::Timeout);
                }
                std::thread::sleep(Duration::from_millis(2));
            }
            Err(_) => {
                kill_and_reap(&mut child);
                join_io(stdin_thread, stdout_thread, stderr_thread);
                return Ok(CaseOutcome::SpawnFailed);
            }
        }
    };

    let _ = stdin_thread.join();
    let stdout = stdout_thread.join().unwrap_or_default();
    let _ = stderr_thread.join();

    if overflow.load(Ordering::SeqCst) {
        return Ok(CaseOutcome::OutputLimit);
    }
    if !status.success() {
        return Ok(CaseOutcome::ExitFailure {
            code: status.code().unwrap_or(-1),
            stdout_empty: stdout.is_empty(),
        });
    }
    let actual = String::from_utf8_lossy(&stdout);
    if outputs_match(expected_stdout, &actual) {
        Ok(CaseOutcome::Passed)
    } else {
        Ok(CaseOutcome::WrongOutput)
    }
}

fn join_io(
    stdin: std::thread::JoinHandle<()>,
    stdout: std::thread::JoinHandle<Vec<u8>>,
    stderr: std::thread::JoinHandle<()>,
) {
    let _ = stdin.join();
    let _ = stdout.join();
    let _ = stderr.join();
}

fn kill_and_reap(child: &mut Child) {
    let _ = child.kill();
    let _ = child.wait();
}

/// Reads at most `cap` bytes; sets the overflow flag and stops reading as
/// soon as the cap is crossed, bounding grader memory regardless of how
/// much the candidate writes.
fn read_capped(mut pipe: impl Read, cap: usize, overflow: &AtomicBool) -> Vec<u8> {
    let mut collected = Vec::new();
    let mut buf = [0u8; 8192];
    loop {
        match pipe.read(&mut buf) {
            Ok(0) => break,
            Ok(n) => {
                if collected.len() + n > cap {
                    collected.extend_from_slice(&buf[..n.min(cap - collected.len().min(cap))]);
                    overflow.store(true, Ordering::SeqCst);
                    break;
                }
                collected.extend_from_slice(&buf[..n]);
            }
            Err(_) => break,
        }
    }
    collected
}

fn drain(mut pipe: impl Read) {
    let mut buf = [0u8; 8192];
    while matches!(pipe.read(&mut buf), Ok(n) if n > 0) {}
}

#[cfg(unix)]
fn apply_memory_limit(command: &mut Command, memory_bytes: u64) {
    use std::os::unix::process::CommandExt;
    unsafe {
        command.pre_exec(move || {
            let limit = libc::rlimit {
                rlim_cur: memory_bytes,
                rlim_max: memory_bytes,
            };
            libc::setrlimit(libc::RLIMIT_AS, &limit);
            Ok(())
        });
    }
}

#[cfg(not(unix))]
fn apply_memory_limit(_command: &mut Command, _memory_bytes: u64) {}

/// Exact comparison after trimming trailing whitespace per line (a final
/// newline does not count as an extra line).
fn outputs_match(expected: &str, actual: &str) -> bool {
    let norm = |text: &str| -> Vec<String> {
        text.lines()
            .map(|line| line.trim_end().to_string())
            .collect()
    };
    norm(expected) == norm(actual)
}

/// Counting semaphore bounding concurrent sandbox use.
pub struct SandboxSlots {
    available: Mutex<usize>,
    signal: Condvar,
}

impl SandboxSlots {
    pub fn new(slots: usize) -> Self {
        SandboxSlots {
            available: Mutex::new(slots.max(1)),
            signal: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> SlotGuard<'_> {
        let mut available = self.available.lock().expect("slots lock poisoned");
        while *available == 0 {
            available = self.signal.wait(available).expect("slots lock poisoned");
        }
        *available -= 1;
        SlotGuard { slots: self }
    }
}

pub struct SlotGuard<'a> {
    slots: &'a SandboxSlots,
}

impl Drop for SlotGuard<'_> {
    fn drop(&mut self) {
        let mut available = self.slots.available.lock().expect("slots lock poisoned");
        *available += 1;
        self.slots.signal.notify_one();
    }
}
