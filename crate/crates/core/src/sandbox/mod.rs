//! Execution ground truth.
//!
//! A candidate is syntax-checked once, then every test case runs in a fresh
//! process and a fresh temporary working directory. Per-case outcomes give
//! PassRatio (passed cases over all cases) and Executability (no case failed to
//! compile, crashed, timed out or exceeded a resource limit).

mod process;

use std::collections::BTreeMap;
use std::fs;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{CaseKind, TestCase};
use crate::value::Value;
use crate::{Error, Result};

use process::{run_process, ProcessRun, Termination};

const HARNESS: &str = include_str!("harness.py");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExecutionLimits {
    pub wall_time_ms: u64,
    pub cpu_time_ms: u64,
    pub memory_bytes: u64,
    pub max_output_bytes: u64,
    pub network_allowed: bool,
}

impl Default for ExecutionLimits {
    fn default() -> Self {
        ExecutionLimits {
            wall_time_ms: 5000,
            cpu_time_ms: 5000,
            memory_bytes: 512 << 20,
            max_output_bytes: 1 << 20,
            network_allowed: false,
        }
    }
}

impl ExecutionLimits {
    pub fn with_wall_time_ms(mut self, ms: u64) -> Self {
        self.wall_time_ms = ms;
        self.cpu_time_ms = self.cpu_time_ms.min(ms);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.wall_time_ms == 0
            || self.cpu_time_ms == 0
            || self.memory_bytes == 0
            || self.max_output_bytes == 0
        {
            return Err(Error::InvalidArgument("execution limits must be positive".into()));
        }
        if self.cpu_time_ms > self.wall_time_ms {
            return Err(Error::InvalidArgument(format!(
                "cpu_time_ms ({}) exceeds wall_time_ms ({})",
                self.cpu_time_ms, self.wall_time_ms
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseStatus {
    Pass,
    WrongOutput,
    RuntimeError,
    CompileError,
    Timeout,
    ResourceExceeded,
}

impl CaseStatus {
    /// Statuses that make a candidate non-executable.
    pub fn is_execution_failure(self) -> bool {
        matches!(
            self,
            CaseStatus::RuntimeError
                | CaseStatus::CompileError
                | CaseStatus::Timeout
                | CaseStatus::ResourceExceeded
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CaseOutcome {
    pub status: CaseStatus,
    pub stdout: String,
    pub stderr: String,
    pub duration_ms: u64,
}

/// Execution verdict for one candidate over a task's test suite.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateGroundTruth {
    pub pass_ratio: f64,
    pub executability: u8,
    pub outcomes: Vec<CaseOutcome>,
}

impl CandidateGroundTruth {
    pub fn from_outcomes(outcomes: Vec<CaseOutcome>) -> Result<Self> {
        if outcomes.is_empty() {
            return Err(Error::InvalidArgument(
                "PassRatio is undefined for an empty test suite".into(),
            ));
        }
        let passed = outcomes.iter().filter(|o| o.status == CaseStatus::Pass).count();
        let executable = !outcomes.iter().any(|o| o.status.is_execution_failure());
        Ok(CandidateGroundTruth {
            pass_ratio: passed as f64 / outcomes.len() as f64,
            executability: u8::from(executable),
            outcomes,
        })
    }

    pub fn passed(&self) -> usize {
        self.outcomes.iter().filter(|o| o.status == CaseStatus::Pass).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorpusAggregate {
    pub avg_pass_ratio: f64,
    pub pass_at_1: f64,
    pub candidates: usize,
}

/// AvgPassRatio (mean PassRatio over all candidates) and Pass@1 (fraction of
/// candidates passing every case).
pub fn aggregate_corpus(truths: &[Vec<CandidateGroundTruth>]) -> Result<CorpusAggregate> {
    let all: Vec<&CandidateGroundTruth> = truths.iter().flatten().collect();
    if all.is_empty() {
        return Err(Error::InvalidArgument("no candidates to aggregate".into()));
    }
    let n = all.len() as f64;
    let avg = all.iter().map(|t| t.pass_ratio).sum::<f64>() / n;
    let full = all
        .iter()
        .filter(|t| t.outcomes.iter().all(|o| o.status == CaseStatus::Pass))
        .count();
    Ok(CorpusAggregate {
        avg_pass_ratio: avg,
        pass_at_1: full as f64 / n,
        candidates: all.len(),
    })
}

// ---------------------------------------------------------------------------
// Output comparison

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Strip trailing whitespace per line and trailing blank lines (stdio).
    pub line_trim: bool,
    pub float_tolerance: Option<f64>,
}

impl Default for CompareOptions {
    fn default() -> Self {
        CompareOptions {
            line_trim: true,
            float_tolerance: None,
        }
    }
}

/// Observed result of a run, in the representation of its mode.
#[derive(Debug, Clone, PartialEq)]
pub enum Actual<'a> {
    Stdout(&'a str),
    Returned(&'a Value),
}

fn normalized_lines(text: &str) -> Vec<&str> {
    let mut lines: Vec<&str> = text.split('\n').map(str::trim_end).collect();
    while lines.last().is_some_and(|l| l.is_empty()) {
        lines.pop();
    }
    lines
}

pub fn compare_stdout(actual: &str, expected: &str, opts: &CompareOptions) -> bool {
    if opts.line_trim {
        normalized_lines(actual) == normalized_lines(expected)
    } else {
        actual == expected
    }
}

/// Decides the indicator of a single case. A representation that does not match
/// the case mode never compares equal.
pub fn compare_output(actual: &Actual<'_>, expected: &CaseKind, opts: &CompareOptions) -> bool {
    match (actual, expected) {
        (Actual::Stdout(out), CaseKind::Stdio { expected, .. }) => compare_stdout(out, expected, opts),
        (Actual::Returned(v), CaseKind::Call { expected, .. }) => v.approx_eq(expected, opts.float_tolerance),
        _ => false,
    }
}

// ---------------------------------------------------------------------------
// Toolchains

/// Maps a `language_tag` to the interpreter command that runs the harness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolchainTable {
    pub interpreters: BTreeMap<String, Vec<String>>,
}

impl Default for ToolchainTable {
    fn default() -> Self {
        let python = vec!["python3".to_string(), "-I".to_string(), "-S".to_string(), "-B".to_string()];
        ToolchainTable {
            interpreters: BTreeMap::from([
                ("python".to_string(), python.clone()),
                ("python3".to_string(), python),
            ]),
        }
    }
}

impl ToolchainTable {
    fn command(&self, language_tag: &str) -> Result<&[String]> {
        match self.interpreters.get(&language_tag.to_ascii_lowercase()) {
            Some(cmd) if !cmd.is_empty() => Ok(cmd),
            _ => Err(Error::Environment(format!(
                "no toolchain configured for language `{language_tag}`"
            ))),
        }
    }
}

// ---------------------------------------------------------------------------
// Sandbox

/// Result of running code on one input, before comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct RawRun {
    /// `None` when the program ran to completion, otherwise the failure status.
    pub failure: Option<CaseStatus>,
    pub stdout: String,
    pub stderr: String,
    pub returned: Option<Value>,
    pub duration_ms: u64,
}

#[derive(Debug, Clone)]
pub struct EvalJob<'a> {
    pub code: &'a str,
    pub language_tag: &'a str,
    pub cases: &'a [TestCase],
}

/// Runs candidates under limits on a bounded worker pool.
#[derive(Clone)]
pub struct Sandbox {
    toolchains: ToolchainTable,
    compare: CompareOptions,
    pool: Arc<rayon::ThreadPool>,
    jobs: usize,
}

impl std::fmt::Debug for Sandbox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Sandbox")
            .field("toolchains", &self.toolchains)
            .field("compare", &self.compare)
            .field("jobs", &self.jobs)
            .finish()
    }
}

impl Sandbox {
    pub fn new(toolchains: ToolchainTable, compare: CompareOptions, jobs: usize) -> Result<Self> {
        if jobs == 0 {
            return Err(Error::InvalidArgument("parallelism must be at least 1".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .thread_name(|i| format!("sandbox-{i}"))
            .build()
            .map_err(|e| Error::Infrastructure(format!("worker pool: {e}")))?;
        Ok(Sandbox {
            toolchains,
            compare,
            pool: Arc::new(pool),
            jobs,
        })
    }

    /// Python toolchain, default comparison, `jobs` workers.
    pub fn with_jobs(jobs: usize) -> Result<Self> {
        Sandbox::new(ToolchainTable::default(), CompareOptions::default(), jobs)
    }

    pub fn compare_options(&self) -> &CompareOptions {
        &self.compare
    }

    /// Fails with an environment error when the interpreter for `language_tag`
    /// cannot be started.
    pub fn check_toolchain(&self, language_tag: &str) -> Result<()> {
        let cmd = self.toolchains.command(language_tag)?;
        let out = std::process::Command::new(&cmd[0])
            .arg("--version")
            .output()
            .map_err(|e| Error::Environment(format!("cannot run `{}`: {e}", cmd[0])))?;
        if !out.status.success() {
            return Err(Error::Environment(format!("`{} --version` failed", cmd[0])));
        }
        Ok(())
    }

    fn spawn(
        &self,
        language_tag: &str,
        script_args: &[String],
        workdir: &std::path::Path,
        stdin: &[u8],
        limits: &ExecutionLimits,
    ) -> Result<ProcessRun> {
        let cmd = self.toolchains.command(language_tag)?;
        let mut args: Vec<String> = cmd[1..].to_vec();
        args.extend_from_slice(script_args);
        run_process(&cmd[0], &args, workdir, stdin, limits)
    }

    /// Returns the interpreter's diagnostic when `code` does not compile.
    pub fn syntax_check(&self, code: &str, language_tag: &str, limits: &ExecutionLimits) -> Result<Option<String>> {
        limits.validate()?;
        let dir = tempfile::tempdir().map_err(|e| Error::Infrastructure(format!("tempdir: {e}")))?;
        let script = "import sys\ncompile(sys.stdin.buffer.read(), 'solution.py', 'exec')\n";
        let args = vec!["-c".to_string(), script.to_string()];
        let run = self.spawn(language_tag, &args, dir.path(), code.as_bytes(), limits)?;
        Ok(if run.exited_cleanly() {
            None
        } else {
            Some(run.stderr)
        })
    }

    /// Runs `code` on the input of `case` and captures what it produced.
    pub fn execute(&self, code: &str, case: &CaseKind, language_tag: &str, limits: &ExecutionLimits) -> Result<RawRun> {
        limits.validate()?;
        let dir = tempfile::tempdir().map_err(|e| Error::Infrastructure(format!("tempdir: {e}")))?;
        let write = |name: &str, data: &[u8]| {
            fs::write(dir.path().join(name), data)
                .map_err(|e| Error::Infrastructure(format!("writing {name}: {e}")))
        };
        write("solution.py", code.as_bytes())?;
        write("harness.py", HARNESS.as_bytes())?;
        let result_name = format!(".result-{}.json", std::process::id());

        let (mode, stdin) = match case {
            CaseKind::Stdio { input, .. } => ("stdio", input.as_bytes().to_vec()),
            CaseKind::Call {
                entry_point, args, ..
            } => {
                let call = serde_json::json!({
                    "entry_point": entry_point,
                    "args": args.iter().map(Value::to_json).collect::<Vec<_>>(),
                });
                write("call.json", call.to_string().as_bytes())?;
                ("call", Vec::new())
            }
        };
        let script_args = vec![
            "harness.py".to_string(),
            mode.to_string(),
            result_name.clone(),
            if limits.network_allowed { "1" } else { "0" }.to_string(),
        ];
        let run = self.spawn(language_tag, &script_args, dir.path(), &stdin, limits)?;

        let failure = match &run.termination {
            Termination::WallTimeout => Some(CaseStatus::Timeout),
            Termination::OutputExceeded => Some(CaseStatus::ResourceExceeded),
            Termination::Signaled(sig) if *sig == libc::SIGXCPU || *sig == libc::SIGKILL => {
                Some(CaseStatus::ResourceExceeded)
            }
            Termination::Signaled(_) => Some(CaseStatus::RuntimeError),
            Termination::Exited(_) if run.stderr.contains("MemoryError") => Some(CaseStatus::ResourceExceeded),
            Termination::Exited(0) => None,
            Termination::Exited(_) => Some(CaseStatus::RuntimeError),
        };

        let mut returned = None;
        let mut failure = failure;
        if failure.is_none() && mode == "call" {
            match fs::read_to_string(dir.path().join(&result_name))
                .ok()
                .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok())
            {
                Some(json) => returned = Some(Value::from_json(&json)),
                None => failure = Some(CaseStatus::RuntimeError),
            }
        }
        Ok(RawRun {
            failure,
            stdout: run.stdout,
            stderr: run.stderr,
            returned,
            duration_ms: run.duration_ms,
        })
    }

    /// Runs `code` on every input on the worker pool; results keep input order.
    pub fn execute_many(
        &self,
        code: &str,
        inputs: &[CaseKind],
        language_tag: &str,
        limits: &ExecutionLimits,
    ) -> Vec<Result<RawRun>> {
        self.pool.install(|| {
            inputs
                .par_iter()
                .map(|kind| self.execute(code, kind, language_tag, limits))
                .collect()
        })
    }

    /// Whether a clean run produced the expected result of `case`.
    pub fn run_matches(&self, run: &RawRun, case: &CaseKind) -> bool {
        run.failure.is_none() && self.outcome_from_run(run.clone(), case).status == CaseStatus::Pass
    }

    fn outcome_from_run(&self, run: RawRun, case: &CaseKind) -> CaseOutcome {
        let status = match run.failure {
            Some(status) => status,
            None => {
                let actual = match (&run.returned, case) {
                    (Some(v), _) => Actual::Returned(v),
                    (None, _) => Actual::Stdout(&run.stdout),
                };
                if compare_output(&actual, case, &self.compare) {
                    CaseStatus::Pass
                } else {
                    CaseStatus::WrongOutput
                }
            }
        };
        CaseOutcome {
            status,
            stdout: run.stdout,
            stderr: run.stderr,
            duration_ms: run.duration_ms,
        }
    }

    fn compile_failed(diagnostic: &str) -> CaseOutcome {
        CaseOutcome {
            status: CaseStatus::CompileError,
            stdout: String::new(),
            stderr: diagnostic.to_string(),
            duration_ms: 0,
        }
    }

    /// Judges one case: syntax check, then execution, then comparison.
    pub fn run_case(&self, code: &str, case: &TestCase, language_tag: &str, limits: &ExecutionLimits) -> Result<CaseOutcome> {
        if let Some(diag) = self.syntax_check(code, language_tag, limits)? {
            return Ok(Self::compile_failed(&diag));
        }
        let run = self.execute(code, &case.kind, language_tag, limits)?;
        Ok(self.outcome_from_run(run, &case.kind))
    }

    pub fn evaluate_candidate(
        &self,
        code: &str,
        cases: &[TestCase],
        language_tag: &str,
        limits: &ExecutionLimits,
    ) -> Result<CandidateGroundTruth> {
        let job = EvalJob {
            code,
            language_tag,
            cases,
        };
        self.evaluate_many(&[job], limits).pop().expect("one job in, one result out")
    }

    /// Evaluates many candidates; (candidate, case) runs share the worker pool and
    /// results come back in input order regardless of scheduling.
    pub fn evaluate_many(&self, jobs: &[EvalJob<'_>], limits: &ExecutionLimits) -> Vec<Result<CandidateGroundTruth>> {
        if let Err(e) = limits.validate() {
            return jobs.iter().map(|_| Err(Error::InvalidArgument(e.to_string()))).collect();
        }
        self.pool.install(|| {
            let checks: Vec<Result<Option<String>>> = jobs
                .par_iter()
                .map(|j| {
                    if j.cases.is_empty() {
                        return Err(Error::InvalidArgument(
                            "PassRatio is undefined for an empty test suite".into(),
                        ));
                    }
                    self.syntax_check(j.code, j.language_tag, limits)
                })
                .collect();

            let work: Vec<(usize, usize)> = jobs
                .iter()
                .enumerate()
                .filter(|(i, _)| matches!(checks[*i], Ok(None)))
                .flat_map(|(i, j)| (0..j.cases.len()).map(move |c| (i, c)))
                .collect();
            let mut runs: Vec<Option<Result<CaseOutcome>>> = work
                .par_iter()
                .map(|&(i, c)| {
                    let case = &jobs[i].cases[c];
                    self.execute(jobs[i].code, &case.kind, jobs[i].language_tag, limits)
                        .map(|run| self.outcome_from_run(run, &case.kind))
                })
                .map(Some)
                .collect();

            let mut cursor = 0;
            jobs.iter()
                .zip(checks)
                .map(|(job, check)| match check {
                    Err(e) => Err(e),
                    Ok(Some(diag)) => CandidateGroundTruth::from_outcomes(
                        job.cases.iter().map(|_| Self::compile_failed(&diag)).collect(),
                    ),
                    Ok(None) => {
                        let outcomes = runs[cursor..cursor + job.cases.len()]
                            .iter_mut()
                            .map(|r| r.take().expect("each run consumed once"))
                            .collect::<Result<Vec<_>>>();
                        cursor += job.cases.len();
                        CandidateGroundTruth::from_outcomes(outcomes?)
                    }
                })
                .collect()
        })
    }
}
