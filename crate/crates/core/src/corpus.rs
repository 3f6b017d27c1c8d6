//! Tasks, test cases and candidates, plus the line-delimited files that carry them.
//!
//! Every file starts with a `{"schema_version": 1}` line followed by one JSON
//! record per line. Writers produce deterministic bytes and replace the target
//! atomically.

use std::collections::HashSet;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value as Json};

use crate::value::Value;
use crate::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseMode {
    Stdio,
    Call,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseOrigin {
    Original,
    Extended,
    LlmProposed,
}

impl CaseOrigin {
    fn as_str(self) -> &'static str {
        match self {
            CaseOrigin::Original => "original",
            CaseOrigin::Extended => "extended",
            CaseOrigin::LlmProposed => "llm_proposed",
        }
    }
}

/// Input and expected output of a test case; the variant is the invocation mode.
#[derive(Debug, Clone, PartialEq)]
pub enum CaseKind {
    /// `input` is fed to standard input, `expected` is compared with standard output.
    Stdio { input: String, expected: String },
    /// `entry_point(*args)` is called and its return value compared with `expected`.
    Call {
        entry_point: String,
        args: Vec<Value>,
        expected: Value,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestCase {
    pub kind: CaseKind,
    pub origin: CaseOrigin,
}

impl TestCase {
    pub fn stdio(input: impl Into<String>, expected: impl Into<String>) -> Self {
        TestCase {
            kind: CaseKind::Stdio {
                input: input.into(),
                expected: expected.into(),
            },
            origin: CaseOrigin::Original,
        }
    }

    pub fn call(entry_point: impl Into<String>, args: Vec<Value>, expected: Value) -> Self {
        TestCase {
            kind: CaseKind::Call {
                entry_point: entry_point.into(),
                args,
                expected,
            },
            origin: CaseOrigin::Original,
        }
    }

    pub fn with_origin(mut self, origin: CaseOrigin) -> Self {
        self.origin = origin;
        self
    }

    pub fn mode(&self) -> CaseMode {
        match self.kind {
            CaseKind::Stdio { .. } => CaseMode::Stdio,
            CaseKind::Call { .. } => CaseMode::Call,
        }
    }

    /// Canonical text of the input alone, used to deduplicate cases.
    pub fn input_key(&self) -> String {
        match &self.kind {
            CaseKind::Stdio { input, .. } => format!("stdio:{input}"),
            CaseKind::Call {
                entry_point, args, ..
            } => format!("call:{entry_point}:{}", Value::Seq(args.clone()).canonical()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidateCode {
    pub candidate_id: String,
    pub code: String,
    pub source_model: Option<String>,
}

impl CandidateCode {
    pub fn new(candidate_id: impl Into<String>, code: impl Into<String>) -> Self {
        CandidateCode {
            candidate_id: candidate_id.into(),
            code: code.into(),
            source_model: None,
        }
    }
}

/// One generation task: the requirement, its reference solutions, its tests and
/// the candidates to be judged.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecord {
    pub task_id: String,
    pub nl: String,
    pub ref_codes: Vec<String>,
    pub language_tag: String,
    pub test_cases: Vec<TestCase>,
    pub candidates: Vec<CandidateCode>,
}

// ---------------------------------------------------------------------------
// Validation

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub task_id: String,
    pub field: String,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn summary(&self) -> String {
        self.violations
            .iter()
            .map(|v| format!("task `{}` {}: {}", v.task_id, v.field, v.message))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

fn admissible(value: &Value) -> bool {
    match value {
        Value::Real(r) => r.is_finite(),
        Value::Seq(items) => items.iter().all(admissible),
        Value::Map(m) => m.values().all(admissible),
        _ => true,
    }
}

/// Lists every invariant violation in `tasks`. Violations are data, never errors.
pub fn validate_corpus(tasks: &[TaskRecord]) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut seen = HashSet::new();
    let mut push = |task_id: &str, field: String, message: &str| {
        report.violations.push(Violation {
            task_id: task_id.to_string(),
            field,
            message: message.to_string(),
        })
    };

    for task in tasks {
        let id = task.task_id.as_str();
        if id.is_empty() {
            push(id, "task_id".into(), "empty task_id");
        }
        if !seen.insert(id) {
            push(id, "task_id".into(), "duplicate task_id");
        }
        if task.ref_codes.is_empty() {
            push(id, "ref_codes".into(), "no reference code");
        }
        if task.test_cases.is_empty() {
            push(id, "test_cases".into(), "no test cases");
        }
        for (i, case) in task.test_cases.iter().enumerate() {
            if let CaseKind::Call {
                entry_point,
                args,
                expected,
            } = &case.kind
            {
                if entry_point.trim().is_empty() {
                    push(id, format!("test_cases[{i}].entry_point"), "empty entry point");
                }
                if !args.iter().all(admissible) {
                    push(id, format!("test_cases[{i}].args"), "non-finite real value");
                }
                if !admissible(expected) {
                    push(id, format!("test_cases[{i}].expected"), "non-finite real value");
                }
            }
        }
        let mut candidate_ids = HashSet::new();
        for (i, cand) in task.candidates.iter().enumerate() {
            if !candidate_ids.insert(cand.candidate_id.as_str()) {
                push(id, format!("candidates[{i}].candidate_id"), "duplicate candidate_id");
            }
        }
    }
    report
}

// ---------------------------------------------------------------------------
// Task record (de)serialisation

struct FieldCx<'a> {
    path: &'a Path,
    line: usize,
}

impl FieldCx<'_> {
    fn err(&self, field: impl Into<String>, message: impl Into<String>) -> Error {
        Error::Parse {
            path: self.path.to_path_buf(),
            line: self.line,
            field: field.into(),
            message: message.into(),
        }
    }

    fn get<'j>(&self, obj: &'j Map<String, Json>, prefix: &str, key: &str) -> Result<&'j Json> {
        obj.get(key)
            .ok_or_else(|| self.err(join(prefix, key), "missing field"))
    }

    fn string(&self, obj: &Map<String, Json>, prefix: &str, key: &str) -> Result<String> {
        match self.get(obj, prefix, key)? {
            Json::String(s) => Ok(s.clone()),
            other => Err(self.err(join(prefix, key), format!("expected string, found {}", json_kind(other)))),
        }
    }

    fn opt_string(&self, obj: &Map<String, Json>, prefix: &str, key: &str) -> Result<Option<String>> {
        match obj.get(key) {
            None | Some(Json::Null) => Ok(None),
            Some(Json::String(s)) => Ok(Some(s.clone())),
            Some(other) => Err(self.err(join(prefix, key), format!("expected string, found {}", json_kind(other)))),
        }
    }

    fn array<'j>(&self, obj: &'j Map<String, Json>, prefix: &str, key: &str) -> Result<&'j Vec<Json>> {
        match self.get(obj, prefix, key)? {
            Json::Array(a) => Ok(a),
            other => Err(self.err(join(prefix, key), format!("expected array, found {}", json_kind(other)))),
        }
    }

    fn object<'j>(&self, json: &'j Json, field: &str) -> Result<&'j Map<String, Json>> {
        json.as_object()
            .ok_or_else(|| self.err(field, format!("expected object, found {}", json_kind(json))))
    }
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn json_kind(json: &Json) -> &'static str {
    match json {
        Json::Null => "null",
        Json::Bool(_) => "boolean",
        Json::Number(_) => "number",
        Json::String(_) => "string",
        Json::Array(_) => "array",
        Json::Object(_) => "object",
    }
}

fn parse_case(cx: &FieldCx, json: &Json, prefix: &str) -> Result<TestCase> {
    let obj = cx.object(json, prefix)?;
    let mode = cx.string(obj, prefix, "mode")?;
    let origin = match obj.get("case_origin") {
        None | Some(Json::Null) => CaseOrigin::Original,
        Some(v) => serde_json::from_value::<CaseOrigin>(v.clone())
            .map_err(|_| cx.err(join(prefix, "case_origin"), format!("unknown origin {v}")))?,
    };
    let kind = match mode.as_str() {
        "stdio" => CaseKind::Stdio {
            input: cx.string(obj, prefix, "input")?,
            expected: cx.string(obj, prefix, "expected")?,
        },
        "call" => {
            let entry_point = cx.string(obj, prefix, "entry_point")?;
            let args = cx
                .array(obj, prefix, "args")?
                .iter()
                .map(Value::from_json)
                .collect();
            let expected = Value::from_json(cx.get(obj, prefix, "expected")?);
            CaseKind::Call {
                entry_point,
                args,
                expected,
            }
        }
        other => return Err(cx.err(join(prefix, "mode"), format!("unknown mode `{other}`"))),
    };
    Ok(TestCase { kind, origin })
}

fn parse_task(cx: &FieldCx, json: &Json) -> Result<TaskRecord> {
    let obj = cx.object(json, "<record>")?;
    let task_id = cx.string(obj, "", "task_id")?;
    let nl = cx.string(obj, "", "nl")?;
    let language_tag = cx.string(obj, "", "language_tag")?;
    let ref_codes = cx
        .array(obj, "", "ref_codes")?
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.as_str()
                .map(str::to_string)
                .ok_or_else(|| cx.err(format!("ref_codes[{i}]"), "expected string"))
        })
        .collect::<Result<Vec<_>>>()?;
    let test_cases = cx
        .array(obj, "", "test_cases")?
        .iter()
        .enumerate()
        .map(|(i, c)| parse_case(cx, c, &format!("test_cases[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let candidates = cx
        .array(obj, "", "candidates")?
        .iter()
        .enumerate()
        .map(|(i, c)| {
            let prefix = format!("candidates[{i}]");
            let o = cx.object(c, &prefix)?;
            Ok(CandidateCode {
                candidate_id: cx.string(o, &prefix, "candidate_id")?,
                code: cx.string(o, &prefix, "code")?,
                source_model: cx.opt_string(o, &prefix, "source_model")?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TaskRecord {
        task_id,
        nl,
        ref_codes,
        language_tag,
        test_cases,
        candidates,
    })
}

#[derive(Serialize)]
struct CaseOut<'a> {
    mode: CaseMode,
    input: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    entry_point: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    args: Option<&'a [Value]>,
    expected: Json,
    case_origin: &'static str,
}

#[derive(Serialize)]
struct CandidateOut<'a> {
    candidate_id: &'a str,
    code: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    source_model: Option<&'a str>,
}

#[derive(Serialize)]
struct TaskOut<'a> {
    task_id: &'a str,
    nl: &'a str,
    ref_codes: &'a [String],
    language_tag: &'a str,
    test_cases: Vec<CaseOut<'a>>,
    candidates: Vec<CandidateOut<'a>>,
}

fn task_out(task: &TaskRecord) -> TaskOut<'_> {
    TaskOut {
        task_id: &task.task_id,
        nl: &task.nl,
        ref_codes: &task.ref_codes,
        language_tag: &task.language_tag,
        test_cases: task
            .test_cases
            .iter()
            .map(|c| match &c.kind {
                CaseKind::Stdio { input, expected } => CaseOut {
                    mode: CaseMode::Stdio,
                    input: Some(input),
                    entry_point: None,
                    args: None,
                    expected: Json::String(expected.clone()),
                    case_origin: c.origin.as_str(),
                },
                CaseKind::Call {
                    entry_point,
                    args,
                    expected,
                } => CaseOut {
                    mode: CaseMode::Call,
                    input: None,
                    entry_point: Some(entry_point),
                    args: Some(args),
                    expected: expected.to_json(),
                    case_origin: c.origin.as_str(),
                },
            })
            .collect(),
        candidates: task
            .candidates
            .iter()
            .map(|c| CandidateOut {
                candidate_id: &c.candidate_id,
                code: &c.code,
                source_model: c.source_model.as_deref(),
            })
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// Files

#[derive(Serialize, Deserialize)]
struct Header {
    schema_version: u32,
}

/// Reads the data lines of a schema-versioned file as `(line number, text)`.
fn data_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let lineno = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        if lineno == 1 {
            if let Ok(Json::Object(obj)) = serde_json::from_str::<Json>(&line) {
                if let Some(v) = obj.get("schema_version") {
                    let version = v.as_u64().unwrap_or(0);
                    if version != u64::from(SCHEMA_VERSION) {
                        return Err(Error::Parse {
                            path: path.to_path_buf(),
                            line: 1,
                            field: "schema_version".into(),
                            message: format!("unsupported schema version {v}"),
                        });
                    }
                    continue;
                }
            }
        }
        out.push((lineno, line));
    }
    Ok(out)
}

/// Loads a corpus. Duplicate task ids are always rejected; with `strict` every
/// invariant of [`validate_corpus`] must hold as well.
pub fn load_corpus(path: impl AsRef<Path>, strict: bool) -> Result<Vec<TaskRecord>> {
    let path = path.as_ref();
    let mut tasks = Vec::new();
    let mut ids = HashSet::new();
    for (line, text) in data_lines(path)? {
        let cx = FieldCx { path, line };
        let json: Json = serde_json::from_str(&text).map_err(|e| cx.err("<record>", e.to_string()))?;
        let task = parse_task(&cx, &json)?;
        if !ids.insert(task.task_id.clone()) {
            return Err(cx.err("task_id", format!("duplicate task_id `{}`", task.task_id)));
        }
        tasks.push(task);
    }
    if strict {
        let report = validate_corpus(&tasks);
        if !report.is_valid() {
            return Err(Error::Validation(report.summary()));
        }
    }
    Ok(tasks)
}

pub fn save_corpus(path: impl AsRef<Path>, tasks: &[TaskRecord]) -> Result<()> {
    let lines = tasks
        .iter()
        .map(|t| serde_json::to_string(&task_out(t)))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    write_lines(path.as_ref(), &lines)
}

/// Writes `records` one per line after the schema header. The file is replaced
/// atomically through a sibling temporary file.
pub fn write_records<T: Serialize>(path: impl AsRef<Path>, records: &[T]) -> Result<()> {
    let lines = records
        .iter()
        .map(serde_json::to_string)
        .collect::<std::result::Result<Vec<_>, _>>()?;
    write_lines(path.as_ref(), &lines)
}

pub fn read_records<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<Vec<T>> {
    let path = path.as_ref();
    data_lines(path)?
        .into_iter()
        .map(|(line, text)| {
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                line,
                field: "<record>".into(),
                message: e.to_string(),
            })
        })
        .collect()
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut body = serde_json::to_string(&Header {
        schema_version: SCHEMA_VERSION,
    })?;
    body.push('\n');
    for line in lines {
        body.push_str(line);
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| Error::io(path, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Result records

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseRecord {
    pub status: crate::sandbox::CaseStatus,
    /// Wall time; omitted from reproducible artifacts.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

/// One line of a ground-truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthRecord {
    pub task_id: String,
    pub candidate_id: String,
    pub pass_ratio: f64,
    pub executability: u8,
    pub cases: Vec<CaseRecord>,
}

impl GroundTruthRecord {
    pub fn new(task_id: &str, candidate_id: &str, truth: &crate::sandbox::CandidateGroundTruth) -> Self {
        GroundTruthRecord {
            task_id: task_id.to_string(),
            candidate_id: candidate_id.to_string(),
            pass_ratio: truth.pass_ratio,
            executability: truth.executability,
            cases: truth
                .outcomes
                .iter()
                .map(|o| CaseRecord {
                    status: o.status,
                    duration_ms: Some(o.duration_ms),
                })
                .collect(),
        }
    }

    pub fn without_timings(mut self) -> Self {
        for c in &mut self.cases {
            c.duration_ms = None;
        }
        self
    }
}

/// One metric value for one candidate under one input format.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub task_id: String,
    pub candidate_id: String,
    pub metric: String,
    pub format: String,
    pub value: f64,
}
