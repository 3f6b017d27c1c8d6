//! Test-suite extension: infer input types from existing cases, enumerate new
//! inputs, and label them by running a reference solution.

pub mod enumerate;
pub mod llm;
pub mod types;

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::corpus::{CaseKind, CaseOrigin, TaskRecord, TestCase};
use crate::sandbox::{ExecutionLimits, Sandbox};
use crate::value::Value;
use crate::{Error, Result};

pub use enumerate::{enumerate_inputs, enumerate_with, Enumeration, GenContext, GenerationBudget, StrategyMix};
pub use types::{infer_input_type, infer_positional, Lengths, Range, TypeDescriptor, TypeKind};

/// How inputs of a task are shaped and delivered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InputSchema {
    /// Standard input viewed as lines of whitespace-separated tokens.
    Stdio { desc: TypeDescriptor },
    /// Positional arguments of `entry_point`.
    Call { entry_point: String, desc: TypeDescriptor },
}

impl InputSchema {
    pub fn desc(&self) -> &TypeDescriptor {
        match self {
            InputSchema::Stdio { desc } | InputSchema::Call { desc, .. } => desc,
        }
    }

    pub fn context(&self) -> GenContext {
        GenContext {
            token_strings: matches!(self, InputSchema::Stdio { .. }),
        }
    }

    /// Structured view of a case input, or `None` if the case has the other mode.
    pub fn input_value(&self, case: &CaseKind) -> Option<Value> {
        match (self, case) {
            (InputSchema::Stdio { .. }, CaseKind::Stdio { input, .. }) => Some(parse_stdin(input)),
            (InputSchema::Call { entry_point, .. }, CaseKind::Call { entry_point: e, args, .. }) if e == entry_point => {
                Some(Value::Seq(args.clone()))
            }
            _ => None,
        }
    }

    /// Case input for a structured value; the expected part is a placeholder.
    pub fn case_for(&self, input: &Value) -> Result<CaseKind> {
        match self {
            InputSchema::Stdio { .. } => Ok(CaseKind::Stdio {
                input: render_stdin(input)?,
                expected: String::new(),
            }),
            InputSchema::Call { entry_point, .. } => match input {
                Value::Seq(args) => Ok(CaseKind::Call {
                    entry_point: entry_point.clone(),
                    args: args.clone(),
                    expected: Value::Null,
                }),
                other => Err(Error::Shape(format!("call arguments must be a sequence, got {}", other.kind_name()))),
            },
        }
    }
}

fn parse_token(tok: &str) -> Value {
    if let Ok(i) = tok.parse::<i64>() {
        return Value::Int(i);
    }
    let numeric_looking = tok.bytes().any(|b| b.is_ascii_digit())
        && tok.bytes().all(|b| b.is_ascii_digit() || b"+-.eE".contains(&b));
    match tok.parse::<f64>() {
        Ok(r) if numeric_looking && r.is_finite() => Value::Real(r),
        _ => Value::Str(tok.to_string()),
    }
}

/// Standard input as a sequence of lines, each a sequence of scalar tokens.
pub fn parse_stdin(text: &str) -> Value {
    Value::Seq(
        text.lines()
            .map(|line| Value::Seq(line.split_whitespace().map(parse_token).collect()))
            .collect(),
    )
}

fn render_token(v: &Value) -> Result<String> {
    match v {
        Value::Int(i) => Ok(i.to_string()),
        Value::Real(r) => Ok(format!("{r:?}")),
        Value::Str(s) => Ok(s.clone()),
        Value::Bool(b) => Ok(if *b { "True" } else { "False" }.to_string()),
        other => Err(Error::Shape(format!("cannot render {} as a stdin token", other.kind_name()))),
    }
}

/// Inverse of [`parse_stdin`] for values it can produce.
pub fn render_stdin(v: &Value) -> Result<String> {
    let Value::Seq(lines) = v else {
        return Err(Error::Shape("stdin value must be a sequence of lines".into()));
    };
    let mut out = String::new();
    for line in lines {
        let Value::Seq(tokens) = line else {
            return Err(Error::Shape("stdin line must be a sequence of tokens".into()));
        };
        let rendered: Result<Vec<String>> = tokens.iter().map(render_token).collect();
        out.push_str(&rendered?.join(" "));
        out.push('\n');
    }
    Ok(out)
}

fn seq_items(v: Value) -> Vec<Value> {
    match v {
        Value::Seq(items) => items,
        other => vec![other],
    }
}

/// Infers the input schema of a suite. All cases must share one mode, and
/// call-mode cases one entry point.
pub fn infer_schema(cases: &[TestCase]) -> Result<InputSchema> {
    let first = cases
        .first()
        .ok_or_else(|| Error::InvalidArgument("type inference needs at least one case".into()))?;
    match &first.kind {
        CaseKind::Stdio { .. } => {
            let mut examples = Vec::with_capacity(cases.len());
            for c in cases {
                match &c.kind {
                    CaseKind::Stdio { input, .. } => examples.push(seq_items(parse_stdin(input))),
                    _ => return Err(Error::Validation("suite mixes stdio and call cases".into())),
                }
            }
            Ok(InputSchema::Stdio {
                desc: infer_stdin_lines(&examples)?,
            })
        }
        CaseKind::Call { entry_point, .. } => {
            let mut examples = Vec::with_capacity(cases.len());
            for c in cases {
                match &c.kind {
                    CaseKind::Call { entry_point: e, args, .. } if e == entry_point => examples.push(args.clone()),
                    CaseKind::Call { .. } => return Err(Error::Validation("suite uses several entry points".into())),
                    _ => return Err(Error::Validation("suite mixes stdio and call cases".into())),
                }
            }
            Ok(InputSchema::Call {
                entry_point: entry_point.clone(),
                desc: infer_positional(&examples)?,
            })
        }
    }
}

/// Lines become a tuple when every example has the same line count, each line
/// a tuple when its token count is constant.
fn infer_stdin_lines(examples: &[Vec<Value>]) -> Result<TypeDescriptor> {
    let tokens = |line: &Value| seq_items(line.clone());
    let count = examples[0].len();
    if examples.iter().all(|e| e.len() == count) {
        let mut lines = Vec::with_capacity(count);
        for j in 0..count {
            let column: Vec<Vec<Value>> = examples.iter().map(|e| tokens(&e[j])).collect();
            lines.push(infer_positional(&column)?);
        }
        return Ok(TypeDescriptor::tuple_of(lines));
    }
    let all_lines: Vec<Vec<Value>> = examples.iter().flat_map(|e| e.iter().map(tokens)).collect();
    let line = if all_lines.is_empty() {
        TypeDescriptor::sequence_of(TypeDescriptor::integer(0, 0), 0, 0)
    } else {
        infer_positional(&all_lines)?
    };
    let lo = examples.iter().map(Vec::len).min().unwrap_or(0);
    let hi = examples.iter().map(Vec::len).max().unwrap_or(0);
    Ok(TypeDescriptor::sequence_of(line, lo, hi))
}

/// Whether `code` passes every case in `cases`.
pub fn passes_sanity_gate(
    sandbox: &Sandbox,
    code: &str,
    cases: &[TestCase],
    language_tag: &str,
    limits: &ExecutionLimits,
) -> Result<bool> {
    if cases.is_empty() {
        return Ok(true);
    }
    Ok(sandbox.evaluate_candidate(code, cases, language_tag, limits)?.pass_ratio == 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleOutcome {
    pub cases: Vec<TestCase>,
    /// Inputs on which the reference failed, timed out, or returned an unusable value.
    pub dropped: usize,
}

/// Labels `inputs` with the reference's outputs. The reference must pass
/// `gate_cases` first.
#[allow(clippy::too_many_arguments)]
pub fn oracle_outputs(
    sandbox: &Sandbox,
    ref_code: &str,
    schema: &InputSchema,
    inputs: &[Value],
    gate_cases: &[TestCase],
    language_tag: &str,
    limits: &ExecutionLimits,
) -> Result<OracleOutcome> {
    if !passes_sanity_gate(sandbox, ref_code, gate_cases, language_tag, limits)? {
        return Err(Error::Validation(
            "reference fails its own test cases and cannot serve as an oracle".into(),
        ));
    }
    label_inputs(sandbox, ref_code, schema, inputs, language_tag, limits)
}

fn label_inputs(
    sandbox: &Sandbox,
    ref_code: &str,
    schema: &InputSchema,
    inputs: &[Value],
    language_tag: &str,
    limits: &ExecutionLimits,
) -> Result<OracleOutcome> {
    let kinds: Vec<CaseKind> = inputs.iter().map(|v| schema.case_for(v)).collect::<Result<_>>()?;
    let runs = sandbox.execute_many(ref_code, &kinds, language_tag, limits);
    let mut cases = Vec::with_capacity(kinds.len());
    let mut dropped = 0;
    for (kind, run) in kinds.into_iter().zip(runs) {
        let run = run?;
        if run.failure.is_some() {
            dropped += 1;
            continue;
        }
        let labelled = match kind {
            CaseKind::Stdio { input, .. } => CaseKind::Stdio {
                input,
                expected: run.stdout,
            },
            CaseKind::Call { entry_point, args, .. } => match run.returned {
                Some(v) if finite(&v) => CaseKind::Call {
                    entry_point,
                    args,
                    expected: v,
                },
                _ => {
                    dropped += 1;
                    continue;
                }
            },
        };
        cases.push(TestCase {
            kind: labelled,
            origin: CaseOrigin::Extended,
        });
    }
    Ok(OracleOutcome { cases, dropped })
}

fn finite(v: &Value) -> bool {
    match v {
        Value::Real(r) => r.is_finite(),
        Value::Seq(items) => items.iter().all(finite),
        Value::Map(m) => m.values().all(finite),
        _ => true,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtensionReport {
    pub task_id: String,
    pub oracle_index: usize,
    pub generated: usize,
    pub attempts: usize,
    pub shortfall: usize,
    pub dropped_failures: usize,
    pub dropped_disagreements: usize,
    pub added: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extension {
    pub task: TaskRecord,
    pub report: ExtensionReport,
}

/// Appends reference-labelled cases to the task's suite. The first reference
/// passing the original cases labels inputs; every other passing reference
/// must agree, otherwise the input is dropped.
pub fn extend_task(
    sandbox: &Sandbox,
    task: &TaskRecord,
    budget: &GenerationBudget,
    limits: &ExecutionLimits,
) -> Result<Extension> {
    budget.validate()?;
    let originals: Vec<TestCase> = task
        .test_cases
        .iter()
        .filter(|c| c.origin == CaseOrigin::Original)
        .cloned()
        .collect();
    if originals.is_empty() {
        return Err(Error::Validation(format!("task {} has no original test case", task.task_id)));
    }
    if task.ref_codes.is_empty() {
        return Err(Error::Validation(format!("task {} has no reference code", task.task_id)));
    }
    let lang = task.language_tag.as_str();
    let mut usable = Vec::new();
    for (i, code) in task.ref_codes.iter().enumerate() {
        if passes_sanity_gate(sandbox, code, &originals, lang, limits)? {
            usable.push(i);
        }
    }
    let Some((&oracle_index, checkers)) = usable.split_first() else {
        return Err(Error::Validation(format!(
            "task {}: no reference passes the original test cases",
            task.task_id
        )));
    };

    let schema = infer_schema(&task.test_cases)?;
    let existing: Vec<Value> = task
        .test_cases
        .iter()
        .filter_map(|c| schema.input_value(&c.kind))
        .collect();
    let exclude: HashSet<String> = existing.iter().map(Value::canonical).collect();
    let enumeration = enumerate_with(schema.desc(), budget, &existing, schema.context(), &exclude)?;

    let labelled = label_inputs(
        sandbox,
        &task.ref_codes[oracle_index],
        &schema,
        &enumeration.inputs,
        lang,
        limits,
    )?;
    let mut keep = vec![true; labelled.cases.len()];
    let kinds: Vec<CaseKind> = labelled.cases.iter().map(|c| c.kind.clone()).collect();
    for &j in checkers {
        let runs = sandbox.execute_many(&task.ref_codes[j], &kinds, lang, limits);
        for (k, run) in runs.into_iter().enumerate() {
            if !sandbox.run_matches(&run?, &kinds[k]) {
                keep[k] = false;
            }
        }
    }
    let dropped_disagreements = keep.iter().filter(|k| !**k).count();

    let mut out = task.clone();
    let mut keys: HashSet<String> = out.test_cases.iter().map(TestCase::input_key).collect();
    let mut added = 0;
    for (case, kept) in labelled.cases.into_iter().zip(keep) {
        if kept && keys.insert(case.input_key()) {
            out.test_cases.push(case);
            added += 1;
        }
    }
    let report = ExtensionReport {
        task_id: task.task_id.clone(),
        oracle_index,
        generated: enumeration.inputs.len(),
        attempts: enumeration.attempts,
        shortfall: enumeration.shortfall,
        dropped_failures: labelled.dropped,
        dropped_disagreements,
        added,
    };
    log::info!(
        "extended {}: +{} cases ({} failures, {} disagreements dropped)",
        report.task_id,
        report.added,
        report.dropped_failures,
        report.dropped_disagreements
    );
    Ok(Extension { task: out, report })
}
