//! Optional test cases proposed by a chat-completion model. Proposals are
//! parsed, type-checked and kept only when the reference reproduces them.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::{infer_schema, passes_sanity_gate, InputSchema};
use crate::corpus::{CaseKind, CaseOrigin, TaskRecord, TestCase};
use crate::sandbox::{ExecutionLimits, Sandbox};
use crate::value::Value;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LlmConfig {
    pub enabled: bool,
    pub endpoint: String,
    pub model: String,
    /// Name of the environment variable holding the API credential.
    pub api_key_env: String,
    pub debug: bool,
    pub max_cases: usize,
    pub timeout_secs: u64,
}

impl Default for LlmConfig {
    fn default() -> Self {
        LlmConfig {
            enabled: false,
            endpoint: String::new(),
            model: String::new(),
            api_key_env: "CODESCORE_LLM_API_KEY".into(),
            debug: false,
            max_cases: 10,
            timeout_secs: 60,
        }
    }
}

/// Sends one user prompt and returns the model's reply text.
pub trait ChatClient {
    fn complete(&self, prompt: &str) -> Result<String>;
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Proposals {
    pub cases: Vec<TestCase>,
    pub diagnostics: Vec<String>,
    /// Parsed proposals rejected by type checking or verification.
    pub dropped: usize,
}

pub fn build_prompt(task: &TaskRecord, max_cases: usize) -> String {
    let mut p = String::new();
    p.push_str("Write new test cases for the following programming problem.\n\n");
    p.push_str(&task.nl);
    p.push_str("\n\nExisting test cases:\n");
    let examples: Vec<serde_json::Value> = task.test_cases.iter().take(3).map(proposal_json).collect();
    p.push_str(&serde_json::to_string_pretty(&examples).expect("json"));
    let shape = match task.test_cases.first().map(|c| &c.kind) {
        Some(CaseKind::Call { .. }) => r#"{"args": [...], "output": ...}"#,
        _ => r#"{"input": "...", "output": "..."}"#,
    };
    p.push_str(&format!(
        "\n\nReply with a JSON array of at most {max_cases} new objects of the form {shape} and nothing else.\n"
    ));
    p
}

fn proposal_json(case: &TestCase) -> serde_json::Value {
    match &case.kind {
        CaseKind::Stdio { input, expected } => serde_json::json!({"input": input, "output": expected}),
        CaseKind::Call { args, expected, .. } => serde_json::json!({
            "args": args.iter().map(Value::to_json).collect::<Vec<_>>(),
            "output": expected.to_json(),
        }),
    }
}

/// Locates a JSON array in free text: the whole reply, a fenced block, or the
/// outermost bracket pair.
fn extract_array(reply: &str) -> Option<Vec<serde_json::Value>> {
    let parse = |s: &str| serde_json::from_str::<Vec<serde_json::Value>>(s.trim()).ok();
    if let Some(v) = parse(reply) {
        return Some(v);
    }
    let mut rest = reply;
    while let Some(open) = rest.find("```") {
        let body = &rest[open + 3..];
        let body = body.strip_prefix("json").unwrap_or(body);
        let Some(close) = body.find("```") else { break };
        if let Some(v) = parse(&body[..close]) {
            return Some(v);
        }
        rest = &body[close + 3..];
    }
    let (start, end) = (reply.find('[')?, reply.rfind(']')?);
    (start < end).then(|| parse(&reply[start..=end])).flatten()
}

/// Parses a reply into case inputs with proposed expectations. Malformed
/// entries are skipped with a diagnostic.
pub fn parse_reply(reply: &str, schema: &InputSchema) -> (Vec<CaseKind>, Vec<String>) {
    let mut diagnostics = Vec::new();
    let Some(items) = extract_array(reply) else {
        diagnostics.push("reply contains no JSON array of test cases".to_string());
        return (Vec::new(), diagnostics);
    };
    let mut out = Vec::new();
    for (i, item) in items.iter().enumerate() {
        let parsed = match schema {
            InputSchema::Stdio { .. } => match (item.get("input"), item.get("output")) {
                (Some(serde_json::Value::String(input)), Some(serde_json::Value::String(output))) => {
                    Some(CaseKind::Stdio {
                        input: input.clone(),
                        expected: output.clone(),
                    })
                }
                _ => None,
            },
            InputSchema::Call { entry_point, .. } => match (item.get("args"), item.get("output")) {
                (Some(serde_json::Value::Array(args)), Some(output)) => Some(CaseKind::Call {
                    entry_point: entry_point.clone(),
                    args: args.iter().map(Value::from_json).collect(),
                    expected: Value::from_json(output),
                }),
                _ => None,
            },
        };
        match parsed {
            Some(kind) => out.push(kind),
            None => diagnostics.push(format!("proposal {i} is malformed: {item}")),
        }
    }
    (out, diagnostics)
}

/// Asks `client` for new cases and keeps the ones the first gate-passing
/// reference reproduces.
pub fn propose_llm_cases(
    sandbox: &Sandbox,
    task: &TaskRecord,
    client: &dyn ChatClient,
    config: &LlmConfig,
    limits: &ExecutionLimits,
) -> Result<Proposals> {
    if !config.enabled {
        return Err(Error::Unavailable("LLM test proposal is disabled in the configuration".into()));
    }
    let schema = infer_schema(&task.test_cases)?;
    let lang = task.language_tag.as_str();
    let mut oracle = None;
    for code in &task.ref_codes {
        if passes_sanity_gate(sandbox, code, &task.test_cases, lang, limits)? {
            oracle = Some(code);
            break;
        }
    }
    let oracle = oracle.ok_or_else(|| {
        Error::Validation(format!("task {}: no reference passes the existing cases", task.task_id))
    })?;

    let reply = client.complete(&build_prompt(task, config.max_cases))?;
    let (parsed, diagnostics) = parse_reply(&reply, &schema);
    let mut result = Proposals {
        diagnostics,
        ..Proposals::default()
    };
    let mut keys: HashSet<String> = task.test_cases.iter().map(TestCase::input_key).collect();
    let mut candidates = Vec::new();
    for kind in parsed.into_iter().take(config.max_cases.max(1)) {
        let well_typed = schema.input_value(&kind).is_some_and(|v| schema.desc().admits(&v));
        let case = TestCase {
            kind,
            origin: CaseOrigin::LlmProposed,
        };
        if !well_typed {
            result.dropped += 1;
            result.diagnostics.push(format!("proposal {} does not match the inferred input type", case.input_key()));
        } else if keys.insert(case.input_key()) {
            candidates.push(case);
        }
    }
    let kinds: Vec<CaseKind> = candidates.iter().map(|c| c.kind.clone()).collect();
    let runs = sandbox.execute_many(oracle, &kinds, lang, limits);
    for (case, run) in candidates.into_iter().zip(runs) {
        if sandbox.run_matches(&run?, &case.kind) {
            result.cases.push(case);
        } else {
            result.dropped += 1;
            result.diagnostics.push(format!("proposal {} disagrees with the reference", case.input_key()));
        }
    }
    Ok(result)
}

/// Chat-completion client over HTTP with bearer authentication.
#[cfg(feature = "llm")]
pub struct HttpChatClient {
    endpoint: String,
    model: String,
    api_key: String,
    debug: bool,
    http: reqwest::blocking::Client,
}

#[cfg(feature = "llm")]
impl std::fmt::Debug for HttpChatClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatClient")
            .field("endpoint", &self.endpoint)
            .field("model", &self.model)
            .field("api_key", &"<redacted>")
            .finish()
    }
}

#[cfg(feature = "llm")]
impl HttpChatClient {
    pub fn from_config(config: &LlmConfig) -> Result<Self> {
        if !config.enabled {
            return Err(Error::Unavailable("LLM test proposal is disabled in the configuration".into()));
        }
        if config.endpoint.is_empty() || config.model.is_empty() {
            return Err(Error::InvalidArgument("LLM endpoint and model must be configured".into()));
        }
        let api_key = std::env::var(&config.api_key_env)
            .map_err(|_| Error::Environment(format!("credential variable {} is not set", config.api_key_env)))?;
        let http = reqwest::blocking::Client::builder()
            .timeout(std::time::Duration::from_secs(config.timeout_secs.max(1)))
            .build()
            .map_err(|e| Error::Infrastructure(format!("http client: {e}")))?;
        Ok(HttpChatClient {
            endpoint: config.endpoint.clone(),
            model: config.model.clone(),
            api_key,
            debug: config.debug,
            http,
        })
    }
}

#[cfg(feature = "llm")]
impl ChatClient for HttpChatClient {
    fn complete(&self, prompt: &str) -> Result<String> {
        let body = serde_json::json!({
            "model": self.model,
            "temperature": 0,
            "messages": [{"role": "user", "content": prompt}],
        });
        if self.debug {
            log::debug!("POST {} (Authorization: Bearer <redacted>) {}", self.endpoint, body);
        }
        let response = self
            .http
            .post(&self.endpoint)
            .bearer_auth(&self.api_key)
            .json(&body)
            .send()
            .map_err(|e| Error::Remote(format!("endpoint unreachable: {}", redact(&e.to_string(), &self.api_key))))?;
        let status = response.status();
        let text = response
            .text()
            .map_err(|e| Error::Remote(format!("reading reply: {e}")))?;
        if self.debug {
            log::debug!("reply {status}: {}", redact(&text, &self.api_key));
        }
        if status == reqwest::StatusCode::UNAUTHORIZED || status == reqwest::StatusCode::FORBIDDEN {
            return Err(Error::Remote(format!("authentication failed ({status})")));
        }
        if !status.is_success() {
            return Err(Error::Remote(format!("endpoint returned {status}")));
        }
        let json: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| Error::Remote(format!("reply is not JSON: {e}")))?;
        json.pointer("/choices/0/message/content")
            .and_then(|c| c.as_str())
            .map(str::to_string)
            .ok_or_else(|| Error::Remote("reply has no choices[0].message.content".into()))
    }
}

#[cfg(feature = "llm")]
fn redact(text: &str, secret: &str) -> String {
    if secret.is_empty() {
        text.to_string()
    } else {
        text.replace(secret, "<redacted>")
    }
}
