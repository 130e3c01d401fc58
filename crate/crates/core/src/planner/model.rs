//! Model-backed planning over a tool-call protocol. Each STL command is
//! offered as a callable tool; the returned calls become the program.

use std::path::Path;
use std::time::Duration;

use parking_lot::Mutex;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{PlanError, PlannerConfig};
use crate::schema::{serialize_schema, Schema};
use crate::stl::doc::{command_from_args, match_from_args, serialize_program, COMMAND_NAMES};
use crate::stl::validate::{validate_program, Diagnostic};
use crate::stl::{MatchHeader, StlProgram};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolInvocation {
    pub name: String,
    #[serde(default)]
    pub arguments: Value,
}

/// A model endpoint that answers a prompt with an ordered list of tool calls.
/// Implementations must tolerate concurrent `submit` calls.
pub trait ToolCallProtocol: Send + Sync {
    fn submit(&self, prompt: &str, tools: &[ToolSpec]) -> Result<Vec<ToolInvocation>, PlanError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanOutcome {
    pub program: StlProgram,
    pub diagnostics: Vec<Diagnostic>,
    /// Repair rounds that were needed (0 when the first answer was used).
    pub repair_rounds: u32,
}

fn object(props: Value, required: &[&str]) -> Value {
    json!({
        "type": "object",
        "properties": props,
        "required": required,
        "additionalProperties": false,
    })
}

fn description(name: &str) -> &'static str {
    match name {
        "match" => "Decide whether both schemas describe the same kind of entity. Call it once, before anything else. When same_entity is false, call nothing else.",
        "copy" => "Carry a source field's value unchanged into the target field with the same path.",
        "rename" => "Carry a source field's value into a target field with a different name.",
        "add" => "Write a constant into a target field whatever the input holds.",
        "cast" => "Read a source field, convert its value to the target field's declared type and store it.",
        "delete" => "Declare that a source field is intentionally dropped.",
        "default" => "Fill a target field with a constant when nothing was written to it or the written value is null.",
        "missing" => "Declare that no source data can produce a target field. Records will fail to translate.",
        "scale" => "Multiply the number already written to a target field by a constant factor.",
        "shift" => "Add a constant offset to the number already written to a target field.",
        "link" => "Translate the symbol already written to an enum target field through a lookup table.",
        "gen" => "Define a named conversion expression over the input `value` for use by apply.",
        "apply" => "Evaluate a gen function, a one-argument builtin or an inline expression on a source field and store the result in a target field.",
        _ => "",
    }
}

/// The tool catalog offered to the model: `match` followed by every command.
pub fn tool_catalog() -> Vec<ToolSpec> {
    let path = json!({"type": "string", "description": "dot-separated field path"});
    let any = json!({"description": "literal value of the target field's type"});
    let params = |name: &str| -> Value {
        match name {
            "match" => object(
                json!({"same_entity": {"type": "boolean"}, "reason": {"type": "string"}}),
                &["same_entity", "reason"],
            ),
            "copy" | "rename" => object(json!({"source": path, "target": path}), &["source", "target"]),
            "add" | "default" => object(json!({"target": path, "value": any}), &["target", "value"]),
            "cast" => object(
                json!({
                    "source": path,
                    "target": path,
                    "to": {"oneOf": [
                        {"type": "string", "enum": ["string", "integer", "float", "boolean"]},
                        {"type": "object", "properties": {"enum": {"type": "array", "items": {"type": "string"}}}, "required": ["enum"]}
                    ]}
                }),
                &["source", "target", "to"],
            ),
            "delete" => object(json!({"source": path}), &["source"]),
            "missing" => object(json!({"target": path, "reason": {"type": "string"}}), &["target", "reason"]),
            "scale" => object(json!({"target": path, "factor": {"type": "number"}}), &["target", "factor"]),
            "shift" => object(json!({"target": path, "offset": {"type": "number"}}), &["target", "offset"]),
            "link" => object(
                json!({
                    "target": path,
                    "table": {"type": "object", "additionalProperties": {"type": "string"}},
                    "fallback": {"type": "string"}
                }),
                &["target", "table"],
            ),
            "gen" => object(json!({"name": {"type": "string"}, "expr": {"type": "string"}}), &["name", "expr"]),
            "apply" => object(
                json!({"source": path, "target": path, "fn": {"type": "string", "description": "gen name, builtin name or inline expression"}}),
                &["source", "target", "fn"],
            ),
            _ => Value::Null,
        }
    };
    std::iter::once("match")
        .chain(COMMAND_NAMES)
        .map(|n| ToolSpec {
            name: n.to_string(),
            description: description(n).to_string(),
            parameters: params(n),
        })
        .collect()
}

fn base_prompt(source: &Schema, target: &Schema) -> String {
    format!(
        "Translate records of the SOURCE schema into records of the TARGET schema by calling the tools.\n\
         Call `match` first. Then call commands in execution order: a target field is produced once \
         (copy, rename, cast, add, apply, default or missing) before scale, shift or link adjust it. \
         Every target field needs exactly one producer; every source field must be read or deleted.\n\
         Expressions for gen and apply use `value` for the input, `src.<path>` for other source fields, \
         arithmetic, comparisons, and/or/not, if(c, a, b) and the builtins round, floor, ceil, abs, min, \
         max, concat, lower, upper, substr, to_string, to_number, to_boolean.\n\n\
         SOURCE schema:\n{}\nTARGET schema:\n{}",
        serialize_schema(source),
        serialize_schema(target)
    )
}

fn repair_prompt(base: &str, program: &StlProgram, diags: &[Diagnostic]) -> String {
    let mut p = format!(
        "{base}\nYour previous answer was:\n{}\nIt has these problems. Answer again with the complete, corrected list of calls.\n",
        serialize_program(program)
    );
    for d in diags {
        p.push_str(&format!("- {d}\n"));
    }
    p
}

/// Turns tool calls into a program. Returns the program, protocol
/// diagnostics, and the subset of those that are hard violations.
fn assemble(
    calls: &[ToolInvocation],
    tools: &[ToolSpec],
    source: &Schema,
    target: &Schema,
) -> (StlProgram, Vec<Diagnostic>, Vec<String>) {
    let mut header: Option<MatchHeader> = None;
    let mut commands = Vec::new();
    let mut diags = Vec::new();
    let mut violations = Vec::new();
    for (i, call) in calls.iter().enumerate() {
        if !tools.iter().any(|t| t.name == call.name) {
            violations.push(format!("call #{i}: unknown tool `{}`", call.name));
            continue;
        }
        if call.name == "match" {
            match (&header, match_from_args(&call.arguments)) {
                (None, Ok(h)) => header = Some(h),
                (Some(_), Ok(_)) => diags.push(Diagnostic::protocol(format!("call #{i}: extra MATCH ignored"))),
                (_, Err(e)) => violations.push(format!("call #{i}: malformed arguments for match: {e}")),
            }
            continue;
        }
        match command_from_args(&call.name, &call.arguments) {
            Ok(c) => commands.push(c),
            Err(e) => violations.push(format!("call #{i}: malformed arguments for {}: {e}", call.name)),
        }
    }
    let header = header.unwrap_or_else(|| {
        diags.push(Diagnostic::protocol("no MATCH produced"));
        MatchHeader {
            same_entity: true,
            reason: "no MATCH produced".into(),
        }
    });
    let program = StlProgram {
        source: source.reference(),
        target: target.reference(),
        header,
        commands,
    };
    if let Err(e) = program.check() {
        violations.push(e.to_string());
    }
    diags.extend(violations.iter().map(|v| Diagnostic::protocol(v.clone())));
    (program, diags, violations)
}

/// Plans with a model, re-prompting with the diagnostics while repair rounds
/// remain. Residual diagnostics are returned, never dropped.
pub fn plan_with_model(
    client: &dyn ToolCallProtocol,
    source: &Schema,
    target: &Schema,
    config: &PlannerConfig,
) -> Result<PlanOutcome, PlanError> {
    config.validate()?;
    let tools = tool_catalog();
    let base = base_prompt(source, target);
    let mut prompt = base.clone();
    let mut round = 0;
    loop {
        let calls = client.submit(&prompt, &tools)?;
        let (program, mut diags, violations) = assemble(&calls, &tools, source, target);
        if violations.is_empty() {
            diags.extend(validate_program(&program, source, target));
        }
        if diags.is_empty() || round == config.repair_rounds {
            if !violations.is_empty() {
                return Err(PlanError::Protocol(violations));
            }
            return Ok(PlanOutcome {
                program,
                diagnostics: diags,
                repair_rounds: round,
            });
        }
        prompt = repair_prompt(&base, &program, &diags);
        round += 1;
    }
}

// ---------------------------------------------------------------------------
// clients

#[derive(Deserialize)]
struct Transcript {
    responses: Vec<Vec<ToolInvocation>>,
}

/// Replays canned responses in order; used for tests and offline runs.
pub struct TranscriptClient {
    responses: Vec<Vec<ToolInvocation>>,
    state: Mutex<(usize, Vec<String>)>,
}

impl TranscriptClient {
    pub fn new(responses: Vec<Vec<ToolInvocation>>) -> TranscriptClient {
        TranscriptClient {
            responses,
            state: Mutex::new((0, Vec::new())),
        }
    }

    /// Parses `{"responses": [[{"name": .., "arguments": {..}}, ..], ..]}`.
    pub fn from_json(text: &str) -> Result<TranscriptClient, PlanError> {
        let t: Transcript =
            serde_json::from_str(text).map_err(|e| PlanError::Config(format!("bad transcript: {e}")))?;
        Ok(TranscriptClient::new(t.responses))
    }

    pub fn from_path(path: &Path) -> Result<TranscriptClient, PlanError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PlanError::Config(format!("cannot read transcript {}: {e}", path.display())))?;
        TranscriptClient::from_json(&text)
    }

    /// Prompts received so far, in order.
    pub fn prompts(&self) -> Vec<String> {
        self.state.lock().1.clone()
    }
}

impl ToolCallProtocol for TranscriptClient {
    fn submit(&self, prompt: &str, _tools: &[ToolSpec]) -> Result<Vec<ToolInvocation>, PlanError> {
        let mut st = self.state.lock();
        let i = st.0;
        let r = self
            .responses
            .get(i)
            .cloned()
            .ok_or_else(|| PlanError::Transport(format!("transcript exhausted after {i} responses")))?;
        st.0 += 1;
        st.1.push(prompt.to_string());
        Ok(r)
    }
}

#[derive(Deserialize)]
struct ModelResponse {
    invocations: Vec<ToolInvocation>,
}

/// JSON over HTTP: posts `{"prompt", "tools"}` and expects
/// `{"invocations": [{"name", "arguments"}]}`. Uses a blocking client, so
/// async callers should run it on a blocking thread.
pub struct HttpToolClient {
    url: String,
    key: Option<String>,
    http: reqwest::blocking::Client,
}

impl HttpToolClient {
    pub fn new(url: &str, key: Option<&str>) -> Result<HttpToolClient, PlanError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| PlanError::Transport(e.to_string()))?;
        Ok(HttpToolClient {
            url: url.to_string(),
            key: key.map(str::to_string),
            http,
        })
    }

    pub fn from_config(config: &PlannerConfig) -> Result<HttpToolClient, PlanError> {
        let url = config
            .model_url
            .as_deref()
            .ok_or_else(|| PlanError::Config("no model endpoint configured (GSE_MODEL_URL)".into()))?;
        HttpToolClient::new(url, config.model_key.as_deref())
    }
}

impl ToolCallProtocol for HttpToolClient {
    fn submit(&self, prompt: &str, tools: &[ToolSpec]) -> Result<Vec<ToolInvocation>, PlanError> {
        let mut req = self.http.post(&self.url).json(&json!({"prompt": prompt, "tools": tools}));
        if let Some(k) = &self.key {
            req = req.bearer_auth(k);
        }
        let resp = req.send().map_err(|e| PlanError::Transport(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().unwrap_or_default();
            return Err(PlanError::Transport(format!("model endpoint returned {status}: {body}")));
        }
        let body: ModelResponse = resp
            .json()
            .map_err(|e| PlanError::Protocol(vec![format!("unreadable model response: {e}")]))?;
        Ok(body.invocations)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::parse_schema;
    use crate::stl::DiagCode;

    fn pair() -> (Schema, Schema) {
        let v2 = parse_schema("subject: motion\nversion: 2\nfields:\n  - {name: motion, type: boolean}\n").unwrap();
        let v1 = parse_schema("subject: motion\nversion: 1\nfields:\n  - {name: movement, type: boolean}\n").unwrap();
        (v2, v1)
    }

    fn call(name: &str, args: Value) -> ToolInvocation {
        ToolInvocation { name: name.into(), arguments: args }
    }

    fn good() -> Vec<ToolInvocation> {
        vec![
            call("match", json!({"same_entity": true, "reason": "same sensor"})),
            call("rename", json!({"source": "motion", "target": "movement"})),
        ]
    }

    #[test]
    fn catalog_covers_every_command() {
        let names: Vec<_> = tool_catalog().into_iter().map(|t| t.name).collect();
        assert_eq!(names.len(), 13);
        assert_eq!(names[0], "match");
        assert!(tool_catalog().iter().all(|t| !t.description.is_empty() && t.parameters.is_object()));
    }

    #[test]
    fn clean_first_answer() {
        let (v2, v1) = pair();
        let client = TranscriptClient::new(vec![good()]);
        let out = plan_with_model(&client, &v2, &v1, &PlannerConfig::default()).unwrap();
        assert!(out.diagnostics.is_empty());
        assert_eq!(out.repair_rounds, 0);
        assert_eq!(out.program.commands.len(), 1);
        let prompt = &client.prompts()[0];
        assert!(prompt.contains("motion") && prompt.contains("movement"));
    }

    #[test]
    fn no_calls_gives_protocol_diagnostic() {
        let (v2, v1) = pair();
        let client = TranscriptClient::new(vec![vec![]]);
        let cfg = PlannerConfig { repair_rounds: 0, ..Default::default() };
        let out = plan_with_model(&client, &v2, &v1, &cfg).unwrap();
        assert!(out
            .diagnostics
            .iter()
            .any(|d| d.code == DiagCode::Protocol && d.message == "no MATCH produced"));
    }

    #[test]
    fn repair_round_fixes_program() {
        let (v2, v1) = pair();
        let bad = vec![
            call("match", json!({"same_entity": true, "reason": "same sensor"})),
            call("rename", json!({"source": "motion", "target": "moved"})),
        ];
        let client = TranscriptClient::new(vec![bad, good()]);
        let out = plan_with_model(&client, &v2, &v1, &PlannerConfig::default()).unwrap();
        assert!(out.diagnostics.is_empty());
        assert_eq!(out.repair_rounds, 1);
        let prompts = client.prompts();
        assert!(prompts[1].contains("[unknown-target-path]"), "{}", prompts[1]);
    }

    #[test]
    fn unknown_tool_after_repairs_is_an_error() {
        let (v2, v1) = pair();
        let weird = vec![call("teleport", json!({}))];
        let client = TranscriptClient::new(vec![weird.clone(), weird]);
        let cfg = PlannerConfig { repair_rounds: 1, ..Default::default() };
        match plan_with_model(&client, &v2, &v1, &cfg) {
            Err(PlanError::Protocol(v)) => assert!(v[0].contains("teleport")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn residual_diagnostics_are_kept() {
        let (v2, v1) = pair();
        let bad = vec![call("match", json!({"same_entity": true, "reason": ""}))];
        let client = TranscriptClient::new(vec![bad.clone(), bad.clone(), bad]);
        let out = plan_with_model(&client, &v2, &v1, &PlannerConfig::default()).unwrap();
        assert_eq!(out.repair_rounds, 2);
        assert!(out.diagnostics.iter().any(|d| d.code == DiagCode::UncoveredTarget));
    }

    #[test]
    fn exhausted_transcript_is_transport_failure() {
        let (v2, v1) = pair();
        let client = TranscriptClient::new(vec![]);
        assert!(matches!(
            plan_with_model(&client, &v2, &v1, &PlannerConfig::default()),
            Err(PlanError::Transport(_))
        ));
    }

    #[test]
    fn transcript_file_format() {
        let t = TranscriptClient::from_json(
            r#"{"responses": [[{"name": "match", "arguments": {"same_entity": false, "reason": "no"}}]]}"#,
        )
        .unwrap();
        let got = t.submit("p", &[]).unwrap();
        assert_eq!(got[0].name, "match");
    }
}
