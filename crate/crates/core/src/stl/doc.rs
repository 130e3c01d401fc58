//! The STL document format.
//!
//! ```yaml
//! source: {subject: "motion", version: 2}
//! target: {subject: "motion", version: 1}
//! match: {same_entity: true, reason: "same sensor"}
//! commands:
//!   - rename: {source: "motion", target: "movement"}
//!   - scale: {target: "duration_s", factor: 0.001}
//! ```
//!
//! Command names are lower case in documents. The same per-command argument
//! objects are used as tool-call arguments by the model planner.

use serde_json::{Map, Value};

use super::expr::{is_reserved, parse_expr, Expr};
use super::{FnRef, MatchHeader, StlCommand, StlError, StlProgram};
use crate::path::{is_identifier, FieldPath};
use crate::record::{format_float, Record};
use crate::schema::{FieldType, SchemaRef, TypeKind};

pub const COMMAND_NAMES: [&str; 12] = [
    "copy", "add", "cast", "delete", "rename", "default", "missing", "scale", "shift", "link",
    "gen", "apply",
];

struct Args<'a> {
    command: &'a str,
    map: &'a Map<String, Value>,
}

impl<'a> Args<'a> {
    fn new(command: &'a str, value: &'a Value, allowed: &[&str]) -> Result<Self, StlError> {
        let Value::Object(map) = value else {
            return Err(StlError::BadParam {
                command: command.to_uppercase(),
                param: "<arguments>".into(),
                detail: "expected a map of parameters".into(),
            });
        };
        if let Some(k) = map.keys().find(|k| !allowed.contains(&k.as_str())) {
            return Err(StlError::UnknownParam {
                command: command.to_uppercase(),
                param: k.clone(),
            });
        }
        Ok(Args { command, map })
    }

    fn bad(&self, param: &str, detail: impl Into<String>) -> StlError {
        StlError::BadParam {
            command: self.command.to_uppercase(),
            param: param.into(),
            detail: detail.into(),
        }
    }

    fn get(&self, param: &str) -> Result<&'a Value, StlError> {
        self.map.get(param).ok_or_else(|| StlError::MissingParam {
            command: self.command.to_uppercase(),
            param: param.into(),
        })
    }

    fn string(&self, param: &str) -> Result<String, StlError> {
        match self.get(param)? {
            Value::String(s) => Ok(s.clone()),
            other => Err(self.bad(param, format!("expected string, found {other}"))),
        }
    }

    fn opt_string(&self, param: &str) -> Result<Option<String>, StlError> {
        match self.map.get(param) {
            None | Some(Value::Null) => Ok(None),
            Some(_) => self.string(param).map(Some),
        }
    }

    fn path(&self, param: &str) -> Result<FieldPath, StlError> {
        self.string(param)?
            .parse()
            .map_err(|e: crate::path::PathError| self.bad(param, e.to_string()))
    }

    fn number(&self, param: &str) -> Result<f64, StlError> {
        match self.get(param)? {
            Value::Number(n) => n.as_f64().ok_or_else(|| self.bad(param, "not a number")),
            other => Err(self.bad(param, format!("expected number, found {other}"))),
        }
    }

    fn boolean(&self, param: &str) -> Result<bool, StlError> {
        match self.get(param)? {
            Value::Bool(b) => Ok(*b),
            other => Err(self.bad(param, format!("expected boolean, found {other}"))),
        }
    }

    fn literal(&self, param: &str) -> Result<Record, StlError> {
        Record::from_json(self.get(param)?).map_err(|e| self.bad(param, e.to_string()))
    }

    fn field_type(&self, param: &str) -> Result<FieldType, StlError> {
        match self.get(param)? {
            Value::String(s) => match s.parse::<TypeKind>() {
                Ok(TypeKind::String) => Ok(FieldType::String),
                Ok(TypeKind::Integer) => Ok(FieldType::Integer),
                Ok(TypeKind::Float) => Ok(FieldType::Float),
                Ok(TypeKind::Boolean) => Ok(FieldType::Boolean),
                Ok(TypeKind::Enum) => Err(self.bad(param, "enum casts are written {enum: [variants]}")),
                Ok(TypeKind::Object) => Err(self.bad(param, "cannot cast to an object type")),
                Err(k) => Err(self.bad(param, format!("unknown type `{k}`"))),
            },
            Value::Object(m) if m.len() == 1 && m.contains_key("enum") => match &m["enum"] {
                Value::Array(items) => {
                    let variants = items
                        .iter()
                        .map(|v| v.as_str().map(str::to_string))
                        .collect::<Option<Vec<_>>>()
                        .ok_or_else(|| self.bad(param, "enum variants must be strings"))?;
                    if variants.is_empty() {
                        return Err(self.bad(param, "enum variants must be non-empty"));
                    }
                    Ok(FieldType::Enum(variants))
                }
                _ => Err(self.bad(param, "enum variants must be a list")),
            },
            other => Err(self.bad(param, format!("expected a type, found {other}"))),
        }
    }

    fn expr(&self, param: &str) -> Result<Expr, StlError> {
        let text = self.string(param)?;
        parse_expr(&text).map_err(|e| self.bad(param, e.to_string()))
    }
}

/// Decodes one command from its lower-case name and argument map.
pub fn command_from_args(name: &str, args: &Value) -> Result<StlCommand, StlError> {
    let cmd = match name {
        "copy" => {
            let a = Args::new(name, args, &["source", "target"])?;
            StlCommand::Copy { source: a.path("source")?, target: a.path("target")? }
        }
        "rename" => {
            let a = Args::new(name, args, &["source", "target"])?;
            StlCommand::Rename { source: a.path("source")?, target: a.path("target")? }
        }
        "add" => {
            let a = Args::new(name, args, &["target", "value"])?;
            StlCommand::Add { target: a.path("target")?, value: a.literal("value")? }
        }
        "default" => {
            let a = Args::new(name, args, &["target", "value"])?;
            StlCommand::Default { target: a.path("target")?, value: a.literal("value")? }
        }
        "cast" => {
            let a = Args::new(name, args, &["source", "target", "to"])?;
            StlCommand::Cast {
                source: a.path("source")?,
                target: a.path("target")?,
                to: a.field_type("to")?,
            }
        }
        "delete" => {
            let a = Args::new(name, args, &["source"])?;
            StlCommand::Delete { source: a.path("source")? }
        }
        "missing" => {
            let a = Args::new(name, args, &["target", "reason"])?;
            StlCommand::Missing {
                target: a.path("target")?,
                reason: a.opt_string("reason")?.unwrap_or_default(),
            }
        }
        "scale" => {
            let a = Args::new(name, args, &["target", "factor"])?;
            StlCommand::Scale { target: a.path("target")?, factor: a.number("factor")? }
        }
        "shift" => {
            let a = Args::new(name, args, &["target", "offset"])?;
            StlCommand::Shift { target: a.path("target")?, offset: a.number("offset")? }
        }
        "link" => {
            let a = Args::new(name, args, &["target", "table", "fallback"])?;
            let Value::Object(table) = a.get("table")? else {
                return Err(a.bad("table", "expected a map of symbols"));
            };
            let table = table
                .iter()
                .map(|(k, v)| match v {
                    Value::String(s) => Ok((k.clone(), s.clone())),
                    other => Err(a.bad("table", format!("value for `{k}` must be a symbol, found {other}"))),
                })
                .collect::<Result<Vec<_>, _>>()?;
            StlCommand::Link {
                target: a.path("target")?,
                table,
                fallback: a.opt_string("fallback")?,
            }
        }
        "gen" => {
            let a = Args::new(name, args, &["name", "expr"])?;
            StlCommand::Gen { name: a.string("name")?, expr: a.expr("expr")? }
        }
        "apply" => {
            let a = Args::new(name, args, &["source", "target", "fn"])?;
            let text = a.string("fn")?;
            let func = if is_identifier(&text) && !is_reserved(&text) {
                FnRef::Named(text)
            } else {
                FnRef::Inline(parse_expr(&text).map_err(|e| a.bad("fn", e.to_string()))?)
            };
            StlCommand::Apply { source: a.path("source")?, target: a.path("target")?, func }
        }
        other => return Err(StlError::UnknownCommand(other.to_string())),
    };
    cmd.check()?;
    Ok(cmd)
}

pub fn match_from_args(args: &Value) -> Result<MatchHeader, StlError> {
    let a = Args::new("match", args, &["same_entity", "reason"])?;
    Ok(MatchHeader {
        same_entity: a.boolean("same_entity")?,
        reason: a.opt_string("reason")?.unwrap_or_default(),
    })
}

fn literal_json(r: &Record) -> Value {
    r.to_json()
}

fn type_json(t: &FieldType) -> Value {
    match t {
        FieldType::Enum(v) => serde_json::json!({ "enum": v }),
        other => Value::String(other.kind().as_str().to_string()),
    }
}

/// Lower-case name plus argument map, in the fixed per-command key order.
pub fn command_to_args(cmd: &StlCommand) -> (&'static str, Vec<(&'static str, Value)>) {
    let s = |p: &FieldPath| Value::String(p.to_string());
    let f = |x: f64| serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null);
    match cmd {
        StlCommand::Copy { source, target } => ("copy", vec![("source", s(source)), ("target", s(target))]),
        StlCommand::Rename { source, target } => {
            ("rename", vec![("source", s(source)), ("target", s(target))])
        }
        StlCommand::Add { target, value } => ("add", vec![("target", s(target)), ("value", literal_json(value))]),
        StlCommand::Default { target, value } => {
            ("default", vec![("target", s(target)), ("value", literal_json(value))])
        }
        StlCommand::Cast { source, target, to } => (
            "cast",
            vec![("source", s(source)), ("target", s(target)), ("to", type_json(to))],
        ),
        StlCommand::Delete { source } => ("delete", vec![("source", s(source))]),
        StlCommand::Missing { target, reason } => (
            "missing",
            vec![("target", s(target)), ("reason", Value::String(reason.clone()))],
        ),
        StlCommand::Scale { target, factor } => ("scale", vec![("target", s(target)), ("factor", f(*factor))]),
        StlCommand::Shift { target, offset } => ("shift", vec![("target", s(target)), ("offset", f(*offset))]),
        StlCommand::Link { target, table, fallback } => {
            let mut args = vec![
                ("target", s(target)),
                (
                    "table",
                    Value::Object(table.iter().map(|(k, v)| (k.clone(), Value::String(v.clone()))).collect()),
                ),
            ];
            if let Some(fb) = fallback {
                args.push(("fallback", Value::String(fb.clone())));
            }
            ("link", args)
        }
        StlCommand::Gen { name, expr } => (
            "gen",
            vec![("name", Value::String(name.clone())), ("expr", Value::String(expr.to_string()))],
        ),
        StlCommand::Apply { source, target, func } => (
            "apply",
            vec![
                ("source", s(source)),
                ("target", s(target)),
                ("fn", Value::String(func.to_string())),
            ],
        ),
    }
}

pub fn command_args_json(cmd: &StlCommand) -> (&'static str, Value) {
    let (name, args) = command_to_args(cmd);
    (name, Value::Object(args.into_iter().map(|(k, v)| (k.to_string(), v)).collect()))
}

// ---------------------------------------------------------------------------

fn syntax(msg: impl Into<String>) -> StlError {
    StlError::Syntax(msg.into())
}

fn schema_ref(v: Option<&Value>, key: &str) -> Result<SchemaRef, StlError> {
    let v = v.ok_or_else(|| syntax(format!("missing `{key}`")))?;
    let Value::Object(m) = v else {
        return Err(syntax(format!("`{key}` must be a map with subject and version")));
    };
    if let Some(k) = m.keys().find(|k| *k != "subject" && *k != "version") {
        return Err(syntax(format!("`{key}`: unknown key `{k}`")));
    }
    let subject = m
        .get("subject")
        .and_then(Value::as_str)
        .ok_or_else(|| syntax(format!("`{key}.subject` must be a string")))?;
    let version = m
        .get("version")
        .and_then(Value::as_u64)
        .filter(|v| *v >= 1 && *v <= u32::MAX as u64)
        .ok_or_else(|| syntax(format!("`{key}.version` must be a positive integer")))?;
    Ok(SchemaRef { subject: subject.to_string(), version: version as u32 })
}

pub fn parse_program(text: &str) -> Result<StlProgram, StlError> {
    let doc: Value = serde_yaml::from_str(text).map_err(|e| syntax(e.to_string()))?;
    let Value::Object(top) = doc else {
        return Err(syntax("program document must be a map"));
    };
    if let Some(k) = top
        .keys()
        .find(|k| !["source", "target", "match", "commands"].contains(&k.as_str()))
    {
        return Err(syntax(format!("unknown top-level key `{k}`")));
    }
    let source = schema_ref(top.get("source"), "source")?;
    let target = schema_ref(top.get("target"), "target")?;
    let header = match top.get("match") {
        None | Some(Value::Null) => return Err(StlError::MissingMatch),
        Some(m) => match_from_args(m)?,
    };
    let commands = match top.get("commands") {
        None | Some(Value::Null) => Vec::new(),
        Some(Value::Array(items)) => items
            .iter()
            .enumerate()
            .map(|(i, item)| match item {
                Value::Object(m) if m.len() == 1 => {
                    let (name, args) = m.iter().next().expect("one entry");
                    if name == "match" {
                        return Err(syntax(format!("command #{i}: MATCH must be the header, not a command")));
                    }
                    command_from_args(name, args)
                }
                _ => Err(syntax(format!("command #{i} must be a single-key map"))),
            })
            .collect::<Result<_, _>>()?,
        Some(_) => return Err(syntax("`commands` must be a list")),
    };
    let program = StlProgram { source, target, header, commands };
    program.check()?;
    Ok(program)
}

/// Quotes a string as a YAML double-quoted scalar.
fn quote(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            '\n' => out.push_str("\\n"),
            '\t' => out.push_str("\\t"),
            '\r' => out.push_str("\\r"),
            c if c.is_control() || c == '\u{feff}' || c == '\u{fffe}' || c == '\u{ffff}' => {
                out.push_str(&format!("\\u{:04x}", c as u32));
            }
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

fn write_value(v: &Value, out: &mut String) {
    match v {
        Value::String(s) => out.push_str(&quote(s)),
        Value::Number(n) => {
            if let Some(i) = n.as_i64() {
                out.push_str(&i.to_string());
            } else {
                out.push_str(&format_float(n.as_f64().unwrap_or(0.0)));
            }
        }
        Value::Object(m) => {
            out.push('{');
            for (i, (k, v)) in m.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&quote(k));
                out.push_str(": ");
                write_value(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_value(v, out);
            }
            out.push(']');
        }
        Value::Bool(b) => out.push_str(&b.to_string()),
        Value::Null => out.push_str("null"),
    }
}

fn write_literal(r: &Record, out: &mut String) {
    match r {
        // keep float-ness visible: 2.0 must not read back as an integer
        Record::Float(x) => out.push_str(&format_float(*x)),
        Record::Object(m) => {
            out.push('{');
            for (i, (k, v)) in m.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                out.push_str(&quote(k));
                out.push_str(": ");
                write_literal(v, out);
            }
            out.push('}');
        }
        other => write_value(&other.to_json(), out),
    }
}

fn write_command(cmd: &StlCommand, out: &mut String) {
    let (name, args) = command_to_args(cmd);
    out.push_str("  - ");
    out.push_str(name);
    out.push_str(": {");
    for (i, (k, v)) in args.iter().enumerate() {
        if i > 0 {
            out.push_str(", ");
        }
        out.push_str(k);
        out.push_str(": ");
        match (cmd, *k) {
            (StlCommand::Add { value, .. } | StlCommand::Default { value, .. }, "value") => {
                write_literal(value, out)
            }
            (StlCommand::Link { table, .. }, "table") => {
                // table order is the document order
                out.push('{');
                for (j, (from, to)) in table.iter().enumerate() {
                    if j > 0 {
                        out.push_str(", ");
                    }
                    out.push_str(&quote(from));
                    out.push_str(": ");
                    out.push_str(&quote(to));
                }
                out.push('}');
            }
            (StlCommand::Scale { factor: x, .. } | StlCommand::Shift { offset: x, .. }, _)
                if *k != "target" =>
            {
                out.push_str(&format_float(*x))
            }
            _ => write_value(v, out),
        }
    }
    out.push_str("}\n");
}

pub fn serialize_program(program: &StlProgram) -> String {
    let mut out = String::new();
    for (key, r) in [("source", &program.source), ("target", &program.target)] {
        out.push_str(&format!("{key}: {{subject: {}, version: {}}}\n", quote(&r.subject), r.version));
    }
    out.push_str(&format!(
        "match: {{same_entity: {}, reason: {}}}\n",
        program.header.same_entity,
        quote(&program.header.reason)
    ));
    if program.commands.is_empty() {
        out.push_str("commands: []\n");
    } else {
        out.push_str("commands:\n");
        for cmd in &program.commands {
            write_command(cmd, &mut out);
        }
    }
    out
}
