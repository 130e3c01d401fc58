//! Whole-record expression backend. The artifact is a chain of `let`
//! bindings, one per produced target field, ending in a record constructor.

use std::collections::HashMap;

use super::{Backend, Untranslatable};
use crate::interp::{conform_source, conform_target, eval_closed, ErrorKind, TransformError};
use crate::path::FieldPath;
use crate::record::Record;
use crate::schema::{Field, FieldType, Schema};
use crate::stl::expr::{parse_in, Builtin, Dialect, Expr, INPUT_VAR};
use crate::stl::{FnRef, StlCommand, StlProgram};

pub struct PipelineExpr;

fn lit(r: Record) -> Expr {
    match r {
        Record::Object(map) => Expr::Record(map.into_iter().map(|(k, v)| (k, lit(v))).collect()),
        Record::Enum(s) => Expr::Lit(Record::Str(s)),
        other => Expr::Lit(other),
    }
}

fn fail(kind: ErrorKind, msg: &str) -> Expr {
    Expr::call(Builtin::Fail, vec![Expr::str(kind.tag()), Expr::str(msg)])
}

fn null() -> Expr {
    Expr::Lit(Record::Null)
}

fn is_null(e: Expr) -> Expr {
    Expr::call(Builtin::IsNull, vec![e])
}

fn coerce(e: Expr, ty: &FieldType) -> Option<Expr> {
    let name = match ty {
        FieldType::Integer => "integer",
        FieldType::Float => "float",
        FieldType::String => "string",
        FieldType::Boolean => "boolean",
        FieldType::Enum(vs) => {
            let mut args = vec![e];
            args.extend(vs.iter().map(|v| Expr::str(v)));
            return Some(Expr::call(Builtin::CastEnum, args));
        }
        FieldType::Object(_) => return None,
    };
    Some(Expr::call(Builtin::Cast, vec![e, Expr::str(name)]))
}

/// `APPLY`: null input stays null; a null result is an error for required
/// targets; anything else is cast to the target type.
fn apply_expr(source: &FieldPath, body: Expr, target: &Field) -> Option<Expr> {
    let r = "result";
    let on_null = if target.optional {
        null()
    } else {
        fail(ErrorKind::EvalError, "APPLY produced null for a required field")
    };
    let coerced = coerce(Expr::Var(r.into()), &target.ty)?;
    let inner = Expr::Let(
        r.into(),
        Box::new(body),
        Box::new(Expr::If(Box::new(is_null(Expr::Var(r.into()))), Box::new(on_null), Box::new(coerced))),
    );
    Some(Expr::Let(
        INPUT_VAR.into(),
        Box::new(Expr::Src(source.clone())),
        Box::new(Expr::If(Box::new(is_null(Expr::value())), Box::new(null()), Box::new(inner))),
    ))
}

fn record_of(fields: &[Field], prefix: Option<&FieldPath>, vars: &HashMap<FieldPath, String>) -> Vec<(String, Expr)> {
    let mut out = Vec::new();
    for f in fields {
        let path = match prefix {
            Some(p) => p.child(&f.name),
            None => FieldPath::single(&f.name).expect("validated"),
        };
        if let Some(v) = vars.get(&path) {
            out.push((f.name.clone(), Expr::Var(v.clone())));
        } else if let FieldType::Object(children) = &f.ty {
            if vars.keys().any(|p| path.is_ancestor_of(p)) {
                out.push((f.name.clone(), Expr::Record(record_of(children, Some(&path), vars))));
            }
        }
    }
    out
}

impl Backend for PipelineExpr {
    fn name(&self) -> &'static str {
        "pipeline-expr"
    }

    fn media_type(&self) -> &'static str {
        "text/x-gse-expr"
    }

    fn emit(&self, program: &StlProgram, _source: &Schema, target: &Schema) -> Result<String, Vec<Untranslatable>> {
        let mut text = format!("# pipeline-expr: {} -> {}\n", program.source, program.target);
        if program.is_abort() {
            let why = format!("schemas describe different entities: {}", program.header.reason);
            text.push_str(&fail(ErrorKind::Abort, &why).to_string());
            text.push('\n');
            return Ok(text);
        }

        let mut vars: HashMap<FieldPath, String> = HashMap::new();
        let mut order: Vec<FieldPath> = Vec::new();
        let mut gens: HashMap<&str, &Expr> = HashMap::new();
        let mut lets: Vec<(String, Expr)> = Vec::new();
        let mut problems = Vec::new();

        for (i, cmd) in program.commands.iter().enumerate() {
            let Some(t) = cmd.target() else {
                if let StlCommand::Gen { name, expr } = cmd {
                    gens.insert(name, expr);
                }
                continue;
            };
            let current = vars.get(t).map(|v| Expr::Var(v.clone()));
            let value = match cmd {
                StlCommand::Copy { source, .. } | StlCommand::Rename { source, .. } => Expr::Src(source.clone()),
                StlCommand::Cast { source, to, .. } => match coerce(Expr::Src(source.clone()), to) {
                    Some(e) => e,
                    None => {
                        problems.push(Untranslatable { command: Some(i), reason: "CAST to an object type".into() });
                        continue;
                    }
                },
                StlCommand::Add { value, .. } => lit(value.clone()),
                StlCommand::Default { value, .. } => match current {
                    Some(cur) => Expr::call(Builtin::Coalesce, vec![cur, lit(value.clone())]),
                    None => lit(value.clone()),
                },
                StlCommand::Missing { reason, .. } => {
                    let why = if reason.is_empty() { "no mapping exists" } else { reason };
                    fail(ErrorKind::MappingFailure, why)
                }
                StlCommand::Scale { factor, .. } => {
                    Expr::call(Builtin::Scale, vec![current.unwrap_or_else(null), Expr::float(*factor)])
                }
                StlCommand::Shift { offset, .. } => {
                    Expr::call(Builtin::Shift, vec![current.unwrap_or_else(null), Expr::float(*offset)])
                }
                StlCommand::Link { table, fallback, .. } => {
                    let mut args = vec![
                        current.unwrap_or_else(null),
                        fallback.as_deref().map(Expr::str).unwrap_or_else(null),
                    ];
                    for (k, v) in table {
                        args.push(Expr::str(k));
                        args.push(Expr::str(v));
                    }
                    Expr::call(Builtin::Link, args)
                }
                StlCommand::Apply { source, func, .. } => {
                    let body = match func {
                        FnRef::Named(n) => match (gens.get(n.as_str()), Builtin::unary_by_name(n)) {
                            (Some(e), _) => (*e).clone(),
                            (None, Some(b)) => Expr::call(b, vec![Expr::value()]),
                            (None, None) => {
                                problems.push(Untranslatable { command: Some(i), reason: format!("unknown function `{n}`") });
                                continue;
                            }
                        },
                        FnRef::Inline(e) => e.clone(),
                    };
                    let Some(field) = target.field_at(t) else { continue };
                    match apply_expr(source, body, field) {
                        Some(e) => e,
                        None => {
                            problems.push(Untranslatable { command: Some(i), reason: "APPLY into an object field".into() });
                            continue;
                        }
                    }
                }
                StlCommand::Delete { .. } | StlCommand::Gen { .. } => unreachable!("no target"),
            };
            let var = vars
                .entry(t.clone())
                .or_insert_with(|| {
                    order.push(t.clone());
                    format!("t{}", order.len() - 1)
                })
                .clone();
            lets.push((var, value));
        }
        if !problems.is_empty() {
            return Err(problems);
        }

        for (i, p) in order.iter().enumerate() {
            text.push_str(&format!("# t{i} = {p}\n"));
        }
        for (var, value) in lets {
            let shown = match value {
                Expr::Let(..) => format!("({value})"),
                other => other.to_string(),
            };
            text.push_str(&format!("let {var} = {shown} in\n"));
        }
        text.push_str(&Expr::Record(record_of(&target.fields, None, &vars)).to_string());
        text.push('\n');
        Ok(text)
    }
}

/// Evaluates a pipeline-expr artifact on one record, with the same input
/// and output conformance checks as [`crate::interp::transform`].
pub fn run_pipeline(body: &str, record: &Record, source: &Schema, target: &Schema) -> Result<Record, TransformError> {
    let expr = parse_in(body, Dialect::Pipeline)
        .map_err(|e| TransformError::new(ErrorKind::EvalError, format!("artifact does not parse: {e}")))?;
    let input = conform_source(record, source)?;
    let out = eval_closed(&expr, &input)?;
    conform_target(&out, target)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembler::compile;
    use crate::interp::transform;
    use crate::schema::parse_schema;
    use crate::stl::parse_program;

    fn fixture() -> (Schema, Schema, StlProgram) {
        let v2 = parse_schema(
            r#"
subject: motion
version: 2
fields:
  - {name: motion, type: boolean}
  - {name: duration_ms, type: integer, unit: ms}
  - {name: state, type: enum, variants: [on, off]}
  - {name: temp_c, type: float, unit: celsius, optional: true}
  - {name: ts, type: integer}
"#,
        )
        .unwrap();
        let v1 = parse_schema(
            r#"
subject: motion
version: 1
fields:
  - {name: movement, type: boolean}
  - {name: duration_s, type: float, unit: s}
  - {name: status, type: enum, variants: [active, inactive]}
  - {name: temp_f, type: float, unit: fahrenheit, optional: true}
  - {name: place, type: object, fields: [{name: room, type: string}]}
"#,
        )
        .unwrap();
        let p = parse_program(
            r#"
source: {subject: motion, version: 2}
target: {subject: motion, version: 1}
match: {same_entity: true, reason: same sensor}
commands:
  - rename: {source: motion, target: movement}
  - rename: {source: duration_ms, target: duration_s}
  - scale: {target: duration_s, factor: 0.001}
  - rename: {source: state, target: status}
  - link: {target: status, table: {on: active, off: inactive}}
  - gen: {name: c_to_f, expr: "value * 1.8 + 32"}
  - apply: {source: temp_c, target: temp_f, fn: c_to_f}
  - add: {target: place.room, value: "hall"}
  - delete: {source: ts}
"#,
        )
        .unwrap();
        (v2, v1, p)
    }

    #[test]
    fn artifact_agrees_with_interpreter() {
        let (v2, v1, p) = fixture();
        let art = compile(&p, &v2, &v1, "pipeline-expr").unwrap();
        assert_eq!(art.media_type, "text/x-gse-expr");
        for rec in [
            r#"{"motion": true, "duration_ms": 1500, "state": "on", "temp_c": 20, "ts": 1}"#,
            r#"{"motion": false, "duration_ms": 7, "state": "off", "ts": 2}"#,
            r#"{"motion": false, "duration_ms": 7, "state": "off", "temp_c": null, "ts": 2}"#,
        ] {
            let r = Record::parse(rec).unwrap();
            assert_eq!(run_pipeline(&art.body, &r, &v2, &v1), transform(&p, &r, &v2, &v1), "{}", art.body);
        }
        let r = Record::parse(r#"{"motion": true, "duration_ms": 1500, "state": "on", "temp_c": 20, "ts": 1}"#).unwrap();
        let out = run_pipeline(&art.body, &r, &v2, &v1).unwrap();
        assert_eq!(
            out.to_line(),
            r#"{"duration_s":1.5,"movement":true,"place":{"room":"hall"},"status":"active","temp_f":68.0}"#
        );
    }

    #[test]
    fn failures_agree() {
        let (v2, v1, mut p) = fixture();
        p.commands[7] = StlCommand::Missing { target: "place.room".parse().unwrap(), reason: String::new() };
        let art = compile(&p, &v2, &v1, "pipeline-expr").unwrap();
        let r = Record::parse(r#"{"motion": true, "duration_ms": 1, "state": "on", "ts": 1}"#).unwrap();
        let a = run_pipeline(&art.body, &r, &v2, &v1).unwrap_err();
        let b = transform(&p, &r, &v2, &v1).unwrap_err();
        assert_eq!((a.kind, a.detail), (b.kind, b.detail));

        p.header.same_entity = false;
        p.commands.clear();
        let art = compile(&p, &v2, &v1, "pipeline-expr").unwrap();
        assert_eq!(run_pipeline(&art.body, &r, &v2, &v1).unwrap_err().kind, ErrorKind::Abort);
        assert_eq!(transform(&p, &r, &v2, &v1).unwrap_err().kind, ErrorKind::Abort);
    }
}
