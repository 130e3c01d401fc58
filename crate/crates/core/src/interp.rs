//! Reference semantics: expression evaluation, the cast table and program
//! execution. Every backend must agree with [`transform`].

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::FieldPath;
use crate::record::{format_float, Record};
use crate::schema::{FieldType, Schema};
use crate::stl::expr::{BinOp, Builtin, Expr, UnaryOp, INPUT_VAR};
use crate::stl::{FnRef, StlCommand, StlProgram};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorKind {
    Abort,
    MappingFailure,
    CastError,
    EvalError,
    PathError,
}

impl ErrorKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ErrorKind::Abort => "Abort",
            ErrorKind::MappingFailure => "MappingFailure",
            ErrorKind::CastError => "CastError",
            ErrorKind::EvalError => "EvalError",
            ErrorKind::PathError => "PathError",
        }
    }

    /// Short tag used by the `fail(kind, message)` pipeline builtin.
    pub fn tag(self) -> &'static str {
        match self {
            ErrorKind::Abort => "abort",
            ErrorKind::MappingFailure => "mapping",
            ErrorKind::CastError => "cast",
            ErrorKind::EvalError => "eval",
            ErrorKind::PathError => "path",
        }
    }

    pub fn from_tag(tag: &str) -> Option<ErrorKind> {
        [
            ErrorKind::Abort,
            ErrorKind::MappingFailure,
            ErrorKind::CastError,
            ErrorKind::EvalError,
            ErrorKind::PathError,
        ]
        .into_iter()
        .find(|k| k.tag() == tag)
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub struct TransformError {
    pub kind: ErrorKind,
    pub detail: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

impl fmt::Display for TransformError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind, self.detail)?;
        if let Some(p) = &self.path {
            write!(f, " (at `{p}`)")?;
        }
        Ok(())
    }
}

impl TransformError {
    pub fn new(kind: ErrorKind, detail: impl Into<String>) -> TransformError {
        TransformError {
            kind,
            detail: detail.into(),
            path: None,
        }
    }

    pub fn at(mut self, path: &FieldPath) -> TransformError {
        if self.path.is_none() {
            self.path = Some(path.to_string());
        }
        self
    }
}

fn eval_err(detail: impl Into<String>) -> TransformError {
    TransformError::new(ErrorKind::EvalError, detail)
}

fn finite(x: f64) -> Result<Record, TransformError> {
    if x.is_finite() {
        Ok(Record::Float(x))
    } else {
        Err(eval_err("non-finite numeric result"))
    }
}

// ---------------------------------------------------------------------------
// numeric rules shared by SCALE/SHIFT and their pipeline builtins

fn integral(x: f64) -> Option<i64> {
    if x.fract() == 0.0 && x >= i64::MIN as f64 && x < i64::MAX as f64 {
        Some(x as i64)
    } else {
        None
    }
}

/// Multiplies by `factor`; integers stay integers only when the factor is
/// integral and the product is exact.
pub fn scale_value(v: &Record, factor: f64) -> Result<Record, TransformError> {
    match v {
        Record::Null => Ok(Record::Null),
        Record::Int(i) => match integral(factor).and_then(|f| i.checked_mul(f)) {
            Some(p) => Ok(Record::Int(p)),
            None => finite(*i as f64 * factor),
        },
        Record::Float(x) => finite(x * factor),
        other => Err(eval_err(format!("SCALE needs a number, found {} {other}", other.kind_name()))),
    }
}

/// Adds `offset` under the same integer rule as [`scale_value`].
pub fn shift_value(v: &Record, offset: f64) -> Result<Record, TransformError> {
    match v {
        Record::Null => Ok(Record::Null),
        Record::Int(i) => match integral(offset).and_then(|o| i.checked_add(o)) {
            Some(s) => Ok(Record::Int(s)),
            None => finite(*i as f64 + offset),
        },
        Record::Float(x) => finite(x + offset),
        other => Err(eval_err(format!("SHIFT needs a number, found {} {other}", other.kind_name()))),
    }
}

pub fn link_value(v: &Record, table: &[(String, String)], fallback: Option<&str>) -> Result<Record, TransformError> {
    let sym = match v {
        Record::Null => return Ok(Record::Null),
        Record::Str(s) | Record::Enum(s) => s,
        other => return Err(eval_err(format!("LINK needs a symbol, found {} {other}", other.kind_name()))),
    };
    match table.iter().find(|(k, _)| k == sym) {
        Some((_, to)) => Ok(Record::Enum(to.clone())),
        None => match fallback {
            Some(fb) => Ok(Record::Enum(fb.to_string())),
            None => Err(eval_err(format!("no LINK entry for `{sym}` and no fallback"))),
        },
    }
}

// ---------------------------------------------------------------------------
// cast table

/// Converts a value to the given type. Null passes through unchanged.
pub fn cast_value(value: &Record, to: &FieldType) -> Result<Record, TransformError> {
    let fail = || {
        TransformError::new(
            ErrorKind::CastError,
            format!("cannot cast {} {} to {}", value.kind_name(), value, to),
        )
    };
    Ok(match (value, to) {
        (Record::Null, _) => Record::Null,
        (Record::Int(i), FieldType::Integer) => Record::Int(*i),
        (Record::Float(x), FieldType::Float) => Record::Float(*x),
        (Record::Str(s), FieldType::String) => Record::Str(s.clone()),
        (Record::Bool(b), FieldType::Boolean) => Record::Bool(*b),
        (Record::Object(_), FieldType::Object(_)) => value.clone(),
        (Record::Int(i), FieldType::Float) => {
            let x = *i as f64;
            if x as i128 != *i as i128 {
                return Err(fail());
            }
            Record::Float(x)
        }
        (Record::Float(x), FieldType::Integer) => {
            if x.fract().abs() >= 1e-9 {
                return Err(fail());
            }
            integral(x.trunc()).map(Record::Int).ok_or_else(fail)?
        }
        (Record::Int(i), FieldType::String) => Record::Str(i.to_string()),
        (Record::Float(x), FieldType::String) => Record::Str(format_float(*x)),
        (Record::Str(s), FieldType::Integer) => Record::Int(s.trim().parse().map_err(|_| fail())?),
        (Record::Str(s), FieldType::Float) => {
            let x: f64 = s.trim().parse().map_err(|_| fail())?;
            if !x.is_finite() {
                return Err(fail());
            }
            Record::Float(x)
        }
        (Record::Bool(b), FieldType::String) => Record::Str(b.to_string()),
        (Record::Str(s), FieldType::Boolean) => match s.trim().to_ascii_lowercase().as_str() {
            "true" | "1" => Record::Bool(true),
            "false" | "0" => Record::Bool(false),
            _ => return Err(fail()),
        },
        (Record::Str(s) | Record::Enum(s), FieldType::Enum(variants)) if variants.contains(s) => Record::Enum(s.clone()),
        _ => return Err(fail()),
    })
}

// ---------------------------------------------------------------------------
// expression evaluation

struct Evaluator<'a> {
    source: &'a Record,
    env: Vec<(String, Record)>,
}

fn as_text(r: &Record) -> Option<&str> {
    match r {
        Record::Str(s) | Record::Enum(s) => Some(s),
        _ => None,
    }
}

fn mismatch(what: &str, r: &Record) -> TransformError {
    eval_err(format!("{what} does not accept {} {r}", r.kind_name()))
}

/// Expressions see enum symbols as plain strings.
fn expr_input(r: Record) -> Record {
    match r {
        Record::Enum(s) => Record::Str(s),
        other => other,
    }
}

impl Evaluator<'_> {
    fn eval(&mut self, e: &Expr) -> Result<Record, TransformError> {
        match e {
            Expr::Var(name) => self
                .env
                .iter()
                .rev()
                .find(|(n, _)| n == name)
                .map(|(_, v)| v.clone())
                .ok_or_else(|| eval_err(format!("unbound variable `{name}`"))),
            Expr::Src(p) => Ok(expr_input(self.source.get_path(p).cloned().unwrap_or(Record::Null))),
            Expr::Lit(r) => Ok(r.clone()),
            Expr::Unary(UnaryOp::Neg, a) => match self.eval(a)? {
                Record::Int(i) => i.checked_neg().map(Record::Int).ok_or_else(|| eval_err("integer overflow")),
                Record::Float(x) => Ok(Record::Float(-x)),
                other => Err(mismatch("-", &other)),
            },
            Expr::Unary(UnaryOp::Not, a) => match self.eval(a)? {
                Record::Bool(b) => Ok(Record::Bool(!b)),
                other => Err(mismatch("not", &other)),
            },
            Expr::Binary(BinOp::And, a, b) => match self.eval(a)? {
                Record::Bool(false) => Ok(Record::Bool(false)),
                Record::Bool(true) => match self.eval(b)? {
                    Record::Bool(x) => Ok(Record::Bool(x)),
                    other => Err(mismatch("and", &other)),
                },
                other => Err(mismatch("and", &other)),
            },
            Expr::Binary(BinOp::Or, a, b) => match self.eval(a)? {
                Record::Bool(true) => Ok(Record::Bool(true)),
                Record::Bool(false) => match self.eval(b)? {
                    Record::Bool(x) => Ok(Record::Bool(x)),
                    other => Err(mismatch("or", &other)),
                },
                other => Err(mismatch("or", &other)),
            },
            Expr::Binary(op, a, b) => {
                let (x, y) = (self.eval(a)?, self.eval(b)?);
                binary(*op, &x, &y)
            }
            Expr::If(c, a, b) => match self.eval(c)? {
                Record::Bool(true) => self.eval(a),
                Record::Bool(false) => self.eval(b),
                other => Err(mismatch("if condition", &other)),
            },
            Expr::Call(f, args) => self.call(*f, args),
            Expr::Let(name, v, body) => {
                let v = self.eval(v)?;
                self.env.push((name.clone(), v));
                let out = self.eval(body);
                self.env.pop();
                out
            }
            Expr::Record(fields) => {
                let mut map = BTreeMap::new();
                for (k, e) in fields {
                    map.insert(k.clone(), self.eval(e)?);
                }
                Ok(Record::Object(map))
            }
        }
    }

    fn call(&mut self, f: Builtin, args: &[Expr]) -> Result<Record, TransformError> {
        // lazily evaluated forms first
        if f == Builtin::Coalesce {
            let a = self.eval(&args[0])?;
            return if a.is_null() { self.eval(&args[1]) } else { Ok(a) };
        }
        let vals = args.iter().map(|a| self.eval(a)).collect::<Result<Vec<_>, _>>()?;
        let name = f.name();
        let text = |i: usize| as_text(&vals[i]).ok_or_else(|| mismatch(name, &vals[i]));
        let int = |i: usize| match &vals[i] {
            Record::Int(n) => Ok(*n),
            other => Err(mismatch(name, other)),
        };
        let to_int = |x: f64| integral(x).map(Record::Int).ok_or_else(|| eval_err(format!("{name}: {x} out of integer range")));
        match f {
            Builtin::Round | Builtin::Floor | Builtin::Ceil => match &vals[0] {
                Record::Int(i) => Ok(Record::Int(*i)),
                Record::Float(x) => to_int(match f {
                    Builtin::Round => x.round(),
                    Builtin::Floor => x.floor(),
                    _ => x.ceil(),
                }),
                other => Err(mismatch(name, other)),
            },
            Builtin::Abs => match &vals[0] {
                Record::Int(i) => i.checked_abs().map(Record::Int).ok_or_else(|| eval_err("integer overflow")),
                Record::Float(x) => Ok(Record::Float(x.abs())),
                other => Err(mismatch(name, other)),
            },
            Builtin::Min | Builtin::Max => {
                let pick_first = match (&vals[0], &vals[1]) {
                    (Record::Int(a), Record::Int(b)) => {
                        return Ok(Record::Int(if f == Builtin::Min { *a.min(b) } else { *a.max(b) }))
                    }
                    (a, b) => match (a.as_f64(), b.as_f64()) {
                        (Some(x), Some(y)) => (x <= y) == (f == Builtin::Min),
                        _ => return Err(mismatch(name, if a.as_f64().is_none() { a } else { b })),
                    },
                };
                let chosen = if pick_first { &vals[0] } else { &vals[1] };
                Ok(Record::Float(chosen.as_f64().expect("numeric")))
            }
            Builtin::Concat => {
                let mut out = String::new();
                for i in 0..vals.len() {
                    out.push_str(text(i)?);
                }
                Ok(Record::Str(out))
            }
            Builtin::Lower => Ok(Record::Str(text(0)?.to_lowercase())),
            Builtin::Upper => Ok(Record::Str(text(0)?.to_uppercase())),
            Builtin::Substr => {
                let s = text(0)?;
                let (start, len) = (int(1)?, int(2)?);
                if start < 0 || len < 0 {
                    return Err(eval_err("substr: start and length must be non-negative"));
                }
                Ok(Record::Str(s.chars().skip(start as usize).take(len as usize).collect()))
            }
            Builtin::ToString => match &vals[0] {
                Record::Str(s) | Record::Enum(s) => Ok(Record::Str(s.clone())),
                Record::Int(i) => Ok(Record::Str(i.to_string())),
                Record::Float(x) => Ok(Record::Str(format_float(*x))),
                Record::Bool(b) => Ok(Record::Str(b.to_string())),
                other => Err(mismatch(name, other)),
            },
            Builtin::ToNumber => match &vals[0] {
                Record::Int(_) | Record::Float(_) => Ok(vals[0].clone()),
                Record::Str(s) | Record::Enum(s) => {
                    let t = s.trim();
                    if let Ok(i) = t.parse::<i64>() {
                        Ok(Record::Int(i))
                    } else {
                        match t.parse::<f64>() {
                            Ok(x) if x.is_finite() => Ok(Record::Float(x)),
                            _ => Err(eval_err(format!("to_number: cannot parse {s:?}"))),
                        }
                    }
                }
                other => Err(mismatch(name, other)),
            },
            Builtin::ToBoolean => match &vals[0] {
                Record::Bool(b) => Ok(Record::Bool(*b)),
                Record::Int(0) => Ok(Record::Bool(false)),
                Record::Int(1) => Ok(Record::Bool(true)),
                Record::Str(s) | Record::Enum(s) => match s.trim().to_ascii_lowercase().as_str() {
                    "true" | "1" => Ok(Record::Bool(true)),
                    "false" | "0" => Ok(Record::Bool(false)),
                    _ => Err(eval_err(format!("to_boolean: cannot parse {s:?}"))),
                },
                other => Err(mismatch(name, other)),
            },
            Builtin::IsNull => Ok(Record::Bool(vals[0].is_null())),
            Builtin::Coalesce => unreachable!("handled above"),
            Builtin::Cast => {
                let ty = match text(1)? {
                    "integer" => FieldType::Integer,
                    "float" => FieldType::Float,
                    "string" => FieldType::String,
                    "boolean" => FieldType::Boolean,
                    other => return Err(eval_err(format!("cast: unknown type `{other}`"))),
                };
                cast_value(&vals[0], &ty)
            }
            Builtin::CastEnum => {
                let variants = (1..vals.len()).map(|i| text(i).map(str::to_string)).collect::<Result<Vec<_>, _>>()?;
                cast_value(&vals[0], &FieldType::Enum(variants))
            }
            Builtin::Scale | Builtin::Shift => {
                let k = vals[1].as_f64().ok_or_else(|| mismatch(name, &vals[1]))?;
                if f == Builtin::Scale {
                    scale_value(&vals[0], k)
                } else {
                    shift_value(&vals[0], k)
                }
            }
            Builtin::Link => {
                if vals.len() % 2 != 0 {
                    return Err(eval_err("link: expects value, fallback, then key/value pairs"));
                }
                let fallback = match &vals[1] {
                    Record::Null => None,
                    _ => Some(text(1)?),
                };
                let mut table = Vec::new();
                for i in (2..vals.len()).step_by(2) {
                    table.push((text(i)?.to_string(), text(i + 1)?.to_string()));
                }
                link_value(&vals[0], &table, fallback)
            }
            Builtin::Fail => {
                let kind = ErrorKind::from_tag(text(0)?).ok_or_else(|| eval_err("fail: unknown error kind"))?;
                Err(TransformError::new(kind, text(1)?))
            }
        }
    }
}

fn binary(op: BinOp, x: &Record, y: &Record) -> Result<Record, TransformError> {
    use Record::Int;
    let sym = op.symbol();
    match op {
        BinOp::Add | BinOp::Sub | BinOp::Mul | BinOp::Rem => match (x, y) {
            (Int(a), Int(b)) => {
                let r = match op {
                    BinOp::Add => a.checked_add(*b),
                    BinOp::Sub => a.checked_sub(*b),
                    BinOp::Mul => a.checked_mul(*b),
                    _ => {
                        if *b == 0 {
                            return Err(eval_err("division by zero"));
                        }
                        a.checked_rem(*b)
                    }
                };
                r.map(Int).ok_or_else(|| eval_err("integer overflow"))
            }
            _ => {
                let (a, b) = match (x.as_f64(), y.as_f64()) {
                    (Some(a), Some(b)) => (a, b),
                    _ => return Err(mismatch(sym, if x.as_f64().is_none() { x } else { y })),
                };
                if op == BinOp::Rem && b == 0.0 {
                    return Err(eval_err("division by zero"));
                }
                finite(match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    _ => a % b,
                })
            }
        },
        BinOp::Div => match (x.as_f64(), y.as_f64()) {
            (Some(_), Some(0.0)) => Err(eval_err("division by zero")),
            (Some(a), Some(b)) => finite(a / b),
            _ => Err(mismatch(sym, if x.as_f64().is_none() { x } else { y })),
        },
        BinOp::Eq | BinOp::Ne => {
            let eq = match (x, y) {
                (Int(a), Int(b)) => a == b,
                (a, b) if a.as_f64().is_some() && b.as_f64().is_some() => a.as_f64() == b.as_f64(),
                (a, b) => match (as_text(a), as_text(b)) {
                    (Some(s), Some(t)) => s == t,
                    _ => a == b,
                },
            };
            Ok(Record::Bool(eq == (op == BinOp::Eq)))
        }
        _ => {
            let ord = match (x, y) {
                (Int(a), Int(b)) => a.cmp(b),
                (a, b) if a.as_f64().is_some() && b.as_f64().is_some() => a
                    .as_f64()
                    .unwrap()
                    .partial_cmp(&b.as_f64().unwrap())
                    .ok_or_else(|| eval_err("unordered comparison"))?,
                (a, b) => match (as_text(a), as_text(b)) {
                    (Some(s), Some(t)) => s.cmp(t),
                    _ => return Err(eval_err(format!("cannot compare {} with {}", a.kind_name(), b.kind_name()))),
                },
            };
            use std::cmp::Ordering::*;
            Ok(Record::Bool(match op {
                BinOp::Lt => ord == Less,
                BinOp::Le => ord != Greater,
                BinOp::Gt => ord == Greater,
                _ => ord != Less,
            }))
        }
    }
}

/// Evaluates `expr` with `value` bound to the current input and `src.<path>`
/// reading from `source`.
pub fn eval_expr(expr: &Expr, value: &Record, source: &Record) -> Result<Record, TransformError> {
    let mut ev = Evaluator {
        source,
        env: vec![(INPUT_VAR.to_string(), expr_input(value.clone()))],
    };
    ev.eval(expr)
}

/// Evaluates a closed expression (no `value` binding), as used for whole-record
/// pipeline programs.
pub fn eval_closed(expr: &Expr, source: &Record) -> Result<Record, TransformError> {
    Evaluator { source, env: Vec::new() }.eval(expr)
}

// ---------------------------------------------------------------------------
// program execution

/// Checks the incoming record against the source schema.
pub fn conform_source(record: &Record, source: &Schema) -> Result<Record, TransformError> {
    source.conform(record).map_err(|e| {
        let kind = if e.missing { ErrorKind::PathError } else { ErrorKind::EvalError };
        TransformError {
            kind,
            detail: format!("source record does not conform: {}", e.detail),
            path: Some(e.path),
        }
    })
}

/// Checks a produced record against the target schema.
pub fn conform_target(record: &Record, target: &Schema) -> Result<Record, TransformError> {
    target.conform(record).map_err(|e| TransformError {
        kind: ErrorKind::EvalError,
        detail: format!("output does not conform to target schema: {}", e.detail),
        path: Some(e.path),
    })
}

/// An integer that SCALE/SHIFT pushed out of range cannot be stored back
/// into an integer field.
fn integer_stage(v: Record, target: &Schema, t: &FieldPath, name: &str) -> Result<Record, TransformError> {
    let int_field = matches!(target.field_at(t), Some(f) if f.ty == FieldType::Integer);
    if int_field && matches!(v, Record::Float(_)) {
        return Err(eval_err(format!("integer overflow in {name}")).at(t));
    }
    Ok(v)
}

/// Runs a program over one record. The program is expected to have passed
/// validation against the same schema pair.
pub fn transform(program: &StlProgram, record: &Record, source: &Schema, target: &Schema) -> Result<Record, TransformError> {
    if !program.header.same_entity {
        return Err(TransformError::new(
            ErrorKind::Abort,
            format!("schemas describe different entities: {}", program.header.reason),
        ));
    }
    let input = conform_source(record, source)?;
    let mut out = Record::Object(BTreeMap::new());
    let mut funcs: HashMap<&str, &Expr> = HashMap::new();
    let read = |p: &FieldPath| input.get_path(p).cloned().unwrap_or(Record::Null);

    for cmd in &program.commands {
        let value = match cmd {
            StlCommand::Copy { source, .. } | StlCommand::Rename { source, .. } => read(source),
            StlCommand::Cast { source, target: t, to } => cast_value(&read(source), to).map_err(|e| e.at(t))?,
            StlCommand::Add { value, .. } => value.clone(),
            StlCommand::Default { target: t, value } => match out.get_path(t) {
                None | Some(Record::Null) => value.clone(),
                Some(_) => continue,
            },
            StlCommand::Delete { .. } => continue,
            StlCommand::Missing { target: t, reason } => {
                let why = if reason.is_empty() { "no mapping exists".to_string() } else { reason.clone() };
                return Err(TransformError::new(ErrorKind::MappingFailure, why).at(t));
            }
            StlCommand::Scale { target: t, factor } => {
                let v = scale_value(out.get_path(t).unwrap_or(&Record::Null), *factor).map_err(|e| e.at(t))?;
                integer_stage(v, target, t, "SCALE")?
            }
            StlCommand::Shift { target: t, offset } => {
                let v = shift_value(out.get_path(t).unwrap_or(&Record::Null), *offset).map_err(|e| e.at(t))?;
                integer_stage(v, target, t, "SHIFT")?
            }
            StlCommand::Link { target: t, table, fallback } => {
                link_value(out.get_path(t).unwrap_or(&Record::Null), table, fallback.as_deref()).map_err(|e| e.at(t))?
            }
            StlCommand::Gen { name, expr } => {
                funcs.insert(name, expr);
                continue;
            }
            StlCommand::Apply { source, target: t, func } => {
                let field = target.field_at(t).ok_or_else(|| {
                    TransformError::new(ErrorKind::PathError, "APPLY target not in target schema").at(t)
                })?;
                let arg = read(source);
                if arg.is_null() {
                    Record::Null
                } else {
                    let result = match func {
                        FnRef::Named(n) => match funcs.get(n.as_str()) {
                            Some(e) => eval_expr(e, &arg, &input),
                            None => match Builtin::unary_by_name(n) {
                                Some(b) => eval_expr(&Expr::Call(b, vec![Expr::value()]), &arg, &input),
                                None => Err(eval_err(format!("unknown function `{n}`"))),
                            },
                        },
                        FnRef::Inline(e) => eval_expr(e, &arg, &input),
                    }
                    .map_err(|e| e.at(t))?;
                    if result.is_null() {
                        if !field.optional {
                            return Err(eval_err("APPLY produced null for a required field").at(t));
                        }
                        Record::Null
                    } else {
                        cast_value(&result, &field.ty).map_err(|e| e.at(t))?
                    }
                }
            }
        };
        let t = cmd.target().expect("producers and stages have targets");
        out.set_path(t, value)
            .map_err(|p| TransformError::new(ErrorKind::PathError, "cannot write below a non-object value").at(&p))?;
    }
    conform_target(&out, target)
}
