//! `SELECT` view over a flat source table.

use std::collections::{BTreeSet, HashMap};

use super::{Backend, Untranslatable};
use crate::path::FieldPath;
use crate::record::{format_float, Record};
use crate::schema::{FieldType, Schema};
use crate::stl::expr::{BinOp, Builtin, Expr, UnaryOp};
use crate::stl::{FnRef, StlCommand, StlProgram};

pub struct SqlView;

const RESERVED: &[&str] = &[
    "all", "and", "as", "between", "by", "case", "cast", "check", "column", "create", "cross", "current", "default",
    "delete", "distinct", "drop", "else", "end", "exists", "false", "from", "full", "group", "having", "in",
    "inner", "insert", "into", "is", "join", "left", "like", "limit", "not", "null", "on", "or", "order", "outer",
    "primary", "references", "right", "select", "table", "then", "to", "true", "union", "unique", "update", "user",
    "using", "value", "values", "when", "where", "with",
];

fn ident(name: &str) -> String {
    let plain = name.chars().next().is_some_and(|c| c.is_ascii_lowercase() || c == '_')
        && name.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
        && !RESERVED.contains(&name);
    if plain {
        name.to_string()
    } else {
        format!("\"{}\"", name.replace('"', "\"\""))
    }
}

fn string_lit(s: &str) -> String {
    format!("'{}'", s.replace('\'', "''"))
}

fn number(x: f64) -> String {
    format_float(x)
}

fn literal(r: &Record) -> Option<String> {
    Some(match r {
        Record::Null => "NULL".into(),
        Record::Bool(b) => if *b { "TRUE" } else { "FALSE" }.into(),
        Record::Int(i) => i.to_string(),
        Record::Float(x) => number(*x),
        Record::Str(s) | Record::Enum(s) => string_lit(s),
        Record::Object(_) => return None,
    })
}

fn sql_type(ty: &FieldType) -> Option<&'static str> {
    match ty {
        FieldType::Integer => Some("BIGINT"),
        FieldType::Float => Some("DOUBLE PRECISION"),
        FieldType::String => Some("VARCHAR"),
        FieldType::Boolean => Some("BOOLEAN"),
        _ => None,
    }
}

/// SQL text plus its binding strength, so operands get parentheses only
/// when needed: 1 = OR, 2 = AND, 3 = NOT, 4 = comparison, 5 = additive,
/// 6 = multiplicative, 8 = atom.
#[derive(Clone)]
struct Sql(String, u8);

impl Sql {
    fn atom(s: String) -> Sql {
        Sql(s, 8)
    }

    fn at_least(&self, prec: u8) -> String {
        if self.1 < prec {
            format!("({})", self.0)
        } else {
            self.0.clone()
        }
    }
}

fn binop(op: &str, prec: u8, a: &Sql, b: &Sql) -> Sql {
    Sql(format!("{} {op} {}", a.at_least(prec), b.at_least(prec + 1)), prec)
}

fn scale(cur: &Sql, factor: f64) -> Sql {
    binop("*", 6, cur, &Sql::atom(number(factor)))
}

fn shift(cur: &Sql, offset: f64) -> Sql {
    if offset < 0.0 {
        binop("-", 5, cur, &Sql::atom(number(-offset)))
    } else {
        binop("+", 5, cur, &Sql::atom(number(offset)))
    }
}

struct ExprCtx<'a> {
    input: &'a Sql,
    source: &'a Schema,
}

impl ExprCtx<'_> {
    fn tr(&self, e: &Expr) -> Result<Sql, String> {
        Ok(match e {
            Expr::Var(_) => self.input.clone(),
            Expr::Src(p) => {
                if self.source.field_at(p).is_none() || p.segments().len() > 1 {
                    return Err(format!("`src.{p}` is not a column"));
                }
                Sql::atom(ident(p.leaf()))
            }
            Expr::Lit(r) => Sql::atom(literal(r).ok_or("object literal")?),
            Expr::Unary(UnaryOp::Neg, a) => Sql(format!("-{}", self.tr(a)?.at_least(7)), 7),
            Expr::Unary(UnaryOp::Not, a) => Sql(format!("NOT {}", self.tr(a)?.at_least(3)), 3),
            Expr::Binary(op, a, b) => {
                let (x, y) = (self.tr(a)?, self.tr(b)?);
                match op {
                    BinOp::Or => binop("OR", 1, &x, &y),
                    BinOp::And => binop("AND", 2, &x, &y),
                    BinOp::Add => binop("+", 5, &x, &y),
                    BinOp::Sub => binop("-", 5, &x, &y),
                    BinOp::Mul => binop("*", 6, &x, &y),
                    BinOp::Div => {
                        let num = Sql::atom(format!("CAST({} AS DOUBLE PRECISION)", x.0));
                        binop("/", 6, &num, &y)
                    }
                    BinOp::Rem => Sql::atom(format!("MOD({}, {})", x.0, y.0)),
                    BinOp::Eq => Sql(format!("{} = {}", x.at_least(5), y.at_least(5)), 4),
                    BinOp::Ne => Sql(format!("{} <> {}", x.at_least(5), y.at_least(5)), 4),
                    cmp => Sql(format!("{} {} {}", x.at_least(5), cmp.symbol(), y.at_least(5)), 4),
                }
            }
            Expr::If(c, a, b) => Sql::atom(format!(
                "CASE WHEN {} THEN {} ELSE {} END",
                self.tr(c)?.0,
                self.tr(a)?.0,
                self.tr(b)?.0
            )),
            Expr::Call(f, args) => {
                let a = args.iter().map(|x| self.tr(x)).collect::<Result<Vec<_>, _>>()?;
                let plain = |name: &str| Sql::atom(format!("{name}({})", a.iter().map(|s| s.0.as_str()).collect::<Vec<_>>().join(", ")));
                match f {
                    Builtin::Round => Sql::atom(format!("CAST(ROUND({}) AS BIGINT)", a[0].0)),
                    Builtin::Floor => Sql::atom(format!("CAST(FLOOR({}) AS BIGINT)", a[0].0)),
                    Builtin::Ceil => Sql::atom(format!("CAST(CEIL({}) AS BIGINT)", a[0].0)),
                    Builtin::Abs => plain("ABS"),
                    Builtin::Min => plain("LEAST"),
                    Builtin::Max => plain("GREATEST"),
                    Builtin::Lower => plain("LOWER"),
                    Builtin::Upper => plain("UPPER"),
                    Builtin::Concat => Sql(a.iter().map(|s| s.at_least(6)).collect::<Vec<_>>().join(" || "), 5),
                    Builtin::Substr => Sql::atom(format!(
                        "SUBSTRING({} FROM {} FOR {})",
                        a[0].0,
                        binop("+", 5, &a[1], &Sql::atom("1".into())).0,
                        a[2].0
                    )),
                    Builtin::ToString => Sql::atom(format!("CAST({} AS VARCHAR)", a[0].0)),
                    other => return Err(format!("builtin `{}` has no SQL equivalent", other.name())),
                }
            }
            Expr::Let(..) | Expr::Record(_) => return Err("pipeline-only expression".into()),
        })
    }
}

impl Backend for SqlView {
    fn name(&self) -> &'static str {
        "sql-view"
    }

    fn media_type(&self) -> &'static str {
        "text/x-sql"
    }

    fn emit(&self, program: &StlProgram, source: &Schema, target: &Schema) -> Result<String, Vec<Untranslatable>> {
        let mut problems = Vec::new();
        let whole = |reason: &str| Untranslatable { command: None, reason: reason.into() };
        if program.is_abort() {
            return Err(vec![whole("abort program: the schemas describe different entities")]);
        }
        if source.fields.iter().chain(&target.fields).any(|f| matches!(f.ty, FieldType::Object(_))) {
            return Err(vec![whole("sql-view needs flat schemas")]);
        }

        let mut cols: HashMap<FieldPath, Sql> = HashMap::new();
        let mut domains: HashMap<FieldPath, Option<BTreeSet<String>>> = HashMap::new();
        let mut gens: HashMap<&str, &Expr> = HashMap::new();

        for (i, cmd) in program.commands.iter().enumerate() {
            let mut bad = |reason: String| problems.push(Untranslatable { command: Some(i), reason });
            let Some(t) = cmd.target() else {
                if let StlCommand::Gen { name, expr } = cmd {
                    gens.insert(name, expr);
                }
                continue;
            };
            let current = cols.get(t).cloned().unwrap_or_else(|| Sql::atom("NULL".into()));
            let col = |p: &FieldPath| Sql::atom(ident(p.leaf()));
            let next = match cmd {
                StlCommand::Copy { source: s, .. } | StlCommand::Rename { source: s, .. } => {
                    let variants = source.field_at(s).and_then(|f| f.ty.variants()).map(|v| v.iter().cloned().collect());
                    domains.insert(t.clone(), variants);
                    col(s)
                }
                StlCommand::Cast { source: s, to, .. } => match sql_type(to) {
                    Some(ty) => Sql::atom(format!("CAST({} AS {ty})", col(s).0)),
                    None => {
                        bad(format!("CAST to {to} has no SQL equivalent"));
                        continue;
                    }
                },
                StlCommand::Add { value, .. } => match literal(value) {
                    Some(l) => {
                        domains.insert(t.clone(), None);
                        Sql::atom(l)
                    }
                    None => {
                        bad("object literal".into());
                        continue;
                    }
                },
                StlCommand::Default { value, .. } => {
                    let Some(l) = literal(value) else {
                        bad("object literal".into());
                        continue;
                    };
                    if cols.contains_key(t) {
                        Sql::atom(format!("COALESCE({}, {l})", current.0))
                    } else {
                        Sql::atom(l)
                    }
                }
                StlCommand::Missing { .. } => {
                    bad(format!("MISSING target `{t}` cannot be deployed"));
                    continue;
                }
                StlCommand::Scale { factor, .. } => scale(&current, *factor),
                StlCommand::Shift { offset, .. } => shift(&current, *offset),
                StlCommand::Link { table, fallback, .. } => {
                    if fallback.is_none() {
                        match domains.get(t) {
                            Some(Some(domain)) => {
                                let uncovered: Vec<_> = domain.iter().filter(|v| !table.iter().any(|(k, _)| k == *v)).collect();
                                if !uncovered.is_empty() {
                                    bad(format!("LINK without fallback leaves {uncovered:?} unmapped"));
                                    continue;
                                }
                            }
                            _ => {
                                bad("LINK without fallback over an unknown symbol set".into());
                                continue;
                            }
                        }
                    }
                    let mut s = format!("CASE {}", current.0);
                    for (k, v) in table {
                        s.push_str(&format!(" WHEN {} THEN {}", string_lit(k), string_lit(v)));
                    }
                    if let Some(fb) = fallback {
                        s.push_str(&format!(" ELSE {}", string_lit(fb)));
                    }
                    s.push_str(" END");
                    let mut next: BTreeSet<String> = table.iter().map(|(_, v)| v.clone()).collect();
                    next.extend(fallback.iter().cloned());
                    domains.insert(t.clone(), Some(next));
                    Sql::atom(s)
                }
                StlCommand::Apply { source: s, func, .. } => {
                    let body = match func {
                        FnRef::Named(n) => match (gens.get(n.as_str()), Builtin::unary_by_name(n)) {
                            (Some(e), _) => (*e).clone(),
                            (None, Some(b)) => Expr::call(b, vec![Expr::value()]),
                            (None, None) => {
                                bad(format!("unknown function `{n}`"));
                                continue;
                            }
                        },
                        FnRef::Inline(e) => e.clone(),
                    };
                    let input = col(s);
                    match (ExprCtx { input: &input, source }).tr(&body) {
                        Ok(sql) => {
                            domains.insert(t.clone(), None);
                            match target.field_at(t).and_then(|f| sql_type(&f.ty)) {
                                Some(ty) => Sql::atom(format!("CAST({} AS {ty})", sql.0)),
                                None => sql,
                            }
                        }
                        Err(why) => {
                            bad(format!("APPLY: {why}"));
                            continue;
                        }
                    }
                }
                StlCommand::Delete { .. } | StlCommand::Gen { .. } => unreachable!("no target"),
            };
            cols.insert(t.clone(), next);
        }
        if !problems.is_empty() {
            return Err(problems);
        }

        let mut out = format!(
            "-- sql-view: {} -> {}\n\
             -- dialect: ANSI subset (SELECT, CASE, CAST, COALESCE, arithmetic); CAST follows the engine's rules\n\
             SELECT\n",
            program.source, program.target
        );
        let lines: Vec<String> = target
            .fields
            .iter()
            .filter_map(|f| {
                let p = FieldPath::single(&f.name).ok()?;
                cols.get(&p).map(|c| format!("  {} AS {}", c.0, ident(&f.name)))
            })
            .collect();
        if lines.is_empty() {
            out.push_str("  NULL AS \"_empty\"\n");
        } else {
            out.push_str(&lines.join(",\n"));
            out.push('\n');
        }
        out.push_str(&format!("FROM {};\n", ident(&source.subject)));
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembler::{compile, CompileError};
    use crate::schema::parse_schema;
    use crate::stl::parse_program;

    fn schemas() -> (Schema, Schema) {
        let src = parse_schema(
            "subject: motion\nversion: 2\nfields:\n  - {name: duration_ms, type: integer, unit: ms}\n  - {name: state, type: enum, variants: [on, off]}\n  - {name: temp_c, type: float}\n",
        )
        .unwrap();
        let tgt = parse_schema(
            "subject: motion\nversion: 1\nfields:\n  - {name: duration_s, type: float, unit: s}\n  - {name: status, type: enum, variants: [active, inactive]}\n  - {name: temp_f, type: float}\n",
        )
        .unwrap();
        (src, tgt)
    }

    fn program(cmds: &str) -> StlProgram {
        parse_program(&format!(
            "source: {{subject: motion, version: 2}}\ntarget: {{subject: motion, version: 1}}\nmatch: {{same_entity: true, reason: r}}\ncommands:\n{cmds}"
        ))
        .unwrap()
    }

    const BASE: &str = "  - rename: {source: duration_ms, target: duration_s}
  - scale: {target: duration_s, factor: 0.001}
  - rename: {source: state, target: status}
  - link: {target: status, table: {on: active, off: inactive}}
";

    #[test]
    fn select_with_arithmetic_case_and_expression() {
        let (s, t) = schemas();
        let p = program(&format!("{BASE}  - apply: {{source: temp_c, target: temp_f, fn: \"value * 1.8 + 32\"}}\n"));
        let art = compile(&p, &s, &t, "sql-view").unwrap();
        assert_eq!(art.media_type, "text/x-sql");
        assert!(art.body.contains("  duration_ms * 0.001 AS duration_s,\n"), "{}", art.body);
        assert!(art.body.contains("CASE state WHEN 'on' THEN 'active' WHEN 'off' THEN 'inactive' END AS status"));
        assert!(art.body.contains("CAST(temp_c * 1.8 + 32 AS DOUBLE PRECISION) AS temp_f"));
        assert!(art.body.ends_with("FROM motion;\n"));
    }

    #[test]
    fn missing_is_a_compile_error() {
        let (s, t) = schemas();
        let p = program(&format!("{BASE}  - missing: {{target: temp_f, reason: unknown}}\n  - delete: {{source: temp_c}}\n"));
        match compile(&p, &s, &t, "sql-view") {
            Err(CompileError::Untranslatable { problems, .. }) => {
                assert_eq!(problems.len(), 1);
                assert_eq!(problems[0].command, Some(4));
                assert!(problems[0].reason.contains("temp_f"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn partial_link_without_fallback_is_rejected() {
        let (s, t) = schemas();
        let p = program(
            "  - rename: {source: duration_ms, target: duration_s}\n  - rename: {source: state, target: status}\n  - link: {target: status, table: {on: active}}\n  - copy: {source: temp_c, target: temp_f}\n",
        );
        let err = compile(&p, &s, &t, "sql-view").unwrap_err();
        assert!(err.to_string().contains("command #2"), "{err}");
    }

    #[test]
    fn precedence_and_quoting() {
        let a = Sql::atom("x".into());
        assert_eq!(scale(&shift(&a, 3.0), 2.0).0, "(x + 3.0) * 2.0");
        assert_eq!(shift(&scale(&a, 2.0), -3.0).0, "x * 2.0 - 3.0");
        assert_eq!(ident("value"), "\"value\"");
        assert_eq!(ident("Temp"), "\"Temp\"");
        assert_eq!(ident("temp_c"), "temp_c");
    }
}
