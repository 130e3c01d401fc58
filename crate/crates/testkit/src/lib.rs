//! Proptest strategies shared by the property suites.

use std::collections::{BTreeMap, BTreeSet};

use gse_core::path::FieldPath;
use gse_core::record::Record;
use gse_core::schema::{Field, FieldType, Schema};
use gse_core::stl::expr::{BinOp, Builtin, Expr, UnaryOp};
use gse_core::stl::{FnRef, MatchHeader, StlCommand, StlProgram};
use proptest::prelude::*;
use proptest::sample::select;

const RESERVED: [&str; 11] = ["and", "or", "not", "if", "let", "in", "true", "false", "null", "src", "value"];

pub fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,7}".prop_filter("reserved word", |s| {
        !RESERVED.contains(&s.as_str()) && Builtin::unary_by_name(s).is_none()
    })
}

fn text() -> impl Strategy<Value = String> {
    "[ -~]{0,12}"
}

pub fn finite_float() -> impl Strategy<Value = f64> {
    prop_oneof![
        -1.0e6..1.0e6f64,
        Just(0.0),
        Just(0.5),
        Just(-2.25),
        (-1000i64..1000).prop_map(|i| i as f64),
        prop::num::f64::NORMAL.prop_filter("bounded", |x| x.abs() < 1e300),
    ]
}

fn variants() -> impl Strategy<Value = Vec<String>> {
    prop::collection::btree_set(ident(), 1..4).prop_map(|s| s.into_iter().collect())
}

fn scalar_type() -> impl Strategy<Value = FieldType> {
    prop_oneof![
        Just(FieldType::String),
        Just(FieldType::Integer),
        Just(FieldType::Float),
        Just(FieldType::Boolean),
        variants().prop_map(FieldType::Enum),
    ]
}

/// A value conforming to a scalar type, as stored in a schema default.
pub fn scalar_value(ty: &FieldType) -> BoxedStrategy<Record> {
    match ty {
        FieldType::String => text().prop_map(Record::Str).boxed(),
        FieldType::Integer => prop_oneof![-1000i64..1000, any::<i64>()].prop_map(Record::Int).boxed(),
        FieldType::Float => finite_float().prop_map(Record::Float).boxed(),
        FieldType::Boolean => any::<bool>().prop_map(Record::Bool).boxed(),
        FieldType::Enum(v) => select(v.clone()).prop_map(Record::Enum).boxed(),
        FieldType::Object(_) => Just(Record::Object(BTreeMap::new())).boxed(),
    }
}

fn dedupe(fields: Vec<Field>) -> Vec<Field> {
    let mut seen = BTreeSet::new();
    fields.into_iter().filter(|f| seen.insert(f.name.clone())).collect()
}

fn leaf_field() -> impl Strategy<Value = Field> {
    (ident(), scalar_type(), any::<bool>(), prop::option::of(text()), 0u8..4, 0u8..3).prop_flat_map(
        |(name, ty, optional, description, unit_pick, default_pick)| {
            let default = if default_pick == 0 {
                scalar_value(&ty).prop_map(Some).boxed()
            } else {
                Just(None).boxed()
            };
            let unit = match (&ty, unit_pick) {
                (FieldType::Integer | FieldType::Float, 0) => Some("ms"),
                (FieldType::Integer | FieldType::Float, 1) => Some("celsius"),
                _ => None,
            };
            default.prop_map(move |default| Field {
                name: name.clone(),
                ty: ty.clone(),
                unit: unit.map(String::from),
                description: description.clone(),
                optional,
                default,
            })
        },
    )
}

fn field() -> impl Strategy<Value = Field> {
    leaf_field().prop_recursive(2, 12, 4, |inner| {
        (ident(), prop::collection::vec(inner, 0..4), any::<bool>()).prop_map(|(name, children, optional)| Field {
            name,
            ty: FieldType::Object(dedupe(children)),
            unit: None,
            description: None,
            optional,
            default: None,
        })
    })
}

pub fn schema() -> impl Strategy<Value = Schema> {
    (ident(), 1u32..6, prop::option::of(text()), prop::collection::vec(field(), 0..7)).prop_map(
        |(subject, version, doc, fields)| Schema {
            subject,
            version,
            doc,
            fields: dedupe(fields),
        },
    )
}

// ---------------------------------------------------------------------------
// schema pairs for planning

#[derive(Debug, Clone)]
enum Edit {
    Keep,
    Rename,
    Drop,
    Retype,
    Reunit,
    Loosen,
}

fn edit() -> impl Strategy<Value = Edit> {
    prop_oneof![
        4 => Just(Edit::Keep),
        2 => Just(Edit::Rename),
        1 => Just(Edit::Drop),
        1 => Just(Edit::Retype),
        1 => Just(Edit::Reunit),
        1 => Just(Edit::Loosen),
    ]
}

fn evolve(f: &Field, e: &Edit) -> Option<Field> {
    let mut g = f.clone();
    match e {
        Edit::Keep => {}
        Edit::Rename => g.name = format!("{}_next", f.name),
        Edit::Drop => return None,
        Edit::Retype => {
            g.ty = match &f.ty {
                FieldType::Integer => FieldType::Float,
                FieldType::Float => FieldType::String,
                FieldType::Boolean => FieldType::String,
                other => other.clone(),
            };
            g.default = None;
        }
        Edit::Reunit => {
            g.unit = match f.unit.as_deref() {
                Some("ms") => Some("s".into()),
                Some("celsius") => Some("fahrenheit".into()),
                other => other.map(String::from),
            };
            if g.unit != f.unit && g.ty == FieldType::Integer {
                g.ty = FieldType::Float;
            }
            g.default = None;
        }
        Edit::Loosen => g.optional = !f.optional,
    }
    Some(g)
}

/// A source schema and a target derived from it by renames, drops, type and
/// unit changes, optionality flips and fresh fields.
pub fn schema_pair() -> impl Strategy<Value = (Schema, Schema)> {
    schema().prop_flat_map(|source| {
        let n = source.fields.len();
        (
            Just(source),
            prop::collection::vec(edit(), n),
            prop::collection::vec(field(), 0..3),
            1u32..6,
        )
            .prop_map(|(source, edits, extra, version)| {
                let mut fields: Vec<Field> =
                    source.fields.iter().zip(&edits).filter_map(|(f, e)| evolve(f, e)).collect();
                fields.extend(extra);
                let target = Schema {
                    subject: source.subject.clone(),
                    version,
                    doc: source.doc.clone(),
                    fields: dedupe(fields),
                };
                (source, target)
            })
    })
}

// ---------------------------------------------------------------------------
// records

fn value_of(ty: &FieldType) -> BoxedStrategy<Record> {
    match ty {
        FieldType::Integer => prop_oneof![
            8 => -100_000i64..100_000,
            1 => Just(i64::MAX),
            1 => Just(i64::MIN),
        ]
        .prop_map(Record::Int)
        .boxed(),
        FieldType::Float => prop_oneof![
            6 => -1.0e4..1.0e4f64,
            2 => (-100i64..100).prop_map(|i| i as f64),
            1 => Just(1.0e308),
        ]
        .prop_map(Record::Float)
        .boxed(),
        FieldType::Enum(v) => select(v.clone()).prop_map(Record::Str).boxed(),
        FieldType::Object(children) => object_of(children),
        other => scalar_value(other),
    }
}

fn object_of(fields: &[Field]) -> BoxedStrategy<Record> {
    let parts: Vec<BoxedStrategy<Option<(String, Record)>>> = fields
        .iter()
        .map(|f| {
            let name = f.name.clone();
            let v = value_of(&f.ty);
            if f.optional {
                prop_oneof![
                    3 => v.prop_map(Some),
                    1 => Just(None),
                    1 => Just(Some(Record::Null)),
                ]
                .prop_map(move |o| o.map(|r| (name.clone(), r)))
                .boxed()
            } else {
                v.prop_map(move |r| Some((name.clone(), r))).boxed()
            }
        })
        .collect();
    parts
        .prop_map(|kv| Record::Object(kv.into_iter().flatten().collect()))
        .boxed()
}

/// Records that conform to `schema`, including extreme numbers.
pub fn record(schema: &Schema) -> BoxedStrategy<Record> {
    object_of(&schema.fields)
}

// ---------------------------------------------------------------------------
// programs

pub fn path() -> impl Strategy<Value = FieldPath> {
    prop::collection::vec(ident(), 1..3).prop_map(|s| FieldPath::new(s).expect("identifiers"))
}

fn literal() -> impl Strategy<Value = Record> {
    prop_oneof![
        (-1_000_000i64..1_000_000).prop_map(Record::Int),
        finite_float().prop_map(Record::Float),
        "[a-zA-Z0-9 _]{0,8}".prop_map(Record::Str),
        any::<bool>().prop_map(Record::Bool),
    ]
}

pub fn expr() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        Just(Expr::value()),
        path().prop_map(Expr::Src),
        literal().prop_map(Expr::Lit),
    ];
    leaf.prop_recursive(4, 24, 3, |inner| {
        let unary = select(vec![Builtin::Round, Builtin::Floor, Builtin::Ceil, Builtin::Abs, Builtin::Lower, Builtin::Upper, Builtin::ToString, Builtin::ToNumber, Builtin::ToBoolean]);
        let ops = select(vec![
            BinOp::Add, BinOp::Sub, BinOp::Mul, BinOp::Div, BinOp::Rem, BinOp::Eq, BinOp::Ne, BinOp::Lt, BinOp::Le,
            BinOp::Gt, BinOp::Ge, BinOp::And, BinOp::Or,
        ]);
        prop_oneof![
            inner.clone().prop_filter_map("negated literal", |e| match e {
                Expr::Lit(_) => None,
                e => Some(Expr::Unary(UnaryOp::Neg, Box::new(e))),
            }),
            inner.clone().prop_map(|e| Expr::Unary(UnaryOp::Not, Box::new(e))),
            (ops, inner.clone(), inner.clone()).prop_map(|(op, l, r)| Expr::bin(op, l, r)),
            (inner.clone(), inner.clone(), inner.clone())
                .prop_map(|(c, a, b)| Expr::If(Box::new(c), Box::new(a), Box::new(b))),
            (unary, inner.clone()).prop_map(|(b, a)| Expr::call(b, vec![a])),
            (select(vec![Builtin::Min, Builtin::Max, Builtin::Concat]), inner.clone(), inner.clone())
                .prop_map(|(b, x, y)| Expr::call(b, vec![x, y])),
            (inner.clone(), inner.clone(), inner).prop_map(|(s, a, b)| Expr::call(Builtin::Substr, vec![s, a, b])),
        ]
    })
}

fn cast_type() -> impl Strategy<Value = FieldType> {
    scalar_type()
}

fn command() -> impl Strategy<Value = StlCommand> {
    prop_oneof![
        (path(), path()).prop_map(|(source, target)| StlCommand::Copy { source, target }),
        (path(), path()).prop_map(|(source, target)| StlCommand::Rename { source, target }),
        (path(), literal()).prop_map(|(target, value)| StlCommand::Add { target, value }),
        (path(), literal()).prop_map(|(target, value)| StlCommand::Default { target, value }),
        (path(), path(), cast_type()).prop_map(|(source, target, to)| StlCommand::Cast { source, target, to }),
        path().prop_map(|source| StlCommand::Delete { source }),
        (path(), text()).prop_map(|(target, reason)| StlCommand::Missing { target, reason }),
        (path(), finite_float().prop_filter("nonzero", |x| *x != 0.0))
            .prop_map(|(target, factor)| StlCommand::Scale { target, factor }),
        (path(), finite_float()).prop_map(|(target, offset)| StlCommand::Shift { target, offset }),
        (path(), prop::collection::btree_map(ident(), ident(), 1..4), prop::option::of(ident())).prop_map(
            |(target, table, fallback)| StlCommand::Link {
                target,
                table: table.into_iter().collect(),
                fallback,
            }
        ),
        (ident(), expr()).prop_map(|(name, expr)| StlCommand::Gen { name, expr }),
        (path(), path(), prop_oneof![ident().prop_map(FnRef::Named), expr().prop_map(FnRef::Inline)])
            .prop_map(|(source, target, func)| StlCommand::Apply { source, target, func }),
    ]
}

/// Structurally valid programs, not necessarily valid against any schema.
pub fn program() -> impl Strategy<Value = StlProgram> {
    (schema(), schema(), any::<bool>(), text(), prop::collection::vec(command(), 0..8))
        .prop_map(|(s, t, same_entity, reason, commands)| StlProgram {
            source: s.reference(),
            target: t.reference(),
            header: MatchHeader { same_entity, reason },
            commands,
        })
        .prop_filter("structural invariants", |p| p.check().is_ok())
}
