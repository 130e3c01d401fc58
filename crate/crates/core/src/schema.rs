//! Schemas, their document format, fingerprints and structural compatibility.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::path::{is_identifier, FieldPath};
use crate::record::Record;

#[derive(Debug, Error, PartialEq)]
pub enum SchemaError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("invalid field name `{0}`")]
    InvalidName(String),
    #[error("duplicate field name `{0}`")]
    DuplicateField(String),
    #[error("unknown type kind `{kind}` for field `{field}`")]
    UnknownType { field: String, kind: String },
    #[error("field `{field}`: {detail}")]
    InvalidType { field: String, detail: String },
    #[error("default of field `{field}` does not match its type: {detail}")]
    DefaultMismatch { field: String, detail: String },
    #[error("version must be >= 1")]
    InvalidVersion,
}

/// Kind tag of a field type, without payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TypeKind {
    String,
    Integer,
    Float,
    Boolean,
    Enum,
    Object,
}

impl TypeKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TypeKind::String => "string",
            TypeKind::Integer => "integer",
            TypeKind::Float => "float",
            TypeKind::Boolean => "boolean",
            TypeKind::Enum => "enum",
            TypeKind::Object => "object",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, TypeKind::Integer | TypeKind::Float)
    }
}

impl fmt::Display for TypeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TypeKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "string" => TypeKind::String,
            "integer" => TypeKind::Integer,
            "float" => TypeKind::Float,
            "boolean" => TypeKind::Boolean,
            "enum" => TypeKind::Enum,
            "object" => TypeKind::Object,
            other => return Err(other.to_string()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum FieldType {
    String,
    Integer,
    Float,
    Boolean,
    Enum(Vec<String>),
    Object(Vec<Field>),
}

impl FieldType {
    pub fn kind(&self) -> TypeKind {
        match self {
            FieldType::String => TypeKind::String,
            FieldType::Integer => TypeKind::Integer,
            FieldType::Float => TypeKind::Float,
            FieldType::Boolean => TypeKind::Boolean,
            FieldType::Enum(_) => TypeKind::Enum,
            FieldType::Object(_) => TypeKind::Object,
        }
    }

    pub fn variants(&self) -> Option<&[String]> {
        match self {
            FieldType::Enum(v) => Some(v),
            _ => None,
        }
    }
}

impl fmt::Display for FieldType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FieldType::Enum(v) => write!(f, "enum({})", v.join(",")),
            other => f.write_str(other.kind().as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    pub name: String,
    pub ty: FieldType,
    pub unit: Option<String>,
    pub description: Option<String>,
    pub optional: bool,
    pub default: Option<Record>,
}

impl Field {
    pub fn new(name: impl Into<String>, ty: FieldType) -> Field {
        Field {
            name: name.into(),
            ty,
            unit: None,
            description: None,
            optional: false,
            default: None,
        }
    }

    pub fn with_unit(mut self, unit: &str) -> Field {
        self.unit = Some(unit.to_string());
        self
    }

    pub fn optional(mut self) -> Field {
        self.optional = true;
        self
    }

    pub fn with_default(mut self, value: Record) -> Field {
        self.default = Some(value);
        self
    }

    /// True when old data lacking this field can still be read.
    pub fn is_omittable(&self) -> bool {
        self.optional || self.default.is_some()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Schema {
    pub subject: String,
    pub version: u32,
    pub doc: Option<String>,
    pub fields: Vec<Field>,
}

/// Registry-assigned id plus content fingerprint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemaId {
    pub id: u32,
    pub fingerprint: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "UPPERCASE")]
pub enum CompatibilityMode {
    None,
    #[default]
    Backward,
    Forward,
    Full,
    Semantic,
}

impl fmt::Display for CompatibilityMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CompatibilityMode::None => "NONE",
            CompatibilityMode::Backward => "BACKWARD",
            CompatibilityMode::Forward => "FORWARD",
            CompatibilityMode::Full => "FULL",
            CompatibilityMode::Semantic => "SEMANTIC",
        })
    }
}

impl FromStr for CompatibilityMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s.to_ascii_uppercase().as_str() {
            "NONE" => CompatibilityMode::None,
            "BACKWARD" => CompatibilityMode::Backward,
            "FORWARD" => CompatibilityMode::Forward,
            "FULL" => CompatibilityMode::Full,
            "SEMANTIC" => CompatibilityMode::Semantic,
            _ => return Err(format!("unknown compatibility mode `{s}`")),
        })
    }
}

// ---------------------------------------------------------------------------
// document format

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    subject: String,
    version: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    doc: Option<String>,
    #[serde(default)]
    fields: Vec<RawField>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawField {
    name: String,
    #[serde(rename = "type")]
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    unit: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    description: Option<String>,
    #[serde(default, skip_serializing_if = "is_false")]
    optional: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    variants: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    fields: Option<Vec<RawField>>,
}

fn is_false(b: &bool) -> bool {
    !*b
}

fn field_from_raw(raw: RawField) -> Result<Field, SchemaError> {
    if !is_identifier(&raw.name) {
        return Err(SchemaError::InvalidName(raw.name));
    }
    let kind: TypeKind = raw.kind.parse().map_err(|kind| SchemaError::UnknownType {
        field: raw.name.clone(),
        kind,
    })?;
    let invalid = |detail: &str| SchemaError::InvalidType {
        field: raw.name.clone(),
        detail: detail.to_string(),
    };
    if kind != TypeKind::Enum && raw.variants.is_some() {
        return Err(invalid("`variants` is only allowed on enum fields"));
    }
    if kind != TypeKind::Object && raw.fields.is_some() {
        return Err(invalid("`fields` is only allowed on object fields"));
    }
    let ty = match kind {
        TypeKind::String => FieldType::String,
        TypeKind::Integer => FieldType::Integer,
        TypeKind::Float => FieldType::Float,
        TypeKind::Boolean => FieldType::Boolean,
        TypeKind::Enum => {
            let variants = raw.variants.ok_or_else(|| invalid("enum requires `variants`"))?;
            FieldType::Enum(variants)
        }
        TypeKind::Object => {
            let fields = raw.fields.ok_or_else(|| invalid("object requires `fields`"))?;
            FieldType::Object(fields.into_iter().map(field_from_raw).collect::<Result<_, _>>()?)
        }
    };
    let default = match raw.default {
        None | Some(Value::Null) => None,
        Some(v) => Some(Record::from_json(&v).map_err(|e| SchemaError::DefaultMismatch {
            field: raw.name.clone(),
            detail: e.to_string(),
        })?),
    };
    let mut field = Field {
        name: raw.name,
        ty,
        unit: raw.unit,
        description: raw.description,
        optional: raw.optional,
        default: None,
    };
    if let Some(d) = default {
        let typed = conform_value(&d, &field.ty, false, &field.name).map_err(|e| {
            SchemaError::DefaultMismatch {
                field: field.name.clone(),
                detail: e.detail,
            }
        })?;
        field.default = Some(typed);
    }
    Ok(field)
}

fn field_to_raw(field: &Field) -> RawField {
    let (variants, fields) = match &field.ty {
        FieldType::Enum(v) => (Some(v.clone()), None),
        FieldType::Object(f) => (None, Some(f.iter().map(field_to_raw).collect())),
        _ => (None, None),
    };
    RawField {
        name: field.name.clone(),
        kind: field.ty.kind().as_str().to_string(),
        unit: field.unit.clone(),
        description: field.description.clone(),
        optional: field.optional,
        default: field.default.as_ref().map(Record::to_json),
        variants,
        fields,
    }
}

fn check_fields(fields: &[Field]) -> Result<(), SchemaError> {
    let mut seen = HashSet::new();
    for f in fields {
        if !seen.insert(f.name.as_str()) {
            return Err(SchemaError::DuplicateField(f.name.clone()));
        }
        match &f.ty {
            FieldType::Enum(variants) => {
                if variants.is_empty() {
                    return Err(SchemaError::InvalidType {
                        field: f.name.clone(),
                        detail: "enum variants must be non-empty".into(),
                    });
                }
                let mut vs = HashSet::new();
                if let Some(dup) = variants.iter().find(|v| !vs.insert(v.as_str())) {
                    return Err(SchemaError::InvalidType {
                        field: f.name.clone(),
                        detail: format!("duplicate enum variant `{dup}`"),
                    });
                }
            }
            FieldType::Object(children) => check_fields(children)?,
            _ => {}
        }
    }
    Ok(())
}

impl Schema {
    /// Checks every structural invariant; constructors in this module call it.
    pub fn validate(&self) -> Result<(), SchemaError> {
        if self.version < 1 {
            return Err(SchemaError::InvalidVersion);
        }
        check_fields(&self.fields)?;
        for f in &self.fields {
            check_defaults(f)?;
        }
        Ok(())
    }

    pub fn field(&self, name: &str) -> Option<&Field> {
        self.fields.iter().find(|f| f.name == name)
    }

    /// Looks up a possibly nested field.
    pub fn field_at(&self, path: &FieldPath) -> Option<&Field> {
        let mut fields = &self.fields;
        let mut found = None;
        for seg in path.segments() {
            let f = fields.iter().find(|f| &f.name == seg)?;
            found = Some(f);
            fields = match &f.ty {
                FieldType::Object(children) => children,
                _ => &EMPTY,
            };
        }
        found
    }

    /// True when any field along `path` is optional, i.e. the value can be absent.
    pub fn path_nullable(&self, path: &FieldPath) -> bool {
        let mut fields = &self.fields;
        for seg in path.segments() {
            let Some(f) = fields.iter().find(|f| &f.name == seg) else {
                return true;
            };
            if f.optional {
                return true;
            }
            fields = match &f.ty {
                FieldType::Object(children) => children,
                _ => &EMPTY,
            };
        }
        false
    }

    /// All fields in declaration order, depth first, with their paths.
    pub fn walk(&self) -> Vec<(FieldPath, &Field)> {
        fn go<'a>(prefix: Option<&FieldPath>, fields: &'a [Field], out: &mut Vec<(FieldPath, &'a Field)>) {
            for f in fields {
                let path = match prefix {
                    Some(p) => p.child(&f.name),
                    None => FieldPath::single(&f.name).expect("validated name"),
                };
                out.push((path.clone(), f));
                if let FieldType::Object(children) = &f.ty {
                    go(Some(&path), children, out);
                }
            }
        }
        let mut out = Vec::new();
        go(None, &self.fields, &mut out);
        out
    }

    /// Leaf (non-object) fields with their paths.
    pub fn leaves(&self) -> Vec<(FieldPath, &Field)> {
        self.walk()
            .into_iter()
            .filter(|(_, f)| f.ty.kind() != TypeKind::Object)
            .collect()
    }

    /// Checks a record against this schema and returns its typed form:
    /// strings in enum positions become enum symbols, integers in float
    /// positions become floats.
    pub fn conform(&self, record: &Record) -> Result<Record, ConformError> {
        conform_fields(record, &self.fields, "")
    }

    pub fn reference(&self) -> SchemaRef {
        SchemaRef {
            subject: self.subject.clone(),
            version: self.version,
        }
    }
}

static EMPTY: Vec<Field> = Vec::new();

fn check_defaults(f: &Field) -> Result<(), SchemaError> {
    if let Some(d) = &f.default {
        conform_value(d, &f.ty, false, &f.name).map_err(|e| SchemaError::DefaultMismatch {
            field: f.name.clone(),
            detail: e.detail,
        })?;
    }
    if let FieldType::Object(children) = &f.ty {
        children.iter().try_for_each(check_defaults)?;
    }
    Ok(())
}

/// `subject` plus `version`, the way programs refer to schemas.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SchemaRef {
    pub subject: String,
    pub version: u32,
}

impl fmt::Display for SchemaRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} v{}", self.subject, self.version)
    }
}

pub fn parse_schema(text: &str) -> Result<Schema, SchemaError> {
    let raw: RawSchema = serde_yaml::from_str(text).map_err(|e| SchemaError::Syntax(e.to_string()))?;
    if raw.version < 1 || raw.version > u32::MAX as i64 {
        return Err(SchemaError::InvalidVersion);
    }
    let schema = Schema {
        subject: raw.subject,
        version: raw.version as u32,
        doc: raw.doc,
        fields: raw.fields.into_iter().map(field_from_raw).collect::<Result<_, _>>()?,
    };
    schema.validate()?;
    Ok(schema)
}

pub fn serialize_schema(schema: &Schema) -> String {
    let raw = RawSchema {
        subject: schema.subject.clone(),
        version: schema.version as i64,
        doc: schema.doc.clone(),
        fields: schema.fields.iter().map(field_to_raw).collect(),
    };
    serde_yaml::to_string(&raw).expect("schema documents always serialize")
}

/// Canonical byte form: compact JSON, keys sorted within every map, absent
/// optional attributes omitted, field order as declared.
pub fn canonical_form(schema: &Schema) -> String {
    let raw = RawSchema {
        subject: schema.subject.clone(),
        version: schema.version as i64,
        doc: schema.doc.clone(),
        fields: schema.fields.iter().map(field_to_raw).collect(),
    };
    let value = serde_json::to_value(&raw).expect("schema documents always serialize");
    let mut out = String::new();
    write_canonical(&value, &mut out);
    out
}

fn write_canonical(value: &Value, out: &mut String) {
    match value {
        Value::Object(map) => {
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            out.push('{');
            for (i, (k, v)) in sorted.into_iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                out.push_str(&Value::String(k.clone()).to_string());
                out.push(':');
                write_canonical(v, out);
            }
            out.push('}');
        }
        Value::Array(items) => {
            out.push('[');
            for (i, v) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                write_canonical(v, out);
            }
            out.push(']');
        }
        scalar => out.push_str(&scalar.to_string()),
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, b| (h ^ u64::from(*b)).wrapping_mul(PRIME))
}

pub fn fingerprint(schema: &Schema) -> u64 {
    fnv1a64(canonical_form(schema).as_bytes())
}

// ---------------------------------------------------------------------------
// conformance

#[derive(Debug, Clone, PartialEq, Error)]
#[error("at `{path}`: {detail}")]
pub struct ConformError {
    pub path: String,
    pub detail: String,
    pub missing: bool,
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn conform_fields(record: &Record, fields: &[Field], at: &str) -> Result<Record, ConformError> {
    let Record::Object(map) = record else {
        return Err(ConformError {
            path: if at.is_empty() { "<root>".into() } else { at.into() },
            detail: format!("expected object, found {}", record.kind_name()),
            missing: false,
        });
    };
    let mut out = BTreeMap::new();
    for key in map.keys() {
        if !fields.iter().any(|f| &f.name == key) {
            return Err(ConformError {
                path: join(at, key),
                detail: "field not declared in schema".into(),
                missing: false,
            });
        }
    }
    for f in fields {
        let path = join(at, &f.name);
        match map.get(&f.name) {
            Some(v) => {
                out.insert(f.name.clone(), conform_value(v, &f.ty, f.optional, &path)?);
            }
            None if f.optional => {}
            None => {
                return Err(ConformError {
                    path,
                    detail: "required field is absent".into(),
                    missing: true,
                })
            }
        }
    }
    Ok(Record::Object(out))
}

/// Type-checks a single value, returning its typed form.
pub fn conform_value(value: &Record, ty: &FieldType, optional: bool, path: &str) -> Result<Record, ConformError> {
    let mismatch = || ConformError {
        path: path.to_string(),
        detail: format!("expected {}, found {} {}", ty, value.kind_name(), value),
        missing: false,
    };
    Ok(match (value, ty) {
        (Record::Null, _) if optional => Record::Null,
        (Record::Null, _) => {
            return Err(ConformError {
                path: path.to_string(),
                detail: "required field is null".into(),
                missing: true,
            })
        }
        (Record::Str(s), FieldType::String) => Record::Str(s.clone()),
        (Record::Int(i), FieldType::Integer) => Record::Int(*i),
        (Record::Int(i), FieldType::Float) => Record::Float(*i as f64),
        (Record::Float(x), FieldType::Float) => Record::Float(*x),
        (Record::Bool(b), FieldType::Boolean) => Record::Bool(*b),
        (Record::Str(s) | Record::Enum(s), FieldType::Enum(variants)) if variants.contains(s) => {
            Record::Enum(s.clone())
        }
        (Record::Object(_), FieldType::Object(fields)) => conform_fields(value, fields, path)?,
        _ => return Err(mismatch()),
    })
}

// ---------------------------------------------------------------------------
// structural compatibility

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub path: String,
    pub rule: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompatReport {
    pub mode: CompatibilityMode,
    pub violations: Vec<Violation>,
}

impl CompatReport {
    pub fn is_compatible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Classic registry compatibility. `Semantic` is not a structural mode; it
/// reports compatible here and is decided at mapping time.
pub fn check_structural_compat(old: &Schema, new: &Schema, mode: CompatibilityMode) -> CompatReport {
    let mut violations = Vec::new();
    let (backward, forward) = match mode {
        CompatibilityMode::None | CompatibilityMode::Semantic => (false, false),
        CompatibilityMode::Backward => (true, false),
        CompatibilityMode::Forward => (false, true),
        CompatibilityMode::Full => (true, true),
    };
    if backward || forward {
        compare_fields("", &old.fields, &new.fields, backward, forward, &mut violations);
    }
    CompatReport { mode, violations }
}

fn compare_fields(
    at: &str,
    old: &[Field],
    new: &[Field],
    backward: bool,
    forward: bool,
    out: &mut Vec<Violation>,
) {
    let mut push = |path: String, rule: &str, message: String| {
        out.push(Violation {
            path,
            rule: rule.to_string(),
            message,
        })
    };
    let mut nested = Vec::new();
    for nf in new {
        let path = join(at, &nf.name);
        match old.iter().find(|of| of.name == nf.name) {
            None => {
                if backward && !nf.is_omittable() {
                    push(
                        path,
                        "BACKWARD",
                        "added field is required and has no default".into(),
                    );
                }
            }
            Some(of) => {
                if of.ty.kind() != nf.ty.kind() {
                    push(
                        path,
                        "TYPE",
                        format!("type changed from {} to {}", of.ty.kind(), nf.ty.kind()),
                    );
                    continue;
                }
                if let (FieldType::Enum(ov), FieldType::Enum(nv)) = (&of.ty, &nf.ty) {
                    let os: BTreeSet<_> = ov.iter().collect();
                    let ns: BTreeSet<_> = nv.iter().collect();
                    if backward && !os.is_subset(&ns) {
                        push(path.clone(), "BACKWARD", "enum variants removed".into());
                    }
                    if forward && !ns.is_subset(&os) {
                        push(path.clone(), "FORWARD", "enum variants added".into());
                    }
                }
                if backward && of.optional && !nf.is_omittable() {
                    push(
                        path.clone(),
                        "BACKWARD",
                        "field became required without a default".into(),
                    );
                }
                if forward && nf.optional && !of.is_omittable() {
                    push(
                        path.clone(),
                        "FORWARD",
                        "field became optional but old readers require it".into(),
                    );
                }
                if let (FieldType::Object(oc), FieldType::Object(nc)) = (&of.ty, &nf.ty) {
                    nested.push((path, oc, nc));
                }
            }
        }
    }
    for of in old {
        if new.iter().all(|nf| nf.name != of.name) && forward && !of.is_omittable() {
            push(
                join(at, &of.name),
                "FORWARD",
                "deleted field is required by old readers".into(),
            );
        }
    }
    for (path, oc, nc) in nested {
        compare_fields(&path, oc, nc, backward, forward, out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MOTION: &str = r#"
subject: motion
version: 1
fields:
  - name: status
    type: enum
    variants: [active, inactive]
  - name: battery_pct
    type: integer
"#;

    fn schema(fields: Vec<Field>) -> Schema {
        Schema {
            subject: "s".into(),
            version: 1,
            doc: None,
            fields,
        }
    }

    #[test]
    fn parses_fields_in_declared_order() {
        let s = parse_schema(MOTION).unwrap();
        assert_eq!(s.subject, "motion");
        assert_eq!(s.version, 1);
        assert_eq!(s.fields.len(), 2);
        assert_eq!(s.fields[0].name, "status");
        assert_eq!(
            s.fields[0].ty,
            FieldType::Enum(vec!["active".into(), "inactive".into()])
        );
        assert_eq!(s.fields[1].ty, FieldType::Integer);
        assert_eq!(parse_schema(&serialize_schema(&s)).unwrap(), s);
    }

    #[test]
    fn zero_fields_is_legal() {
        let s = parse_schema("subject: x\nversion: 1\nfields: []\n").unwrap();
        assert!(s.fields.is_empty());
    }

    #[test]
    fn duplicate_fields_rejected() {
        let doc = "subject: x\nversion: 1\nfields:\n  - {name: ts, type: integer}\n  - {name: ts, type: string}\n";
        assert_eq!(parse_schema(doc), Err(SchemaError::DuplicateField("ts".into())));
    }

    #[test]
    fn unknown_type_rejected() {
        let doc = "subject: x\nversion: 1\nfields:\n  - {name: a, type: decimal}\n";
        assert!(matches!(parse_schema(doc), Err(SchemaError::UnknownType { .. })));
    }

    #[test]
    fn default_mismatch_rejected() {
        let doc = "subject: x\nversion: 1\nfields:\n  - {name: a, type: integer, default: abc}\n";
        assert!(matches!(parse_schema(doc), Err(SchemaError::DefaultMismatch { .. })));
        let doc = "subject: x\nversion: 1\nfields:\n  - {name: a, type: enum, variants: [x], default: y}\n";
        assert!(matches!(parse_schema(doc), Err(SchemaError::DefaultMismatch { .. })));
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_schema("subject: [unclosed\n").unwrap_err();
        let SchemaError::Syntax(msg) = err else { panic!() };
        assert!(msg.contains("line"), "{msg}");
    }

    #[test]
    fn enum_invariants() {
        let doc = "subject: x\nversion: 1\nfields:\n  - {name: a, type: enum, variants: []}\n";
        assert!(parse_schema(doc).is_err());
        let doc = "subject: x\nversion: 1\nfields:\n  - {name: a, type: enum, variants: [p, p]}\n";
        assert!(parse_schema(doc).is_err());
        let doc = "subject: x\nversion: 1\nfields:\n  - {name: a, type: enum}\n";
        assert!(parse_schema(doc).is_err());
    }

    #[test]
    fn version_must_be_positive() {
        assert_eq!(
            parse_schema("subject: x\nversion: 0\n"),
            Err(SchemaError::InvalidVersion)
        );
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a64(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a64(b"a"), 0xaf63dc4c8601ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x85944171f73967e8);
    }

    #[test]
    fn fingerprint_sensitive_to_doc_and_names() {
        let s = parse_schema(MOTION).unwrap();
        let mut with_doc = s.clone();
        with_doc.doc = Some("Motion sensor".into());
        assert_ne!(fingerprint(&s), fingerprint(&with_doc));
        let mut renamed = s.clone();
        renamed.fields[1].name = "battery".into();
        assert_ne!(fingerprint(&s), fingerprint(&renamed));
        assert_eq!(fingerprint(&s), fingerprint(&parse_schema(&serialize_schema(&s)).unwrap()));
    }

    #[test]
    fn key_order_in_document_is_insignificant() {
        let a = "subject: x\nversion: 1\nfields:\n  - {name: a, type: integer, unit: ms}\n";
        let b = "fields:\n  - {unit: ms, type: integer, name: a}\nversion: 1\nsubject: x\n";
        assert_eq!(
            fingerprint(&parse_schema(a).unwrap()),
            fingerprint(&parse_schema(b).unwrap())
        );
    }

    #[test]
    fn conform_types_enum_and_widens_int() {
        let s = schema(vec![
            Field::new("state", FieldType::Enum(vec!["on".into(), "off".into()])),
            Field::new("x", FieldType::Float),
            Field::new("o", FieldType::String).optional(),
        ]);
        let r = Record::parse(r#"{"state": "on", "x": 3}"#).unwrap();
        let typed = s.conform(&r).unwrap();
        assert_eq!(
            typed,
            Record::object([("state", Record::Enum("on".into())), ("x", Record::Float(3.0))])
        );
        assert!(s.conform(&Record::parse(r#"{"state": "dim", "x": 3}"#).unwrap()).is_err());
        let missing = s.conform(&Record::parse(r#"{"x": 3}"#).unwrap()).unwrap_err();
        assert!(missing.missing);
        assert!(s
            .conform(&Record::parse(r#"{"state": "on", "x": 1, "y": 2}"#).unwrap())
            .is_err());
    }

    #[test]
    fn backward_rejects_required_addition() {
        let old = schema(vec![Field::new("a", FieldType::Integer)]);
        let new = schema(vec![
            Field::new("a", FieldType::Integer),
            Field::new("ts", FieldType::Integer),
        ]);
        let report = check_structural_compat(&old, &new, CompatibilityMode::Backward);
        assert_eq!(report.violations.len(), 1);
        assert_eq!(report.violations[0].path, "ts");
        let with_default = schema(vec![
            Field::new("a", FieldType::Integer),
            Field::new("ts", FieldType::Integer).with_default(Record::Int(0)),
        ]);
        assert!(check_structural_compat(&old, &with_default, CompatibilityMode::Backward).is_compatible());
        // forward readers ignore the addition
        assert!(check_structural_compat(&old, &new, CompatibilityMode::Forward).is_compatible());
    }

    #[test]
    fn deletion_rules() {
        let old = schema(vec![
            Field::new("a", FieldType::Integer),
            Field::new("b", FieldType::String).optional(),
        ]);
        let without_b = schema(vec![Field::new("a", FieldType::Integer)]);
        for mode in [
            CompatibilityMode::Backward,
            CompatibilityMode::Forward,
            CompatibilityMode::Full,
        ] {
            assert!(check_structural_compat(&old, &without_b, mode).is_compatible(), "{mode}");
        }
        let without_a = schema(vec![Field::new("b", FieldType::String).optional()]);
        assert!(check_structural_compat(&old, &without_a, CompatibilityMode::Backward).is_compatible());
        assert!(!check_structural_compat(&old, &without_a, CompatibilityMode::Forward).is_compatible());
        assert!(!check_structural_compat(&old, &without_a, CompatibilityMode::Full).is_compatible());
    }

    #[test]
    fn type_change_forbidden_except_none() {
        let old = schema(vec![Field::new("a", FieldType::Integer)]);
        let new = schema(vec![Field::new("a", FieldType::Float)]);
        assert!(!check_structural_compat(&old, &new, CompatibilityMode::Backward).is_compatible());
        assert!(!check_structural_compat(&old, &new, CompatibilityMode::Forward).is_compatible());
        assert!(check_structural_compat(&old, &new, CompatibilityMode::None).is_compatible());
    }

    #[test]
    fn nested_objects_are_compared() {
        let inner = |fields| Field::new("loc", FieldType::Object(fields));
        let old = schema(vec![inner(vec![Field::new("lat", FieldType::Float)])]);
        let new = schema(vec![inner(vec![
            Field::new("lat", FieldType::Float),
            Field::new("lon", FieldType::Float),
        ])]);
        let report = check_structural_compat(&old, &new, CompatibilityMode::Backward);
        assert_eq!(report.violations[0].path, "loc.lon");
    }
}
