//! Tree-structured data values and their text form.

use std::collections::BTreeMap;
use std::fmt;

use serde_json::{Number, Value};
use thiserror::Error;

use crate::path::FieldPath;

/// A data value flowing through the registry: scalars, enum symbols and objects.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Null,
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Enum(String),
    Object(BTreeMap<String, Record>),
}

#[derive(Debug, Error)]
pub enum RecordError {
    #[error("record syntax error: {0}")]
    Syntax(String),
    #[error("unsupported value: {0}")]
    Unsupported(String),
}

impl Record {
    pub fn object<I, K>(entries: I) -> Record
    where
        I: IntoIterator<Item = (K, Record)>,
        K: Into<String>,
    {
        Record::Object(entries.into_iter().map(|(k, v)| (k.into(), v)).collect())
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Record::Null => "null",
            Record::Bool(_) => "boolean",
            Record::Int(_) => "integer",
            Record::Float(_) => "float",
            Record::Str(_) => "string",
            Record::Enum(_) => "enum",
            Record::Object(_) => "object",
        }
    }

    pub fn is_null(&self) -> bool {
        matches!(self, Record::Null)
    }

    pub fn as_f64(&self) -> Option<f64> {
        match self {
            Record::Int(i) => Some(*i as f64),
            Record::Float(f) => Some(*f),
            _ => None,
        }
    }

    /// Reads a nested path. Absent keys read as `None`; a non-object on the
    /// way down also reads as `None`.
    pub fn get_path(&self, path: &FieldPath) -> Option<&Record> {
        let mut cur = self;
        for seg in path.segments() {
            match cur {
                Record::Object(map) => cur = map.get(seg)?,
                _ => return None,
            }
        }
        Some(cur)
    }

    /// Writes a nested path, creating intermediate objects. Fails when an
    /// intermediate node exists and is not an object.
    pub fn set_path(&mut self, path: &FieldPath, value: Record) -> Result<(), FieldPath> {
        let segments = path.segments();
        let mut cur = self;
        for seg in &segments[..segments.len() - 1] {
            if cur.is_null() {
                *cur = Record::Object(BTreeMap::new());
            }
            match cur {
                Record::Object(map) => {
                    cur = map
                        .entry(seg.clone())
                        .or_insert_with(|| Record::Object(BTreeMap::new()));
                }
                _ => return Err(path.clone()),
            }
        }
        if cur.is_null() {
            *cur = Record::Object(BTreeMap::new());
        }
        match cur {
            Record::Object(map) => {
                map.insert(path.leaf().to_string(), value);
                Ok(())
            }
            _ => Err(path.clone()),
        }
    }

    pub fn from_json(value: &Value) -> Result<Record, RecordError> {
        Ok(match value {
            Value::Null => Record::Null,
            Value::Bool(b) => Record::Bool(*b),
            Value::Number(n) => {
                if let Some(i) = n.as_i64() {
                    Record::Int(i)
                } else if n.is_u64() {
                    return Err(RecordError::Unsupported(format!("integer {n} out of range")));
                } else {
                    Record::Float(n.as_f64().unwrap_or(f64::NAN))
                }
            }
            Value::String(s) => Record::Str(s.clone()),
            Value::Array(_) => return Err(RecordError::Unsupported("arrays".into())),
            Value::Object(map) => Record::Object(
                map.iter()
                    .map(|(k, v)| Ok((k.clone(), Record::from_json(v)?)))
                    .collect::<Result<_, RecordError>>()?,
            ),
        })
    }

    pub fn to_json(&self) -> Value {
        match self {
            Record::Null => Value::Null,
            Record::Bool(b) => Value::Bool(*b),
            Record::Int(i) => Value::Number((*i).into()),
            Record::Float(f) => Number::from_f64(*f).map(Value::Number).unwrap_or(Value::Null),
            Record::Str(s) | Record::Enum(s) => Value::String(s.clone()),
            Record::Object(map) => {
                Value::Object(map.iter().map(|(k, v)| (k.clone(), v.to_json())).collect())
            }
        }
    }

    /// Parses a record document. Accepts JSON and the YAML superset used by
    /// schema defaults.
    pub fn parse(text: &str) -> Result<Record, RecordError> {
        let value: Value =
            serde_yaml::from_str(text).map_err(|e| RecordError::Syntax(e.to_string()))?;
        Record::from_json(&value)
    }

    /// Compact single-line JSON rendering, suitable for line-delimited streams.
    pub fn to_line(&self) -> String {
        self.to_json().to_string()
    }
}

impl fmt::Display for Record {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_line())
    }
}

/// Renders a float as its shortest round-tripping decimal, always keeping a
/// fractional part or exponent so it reads back as a float.
pub fn format_float(x: f64) -> String {
    format!("{x:?}")
}
