//! STL: the schema transformation command language.
//!
//! A program is a MATCH header followed by an ordered list of field and
//! value transformation commands. Programs are plain data; [`validate`]
//! checks them against a schema pair and [`crate::interp`] executes them.

pub mod doc;
pub mod expr;
pub mod validate;

use std::collections::HashSet;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::path::FieldPath;
use crate::record::Record;
use crate::schema::{FieldType, SchemaRef};

pub use doc::{parse_program, serialize_program};
pub use expr::{parse_expr, Expr};
pub use validate::{validate_program, DiagCode, Diagnostic};

#[derive(Debug, Error, PartialEq)]
pub enum StlError {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("missing MATCH header")]
    MissingMatch,
    #[error("unknown command `{0}`")]
    UnknownCommand(String),
    #[error("{command}: missing required parameter `{param}`")]
    MissingParam { command: String, param: String },
    #[error("{command}: unknown parameter `{param}`")]
    UnknownParam { command: String, param: String },
    #[error("{command}: bad parameter `{param}`: {detail}")]
    BadParam {
        command: String,
        param: String,
        detail: String,
    },
    #[error("{command}: {detail}")]
    Invalid { command: String, detail: String },
}

/// The schema matching verdict that heads every program.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatchHeader {
    pub same_entity: bool,
    pub reason: String,
}

/// What APPLY evaluates: a GEN-defined function, a unary builtin, or an
/// inline expression.
#[derive(Debug, Clone, PartialEq)]
pub enum FnRef {
    Named(String),
    Inline(Expr),
}

impl fmt::Display for FnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FnRef::Named(n) => f.write_str(n),
            FnRef::Inline(e) => write!(f, "{e}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StlCommand {
    Copy { source: FieldPath, target: FieldPath },
    Add { target: FieldPath, value: Record },
    Cast { source: FieldPath, target: FieldPath, to: FieldType },
    Delete { source: FieldPath },
    Rename { source: FieldPath, target: FieldPath },
    Default { target: FieldPath, value: Record },
    Missing { target: FieldPath, reason: String },
    Scale { target: FieldPath, factor: f64 },
    Shift { target: FieldPath, offset: f64 },
    Link {
        target: FieldPath,
        table: Vec<(String, String)>,
        fallback: Option<String>,
    },
    Gen { name: String, expr: Expr },
    Apply { source: FieldPath, target: FieldPath, func: FnRef },
}

impl StlCommand {
    /// Upper-case command name as shown in diagnostics.
    pub fn name(&self) -> &'static str {
        match self {
            StlCommand::Copy { .. } => "COPY",
            StlCommand::Add { .. } => "ADD",
            StlCommand::Cast { .. } => "CAST",
            StlCommand::Delete { .. } => "DELETE",
            StlCommand::Rename { .. } => "RENAME",
            StlCommand::Default { .. } => "DEFAULT",
            StlCommand::Missing { .. } => "MISSING",
            StlCommand::Scale { .. } => "SCALE",
            StlCommand::Shift { .. } => "SHIFT",
            StlCommand::Link { .. } => "LINK",
            StlCommand::Gen { .. } => "GEN",
            StlCommand::Apply { .. } => "APPLY",
        }
    }

    pub fn source(&self) -> Option<&FieldPath> {
        match self {
            StlCommand::Copy { source, .. }
            | StlCommand::Cast { source, .. }
            | StlCommand::Delete { source }
            | StlCommand::Rename { source, .. }
            | StlCommand::Apply { source, .. } => Some(source),
            _ => None,
        }
    }

    pub fn target(&self) -> Option<&FieldPath> {
        match self {
            StlCommand::Copy { target, .. }
            | StlCommand::Add { target, .. }
            | StlCommand::Cast { target, .. }
            | StlCommand::Rename { target, .. }
            | StlCommand::Default { target, .. }
            | StlCommand::Missing { target, .. }
            | StlCommand::Scale { target, .. }
            | StlCommand::Shift { target, .. }
            | StlCommand::Link { target, .. }
            | StlCommand::Apply { target, .. } => Some(target),
            StlCommand::Delete { .. } | StlCommand::Gen { .. } => None,
        }
    }

    /// Commands that create their target's value. DEFAULT is handled
    /// separately since it only produces when nothing else does.
    pub fn is_producer(&self) -> bool {
        matches!(
            self,
            StlCommand::Copy { .. }
                | StlCommand::Rename { .. }
                | StlCommand::Cast { .. }
                | StlCommand::Add { .. }
                | StlCommand::Apply { .. }
                | StlCommand::Missing { .. }
        )
    }

    /// SCALE, SHIFT and LINK rewrite a value that already exists.
    pub fn is_value_stage(&self) -> bool {
        matches!(
            self,
            StlCommand::Scale { .. } | StlCommand::Shift { .. } | StlCommand::Link { .. }
        )
    }

    /// Structural checks that do not need a schema.
    pub fn check(&self) -> Result<(), StlError> {
        let invalid = |detail: &str| {
            Err(StlError::Invalid {
                command: self.name().to_string(),
                detail: detail.to_string(),
            })
        };
        match self {
            StlCommand::Scale { factor, .. } => {
                if !factor.is_finite() {
                    return invalid("factor must be finite");
                }
                if *factor == 0.0 {
                    return invalid("factor must be nonzero");
                }
            }
            StlCommand::Shift { offset, .. } if !offset.is_finite() => {
                return invalid("offset must be finite");
            }
            StlCommand::Link { table, .. } => {
                if table.is_empty() {
                    return invalid("table must be non-empty");
                }
                let mut keys = HashSet::new();
                if let Some((k, _)) = table.iter().find(|(k, _)| !keys.insert(k.as_str())) {
                    return invalid(&format!("duplicate table key `{k}`"));
                }
            }
            StlCommand::Gen { name, .. } => {
                if !crate::path::is_identifier(name)
                    || expr::is_reserved(name)
                    || expr::Builtin::lookup(name, expr::Dialect::Pipeline).is_some()
                {
                    return invalid(&format!("`{name}` cannot name a function"));
                }
            }
            StlCommand::Cast { to: FieldType::Object(_), .. } => {
                return invalid("cannot cast to an object type");
            }
            _ => {}
        }
        Ok(())
    }
}

impl fmt::Display for StlCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())?;
        match self {
            StlCommand::Copy { source, target } | StlCommand::Rename { source, target } => {
                write!(f, " {source} -> {target}")
            }
            StlCommand::Add { target, value } | StlCommand::Default { target, value } => {
                write!(f, " {target} = {value}")
            }
            StlCommand::Cast { source, target, to } => write!(f, " {source} -> {target} as {to}"),
            StlCommand::Delete { source } => write!(f, " {source}"),
            StlCommand::Missing { target, reason } => write!(f, " {target} ({reason})"),
            StlCommand::Scale { target, factor } => write!(f, " {target} by {factor}"),
            StlCommand::Shift { target, offset } => write!(f, " {target} by {offset}"),
            StlCommand::Link { target, table, fallback } => {
                write!(f, " {target} {{")?;
                for (i, (k, v)) in table.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{k} => {v}")?;
                }
                f.write_str("}")?;
                match fallback {
                    Some(fb) => write!(f, " else {fb}"),
                    None => Ok(()),
                }
            }
            StlCommand::Gen { name, expr } => write!(f, " {name} = {expr}"),
            StlCommand::Apply { source, target, func } => write!(f, " {func}({source}) -> {target}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StlProgram {
    pub source: SchemaRef,
    pub target: SchemaRef,
    pub header: MatchHeader,
    pub commands: Vec<StlCommand>,
}

impl StlProgram {
    /// Checks the schema-independent invariants of every command and the
    /// uniqueness of GEN names.
    pub fn check(&self) -> Result<(), StlError> {
        let mut gens = HashSet::new();
        for cmd in &self.commands {
            cmd.check()?;
            if let StlCommand::Gen { name, .. } = cmd {
                if !gens.insert(name.as_str()) {
                    return Err(StlError::Invalid {
                        command: "GEN".into(),
                        detail: format!("duplicate function name `{name}`"),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn is_abort(&self) -> bool {
        !self.header.same_entity
    }

    pub fn has_missing(&self) -> bool {
        self.commands
            .iter()
            .any(|c| matches!(c, StlCommand::Missing { .. }))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(s: &str) -> FieldPath {
        s.parse().unwrap()
    }

    #[test]
    fn scale_factor_invariants() {
        assert!(StlCommand::Scale { target: p("a"), factor: 0.0 }.check().is_err());
        assert!(StlCommand::Scale { target: p("a"), factor: f64::NAN }.check().is_err());
        assert!(StlCommand::Scale { target: p("a"), factor: 0.5 }.check().is_ok());
        assert!(StlCommand::Shift { target: p("a"), offset: f64::INFINITY }.check().is_err());
    }

    #[test]
    fn link_table_invariants() {
        let link = |table: Vec<(&str, &str)>| StlCommand::Link {
            target: p("a"),
            table: table.into_iter().map(|(k, v)| (k.into(), v.into())).collect(),
            fallback: None,
        };
        assert!(link(vec![]).check().is_err());
        assert!(link(vec![("on", "x"), ("on", "y")]).check().is_err());
        assert!(link(vec![("on", "x"), ("off", "y")]).check().is_ok());
    }

    #[test]
    fn gen_names_are_checked() {
        let gen = |name: &str| StlCommand::Gen {
            name: name.into(),
            expr: Expr::value(),
        };
        assert!(gen("value").check().is_err());
        assert!(gen("round").check().is_err());
        assert!(gen("c_to_f").check().is_ok());
        let prog = StlProgram {
            source: SchemaRef { subject: "a".into(), version: 1 },
            target: SchemaRef { subject: "a".into(), version: 2 },
            header: MatchHeader { same_entity: true, reason: String::new() },
            commands: vec![gen("f"), gen("f")],
        };
        assert!(prog.check().is_err());
    }
}
