//! Compiles validated programs into deployable artifacts.

mod pipeline;
mod sql;

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::schema::Schema;
use crate::stl::validate::{validate_program, Diagnostic};
use crate::stl::{serialize_program, StlProgram};

pub use pipeline::{run_pipeline, PipelineExpr};
pub use sql::SqlView;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledArtifact {
    pub backend_name: String,
    pub media_type: String,
    pub body: String,
}

/// A command a backend cannot express.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Untranslatable {
    /// Index into the command list; absent for whole-program problems.
    pub command: Option<usize>,
    pub reason: String,
}

impl fmt::Display for Untranslatable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.command {
            Some(i) => write!(f, "command #{i}: {}", self.reason),
            None => f.write_str(&self.reason),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CompileError {
    #[error("unknown backend `{0}` (available: portable, pipeline-expr, sql-view)")]
    UnknownBackend(String),
    #[error("program has {} validation diagnostics", .0.len())]
    Unvalidated(Vec<Diagnostic>),
    #[error("{backend} cannot translate: {}", list(.problems))]
    Untranslatable {
        backend: String,
        problems: Vec<Untranslatable>,
    },
}

fn list(items: &[Untranslatable]) -> String {
    items.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

pub trait Backend: Send + Sync {
    fn name(&self) -> &'static str;
    fn media_type(&self) -> &'static str;
    /// Produces the artifact body. Callers go through [`compile`], which
    /// validates first.
    fn emit(&self, program: &StlProgram, source: &Schema, target: &Schema) -> Result<String, Vec<Untranslatable>>;
}

/// The identity backend: the STL document itself.
pub struct Portable;

impl Backend for Portable {
    fn name(&self) -> &'static str {
        "portable"
    }

    fn media_type(&self) -> &'static str {
        "text/x-stl"
    }

    fn emit(&self, program: &StlProgram, _: &Schema, _: &Schema) -> Result<String, Vec<Untranslatable>> {
        Ok(serialize_program(program))
    }
}

static BACKENDS: [&dyn Backend; 3] = [&Portable, &PipelineExpr, &SqlView];

pub fn backend_names() -> Vec<&'static str> {
    BACKENDS.iter().map(|b| b.name()).collect()
}

pub fn backend(name: &str) -> Option<&'static dyn Backend> {
    BACKENDS.iter().copied().find(|b| b.name() == name)
}

/// Validates `program` and compiles it with the named backend.
pub fn compile(
    program: &StlProgram,
    source: &Schema,
    target: &Schema,
    backend_name: &str,
) -> Result<CompiledArtifact, CompileError> {
    let b = backend(backend_name).ok_or_else(|| CompileError::UnknownBackend(backend_name.to_string()))?;
    let diags = validate_program(program, source, target);
    if !diags.is_empty() {
        return Err(CompileError::Unvalidated(diags));
    }
    let body = b.emit(program, source, target).map_err(|problems| CompileError::Untranslatable {
        backend: b.name().to_string(),
        problems,
    })?;
    Ok(CompiledArtifact {
        backend_name: b.name().to_string(),
        media_type: b.media_type().to_string(),
        body,
    })
}
