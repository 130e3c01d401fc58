//! Core library of the compound schema registry.
//!
//! Schemas are registered and versioned; mappings between versions are
//! expressed as STL programs (a small command language), checked by a
//! static validator, executed by a reference interpreter and compiled to
//! deployable artifacts for data-path platforms.

pub mod assembler;
pub mod eval;
pub mod interp;
pub mod path;
pub mod planner;
pub mod record;
pub mod registry;
pub mod schema;
pub mod stl;

pub use path::FieldPath;
pub use record::Record;
pub use schema::{CompatibilityMode, Field, FieldType, Schema, SchemaId};
pub use stl::{StlCommand, StlProgram};
