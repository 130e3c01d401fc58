//! Mapping planners: a model-backed engine speaking a tool-call protocol and
//! a deterministic heuristic engine.

mod heuristic;
mod model;
pub mod units;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use heuristic::{entity_similarity, name_score, plan_heuristic, tokens};
pub use model::{
    plan_with_model, tool_catalog, HttpToolClient, PlanOutcome, ToolCallProtocol, ToolInvocation, ToolSpec,
    TranscriptClient,
};
pub use units::{infer_unit_conversion, UnitConversion};

pub const MAX_REPAIR_ROUNDS: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Model,
    Heuristic,
    Manual,
}

impl Engine {
    pub fn as_str(self) -> &'static str {
        match self {
            Engine::Model => "model",
            Engine::Heuristic => "heuristic",
            Engine::Manual => "manual",
        }
    }
}

impl fmt::Display for Engine {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Engine {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "model" => Ok(Engine::Model),
            "heuristic" => Ok(Engine::Heuristic),
            "manual" => Ok(Engine::Manual),
            other => Err(format!("unknown engine `{other}` (expected model, heuristic or manual)")),
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlanError {
    #[error("transport failure: {0}")]
    Transport(String),
    #[error("protocol violation: {}", .0.join("; "))]
    Protocol(Vec<String>),
    #[error("invalid planner config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PlannerConfig {
    pub engine: Engine,
    pub repair_rounds: u32,
    pub similarity_threshold: f64,
    /// Emit GEN/APPLY instead of SCALE/SHIFT for conversions with an offset.
    pub prefer_single_command: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_url: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_key: Option<String>,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        PlannerConfig {
            engine: Engine::Heuristic,
            repair_rounds: 2,
            similarity_threshold: 0.55,
            prefer_single_command: false,
            model_url: None,
            model_key: None,
        }
    }
}

impl PlannerConfig {
    /// Reads the model endpoint and key from `GSE_MODEL_URL` / `GSE_MODEL_KEY`.
    pub fn from_env() -> PlannerConfig {
        PlannerConfig {
            model_url: std::env::var("GSE_MODEL_URL").ok().filter(|s| !s.is_empty()),
            model_key: std::env::var("GSE_MODEL_KEY").ok().filter(|s| !s.is_empty()),
            ..PlannerConfig::default()
        }
    }

    pub fn validate(&self) -> Result<(), PlanError> {
        if self.repair_rounds > MAX_REPAIR_ROUNDS {
            return Err(PlanError::Config(format!("repair_rounds must be at most {MAX_REPAIR_ROUNDS}")));
        }
        if !(0.0..=1.0).contains(&self.similarity_threshold) {
            return Err(PlanError::Config("similarity_threshold must lie in [0, 1]".into()));
        }
        Ok(())
    }
}
