//! Immutable registry state, rebuilt by folding log entries.

use std::collections::BTreeMap;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::log::{Decision, Event, LogEntry};
use crate::planner::Engine;
use crate::schema::{fingerprint, parse_schema, CompatibilityMode, Schema, SchemaId};
use crate::stl::validate::Diagnostic;
use crate::stl::{parse_program, StlProgram};

#[derive(Debug, Clone, PartialEq)]
pub struct StoredSchema {
    pub id: SchemaId,
    pub schema: Schema,
    /// Document as registered.
    pub document: String,
    pub registered_at: DateTime<Utc>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MappingStatus {
    Pending,
    Approved,
    Rejected,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MappingRecord {
    pub source_id: SchemaId,
    pub target_id: SchemaId,
    pub program: StlProgram,
    pub status: MappingStatus,
    pub diagnostics: Vec<Diagnostic>,
    pub engine: Engine,
    pub created_at: DateTime<Utc>,
    pub decided_at: Option<DateTime<Utc>>,
}

impl MappingRecord {
    /// Clean enough to approve: no diagnostics, no MISSING, same entity.
    pub fn semantic_compatible(&self) -> bool {
        self.diagnostics.is_empty() && !self.program.has_missing() && !self.program.is_abort()
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct State {
    pub last_seq: u64,
    schemas: BTreeMap<u32, StoredSchema>,
    /// Schema ids per subject, in version order.
    subjects: BTreeMap<String, Vec<u32>>,
    configs: BTreeMap<String, CompatibilityMode>,
    /// Every mapping ever created, oldest first.
    mappings: Vec<MappingRecord>,
}

impl State {
    pub fn replay<'a>(entries: impl IntoIterator<Item = &'a LogEntry>) -> Result<State, String> {
        let mut s = State::default();
        for e in entries {
            s.apply(e)?;
        }
        Ok(s)
    }

    pub fn schema(&self, id: u32) -> Option<&StoredSchema> {
        self.schemas.get(&id)
    }

    pub fn schemas(&self) -> impl Iterator<Item = &StoredSchema> {
        self.schemas.values()
    }

    pub fn subjects(&self) -> Vec<String> {
        self.subjects.keys().cloned().collect()
    }

    pub fn versions(&self, subject: &str) -> Vec<&StoredSchema> {
        self.subjects
            .get(subject)
            .map(|ids| ids.iter().filter_map(|i| self.schemas.get(i)).collect())
            .unwrap_or_default()
    }

    pub fn version(&self, subject: &str, version: u32) -> Option<&StoredSchema> {
        self.versions(subject).into_iter().find(|s| s.schema.version == version)
    }

    pub fn latest(&self, subject: &str) -> Option<&StoredSchema> {
        self.versions(subject).pop()
    }

    pub fn mode(&self, subject: &str) -> CompatibilityMode {
        self.configs.get(subject).copied().unwrap_or_default()
    }

    pub fn next_id(&self) -> u32 {
        self.schemas.keys().next_back().map_or(1, |i| i + 1)
    }

    /// The live (non-rejected) mapping for a pair, if any.
    pub fn live_mapping(&self, source: u32, target: u32) -> Option<&MappingRecord> {
        self.mappings
            .iter()
            .rev()
            .find(|m| m.source_id.id == source && m.target_id.id == target && m.status != MappingStatus::Rejected)
    }

    /// The live mapping for a pair, or else the most recent rejected one.
    pub fn latest_mapping(&self, source: u32, target: u32) -> Option<&MappingRecord> {
        self.live_mapping(source, target).or_else(|| {
            self.mappings
                .iter()
                .rev()
                .find(|m| m.source_id.id == source && m.target_id.id == target)
        })
    }

    pub fn mappings(&self) -> &[MappingRecord] {
        &self.mappings
    }

    /// Folds one entry in. Errors mean the entry is inconsistent with the
    /// state it follows.
    pub fn apply(&mut self, entry: &LogEntry) -> Result<(), String> {
        if entry.seq <= self.last_seq {
            return Err(format!("sequence {} does not follow {}", entry.seq, self.last_seq));
        }
        match &entry.event {
            Event::SchemaRegistered {
                id,
                subject,
                version,
                fingerprint: fp,
                document,
            } => {
                let schema = parse_schema(document).map_err(|e| e.to_string())?;
                if &schema.subject != subject || schema.version != *version {
                    return Err(format!("schema {id} document does not declare {subject} v{version}"));
                }
                if fingerprint(&schema) != *fp {
                    return Err(format!("schema {id} fingerprint mismatch"));
                }
                if *id < self.next_id() {
                    return Err(format!("schema id {id} is not fresh"));
                }
                let expected = self.latest(subject).map_or(1, |s| s.schema.version + 1);
                if *version != expected {
                    return Err(format!("{subject} v{version} out of sequence, expected v{expected}"));
                }
                self.subjects.entry(subject.clone()).or_default().push(*id);
                self.schemas.insert(
                    *id,
                    StoredSchema {
                        id: SchemaId { id: *id, fingerprint: *fp },
                        schema,
                        document: document.clone(),
                        registered_at: entry.at,
                    },
                );
            }
            Event::MappingCreated {
                source_id,
                target_id,
                engine,
                program,
                diagnostics,
            } => {
                let (s, t) = match (self.schema(*source_id), self.schema(*target_id)) {
                    (Some(s), Some(t)) => (s.id, t.id),
                    _ => return Err(format!("mapping {source_id}->{target_id} names an unknown schema")),
                };
                if self.live_mapping(*source_id, *target_id).is_some() {
                    return Err(format!("mapping {source_id}->{target_id} already exists"));
                }
                self.mappings.push(MappingRecord {
                    source_id: s,
                    target_id: t,
                    program: parse_program(program).map_err(|e| e.to_string())?,
                    status: MappingStatus::Pending,
                    diagnostics: diagnostics.clone(),
                    engine: *engine,
                    created_at: entry.at,
                    decided_at: None,
                });
            }
            Event::MappingDecided {
                source_id,
                target_id,
                decision,
            } => {
                let m = self
                    .mappings
                    .iter_mut()
                    .rev()
                    .find(|m| m.source_id.id == *source_id && m.target_id.id == *target_id && m.status == MappingStatus::Pending)
                    .ok_or_else(|| format!("no pending mapping {source_id}->{target_id}"))?;
                match decision {
                    Decision::Approve if !m.semantic_compatible() => {
                        return Err(format!("mapping {source_id}->{target_id} is not approvable"));
                    }
                    Decision::Approve => m.status = MappingStatus::Approved,
                    Decision::Reject => m.status = MappingStatus::Rejected,
                }
                m.decided_at = Some(entry.at);
            }
            Event::ConfigChanged { subject, mode } => {
                self.configs.insert(subject.clone(), *mode);
            }
        }
        self.last_seq = entry.seq;
        Ok(())
    }
}
