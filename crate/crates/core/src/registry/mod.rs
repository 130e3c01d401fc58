//! The compound registry: schemas, compatibility, mappings and on-path
//! translation of framed records.
//!
//! Every mutation goes through one writer that appends to the event log
//! before publishing a new immutable [`State`]. Readers clone an `Arc` to the
//! current state and never wait on the writer.

mod frame;
mod log;
mod state;

use std::path::Path;
use std::sync::Arc;

use chrono::{DateTime, Utc};
use parking_lot::{Mutex, RwLock};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use frame::{FrameError, FramedMessage, HEADER_LEN, MAGIC};
pub use log::{parse_log, Decision, Event, LogEntry, LogError, StoreLog};
pub use state::{MappingRecord, MappingStatus, State, StoredSchema};

use crate::assembler::{compile, CompileError, CompiledArtifact};
use crate::interp::{transform, TransformError};
use crate::planner::{plan_heuristic, plan_with_model, Engine, HttpToolClient, PlanError, PlannerConfig, ToolCallProtocol};
use crate::record::{Record, RecordError};
use crate::schema::{
    check_structural_compat, fingerprint, parse_schema, CompatReport, CompatibilityMode, SchemaError, SchemaId,
};
use crate::stl::validate::{validate_program, Diagnostic};
use crate::stl::{parse_program, serialize_program, StlError, StlProgram};

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("invalid schema document: {0}")]
    Schema(#[from] SchemaError),
    #[error("document declares subject `{declared}` but was registered under `{subject}`")]
    SubjectMismatch { subject: String, declared: String },
    #[error("{subject} v{declared} is out of sequence; the next version is {expected}")]
    VersionOutOfSequence { subject: String, declared: u32, expected: u32 },
    #[error("incompatible under {}: {}", .0.mode, violations(.0))]
    Incompatible(CompatReport),
    #[error("unknown schema id {0}")]
    UnknownSchema(u32),
    #[error("unknown subject `{0}`")]
    UnknownSubject(String),
    #[error("subject `{subject}` has no version {version}")]
    UnknownVersion { subject: String, version: u32 },
    #[error("a mapping {0} -> {1} already exists; reject it before creating another")]
    MappingExists(u32, u32),
    #[error("no mapping {0} -> {1}")]
    NoMapping(u32, u32),
    #[error("no pending mapping {0} -> {1}")]
    NoPendingMapping(u32, u32),
    #[error("mapping cannot be approved: {0}")]
    Unapprovable(String),
    #[error("no approved mapping {0} -> {1}")]
    NoApprovedMapping(u32, u32),
    #[error("planner failed: {0}")]
    Planner(#[from] PlanError),
    #[error("invalid mapping program: {0}")]
    Program(#[from] StlError),
    #[error("manual mappings need a program document")]
    ProgramRequired,
    #[error(transparent)]
    Compile(#[from] CompileError),
    #[error("framing error: {0}")]
    Frame(#[from] FrameError),
    #[error("payload of schema {id}: {source}")]
    Payload { id: u32, source: RecordError },
    #[error("transform {from} -> {to} failed: {source}")]
    Transform { from: u32, to: u32, source: TransformError },
    #[error(transparent)]
    Log(#[from] LogError),
}

fn violations(r: &CompatReport) -> String {
    r.violations.iter().map(|v| format!("{} ({})", v.message, v.path)).collect::<Vec<_>>().join("; ")
}

impl RegistryError {
    /// Stable machine-readable code for API error bodies.
    pub fn code(&self) -> &'static str {
        use RegistryError as E;
        match self {
            E::Schema(_) => "invalid-schema",
            E::SubjectMismatch { .. } => "subject-mismatch",
            E::VersionOutOfSequence { .. } => "version-out-of-sequence",
            E::Incompatible(_) => "incompatible",
            E::UnknownSchema(_) => "unknown-schema",
            E::UnknownSubject(_) => "unknown-subject",
            E::UnknownVersion { .. } => "unknown-version",
            E::MappingExists(..) => "mapping-exists",
            E::NoMapping(..) => "no-mapping",
            E::NoPendingMapping(..) => "no-pending-mapping",
            E::Unapprovable(_) => "unapprovable",
            E::NoApprovedMapping(..) => "no-approved-mapping",
            E::Planner(PlanError::Transport(_)) => "planner-transport",
            E::Planner(_) => "planner",
            E::Program(_) | E::ProgramRequired => "invalid-program",
            E::Compile(CompileError::UnknownBackend(_)) => "unknown-backend",
            E::Compile(_) => "compile",
            E::Frame(_) => "framing",
            E::Payload { .. } => "payload",
            E::Transform { .. } => "transform",
            E::Log(_) => "store",
        }
    }
}

// ---------------------------------------------------------------------------
// wire views

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Registration {
    pub id: u32,
    pub fingerprint: u64,
    pub subject: String,
    pub version: u32,
    /// False when the document was already registered.
    pub created: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SchemaView {
    pub id: u32,
    pub fingerprint: u64,
    pub subject: String,
    pub version: u32,
    pub document: String,
}

impl From<&StoredSchema> for SchemaView {
    fn from(s: &StoredSchema) -> Self {
        SchemaView {
            id: s.id.id,
            fingerprint: s.id.fingerprint,
            subject: s.schema.subject.clone(),
            version: s.schema.version,
            document: s.document.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MappingView {
    pub source_id: SchemaId,
    pub target_id: SchemaId,
    pub status: MappingStatus,
    pub engine: Engine,
    /// STL document.
    pub program: String,
    pub diagnostics: Vec<Diagnostic>,
    pub semantic_compatible: bool,
    pub created_at: DateTime<Utc>,
    #[serde(default)]
    pub decided_at: Option<DateTime<Utc>>,
}

impl From<&MappingRecord> for MappingView {
    fn from(m: &MappingRecord) -> Self {
        MappingView {
            source_id: m.source_id,
            target_id: m.target_id,
            status: m.status,
            engine: m.engine,
            program: serialize_program(&m.program),
            diagnostics: m.diagnostics.clone(),
            semantic_compatible: m.semantic_compatible(),
            created_at: m.created_at,
            decided_at: m.decided_at,
        }
    }
}

// ---------------------------------------------------------------------------

pub struct Registry {
    state: RwLock<Arc<State>>,
    writer: Mutex<StoreLog>,
    planner: PlannerConfig,
    model: Option<Arc<dyn ToolCallProtocol>>,
}

impl Registry {
    /// A registry that persists nothing.
    pub fn in_memory(planner: PlannerConfig) -> Registry {
        Registry {
            state: RwLock::new(Arc::new(State::default())),
            writer: Mutex::new(StoreLog::Memory),
            planner,
            model: None,
        }
    }

    /// Opens the log at `path` and replays it.
    pub fn open(path: &Path, planner: PlannerConfig) -> Result<Registry, RegistryError> {
        let (log, entries) = StoreLog::open(path)?;
        let state = State::replay(&entries).map_err(|detail| LogError::Corrupt { line: 0, detail })?;
        Ok(Registry {
            state: RwLock::new(Arc::new(state)),
            writer: Mutex::new(log),
            planner,
            model: None,
        })
    }

    /// Uses `client` for the model engine instead of the configured endpoint.
    pub fn with_model_client(mut self, client: Arc<dyn ToolCallProtocol>) -> Registry {
        self.model = Some(client);
        self
    }

    pub fn planner_config(&self) -> &PlannerConfig {
        &self.planner
    }

    pub fn snapshot(&self) -> Arc<State> {
        self.state.read().clone()
    }

    /// Appends `event` and publishes the resulting state. Caller holds the
    /// writer lock.
    fn commit(&self, log: &mut StoreLog, event: Event) -> Result<Arc<State>, RegistryError> {
        let current = self.snapshot();
        let entry = LogEntry {
            seq: current.last_seq + 1,
            at: Utc::now(),
            event,
        };
        let mut next = (*current).clone();
        next.apply(&entry).map_err(|detail| LogError::Corrupt { line: 0, detail })?;
        log.append(&entry)?;
        let next = Arc::new(next);
        *self.state.write() = next.clone();
        Ok(next)
    }

    fn stored(&self, state: &State, id: u32) -> Result<StoredSchema, RegistryError> {
        state.schema(id).cloned().ok_or(RegistryError::UnknownSchema(id))
    }

    // -- schemas -----------------------------------------------------------

    pub fn register_schema(&self, subject: &str, document: &str) -> Result<Registration, RegistryError> {
        let schema = parse_schema(document)?;
        if schema.subject != subject {
            return Err(RegistryError::SubjectMismatch {
                subject: subject.into(),
                declared: schema.subject,
            });
        }
        let fp = fingerprint(&schema);
        let mut log = self.writer.lock();
        let state = self.snapshot();
        if let Some(s) = state.versions(subject).into_iter().find(|s| s.id.fingerprint == fp) {
            return Ok(Registration {
                id: s.id.id,
                fingerprint: fp,
                subject: subject.into(),
                version: s.schema.version,
                created: false,
            });
        }
        let latest = state.latest(subject);
        let expected = latest.map_or(1, |s| s.schema.version + 1);
        if schema.version != expected {
            return Err(RegistryError::VersionOutOfSequence {
                subject: subject.into(),
                declared: schema.version,
                expected,
            });
        }
        if let Some(prev) = latest {
            let report = check_structural_compat(&prev.schema, &schema, state.mode(subject));
            if !report.is_compatible() {
                return Err(RegistryError::Incompatible(report));
            }
        }
        let id = state.next_id();
        self.commit(
            &mut log,
            Event::SchemaRegistered {
                id,
                subject: subject.into(),
                version: schema.version,
                fingerprint: fp,
                document: document.into(),
            },
        )?;
        Ok(Registration {
            id,
            fingerprint: fp,
            subject: subject.into(),
            version: schema.version,
            created: true,
        })
    }

    /// Dry-run of the registration compatibility check.
    pub fn check_compat(&self, subject: &str, document: &str) -> Result<CompatReport, RegistryError> {
        let schema = parse_schema(document)?;
        let state = self.snapshot();
        let mode = state.mode(subject);
        Ok(match state.latest(subject) {
            Some(prev) => check_structural_compat(&prev.schema, &schema, mode),
            None => CompatReport {
                mode,
                violations: Vec::new(),
            },
        })
    }

    pub fn set_mode(&self, subject: &str, mode: CompatibilityMode) -> Result<(), RegistryError> {
        let mut log = self.writer.lock();
        self.commit(
            &mut log,
            Event::ConfigChanged {
                subject: subject.into(),
                mode,
            },
        )?;
        Ok(())
    }

    pub fn mode(&self, subject: &str) -> CompatibilityMode {
        self.snapshot().mode(subject)
    }

    pub fn subjects(&self) -> Vec<String> {
        self.snapshot().subjects()
    }

    pub fn schema(&self, id: u32) -> Result<SchemaView, RegistryError> {
        Ok(SchemaView::from(&self.stored(&self.snapshot(), id)?))
    }

    pub fn schema_version(&self, subject: &str, version: u32) -> Result<SchemaView, RegistryError> {
        let state = self.snapshot();
        if state.versions(subject).is_empty() {
            return Err(RegistryError::UnknownSubject(subject.into()));
        }
        state.version(subject, version).map(SchemaView::from).ok_or(RegistryError::UnknownVersion {
            subject: subject.into(),
            version,
        })
    }

    pub fn versions(&self, subject: &str) -> Result<Vec<SchemaView>, RegistryError> {
        let state = self.snapshot();
        let v: Vec<_> = state.versions(subject).into_iter().map(SchemaView::from).collect();
        if v.is_empty() {
            return Err(RegistryError::UnknownSubject(subject.into()));
        }
        Ok(v)
    }

    // -- mappings ----------------------------------------------------------

    fn plan(
        &self,
        engine: Engine,
        program: Option<&str>,
        source: &StoredSchema,
        target: &StoredSchema,
    ) -> Result<(StlProgram, Vec<Diagnostic>), RegistryError> {
        let (s, t) = (&source.schema, &target.schema);
        match engine {
            Engine::Heuristic => {
                let p = plan_heuristic(s, t, &self.planner);
                let d = validate_program(&p, s, t);
                Ok((p, d))
            }
            Engine::Manual => {
                let p = parse_program(program.ok_or(RegistryError::ProgramRequired)?)?;
                let d = validate_program(&p, s, t);
                Ok((p, d))
            }
            Engine::Model => {
                let outcome = match &self.model {
                    Some(client) => plan_with_model(client.as_ref(), s, t, &self.planner)?,
                    None => plan_with_model(&HttpToolClient::from_config(&self.planner)?, s, t, &self.planner)?,
                };
                Ok((outcome.program, outcome.diagnostics))
            }
        }
    }

    /// Plans a mapping and stores it as pending. Planning may block on a
    /// model call and runs outside the writer lock.
    pub fn create_mapping(
        &self,
        source_id: u32,
        target_id: u32,
        engine: Engine,
        program: Option<&str>,
    ) -> Result<MappingRecord, RegistryError> {
        let state = self.snapshot();
        let source = self.stored(&state, source_id)?;
        let target = self.stored(&state, target_id)?;
        if state.live_mapping(source_id, target_id).is_some() {
            return Err(RegistryError::MappingExists(source_id, target_id));
        }
        let (program, diagnostics) = self.plan(engine, program, &source, &target)?;
        let mut log = self.writer.lock();
        if self.snapshot().live_mapping(source_id, target_id).is_some() {
            return Err(RegistryError::MappingExists(source_id, target_id));
        }
        let state = self.commit(
            &mut log,
            Event::MappingCreated {
                source_id,
                target_id,
                engine,
                program: serialize_program(&program),
                diagnostics,
            },
        )?;
        Ok(state.live_mapping(source_id, target_id).cloned().expect("just created"))
    }

    pub fn mapping(&self, source_id: u32, target_id: u32) -> Result<MappingRecord, RegistryError> {
        self.snapshot()
            .latest_mapping(source_id, target_id)
            .cloned()
            .ok_or(RegistryError::NoMapping(source_id, target_id))
    }

    pub fn decide_mapping(&self, source_id: u32, target_id: u32, decision: Decision) -> Result<MappingRecord, RegistryError> {
        let mut log = self.writer.lock();
        let state = self.snapshot();
        let m = state
            .live_mapping(source_id, target_id)
            .filter(|m| m.status == MappingStatus::Pending)
            .ok_or(RegistryError::NoPendingMapping(source_id, target_id))?;
        if decision == Decision::Approve {
            if let Some(d) = m.diagnostics.first() {
                return Err(RegistryError::Unapprovable(format!("{} diagnostics, first: {d}", m.diagnostics.len())));
            }
            if m.program.has_missing() {
                return Err(RegistryError::Unapprovable("program contains MISSING".into()));
            }
            if m.program.is_abort() {
                return Err(RegistryError::Unapprovable(format!(
                    "schemas describe different entities: {}",
                    m.program.header.reason
                )));
            }
        }
        let state = self.commit(
            &mut log,
            Event::MappingDecided {
                source_id,
                target_id,
                decision,
            },
        )?;
        Ok(state.latest_mapping(source_id, target_id).cloned().expect("just decided"))
    }

    fn approved(&self, state: &State, source_id: u32, target_id: u32) -> Result<MappingRecord, RegistryError> {
        state
            .live_mapping(source_id, target_id)
            .filter(|m| m.status == MappingStatus::Approved)
            .cloned()
            .ok_or(RegistryError::NoApprovedMapping(source_id, target_id))
    }

    /// Compiles an approved mapping with the named backend.
    pub fn compile(&self, source_id: u32, target_id: u32, backend: &str) -> Result<CompiledArtifact, RegistryError> {
        let state = self.snapshot();
        let source = self.stored(&state, source_id)?;
        let target = self.stored(&state, target_id)?;
        let m = self.approved(&state, source_id, target_id)?;
        Ok(compile(&m.program, &source.schema, &target.schema, backend)?)
    }

    // -- data path ---------------------------------------------------------

    /// Translates a framed record for a consumer reading `consumer_id`.
    /// Frames already carrying the consumer's id pass through unchanged.
    pub fn transform_framed(&self, message: &[u8], consumer_id: u32) -> Result<Vec<u8>, RegistryError> {
        let frame = FramedMessage::decode(message)?;
        let state = self.snapshot();
        let target = self.stored(&state, consumer_id)?;
        if frame.schema_id == consumer_id {
            return Ok(message.to_vec());
        }
        let source = self.stored(&state, frame.schema_id)?;
        let m = self.approved(&state, frame.schema_id, consumer_id)?;
        let record = Record::parse(&frame.payload).map_err(|source| RegistryError::Payload {
            id: frame.schema_id,
            source,
        })?;
        let out = transform(&m.program, &record, &source.schema, &target.schema).map_err(|source| {
            RegistryError::Transform {
                from: frame.schema_id,
                to: consumer_id,
                source,
            }
        })?;
        Ok(FramedMessage::new(consumer_id, out.to_line()).encode())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const V1: &str = "subject: motion\nversion: 1\nfields:\n  - {name: status, type: enum, variants: [active, inactive]}\n  - {name: battery_pct, type: integer}\n";
    const V2: &str = "subject: motion\nversion: 2\nfields:\n  - {name: status, type: enum, variants: [active, inactive]}\n  - {name: battery_pct, type: integer}\n  - {name: room, type: string, optional: true}\n";

    fn reg() -> Registry {
        Registry::in_memory(PlannerConfig::default())
    }

    #[test]
    fn registration_is_idempotent_and_sequential() {
        let r = reg();
        let a = r.register_schema("motion", V1).unwrap();
        let b = r.register_schema("motion", V1).unwrap();
        assert_eq!((a.id, a.version, a.created), (1, 1, true));
        assert_eq!((b.id, b.created), (1, false));
        let c = r.register_schema("motion", V2).unwrap();
        assert_eq!((c.id, c.version), (2, 2));
        assert!(matches!(
            r.register_schema("motion", &V2.replace("version: 2", "version: 5")),
            Err(RegistryError::VersionOutOfSequence { expected: 3, .. })
        ));
        assert!(matches!(r.register_schema("door", V1), Err(RegistryError::SubjectMismatch { .. })));
    }

    #[test]
    fn backward_mode_rejects_required_additions() {
        let r = reg();
        r.register_schema("motion", V1).unwrap();
        let bad = V2.replace(", optional: true", "");
        let err = r.register_schema("motion", &bad).unwrap_err();
        match err {
            RegistryError::Incompatible(rep) => assert_eq!(rep.violations[0].path, "room"),
            other => panic!("{other}"),
        }
        assert!(!r.check_compat("motion", &bad).unwrap().is_compatible());
        r.set_mode("motion", CompatibilityMode::Semantic).unwrap();
        assert_eq!(r.register_schema("motion", &bad).unwrap().version, 2);
    }

    #[test]
    fn mapping_lifecycle() {
        let r = reg();
        let v1 = r.register_schema("motion", V1).unwrap().id;
        let v2 = r.register_schema("motion", V2).unwrap().id;
        let m = r.create_mapping(v2, v1, Engine::Heuristic, None).unwrap();
        assert_eq!(m.status, MappingStatus::Pending);
        assert!(m.diagnostics.is_empty(), "{:?}", m.diagnostics);
        assert!(matches!(r.create_mapping(v2, v1, Engine::Heuristic, None), Err(RegistryError::MappingExists(..))));
        assert!(matches!(r.compile(v2, v1, "portable"), Err(RegistryError::NoApprovedMapping(..))));
        let m = r.decide_mapping(v2, v1, Decision::Approve).unwrap();
        assert_eq!(m.status, MappingStatus::Approved);
        assert!(m.decided_at.is_some());
        assert!(matches!(r.decide_mapping(v2, v1, Decision::Reject), Err(RegistryError::NoPendingMapping(..))));
        assert_eq!(r.compile(v2, v1, "portable").unwrap().media_type, "text/x-stl");
        assert!(matches!(r.create_mapping(9, v1, Engine::Heuristic, None), Err(RegistryError::UnknownSchema(9))));
    }

    #[test]
    fn missing_blocks_approval_and_reject_allows_recreate() {
        let r = reg();
        let v1 = r.register_schema("motion", V1).unwrap().id;
        let v2 = r.register_schema("motion", V2).unwrap().id;
        let doc = "source: {subject: motion, version: 1}\ntarget: {subject: motion, version: 2}\nmatch: {same_entity: true, reason: same}\ncommands:\n  - copy: {source: status, target: status}\n  - missing: {target: battery_pct, reason: unknown}\n";
        let m = r.create_mapping(v1, v2, Engine::Manual, Some(doc)).unwrap();
        assert!(!m.semantic_compatible());
        assert!(matches!(r.decide_mapping(v1, v2, Decision::Approve), Err(RegistryError::Unapprovable(_))));
        r.decide_mapping(v1, v2, Decision::Reject).unwrap();
        assert_eq!(r.mapping(v1, v2).unwrap().status, MappingStatus::Rejected);
        let again = r.create_mapping(v1, v2, Engine::Heuristic, None).unwrap();
        assert_eq!(again.status, MappingStatus::Pending);
        assert!(matches!(r.create_mapping(v1, v2, Engine::Manual, None), Err(RegistryError::MappingExists(..))));
    }

    #[test]
    fn unrelated_subjects_get_an_abort_program() {
        let r = reg();
        let a = r.register_schema("motion", V1).unwrap().id;
        let other = "subject: invoice\nversion: 1\ndoc: billing line items\nfields:\n  - {name: amount_cents, type: integer}\n";
        let b = r.register_schema("invoice", other).unwrap().id;
        let m = r.create_mapping(a, b, Engine::Heuristic, None).unwrap();
        assert!(m.program.is_abort());
        assert!(!m.semantic_compatible());
        assert!(matches!(r.decide_mapping(a, b, Decision::Approve), Err(RegistryError::Unapprovable(_))));
    }

    #[test]
    fn framed_transform() {
        let r = reg();
        let v1 = r.register_schema("motion", V1).unwrap().id;
        let v2 = r.register_schema("motion", V2).unwrap().id;
        let msg = FramedMessage::new(v2, r#"{"status":"active","battery_pct":80,"room":"hall"}"#).encode();
        assert!(matches!(r.transform_framed(&msg, v1), Err(RegistryError::NoApprovedMapping(..))));
        r.create_mapping(v2, v1, Engine::Heuristic, None).unwrap();
        r.decide_mapping(v2, v1, Decision::Approve).unwrap();
        let out = r.transform_framed(&msg, v1).unwrap();
        let frame = FramedMessage::decode(&out).unwrap();
        assert_eq!(frame.schema_id, v1);
        assert_eq!(frame.payload, r#"{"battery_pct":80,"status":"active"}"#);
        assert_eq!(r.transform_framed(&out, v1).unwrap(), out);
        let mut bad = msg.clone();
        bad[0] = 0;
        assert!(matches!(r.transform_framed(&bad, v1), Err(RegistryError::Frame(FrameError::BadMagic(0)))));
        let unknown = FramedMessage::new(42, "{}").encode();
        assert!(matches!(r.transform_framed(&unknown, v1), Err(RegistryError::UnknownSchema(42))));
    }

    #[test]
    fn reopened_store_has_equal_state() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("store.log");
        let r = Registry::open(&path, PlannerConfig::default()).unwrap();
        let v1 = r.register_schema("motion", V1).unwrap().id;
        let v2 = r.register_schema("motion", V2).unwrap().id;
        r.set_mode("motion", CompatibilityMode::Full).unwrap();
        r.create_mapping(v2, v1, Engine::Heuristic, None).unwrap();
        r.decide_mapping(v2, v1, Decision::Approve).unwrap();
        let before = r.snapshot();
        drop(r);
        let again = Registry::open(&path, PlannerConfig::default()).unwrap();
        assert_eq!(*again.snapshot(), *before);
        assert_eq!(again.register_schema("motion", V1).unwrap().id, v1);
    }
}
