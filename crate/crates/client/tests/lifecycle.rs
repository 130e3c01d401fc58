use std::sync::Arc;

use gse_client::{is_not_found, Client};
use gse_core::planner::{Engine, PlannerConfig};
use gse_core::registry::{Decision, FramedMessage, MappingStatus, Registry};
use gse_core::schema::CompatibilityMode;

const V1: &str = include_str!("../../../fixtures/motion/v1.schema.yaml");
const V2: &str = include_str!("../../../fixtures/motion/v2.schema.yaml");

#[tokio::test]
async fn client_drives_the_service() {
    let reg = Arc::new(Registry::in_memory(PlannerConfig::default()));
    let (addr, _) = gse_server::spawn(reg, "127.0.0.1:0").await.unwrap();
    let c = Client::new(&addr.to_string());
    c.health().await.unwrap();

    let v1 = c.register_schema("motion", V1).await.unwrap();
    assert!(v1.created);
    assert!(!c.check_compat("motion", V2).await.unwrap().is_compatible());
    c.set_mode("motion", CompatibilityMode::Semantic).await.unwrap();
    assert_eq!(c.mode("motion").await.unwrap(), CompatibilityMode::Semantic);
    let v2 = c.register_schema("motion", V2).await.unwrap();
    assert_eq!(c.schema_version("motion", "latest").await.unwrap().id, v2.id);
    assert_eq!(c.versions("motion").await.unwrap().len(), 2);

    let m = c.create_mapping(v2.id, v1.id, Engine::Heuristic, None).await.unwrap();
    assert!(m.diagnostics.is_empty());
    let err = c.create_mapping(v2.id, v1.id, Engine::Heuristic, None).await.unwrap_err();
    assert_eq!(err.code(), Some("mapping-exists"));
    let m = c.decide_mapping(v2.id, v1.id, Decision::Approve).await.unwrap();
    assert_eq!(m.status, MappingStatus::Approved);
    assert_eq!(c.mapping(v2.id, v1.id).await.unwrap(), m);
    let art = c.compile(v2.id, v1.id, "pipeline-expr").await.unwrap();
    assert!(art.body.starts_with("# pipeline-expr"));

    let frame = FramedMessage::new(v2.id, r#"{"motion":false,"duration_ms":20,"state":"Inactive","battery_pct":5,"ts":9}"#);
    let out = c.transform(&frame.encode(), v1.id).await.unwrap();
    assert_eq!(FramedMessage::decode(&out).unwrap().schema_id, v1.id);

    let err = c.schema(77).await.unwrap_err();
    assert!(is_not_found(&err), "{err}");
    assert!(err.to_string().contains("unknown schema id 77"));
}
