use std::sync::Arc;

use gse_core::planner::PlannerConfig;
use gse_core::registry::{FramedMessage, Registry};
use serde_json::{json, Value};

const V1: &str = include_str!("../../../fixtures/motion/v1.schema.yaml");
const V2: &str = include_str!("../../../fixtures/motion/v2.schema.yaml");

async fn start() -> String {
    let reg = Arc::new(Registry::in_memory(PlannerConfig::default()));
    let (addr, _) = gse_server::spawn(reg, "127.0.0.1:0").await.unwrap();
    format!("http://{addr}")
}

#[tokio::test]
async fn registry_over_http() {
    let base = start().await;
    let http = reqwest::Client::new();
    let url = |p: &str| format!("{base}{p}");

    let r = http.post(url("/subjects/motion/versions")).body(V1).send().await.unwrap();
    assert_eq!(r.status(), 201);
    let v1: Value = r.json().await.unwrap();
    let r = http.post(url("/subjects/motion/versions")).body(V1).send().await.unwrap();
    assert_eq!(r.status(), 200);
    assert_eq!(r.json::<Value>().await.unwrap()["id"], v1["id"]);

    let r = http.post(url("/subjects/motion/versions")).body(V2).send().await.unwrap();
    assert_eq!(r.status(), 409);
    let err: Value = r.json().await.unwrap();
    assert_eq!(err["error"], "incompatible");
    assert!(!err["report"]["violations"].as_array().unwrap().is_empty());

    let r = http.put(url("/config/motion")).json(&json!({"compatibility": "SEMANTIC"})).send().await.unwrap();
    assert_eq!(r.status(), 200);
    let v2: Value = http.post(url("/subjects/motion/versions")).body(V2).send().await.unwrap().json().await.unwrap();
    let (id1, id2) = (v1["id"].as_u64().unwrap() as u32, v2["id"].as_u64().unwrap() as u32);

    let subjects: Value = http.get(url("/subjects")).send().await.unwrap().json().await.unwrap();
    assert_eq!(subjects, json!(["motion"]));
    let doc: Value = http.get(url("/subjects/motion/versions/2")).send().await.unwrap().json().await.unwrap();
    assert_eq!(doc["id"], id2);
    let by_id: Value = http.get(url(&format!("/schemas/{id1}"))).send().await.unwrap().json().await.unwrap();
    assert_eq!(by_id["document"], V1);
    assert_eq!(http.get(url("/schemas/99")).send().await.unwrap().status(), 404);

    let r = http
        .post(url("/mappings"))
        .json(&json!({"source_id": id2, "target_id": id1, "engine": "heuristic"}))
        .send()
        .await
        .unwrap();
    assert_eq!(r.status(), 201);
    let m: Value = r.json().await.unwrap();
    assert_eq!(m["status"], "pending");
    assert_eq!(m["semantic_compatible"], true);

    let path = format!("/mappings/{id2}/{id1}");
    let r = http.post(url(&format!("{path}/compile"))).json(&json!({"backend": "sql-view"})).send().await.unwrap();
    assert_eq!(r.status(), 409);
    let r = http.post(url(&format!("{path}/decision"))).json(&json!({"decision": "approve"})).send().await.unwrap();
    assert_eq!(r.json::<Value>().await.unwrap()["status"], "approved");
    let art: Value = http
        .post(url(&format!("{path}/compile")))
        .json(&json!({"backend": "sql-view"}))
        .send()
        .await
        .unwrap()
        .json()
        .await
        .unwrap();
    assert_eq!(art["media_type"], "text/x-sql");
    let r = http.post(url(&format!("{path}/compile"))).json(&json!({"backend": "flink"})).send().await.unwrap();
    assert_eq!(r.status(), 400);

    let frame = FramedMessage::new(
        id2,
        r#"{"motion":true,"duration_ms":1500,"state":"Active","temp_c":20,"battery_pct":90,"ts":1}"#,
    )
    .encode();
    let post = |body: Vec<u8>, consumer: Option<u32>| {
        let mut req = http.post(url("/transform")).body(body);
        if let Some(c) = consumer {
            req = req.header("X-Consumer-Schema-Id", c.to_string());
        }
        req.send()
    };
    let r = post(frame.clone(), Some(id1)).await.unwrap();
    assert_eq!(r.status(), 200);
    let out = r.bytes().await.unwrap().to_vec();
    let decoded = FramedMessage::decode(&out).unwrap();
    assert_eq!(decoded.schema_id, id1);
    assert_eq!(
        decoded.payload,
        r#"{"battery_pct":90,"duration_s":1.5,"movement":true,"status":"active","temp_f":68.0}"#
    );
    assert_eq!(post(out.clone(), Some(id1)).await.unwrap().bytes().await.unwrap().to_vec(), out);
    assert_eq!(post(frame.clone(), None).await.unwrap().status(), 400);
    let mut bad = frame.clone();
    bad[0] = 0;
    let r = post(bad, Some(id1)).await.unwrap();
    assert_eq!(r.status(), 400);
    assert_eq!(r.json::<Value>().await.unwrap()["error"], "framing");
    let r = post(frame, Some(id2 + 10)).await.unwrap();
    assert_eq!(r.status(), 404);
}
