//! Thin async client for the registry service.

use gse_core::assembler::CompiledArtifact;
use gse_core::planner::Engine;
use gse_core::registry::{Decision, MappingView, Registration, SchemaView};
use gse_core::schema::{CompatReport, CompatibilityMode};
use reqwest::{RequestBuilder, StatusCode};
use serde::de::DeserializeOwned;
use serde_json::{json, Value};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ClientError {
    #[error("cannot reach registry: {0}")]
    Http(#[from] reqwest::Error),
    /// The service answered with an error body.
    #[error("{message} [{code}]")]
    Api {
        status: u16,
        code: String,
        message: String,
        body: Value,
    },
}

impl ClientError {
    pub fn code(&self) -> Option<&str> {
        match self {
            ClientError::Api { code, .. } => Some(code),
            ClientError::Http(_) => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the service root, e.g. `http://127.0.0.1:8081`.
    pub fn new(base: &str) -> Client {
        let base = base.trim_end_matches('/');
        let base = if base.contains("://") { base.to_string() } else { format!("http://{base}") };
        Client {
            base,
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    async fn send(req: RequestBuilder) -> Result<reqwest::Response, ClientError> {
        let resp = req.send().await?;
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let body: Value = resp.json().await.unwrap_or(Value::Null);
        Err(ClientError::Api {
            status: status.as_u16(),
            code: body["error"].as_str().unwrap_or("http").to_string(),
            message: body["message"]
                .as_str()
                .map(String::from)
                .unwrap_or_else(|| status.canonical_reason().unwrap_or("error").to_string()),
            body,
        })
    }

    async fn json<T: DeserializeOwned>(req: RequestBuilder) -> Result<T, ClientError> {
        Ok(Self::send(req).await?.json().await?)
    }

    pub async fn health(&self) -> Result<(), ClientError> {
        Self::send(self.http.get(self.url("/health"))).await.map(|_| ())
    }

    pub async fn register_schema(&self, subject: &str, document: &str) -> Result<Registration, ClientError> {
        let req = self
            .http
            .post(self.url(&format!("/subjects/{subject}/versions")))
            .header("content-type", "application/yaml")
            .body(document.to_string());
        Self::json(req).await
    }

    pub async fn subjects(&self) -> Result<Vec<String>, ClientError> {
        Self::json(self.http.get(self.url("/subjects"))).await
    }

    pub async fn versions(&self, subject: &str) -> Result<Vec<SchemaView>, ClientError> {
        Self::json(self.http.get(self.url(&format!("/subjects/{subject}/versions")))).await
    }

    /// `version` is a number or `latest`.
    pub async fn schema_version(&self, subject: &str, version: &str) -> Result<SchemaView, ClientError> {
        Self::json(self.http.get(self.url(&format!("/subjects/{subject}/versions/{version}")))).await
    }

    pub async fn schema(&self, id: u32) -> Result<SchemaView, ClientError> {
        Self::json(self.http.get(self.url(&format!("/schemas/{id}")))).await
    }

    pub async fn mode(&self, subject: &str) -> Result<CompatibilityMode, ClientError> {
        let v: Value = Self::json(self.http.get(self.url(&format!("/config/{subject}")))).await?;
        Ok(serde_json::from_value(v["compatibility"].clone()).unwrap_or_default())
    }

    pub async fn set_mode(&self, subject: &str, mode: CompatibilityMode) -> Result<(), ClientError> {
        let req = self
            .http
            .put(self.url(&format!("/config/{subject}")))
            .json(&json!({"compatibility": mode}));
        Self::send(req).await.map(|_| ())
    }

    pub async fn check_compat(&self, subject: &str, document: &str) -> Result<CompatReport, ClientError> {
        let req = self.http.post(self.url(&format!("/compat/{subject}"))).body(document.to_string());
        Self::json(req).await
    }

    pub async fn create_mapping(
        &self,
        source_id: u32,
        target_id: u32,
        engine: Engine,
        program: Option<&str>,
    ) -> Result<MappingView, ClientError> {
        let mut body = json!({"source_id": source_id, "target_id": target_id, "engine": engine});
        if let Some(p) = program {
            body["program"] = json!(p);
        }
        Self::json(self.http.post(self.url("/mappings")).json(&body)).await
    }

    pub async fn mapping(&self, source_id: u32, target_id: u32) -> Result<MappingView, ClientError> {
        Self::json(self.http.get(self.url(&format!("/mappings/{source_id}/{target_id}")))).await
    }

    pub async fn decide_mapping(&self, source_id: u32, target_id: u32, decision: Decision) -> Result<MappingView, ClientError> {
        let req = self
            .http
            .post(self.url(&format!("/mappings/{source_id}/{target_id}/decision")))
            .json(&json!({"decision": decision}));
        Self::json(req).await
    }

    pub async fn compile(&self, source_id: u32, target_id: u32, backend: &str) -> Result<CompiledArtifact, ClientError> {
        let req = self
            .http
            .post(self.url(&format!("/mappings/{source_id}/{target_id}/compile")))
            .json(&json!({"backend": backend}));
        Self::json(req).await
    }

    /// Sends a framed message and returns the frame for `consumer_id`.
    pub async fn transform(&self, frame: &[u8], consumer_id: u32) -> Result<Vec<u8>, ClientError> {
        let req = self
            .http
            .post(self.url("/transform"))
            .header("x-consumer-schema-id", consumer_id.to_string())
            .header("content-type", "application/octet-stream")
            .body(frame.to_vec());
        Ok(Self::send(req).await?.bytes().await?.to_vec())
    }
}

/// True when the error is the service's 404.
pub fn is_not_found(e: &ClientError) -> bool {
    matches!(e, ClientError::Api { status, .. } if *status == StatusCode::NOT_FOUND.as_u16())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_url_normalisation() {
        assert_eq!(Client::new("127.0.0.1:8081/").base_url(), "http://127.0.0.1:8081");
        assert_eq!(Client::new("https://reg.example").base_url(), "https://reg.example");
        assert_eq!(Client::new("http://h:1").url("/subjects"), "http://h:1/subjects");
    }

    #[test]
    fn not_found_detection() {
        let api = |status| ClientError::Api {
            status,
            code: "unknown-schema".into(),
            message: String::new(),
            body: Value::Null,
        };
        assert!(is_not_found(&api(404)));
        assert!(!is_not_found(&api(409)));
        assert_eq!(api(404).code(), Some("unknown-schema"));
    }
}
