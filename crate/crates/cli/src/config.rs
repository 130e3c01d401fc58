//! Settings merged from the config file, the environment and flags.

use std::path::{Path, PathBuf};

use gse_core::planner::{Engine, PlannerConfig};
use serde::Deserialize;

use crate::CliError;

pub const DEFAULT_CONFIG_FILE: &str = "gse.config";

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub store_path: Option<PathBuf>,
    pub listen_addr: Option<String>,
    pub registry_url: Option<String>,
    pub model_url: Option<String>,
    pub model_key: Option<String>,
    pub engine: Option<Engine>,
    pub backend: Option<String>,
    pub planner: Option<PlannerConfig>,
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct CliConfig {
    pub store_path: Option<PathBuf>,
    pub listen_addr: String,
    pub registry_url: String,
    pub engine: Engine,
    pub backend: String,
    pub planner: PlannerConfig,
}

/// Values given on the command line; `None` means not given.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub registry: Option<String>,
    pub store_path: Option<PathBuf>,
    pub listen_addr: Option<String>,
    pub engine: Option<Engine>,
    pub backend: Option<String>,
}

fn read_file(explicit: Option<&Path>, env: &dyn Fn(&str) -> Option<String>) -> Result<FileConfig, CliError> {
    let (path, required) = match (explicit, env("GSE_CONFIG")) {
        (Some(p), _) => (p.to_path_buf(), true),
        (None, Some(p)) => (PathBuf::from(p), true),
        (None, None) => (PathBuf::from(DEFAULT_CONFIG_FILE), false),
    };
    match std::fs::read_to_string(&path) {
        Ok(text) => toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display()))),
        Err(_) if !required => Ok(FileConfig::default()),
        Err(e) => Err(CliError::Usage(format!("{}: {e}", path.display()))),
    }
}

impl CliConfig {
    pub fn load(flags: &Overrides) -> Result<CliConfig, CliError> {
        let env = |k: &str| std::env::var(k).ok().filter(|v| !v.is_empty());
        CliConfig::resolve(flags, &env)
    }

    /// Precedence, lowest first: defaults, file, environment, flags.
    pub fn resolve(flags: &Overrides, env: &dyn Fn(&str) -> Option<String>) -> Result<CliConfig, CliError> {
        let file = read_file(flags.config.as_deref(), env)?;
        let mut planner = file.planner.clone().unwrap_or_default();
        planner.model_url = env("GSE_MODEL_URL").or(file.model_url).or(planner.model_url);
        planner.model_key = env("GSE_MODEL_KEY").or(file.model_key).or(planner.model_key);
        planner.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        let listen_addr = flags
            .listen_addr
            .clone()
            .or_else(|| env("GSE_LISTEN_ADDR"))
            .or(file.listen_addr)
            .unwrap_or_else(|| gse_server::DEFAULT_LISTEN_ADDR.to_string());
        let registry_url = flags
            .registry
            .clone()
            .or_else(|| env("GSE_REGISTRY_URL"))
            .or(file.registry_url)
            .unwrap_or_else(|| format!("http://{listen_addr}"));
        Ok(CliConfig {
            store_path: flags
                .store_path
                .clone()
                .or_else(|| env("GSE_STORE_PATH").map(PathBuf::from))
                .or(file.store_path),
            engine: flags.engine.or(file.engine).unwrap_or(planner.engine),
            backend: flags.backend.clone().or(file.backend).unwrap_or_else(|| "portable".into()),
            listen_addr,
            registry_url,
            planner,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(text: &str) -> (tempfile::TempDir, PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gse.config");
        std::fs::write(&p, text).unwrap();
        (dir, p)
    }

    #[test]
    fn precedence() {
        let (_d, p) = write("listen_addr = \"0.0.0.0:1\"\nengine = \"model\"\nmodel_url = \"http://file\"\n[planner]\nrepair_rounds = 3\n");
        let env = |k: &str| match k {
            "GSE_MODEL_URL" => Some("http://env".to_string()),
            "GSE_LISTEN_ADDR" => Some("127.0.0.1:2".to_string()),
            _ => None,
        };
        let flags = Overrides {
            config: Some(p),
            listen_addr: Some("127.0.0.1:3".into()),
            ..Overrides::default()
        };
        let c = CliConfig::resolve(&flags, &env).unwrap();
        assert_eq!(c.listen_addr, "127.0.0.1:3");
        assert_eq!(c.registry_url, "http://127.0.0.1:3");
        assert_eq!(c.planner.model_url.as_deref(), Some("http://env"));
        assert_eq!(c.planner.repair_rounds, 3);
        assert_eq!(c.engine, Engine::Model);
        assert_eq!(c.backend, "portable");
    }

    #[test]
    fn missing_explicit_file_is_a_usage_error() {
        let flags = Overrides {
            config: Some("/nonexistent/gse.config".into()),
            ..Overrides::default()
        };
        assert!(matches!(CliConfig::resolve(&flags, &|_| None), Err(CliError::Usage(_))));
        let (_d, p) = write("bogus = 1\n");
        let flags = Overrides { config: Some(p), ..Overrides::default() };
        assert!(matches!(CliConfig::resolve(&flags, &|_| None), Err(CliError::Usage(_))));
    }
}
