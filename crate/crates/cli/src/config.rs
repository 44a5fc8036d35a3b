//! File and environment configuration.
//!
//! ```toml
//! [server]
//! bind = "127.0.0.1:8080"
//! database_dir = "spider/database"
//! kb_path = "kb.jsonl"
//!
//! [gateway]
//! kind = "remote"
//! endpoint = "http://127.0.0.1:8000/v1/chat/completions"
//! model = "sqlfuse-33b"
//!
//! [pipeline.generation]
//! n_candidates = 4
//! max_turns = 2
//! ```

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use nl2sql::gateway::RemoteConfig;
use nl2sql::PipelineConfig;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GatewayKind {
    /// Rule-scripted responses read from `rules`.
    #[default]
    Scripted,
    Remote,
    /// Answers each benchmark question with its gold SQL. Evaluation only.
    GoldEcho,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GatewayConfig {
    pub kind: GatewayKind,
    pub rules: Option<PathBuf>,
    #[serde(flatten)]
    pub remote: RemoteConfig,
}

impl GatewayConfig {
    /// Parses a `--gateway` argument: `gold-echo`, a `.json` rule file, or a
    /// TOML file holding the keys of a `[gateway]` table.
    pub fn from_arg(arg: &str) -> Result<Self> {
        if arg == "gold-echo" {
            return Ok(Self {
                kind: GatewayKind::GoldEcho,
                ..Default::default()
            });
        }
        let path = Path::new(arg);
        if path.extension().is_some_and(|e| e == "json") {
            return Ok(Self {
                kind: GatewayKind::Scripted,
                rules: Some(path.to_path_buf()),
                ..Default::default()
            });
        }
        let text = std::fs::read_to_string(path).with_context(|| format!("reading gateway config {arg}"))?;
        let mut cfg: GatewayConfig = toml::from_str(&text).with_context(|| format!("parsing {arg}"))?;
        if let (Some(rules), Some(dir)) = (&cfg.rules, path.parent()) {
            if rules.is_relative() {
                cfg.rules = Some(dir.join(rules));
            }
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    pub database_dir: Option<PathBuf>,
    pub kb_path: Option<PathBuf>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            database_dir: None,
            kb_path: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AppConfig {
    pub server: ServerConfig,
    pub gateway: GatewayConfig,
    pub pipeline: PipelineConfig,
}

pub const ENV_PREFIX: &str = "NL2SQL_";

impl AppConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: AppConfig = toml::from_str(text)?;
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    /// Reads `path` (if any), then applies `NL2SQL_*` environment overrides.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                Self::from_toml(&text).with_context(|| format!("parsing {}", p.display()))?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    /// Overrides from variables such as `NL2SQL_BIND` or `NL2SQL_MODEL`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<()> {
        let get = |name: &str| var(&format!("{ENV_PREFIX}{name}"));
        if let Some(v) = get("BIND") {
            self.server.bind = v;
        }
        if let Some(v) = get("DATABASE_DIR") {
            self.server.database_dir = Some(v.into());
        }
        if let Some(v) = get("KB_PATH") {
            self.server.kb_path = Some(v.into());
        }
        if let Some(v) = get("GATEWAY") {
            self.gateway.kind = match v.as_str() {
                "scripted" => GatewayKind::Scripted,
                "remote" => GatewayKind::Remote,
                "gold_echo" | "gold-echo" => GatewayKind::GoldEcho,
                other => bail!("{ENV_PREFIX}GATEWAY: unknown gateway kind `{other}`"),
            };
        }
        if let Some(v) = get("GATEWAY_RULES") {
            self.gateway.rules = Some(v.into());
        }
        if let Some(v) = get("ENDPOINT") {
            self.gateway.remote.endpoint = v;
        }
        if let Some(v) = get("API_KEY") {
            self.gateway.remote.api_key = Some(v);
        }
        if let Some(v) = get("MODEL") {
            self.gateway.remote.model = v;
        }
        if let Some(v) = get("N_CANDIDATES") {
            self.pipeline.generation.n_candidates =
                v.parse().with_context(|| format!("{ENV_PREFIX}N_CANDIDATES: `{v}`"))?;
        }
        if let Some(v) = get("MAX_TURNS") {
            self.pipeline.generation.max_turns =
                v.parse().with_context(|| format!("{ENV_PREFIX}MAX_TURNS: `{v}`"))?;
        }
        self.pipeline.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn toml_sections() {
        let cfg = AppConfig::from_toml(
            r#"
            [server]
            bind = "0.0.0.0:9000"
            [gateway]
            kind = "remote"
            model = "m1"
            max_retries = 5
            [pipeline.generation]
            n_candidates = 2
            "#,
        )
        .unwrap();
        assert_eq!(cfg.server.bind, "0.0.0.0:9000");
        assert_eq!(cfg.gateway.kind, GatewayKind::Remote);
        assert_eq!(cfg.gateway.remote.model, "m1");
        assert_eq!(cfg.gateway.remote.max_retries, 5);
        assert_eq!(cfg.pipeline.generation.n_candidates, 2);
        assert_eq!(cfg.pipeline.generation.max_turns, 2);
    }

    #[test]
    fn invalid_pipeline_rejected() {
        assert!(AppConfig::from_toml("[pipeline]\nrecall_threshold = 0.0\n").is_err());
    }

    #[test]
    fn env_overrides() {
        let vars: HashMap<&str, &str> = [
            ("NL2SQL_BIND", "127.0.0.1:1"),
            ("NL2SQL_MODEL", "m2"),
            ("NL2SQL_MAX_TURNS", "3"),
            ("NL2SQL_GATEWAY", "gold-echo"),
        ]
        .into();
        let mut cfg = AppConfig::default();
        cfg.apply_env(|k| vars.get(k).map(|v| v.to_string())).unwrap();
        assert_eq!(cfg.server.bind, "127.0.0.1:1");
        assert_eq!(cfg.gateway.remote.model, "m2");
        assert_eq!(cfg.pipeline.generation.max_turns, 3);
        assert_eq!(cfg.gateway.kind, GatewayKind::GoldEcho);

        let mut cfg = AppConfig::default();
        assert!(cfg.apply_env(|k| (k == "NL2SQL_MAX_TURNS").then(|| "0".into())).is_err());
    }

    #[test]
    fn gateway_arg_forms() {
        assert_eq!(GatewayConfig::from_arg("gold-echo").unwrap().kind, GatewayKind::GoldEcho);
        let json = GatewayConfig::from_arg("rules.json").unwrap();
        assert_eq!(json.rules.as_deref(), Some(Path::new("rules.json")));

        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gw.toml");
        std::fs::write(&p, "kind = \"scripted\"\nrules = \"r.json\"\n").unwrap();
        let cfg = GatewayConfig::from_arg(p.to_str().unwrap()).unwrap();
        assert_eq!(cfg.rules, Some(dir.path().join("r.json")));
    }
}
