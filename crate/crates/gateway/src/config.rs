//! Gateway configuration: a TOML file plus `AVR_*` environment overrides.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::time::Duration;

use avr_core::confidence::DEFAULT_FLOOR;
use avr_core::memory::{DEFAULT_K, DEFAULT_TOKEN_BUDGET};
use avr_core::pool::ModelPool;
use avr_core::routing::RoutingPolicy;
use avr_core::safety::DEFAULT_TAU_RISK;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parsing config: {0}")]
    Parse(String),
    #[error("environment variable {name}: {reason}")]
    Env { name: String, reason: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MemoryConfig {
    /// Log file; memories are kept in process only when absent.
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_budget")]
    pub token_budget: usize,
    /// Also insert memories into escalated requests.
    #[serde(default)]
    pub inject_on_escalation: bool,
}

fn default_k() -> usize {
    DEFAULT_K
}

fn default_budget() -> usize {
    DEFAULT_TOKEN_BUDGET
}

impl Default for MemoryConfig {
    fn default() -> Self {
        MemoryConfig {
            path: None,
            k: DEFAULT_K,
            token_budget: DEFAULT_TOKEN_BUDGET,
            inject_on_escalation: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EmbedderKind {
    #[default]
    Stub,
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedderConfig {
    #[serde(default)]
    pub kind: EmbedderKind,
    #[serde(default)]
    pub url: String,
    #[serde(default = "default_embed_timeout")]
    pub timeout_ms: u64,
}

fn default_embed_timeout() -> u64 {
    5_000
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Stub,
            url: String::new(),
            timeout_ms: default_embed_timeout(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KbConfig {
    pub kb_path: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    #[serde(default = "default_listen")]
    pub listen: SocketAddr,
    pub pool: ModelPool,
    #[serde(default)]
    pub routing: RoutingPolicy,
    #[serde(default = "default_floor")]
    pub confidence_floor: f64,
    #[serde(default = "default_tau_risk")]
    pub tau_risk: f64,
    pub difficulty: KbConfig,
    pub safety: KbConfig,
    #[serde(default)]
    pub memory: MemoryConfig,
    #[serde(default)]
    pub embedder: EmbedderConfig,
    #[serde(default = "default_probe_tokens")]
    pub max_probe_tokens: u32,
    #[serde(default = "default_backend_timeout")]
    pub backend_timeout_ms: u64,
    #[serde(default = "default_max_concurrent")]
    pub max_concurrent: usize,
    #[serde(default = "default_log_level")]
    pub log_level: String,
}

fn default_listen() -> SocketAddr {
    SocketAddr::from(([127, 0, 0, 1], 8080))
}

fn default_floor() -> f64 {
    DEFAULT_FLOOR
}

fn default_tau_risk() -> f64 {
    DEFAULT_TAU_RISK
}

fn default_probe_tokens() -> u32 {
    128
}

fn default_backend_timeout() -> u64 {
    30_000
}

fn default_max_concurrent() -> usize {
    64
}

fn default_log_level() -> String {
    "info".into()
}

fn parse_env<T: std::str::FromStr>(name: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::Env {
        name: name.to_string(),
        reason: e.to_string(),
    })
}

impl GatewayConfig {
    /// A config with every optional setting at its default.
    pub fn new(pool: ModelPool, difficulty_kb: impl Into<PathBuf>, safety_kb: impl Into<PathBuf>) -> Self {
        GatewayConfig {
            listen: default_listen(),
            pool,
            routing: RoutingPolicy::default(),
            confidence_floor: default_floor(),
            tau_risk: default_tau_risk(),
            difficulty: KbConfig { kb_path: difficulty_kb.into() },
            safety: KbConfig { kb_path: safety_kb.into() },
            memory: MemoryConfig::default(),
            embedder: EmbedderConfig::default(),
            max_probe_tokens: default_probe_tokens(),
            backend_timeout_ms: default_backend_timeout(),
            max_concurrent: default_max_concurrent(),
            log_level: default_log_level(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    /// Reads `path`, resolving relative file paths against its directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let resolve = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        resolve(&mut cfg.difficulty.kb_path);
        resolve(&mut cfg.safety.kb_path);
        if let Some(p) = cfg.memory.path.as_mut() {
            resolve(p);
        }
        Ok(cfg)
    }

    /// Applies `AVR_*` overrides from `vars`.
    pub fn apply_env<I: IntoIterator<Item = (String, String)>>(&mut self, vars: I) -> Result<(), ConfigError> {
        for (name, value) in vars {
            match name.as_str() {
                "AVR_LISTEN" => self.listen = parse_env(&name, &value)?,
                "AVR_MAX_CONCURRENT" => self.max_concurrent = parse_env(&name, &value)?,
                "AVR_CONFIDENCE_FLOOR" => self.confidence_floor = parse_env(&name, &value)?,
                "AVR_TAU_RISK" => self.tau_risk = parse_env(&name, &value)?,
                "AVR_PREROUTE" => self.routing.preroute_enabled = parse_env(&name, &value)?,
                "AVR_MAX_PROBE_TOKENS" => self.max_probe_tokens = parse_env(&name, &value)?,
                "AVR_BACKEND_TIMEOUT_MS" => self.backend_timeout_ms = parse_env(&name, &value)?,
                "AVR_DIFFICULTY_KB" => self.difficulty.kb_path = value.into(),
                "AVR_SAFETY_KB" => self.safety.kb_path = value.into(),
                "AVR_MEMORY_PATH" => self.memory.path = Some(value.into()),
                "AVR_EMBEDDER_URL" => {
                    self.embedder.kind = EmbedderKind::Remote;
                    self.embedder.url = value;
                }
                "AVR_LOG_LEVEL" => self.log_level = value,
                _ => {}
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |m: String| Err(ConfigError::Invalid(m));
        if self.pool.len() < 2 {
            return invalid("the pool needs at least two models".into());
        }
        if !self.pool.smallest().supports_logprobs {
            return invalid(format!(
                "smallest model {} must support logprobs for confidence probes",
                self.pool.smallest().model_id
            ));
        }
        if !(self.confidence_floor < 0.0 && self.confidence_floor.is_finite()) {
            return invalid(format!("confidence_floor must be negative, got {}", self.confidence_floor));
        }
        if !(0.0..=1.0).contains(&self.tau_risk) {
            return invalid(format!("tau_risk must be in [0, 1], got {}", self.tau_risk));
        }
        if self.max_concurrent == 0 || self.max_probe_tokens == 0 || self.memory.k == 0 {
            return invalid("max_concurrent, max_probe_tokens and memory.k must be positive".into());
        }
        for p in [&self.difficulty.kb_path, &self.safety.kb_path] {
            if !p.is_file() {
                return invalid(format!("knowledge base {} does not exist", p.display()));
            }
        }
        if self.embedder.kind == EmbedderKind::Remote && self.embedder.url.is_empty() {
            return invalid("remote embedder needs a url".into());
        }
        Ok(())
    }

    pub fn backend_timeout(&self) -> Duration {
        Duration::from_millis(self.backend_timeout_ms)
    }
}
