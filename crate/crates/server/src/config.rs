use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use votelab_core::engine::EngineConfig;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },
    #[error("{var}: {message}")]
    Env { var: &'static str, message: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MailTransport {
    /// Append each message as a JSON line to `mail.path`.
    File,
    /// Emit messages through the tracing log.
    Log,
    /// Keep messages in memory (tests).
    Memory,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct MailConfig {
    pub transport: MailTransport,
    pub path: PathBuf,
    pub from: String,
}

impl Default for MailConfig {
    fn default() -> Self {
        Self {
            transport: MailTransport::File,
            path: PathBuf::from("./votelab-mail.log"),
            from: "votelab@localhost".into(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    pub bind: SocketAddr,
    /// Bearer token granting operator rights; admin routes are off without it.
    pub admin_token: Option<String>,
    pub cors_origin: Option<String>,
    /// Built web UI assets, served for every path outside `/v1`.
    pub static_dir: Option<PathBuf>,
    pub session_ttl_secs: i64,
    pub code_ttl_secs: i64,
    pub code_max_attempts: u32,
    /// Requests per client IP per minute; 0 disables the cap.
    pub rate_limit_per_minute: u32,
    /// Run the close-and-tally scheduler inside the server.
    pub scheduler: bool,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".parse().unwrap(),
            admin_token: None,
            cors_origin: None,
            static_dir: None,
            session_ttl_secs: 24 * 3600,
            code_ttl_secs: 15 * 60,
            code_max_attempts: 5,
            rate_limit_per_minute: 600,
            scheduler: true,
        }
    }
}

/// The whole config file. `store` and `[engine]` are shared with the CLI.
#[derive(Debug, Clone, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub store: String,
    pub engine: EngineConfig,
    pub server: HttpConfig,
    pub mail: MailConfig,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            store: "./votelab-data".into(),
            engine: EngineConfig::default(),
            server: HttpConfig::default(),
            mail: MailConfig::default(),
        }
    }
}

impl ServerConfig {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let err = |message: String| ConfigError::File {
            path: path.to_path_buf(),
            message,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        Self::from_toml(&text).map_err(|e| err(e.to_string()))
    }

    /// Applies `VOTELAB_*` overrides read through `var`.
    pub fn apply_env(&mut self, var: impl Fn(&str) -> Option<String>) -> Result<(), ConfigError> {
        fn parsed<T: std::str::FromStr>(var: &'static str, value: String) -> Result<T, ConfigError>
        where
            T::Err: std::fmt::Display,
        {
            value.parse().map_err(|e: T::Err| ConfigError::Env {
                var,
                message: e.to_string(),
            })
        }
        if let Some(v) = var("VOTELAB_STORE") {
            self.store = v;
        }
        if let Some(v) = var("VOTELAB_BIND") {
            self.server.bind = parsed("VOTELAB_BIND", v)?;
        }
        if let Some(v) = var("VOTELAB_ADMIN_TOKEN") {
            self.server.admin_token = Some(v);
        }
        if let Some(v) = var("VOTELAB_CORS_ORIGIN") {
            self.server.cors_origin = Some(v);
        }
        if let Some(v) = var("VOTELAB_STATIC_DIR") {
            self.server.static_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = var("VOTELAB_SESSION_TTL_SECS") {
            self.server.session_ttl_secs = parsed("VOTELAB_SESSION_TTL_SECS", v)?;
        }
        if let Some(v) = var("VOTELAB_RATE_LIMIT_PER_MINUTE") {
            self.server.rate_limit_per_minute = parsed("VOTELAB_RATE_LIMIT_PER_MINUTE", v)?;
        }
        if let Some(v) = var("VOTELAB_SCHEDULER_PERIOD_SECS") {
            self.engine.scheduler_period_secs = parsed("VOTELAB_SCHEDULER_PERIOD_SECS", v)?;
        }
        if let Some(v) = var("VOTELAB_IDENTITY_PEPPER") {
            self.engine.identity_pepper = v;
        }
        if let Some(v) = var("VOTELAB_MAIL_TRANSPORT") {
            self.mail.transport = match v.as_str() {
                "file" => MailTransport::File,
                "log" => MailTransport::Log,
                "memory" => MailTransport::Memory,
                other => {
                    return Err(ConfigError::Env {
                        var: "VOTELAB_MAIL_TRANSPORT",
                        message: format!("unknown transport {other:?}"),
                    })
                }
            };
        }
        if let Some(v) = var("VOTELAB_MAIL_PATH") {
            self.mail.path = PathBuf::from(v);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_environment() {
        let mut c = ServerConfig::from_toml(
            r#"
store = "sqlite:/tmp/v.db"
[engine]
scheduler_period_secs = 3
[server]
bind = "0.0.0.0:9000"
session_ttl_secs = 60
[mail]
transport = "log"
"#,
        )
        .unwrap();
        assert_eq!(c.server.bind.port(), 9000);
        assert_eq!(c.engine.scheduler_period_secs, 3);
        assert_eq!(c.mail.transport, MailTransport::Log);
        assert_eq!(c.server.code_ttl_secs, 900);

        let env = |k: &str| match k {
            "VOTELAB_BIND" => Some("127.0.0.1:7000".to_string()),
            "VOTELAB_STORE" => Some("memory:".to_string()),
            _ => None,
        };
        c.apply_env(env).unwrap();
        assert_eq!(c.server.bind.port(), 7000);
        assert_eq!(c.store, "memory:");
        assert_eq!(c.server.session_ttl_secs, 60);

        let bad = |k: &str| (k == "VOTELAB_BIND").then(|| "nowhere".to_string());
        assert!(c.apply_env(bad).is_err());
    }
}
