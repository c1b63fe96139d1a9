//! Daemon configuration file, the runtime collector overlay and the
//! built-in config templates.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adapters::CollectorSpec;
use crate::model::ToolKind;
use crate::pipeline::PipelineConfig;
use crate::store::RetentionPolicy;

pub const DEFAULT_API_PORT: u32 = 8686;
pub const MIN_TOKEN_LEN: usize = 32;
pub const OVERLAY_FILE: &str = "collectors.overlay.toml";
pub const TEMPLATES: &[&str] = &["chameleon"];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("field `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("unknown template `{0}`")]
    UnknownTemplate(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
}

impl ConfigError {
    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }

    fn syntax(text: &str, err: toml::de::Error) -> Self {
        let (line, column) = match err.span() {
            Some(span) => {
                let before = &text[..span.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                (line, column)
            }
            None => (0, 0),
        };
        ConfigError::Syntax {
            line,
            column,
            message: err.message().to_string(),
        }
    }
}

fn default_bind() -> String {
    "127.0.0.1".into()
}

fn default_port() -> u32 {
    DEFAULT_API_PORT
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApiConfig {
    #[serde(default = "default_bind")]
    pub bind: String,
    #[serde(default = "default_port")]
    pub port: u32,
    /// Allowed dashboard origins. Empty allows any origin.
    #[serde(default)]
    pub cors_origins: Vec<String>,
    /// Directory served under `/ui/`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ui_dir: Option<PathBuf>,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            bind: default_bind(),
            port: DEFAULT_API_PORT,
            cors_origins: Vec::new(),
            ui_dir: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TokenConfig {
    pub admin: String,
    pub viewer: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StoreSection {
    pub sync_writes: bool,
    pub chunk_capacity: usize,
}

impl Default for StoreSection {
    fn default() -> Self {
        Self {
            sync_writes: false,
            chunk_capacity: crate::store::DEFAULT_CHUNK_CAPACITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaemonConfig {
    pub data_dir: PathBuf,
    #[serde(default)]
    pub api: ApiConfig,
    pub tokens: TokenConfig,
    #[serde(default)]
    pub store: StoreSection,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub retention: RetentionPolicy,
    #[serde(default)]
    pub collectors: Vec<CollectorSpec>,
}

impl DaemonConfig {
    /// Parses and validates against the built-in tools.
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let tools: Vec<String> = ToolKind::ALL
            .iter()
            .map(|t| t.as_str().to_string())
            .collect();
        Self::parse_with_tools(text, &tools)
    }

    pub fn parse_with_tools(text: &str, tools: &[String]) -> Result<Self, ConfigError> {
        let cfg: DaemonConfig = toml::from_str(text).map_err(|e| ConfigError::syntax(text, e))?;
        cfg.validate(tools)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self, tools: &[String]) -> Result<(), ConfigError> {
        if self.data_dir.as_os_str().is_empty() {
            return Err(ConfigError::invalid("data_dir", "must not be empty"));
        }
        if !(1..=65535).contains(&self.api.port) {
            return Err(ConfigError::invalid(
                "api.port",
                format!("{} out of range 1..=65535", self.api.port),
            ));
        }
        if self.api.bind.parse::<std::net::IpAddr>().is_err() {
            return Err(ConfigError::invalid(
                "api.bind",
                format!("`{}` is not an IP address", self.api.bind),
            ));
        }
        for (field, tok) in [
            ("tokens.admin", &self.tokens.admin),
            ("tokens.viewer", &self.tokens.viewer),
        ] {
            if tok.chars().count() < MIN_TOKEN_LEN {
                return Err(ConfigError::invalid(
                    field,
                    format!("must be at least {MIN_TOKEN_LEN} characters"),
                ));
            }
            if tok.chars().any(|c| c.is_whitespace() || c.is_control()) {
                return Err(ConfigError::invalid(field, "must not contain whitespace"));
            }
        }
        if self.tokens.admin == self.tokens.viewer {
            return Err(ConfigError::invalid(
                "tokens.viewer",
                "must differ from tokens.admin",
            ));
        }
        if self.store.chunk_capacity == 0 {
            return Err(ConfigError::invalid(
                "store.chunk_capacity",
                "must be at least 1",
            ));
        }
        if let Err(e) = self.pipeline.validate() {
            return Err(match e {
                crate::pipeline::PipelineError::InvalidConfig { field, reason } => {
                    ConfigError::invalid(format!("pipeline.{field}"), reason)
                }
                other => ConfigError::invalid("pipeline", other.to_string()),
            });
        }
        self.retention
            .validate()
            .map_err(|r| ConfigError::invalid("retention", r))?;
        validate_collectors(&self.collectors, tools, "collectors")
    }
}

fn validate_collectors(
    specs: &[CollectorSpec],
    tools: &[String],
    section: &str,
) -> Result<(), ConfigError> {
    let mut ids = BTreeSet::new();
    for (i, spec) in specs.iter().enumerate() {
        spec.validate()
            .map_err(|e| ConfigError::invalid(format!("{section}[{i}].{}", e.field), e.reason))?;
        if !tools.contains(&spec.tool) {
            return Err(ConfigError::invalid(
                format!("{section}[{i}].tool"),
                format!("unknown tool `{}`", spec.tool),
            ));
        }
        if !ids.insert(spec.id.as_str()) {
            return Err(ConfigError::invalid(
                format!("{section}[{i}].id"),
                format!("duplicate collector id `{}`", spec.id),
            ));
        }
    }
    Ok(())
}

/// Collector changes made through the admin API, kept next to the data so
/// they survive a restart.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CollectorOverlay {
    pub collectors: Vec<CollectorSpec>,
    /// Ids disabled at runtime, whether from the base config or the overlay.
    pub disabled: Vec<String>,
}

impl CollectorOverlay {
    pub fn path(data_dir: &Path) -> PathBuf {
        data_dir.join(OVERLAY_FILE)
    }

    /// Missing file means an empty overlay.
    pub fn load(data_dir: &Path) -> Result<Self, ConfigError> {
        let path = Self::path(data_dir);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(Self::default()),
            Err(source) => return Err(ConfigError::Io { path, source }),
        };
        toml::from_str(&text).map_err(|e| ConfigError::syntax(&text, e))
    }

    /// Written to a temporary file and renamed into place.
    pub fn save(&self, data_dir: &Path) -> Result<(), ConfigError> {
        let path = Self::path(data_dir);
        let tmp = path.with_extension("toml.tmp");
        let io_err = |source| ConfigError::Io {
            path: path.clone(),
            source,
        };
        let text = toml::to_string(self).expect("overlay serializes");
        fs::write(&tmp, text).map_err(io_err)?;
        fs::File::open(&tmp)
            .and_then(|f| f.sync_all())
            .map_err(io_err)?;
        fs::rename(&tmp, &path).map_err(io_err)
    }

    pub fn add(&mut self, spec: CollectorSpec) {
        self.disabled.retain(|id| *id != spec.id);
        self.collectors.retain(|c| c.id != spec.id);
        self.collectors.push(spec);
    }

    pub fn disable(&mut self, id: &str) {
        if !self.disabled.iter().any(|d| d == id) {
            self.disabled.push(id.to_string());
        }
    }

    /// Base collectors followed by overlay additions, with runtime
    /// disables applied. Overlay entries replace base entries of the same id.
    pub fn apply(&self, base: &[CollectorSpec]) -> Vec<CollectorSpec> {
        let mut out: Vec<CollectorSpec> = base
            .iter()
            .filter(|b| !self.collectors.iter().any(|c| c.id == b.id))
            .cloned()
            .collect();
        out.extend(self.collectors.iter().cloned());
        for spec in &mut out {
            if self.disabled.contains(&spec.id) {
                spec.enabled = false;
            }
        }
        out
    }
}

/// Node placement of the reference five-node layout: (label, address).
pub const CHAMELEON_NODES: [(&str, &str); 5] = [
    ("n1", "192.168.100.11"),
    ("n2", "192.168.100.12"),
    ("n3", "192.168.100.13"),
    ("n4", "192.168.100.14"),
    ("n5", "192.168.100.16"),
];

/// Renders a full, commented daemon config for a named template.
pub fn generate_config(template: &str) -> Result<String, ConfigError> {
    match template {
        "chameleon" => Ok(chameleon()),
        other => Err(ConfigError::UnknownTemplate(other.to_string())),
    }
}

fn chameleon() -> String {
    let mut s = String::new();
    s.push_str(
        "# netgraf daemon configuration: five-node testbed layout.\n\
         # Replace both tokens before exposing the API.\n\n\
         data_dir = \"/var/lib/netgraf\"\n\n\
         [api]\n\
         bind = \"0.0.0.0\"\n\
         port = 8686\n\
         cors_origins = []\n\n\
         [tokens]\n\
         admin = \"replace-me-admin-token-0000000000000000\"\n\
         viewer = \"replace-me-viewer-token-000000000000000\"\n\n\
         [store]\n\
         sync_writes = false\n\
         chunk_capacity = 1024\n\n\
         [pipeline]\n\
         interval_ms = 10000\n\
         jitter_ms = 500\n\
         parallelism = 8\n\
         allowlist = [\"packet_loss_ratio\", \"tcp_retransmits_total\", \"throughput_bytes_per_second\"]\n\
         out_of_order_window_ms = 0\n\n\
         [pipeline.out_of_order_windows]\n\
         perfsonar = 60000\n\n\
         [retention]\n\
         raw_ttl_ms = 604800000\n\n\
         [[retention.downsample_rules]]\n\
         resolution_ms = 60000\n\
         aggregator = \"avg\"\n\
         ttl_ms = 2592000000\n",
    );
    let mut collector = |id: &str, tool: ToolKind, host: &str, node: &str, extra: &str| {
        let _ = write!(
            s,
            "\n[[collectors]]\nid = \"{id}\"\ntool = \"{}\"\nhost = \"{host}\"\nport = {}\nnode_label = \"{node}\"\ninterval_ms = 10000\ntimeout_ms = 5000\n{extra}",
            tool.as_str(),
            tool.default_port(),
        );
    };
    let (n1, h1) = CHAMELEON_NODES[0];
    collector(
        &format!("prometheus-{n1}"),
        ToolKind::Prometheus,
        h1,
        n1,
        "",
    );
    for (node, host) in CHAMELEON_NODES {
        collector(&format!("ntopng-{node}"), ToolKind::Ntopng, host, node, "");
        collector(
            &format!("netdata-{node}"),
            ToolKind::Netdata,
            host,
            node,
            "",
        );
    }
    let (n3, h3) = CHAMELEON_NODES[2];
    collector(
        &format!("zabbix-{n3}"),
        ToolKind::Zabbix,
        h3,
        n3,
        "credentials = { username = \"Admin\", secret = \"zabbix\" }\n",
    );
    let (n5, h5) = CHAMELEON_NODES[4];
    collector(&format!("perfsonar-{n5}"), ToolKind::Perfsonar, h5, n5, "");
    s
}
