//! Collector adapters: one per monitoring tool dialect, plus the registry
//! that lets new tools plug in at runtime.

mod http;
pub mod mapping;
pub mod netdata;
pub mod ntopng;
pub mod perfsonar;
pub mod prometheus;
pub mod zabbix;

use std::collections::BTreeMap;
use std::sync::Arc;

use async_trait::async_trait;
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::HttpClient;
pub use mapping::{normalize, Conversion, MappingRule, MappingTable, Normalized};
pub use prometheus::{parse_prometheus_exposition, ParseError};

use crate::model::{canonical_metric_catalog, is_valid_label_value, MetricDef, ToolKind};

/// A reading as the tool reported it, before normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct RawReading {
    pub source_metric: String,
    pub source_labels: Vec<(String, String)>,
    /// Milliseconds since the epoch, when the tool supplied one.
    pub ts: Option<i64>,
    pub value: f64,
    pub source_unit: String,
}

impl RawReading {
    pub fn new(
        metric: impl Into<String>,
        ts: Option<i64>,
        value: f64,
        unit: impl Into<String>,
    ) -> Self {
        Self {
            source_metric: metric.into(),
            source_labels: Vec::new(),
            ts,
            value,
            source_unit: unit.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Credentials {
    pub username: String,
    pub secret: String,
}

/// Per-tool knobs. Each adapter reads the fields it understands.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectorOptions {
    /// netdata charts to pull.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub charts: Option<Vec<String>>,
    /// ntopng interface id.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interface_id: Option<String>,
    /// perfSONAR archive event types.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_types: Option<Vec<String>>,
    /// Zabbix item keys.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub items: Option<Vec<String>>,
}

fn default_true() -> bool {
    true
}

fn default_interval_ms() -> i64 {
    10_000
}

fn default_timeout_ms() -> i64 {
    5_000
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CollectorSpec {
    pub id: String,
    pub tool: String,
    pub host: String,
    /// Kept wide so an out-of-range port is reported by validation rather
    /// than as a type error.
    pub port: u32,
    /// Endpoint path (Prometheus, Zabbix, perfSONAR) or path prefix
    /// (netdata, ntopng). Empty means the tool default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default = "default_interval_ms")]
    pub interval_ms: i64,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: i64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credentials: Option<Credentials>,
    pub node_label: String,
    #[serde(default = "default_true")]
    pub enabled: bool,
    #[serde(default, skip_serializing_if = "is_default_options")]
    pub options: CollectorOptions,
}

fn is_default_options(o: &CollectorOptions) -> bool {
    *o == CollectorOptions::default()
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {reason}")]
pub struct SpecError {
    pub field: String,
    pub reason: String,
}

impl CollectorSpec {
    pub fn new(id: &str, tool: &str, host: &str, port: u16, node_label: &str) -> Self {
        Self {
            id: id.to_string(),
            tool: tool.to_string(),
            host: host.to_string(),
            port: port as u32,
            path: None,
            interval_ms: default_interval_ms(),
            timeout_ms: default_timeout_ms(),
            credentials: None,
            node_label: node_label.to_string(),
            enabled: true,
            options: CollectorOptions::default(),
        }
    }

    /// Checks the field-level invariants. Tool existence is checked against
    /// the registry separately.
    pub fn validate(&self) -> Result<(), SpecError> {
        let err = |field: &str, reason: String| SpecError {
            field: field.to_string(),
            reason,
        };
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || "-_.".contains(c))
        {
            return Err(err(
                "id",
                format!("`{}` must be non-empty [A-Za-z0-9._-]", self.id),
            ));
        }
        if self.host.is_empty() {
            return Err(err("host", "must not be empty".into()));
        }
        if !(1..=65535).contains(&self.port) {
            return Err(err("port", format!("{} out of range 1..=65535", self.port)));
        }
        if self.interval_ms <= 0 {
            return Err(err(
                "interval_ms",
                format!("{} must be positive", self.interval_ms),
            ));
        }
        if self.timeout_ms <= 0 || self.timeout_ms >= self.interval_ms {
            return Err(err(
                "timeout_ms",
                format!(
                    "{} must be positive and below interval_ms {}",
                    self.timeout_ms, self.interval_ms
                ),
            ));
        }
        if !is_valid_label_value(&self.node_label) {
            return Err(err(
                "node_label",
                format!("`{}` is not a valid label value", self.node_label),
            ));
        }
        if !is_valid_label_value(&self.tool) {
            return Err(err(
                "tool",
                format!("`{}` is not a valid tool name", self.tool),
            ));
        }
        Ok(())
    }

    pub fn url(&self, path_and_query: &str) -> String {
        format!("http://{}:{}{}", self.host, self.port, path_and_query)
    }

    pub fn path_or<'a>(&'a self, default: &'a str) -> &'a str {
        self.path
            .as_deref()
            .filter(|p| !p.is_empty())
            .unwrap_or(default)
    }

    pub(crate) fn expect_tool(&self, tool: ToolKind) -> Result<(), FetchError> {
        if self.tool == tool.as_str() {
            Ok(())
        } else {
            Err(FetchError::WrongTool {
                expected: tool.as_str().to_string(),
                actual: self.tool.clone(),
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FetchError {
    #[error("unreachable: {0}")]
    Unreachable(String),
    #[error("timed out")]
    Timeout,
    #[error("http status {0}")]
    HttpStatus(u16),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("tool reported error code {0}")]
    ToolError(i64),
    #[error("authentication failed: {0}")]
    AuthFailed(String),
    #[error("authentication token expired")]
    AuthExpired,
    #[error("spec is for `{actual}`, adapter handles `{expected}`")]
    WrongTool { expected: String, actual: String },
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("{0}")]
    Other(String),
}

impl FetchError {
    /// Short stable label used as the `reason` of failure self-metrics.
    pub fn kind(&self) -> &'static str {
        match self {
            FetchError::Unreachable(_) => "unreachable",
            FetchError::Timeout => "timeout",
            FetchError::HttpStatus(_) => "http_status",
            FetchError::Parse(_) => "parse_error",
            FetchError::MalformedResponse(_) => "malformed",
            FetchError::ToolError(_) => "tool_error",
            FetchError::AuthFailed(_) => "auth_failed",
            FetchError::AuthExpired => "auth_expired",
            FetchError::WrongTool { .. } | FetchError::InvalidRequest(_) => "invalid_request",
            FetchError::Other(_) => "other",
        }
    }
}

/// Time span a scrape covers: `(start_ms, end_ms]`, `end_ms` being the
/// scrape time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScrapeWindow {
    pub start_ms: i64,
    pub end_ms: i64,
}

/// What a tool must provide to plug into the pipeline.
#[async_trait]
pub trait Adapter: Send + Sync {
    fn name(&self) -> &str;

    fn default_port(&self) -> u16;

    /// Mapping rows for this tool. Built-in tools take theirs from the
    /// shipped mapping table instead.
    fn mapping(&self) -> Vec<MappingRule> {
        Vec::new()
    }

    /// Canonical metrics this adapter introduces beyond the built-in catalog.
    fn extra_metrics(&self) -> Vec<MetricDef> {
        Vec::new()
    }

    /// Tolerated lateness for this tool's samples; `None` uses the pipeline
    /// default.
    fn out_of_order_window_ms(&self) -> Option<i64> {
        None
    }

    async fn fetch(
        &self,
        spec: &CollectorSpec,
        window: ScrapeWindow,
    ) -> Result<Vec<RawReading>, FetchError>;
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("tool `{0}` is already registered")]
    DuplicateTool(String),
    #[error("invalid tool name `{0}`")]
    InvalidName(String),
    #[error("metric `{0}` conflicts with an existing catalog entry")]
    MetricConflict(String),
}

struct RegistryInner {
    adapters: BTreeMap<String, Arc<dyn Adapter>>,
    mappings: MappingTable,
    extensions: Vec<MetricDef>,
}

/// Registered tools, their mapping rows and catalog extensions. Read-mostly.
pub struct AdapterRegistry {
    inner: RwLock<RegistryInner>,
}

impl AdapterRegistry {
    pub fn empty(mappings: MappingTable) -> Self {
        Self {
            inner: RwLock::new(RegistryInner {
                adapters: BTreeMap::new(),
                mappings,
                extensions: Vec::new(),
            }),
        }
    }

    /// Registry with the five built-in tools and the given mapping table.
    pub fn with_builtins(client: HttpClient, mappings: MappingTable) -> Self {
        let reg = Self::empty(mappings);
        let builtins: Vec<Arc<dyn Adapter>> = vec![
            Arc::new(prometheus::PrometheusAdapter::new(client.clone())),
            Arc::new(netdata::NetdataAdapter::new(client.clone())),
            Arc::new(ntopng::NtopngAdapter::new(client.clone())),
            Arc::new(perfsonar::PerfsonarAdapter::new(client.clone())),
            Arc::new(zabbix::ZabbixAdapter::new(client)),
        ];
        for a in builtins {
            reg.register(a).expect("built-in tools are distinct");
        }
        reg
    }

    pub fn register(&self, adapter: Arc<dyn Adapter>) -> Result<(), RegistryError> {
        let name = adapter.name().to_string();
        if !is_valid_label_value(&name) {
            return Err(RegistryError::InvalidName(name));
        }
        let mut inner = self.inner.write();
        if inner.adapters.contains_key(&name) {
            return Err(RegistryError::DuplicateTool(name));
        }
        let extra = adapter.extra_metrics();
        let builtin = canonical_metric_catalog();
        for m in &extra {
            let clash = builtin
                .iter()
                .chain(inner.extensions.iter())
                .any(|e| e.name == m.name && e != m);
            if clash || !crate::model::is_valid_name(&m.name) {
                return Err(RegistryError::MetricConflict(m.name.clone()));
            }
        }
        let rows: Vec<MappingRule> = adapter
            .mapping()
            .into_iter()
            .map(|mut r| {
                r.tool = name.clone();
                r
            })
            .collect();
        inner.mappings.extend(rows);
        for m in extra {
            if !inner.extensions.contains(&m) {
                inner.extensions.push(m);
            }
        }
        inner.adapters.insert(name, adapter);
        Ok(())
    }

    pub fn get(&self, tool: &str) -> Option<Arc<dyn Adapter>> {
        self.inner.read().adapters.get(tool).cloned()
    }

    pub fn contains(&self, tool: &str) -> bool {
        self.inner.read().adapters.contains_key(tool)
    }

    pub fn tools(&self) -> Vec<String> {
        self.inner.read().adapters.keys().cloned().collect()
    }

    pub fn mapping_for(&self, tool: &str) -> Vec<MappingRule> {
        self.inner.read().mappings.for_tool(tool).cloned().collect()
    }

    /// Built-in catalog followed by registered extensions.
    pub fn catalog(&self) -> Vec<MetricDef> {
        let mut cat = canonical_metric_catalog();
        cat.extend(self.inner.read().extensions.iter().cloned());
        cat
    }

    /// Validates a spec, including that its tool is registered.
    pub fn validate_spec(&self, spec: &CollectorSpec) -> Result<(), SpecError> {
        spec.validate()?;
        if !self.contains(&spec.tool) {
            return Err(SpecError {
                field: "tool".into(),
                reason: format!("unknown tool `{}`", spec.tool),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Custom(&'static str);

    #[async_trait]
    impl Adapter for Custom {
        fn name(&self) -> &str {
            self.0
        }
        fn default_port(&self) -> u16 {
            161
        }
        fn mapping(&self) -> Vec<MappingRule> {
            vec![MappingRule::new(
                "",
                "ifHCInOctets",
                "snmp_in_octets",
                Conversion::None,
            )]
        }
        fn extra_metrics(&self) -> Vec<MetricDef> {
            vec![MetricDef::new(
                "snmp_in_octets",
                crate::model::MetricKind::Counter,
                "bytes",
            )]
        }
        async fn fetch(
            &self,
            _: &CollectorSpec,
            _: ScrapeWindow,
        ) -> Result<Vec<RawReading>, FetchError> {
            Ok(vec![])
        }
    }

    #[test]
    fn register_custom_then_accept_spec() {
        let reg = AdapterRegistry::with_builtins(HttpClient::new(), MappingTable::builtin());
        let spec = CollectorSpec::new("s1", "snmp_custom", "127.0.0.1", 161, "n1");
        assert!(reg.validate_spec(&spec).is_err());
        reg.register(Arc::new(Custom("snmp_custom"))).unwrap();
        reg.validate_spec(&spec).unwrap();
        assert_eq!(reg.catalog().len(), 4);
        assert_eq!(reg.mapping_for("snmp_custom")[0].tool, "snmp_custom");
    }

    #[test]
    fn duplicate_tool_rejected() {
        let reg = AdapterRegistry::with_builtins(HttpClient::new(), MappingTable::builtin());
        assert_eq!(
            reg.register(Arc::new(Custom("zabbix"))).unwrap_err(),
            RegistryError::DuplicateTool("zabbix".into())
        );
        assert_eq!(reg.tools().len(), 5);
    }

    #[test]
    fn spec_validation() {
        let mut s = CollectorSpec::new("a", "netdata", "h", 19999, "n1");
        s.validate().unwrap();
        s.port = 70000;
        assert_eq!(s.validate().unwrap_err().field, "port");
        s.port = 1;
        s.timeout_ms = s.interval_ms;
        assert_eq!(s.validate().unwrap_err().field, "timeout_ms");
        s.timeout_ms = 1;
        s.node_label = "bad label".into();
        assert_eq!(s.validate().unwrap_err().field, "node_label");
    }

    #[test]
    fn spec_json_rejects_unknown_keys() {
        let ok = r#"{"id":"a","tool":"netdata","host":"h","port":1,"interval_ms":10,"timeout_ms":5,"node_label":"n"}"#;
        let spec: CollectorSpec = serde_json::from_str(ok).unwrap();
        assert!(spec.enabled);
        let bad = r#"{"id":"a","tool":"netdata","host":"h","port":1,"interval_ms":10,"timeout_ms":5,"node_label":"n","colour":1}"#;
        assert!(serde_json::from_str::<CollectorSpec>(bad).is_err());
    }
}
