//! Canonical metric vocabulary: series identity, samples, kinds and the
//! built-in catalog every other module speaks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Label that identifies the host a series was collected from.
pub const NODE_LABEL: &str = "node";
/// Label that identifies the collecting tool.
pub const TOOL_LABEL: &str = "tool";
/// Tool label value carried by the daemon's own metrics.
pub const SELF_TOOL: &str = "netgraf";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid name `{0}`: must match [a-z_][a-z0-9_]*")]
    InvalidName(String),
    #[error("invalid value `{value}` for label `{label}`")]
    InvalidLabelValue { label: String, value: String },
    #[error("duplicate label `{0}`")]
    DuplicateLabel(String),
    #[error("missing reserved label(s): {0}")]
    MissingReservedLabel(String),
    #[error("malformed series key `{0}`")]
    Malformed(String),
    #[error("timestamp must be positive, got {0}")]
    InvalidTimestamp(i64),
    #[error("value must be finite, got {0}")]
    NonFiniteValue(f64),
}

pub fn is_valid_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Label values may not contain the separators of the canonical text form.
pub fn is_valid_label_value(value: &str) -> bool {
    !value.is_empty()
        && value.chars().all(|c| {
            !c.is_whitespace() && !c.is_control() && !matches!(c, '{' | '}' | '=' | ',' | '"')
        })
}

/// Sorted, duplicate-free label pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LabelSet(Vec<(String, String)>);

impl LabelSet {
    pub fn get(&self, name: &str) -> Option<&str> {
        self.0
            .binary_search_by(|(k, _)| k.as_str().cmp(name))
            .ok()
            .map(|i| self.0[i].1.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.0.iter().map(|(k, v)| (k.as_str(), v.as_str()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeriesKey {
    name: String,
    labels: LabelSet,
}

impl SeriesKey {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn label(&self, name: &str) -> Option<&str> {
        self.labels.get(name)
    }

    pub fn node(&self) -> &str {
        self.labels.get(NODE_LABEL).unwrap_or_default()
    }

    pub fn tool(&self) -> &str {
        self.labels.get(TOOL_LABEL).unwrap_or_default()
    }

    pub fn label_pairs(&self) -> Vec<(String, String)> {
        self.labels.0.clone()
    }

    /// Parses the canonical text form `name{k1=v1,k2=v2}`.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let malformed = || ModelError::Malformed(text.to_string());
        let open = text.find('{').ok_or_else(malformed)?;
        let body = text[open + 1..].strip_suffix('}').ok_or_else(malformed)?;
        let mut pairs = Vec::new();
        if !body.is_empty() {
            for part in body.split(',') {
                let (k, v) = part.split_once('=').ok_or_else(malformed)?;
                pairs.push((k.to_string(), v.to_string()));
            }
        }
        let key = canonical_series_key(&text[..open], &pairs)?;
        // Reject non-canonical spellings so parse/serialize stay bijective.
        if key.to_string() != text {
            return Err(malformed());
        }
        Ok(key)
    }
}

impl fmt::Display for SeriesKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name)?;
        f.write_str("{")?;
        for (i, (k, v)) in self.labels.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}")
    }
}

impl FromStr for SeriesKey {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for SeriesKey {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SeriesKey {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let text = String::deserialize(d)?;
        SeriesKey::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Builds a canonical series key. The metric name is lowercased, labels are
/// sorted by name, duplicates are an error and `node`/`tool` must be present.
pub fn canonical_series_key(
    metric_name: &str,
    labels: &[(String, String)],
) -> Result<SeriesKey, ModelError> {
    let name = metric_name.to_ascii_lowercase();
    if !is_valid_name(&name) {
        return Err(ModelError::InvalidName(metric_name.to_string()));
    }
    let mut pairs: Vec<(String, String)> = Vec::with_capacity(labels.len());
    for (k, v) in labels {
        if !is_valid_name(k) {
            return Err(ModelError::InvalidName(k.clone()));
        }
        if !is_valid_label_value(v) {
            return Err(ModelError::InvalidLabelValue {
                label: k.clone(),
                value: v.clone(),
            });
        }
        pairs.push((k.clone(), v.clone()));
    }
    pairs.sort_by(|a, b| a.0.cmp(&b.0));
    if let Some(w) = pairs.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(ModelError::DuplicateLabel(w[0].0.clone()));
    }
    let labels = LabelSet(pairs);
    let missing: Vec<&str> = [NODE_LABEL, TOOL_LABEL]
        .into_iter()
        .filter(|r| labels.get(r).is_none())
        .collect();
    if !missing.is_empty() {
        return Err(ModelError::MissingReservedLabel(missing.join(",")));
    }
    Ok(SeriesKey { name, labels })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MetricKind {
    Gauge,
    Counter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSample {
    pub key: SeriesKey,
    pub ts: i64,
    pub value: f64,
    pub kind: MetricKind,
}

impl MetricSample {
    pub fn new(key: SeriesKey, ts: i64, value: f64, kind: MetricKind) -> Result<Self, ModelError> {
        if ts <= 0 {
            return Err(ModelError::InvalidTimestamp(ts));
        }
        if !value.is_finite() {
            return Err(ModelError::NonFiniteValue(value));
        }
        Ok(Self {
            key,
            ts,
            value,
            kind,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ToolKind {
    Prometheus,
    Netdata,
    Ntopng,
    Perfsonar,
    Zabbix,
}

impl ToolKind {
    pub const ALL: [ToolKind; 5] = [
        ToolKind::Prometheus,
        ToolKind::Netdata,
        ToolKind::Ntopng,
        ToolKind::Perfsonar,
        ToolKind::Zabbix,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ToolKind::Prometheus => "prometheus",
            ToolKind::Netdata => "netdata",
            ToolKind::Ntopng => "ntopng",
            ToolKind::Perfsonar => "perfsonar",
            ToolKind::Zabbix => "zabbix",
        }
    }

    /// Listening port each tool uses on the reference testbed.
    pub fn default_port(self) -> u16 {
        match self {
            ToolKind::Prometheus => 9090,
            ToolKind::Ntopng => 3000,
            ToolKind::Netdata => 19999,
            ToolKind::Perfsonar => 861,
            ToolKind::Zabbix => 10050,
        }
    }
}

impl fmt::Display for ToolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ToolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ToolKind::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown tool `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricDef {
    pub name: String,
    pub kind: MetricKind,
    pub unit: String,
}

impl MetricDef {
    pub fn new(name: &str, kind: MetricKind, unit: &str) -> Self {
        Self {
            name: name.to_string(),
            kind,
            unit: unit.to_string(),
        }
    }
}

pub const TCP_RETRANSMITS: &str = "tcp_retransmits_total";
pub const THROUGHPUT: &str = "throughput_bytes_per_second";
pub const PACKET_LOSS: &str = "packet_loss_ratio";

/// The built-in network metrics. Always present regardless of extensions.
pub fn canonical_metric_catalog() -> Vec<MetricDef> {
    vec![
        MetricDef::new(TCP_RETRANSMITS, MetricKind::Counter, "count"),
        MetricDef::new(THROUGHPUT, MetricKind::Gauge, "bytes/s"),
        MetricDef::new(PACKET_LOSS, MetricKind::Gauge, "ratio"),
    ]
}

pub const SCRAPE_DURATION: &str = "scrape_duration_ms";
pub const SCRAPE_SUCCESS: &str = "scrape_success_total";
pub const SCRAPE_FAILURES: &str = "scrape_failures_total";
pub const SAMPLES_INGESTED: &str = "samples_ingested_total";
pub const SAMPLES_DROPPED: &str = "samples_dropped_total";

/// Metrics the daemon records about its own scrapes (tool=netgraf).
pub fn self_metric_catalog() -> Vec<MetricDef> {
    vec![
        MetricDef::new(SCRAPE_DURATION, MetricKind::Gauge, "ms"),
        MetricDef::new(SCRAPE_SUCCESS, MetricKind::Counter, "count"),
        MetricDef::new(SCRAPE_FAILURES, MetricKind::Counter, "count"),
        MetricDef::new(SAMPLES_INGESTED, MetricKind::Counter, "count"),
        MetricDef::new(SAMPLES_DROPPED, MetricKind::Counter, "count"),
    ]
}

pub fn is_self_metric(name: &str) -> bool {
    self_metric_catalog().iter().any(|m| m.name == name)
}
