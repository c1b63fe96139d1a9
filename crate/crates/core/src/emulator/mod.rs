//! Desk-scale testbed: synthetic but wire-compatible endpoints for all five
//! tools across a multi-node topology, with scripted faults.

mod oracle;
mod server;
pub mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::net::SocketAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use oracle::{downtime_oracle, BucketExpectation, Cadence};
pub use server::{serve_topology, EndpointStats, RunningTopology};
pub use synth::{synth_value, Generator, TrafficProfile};

use crate::adapters::{CollectorOptions, CollectorSpec, Credentials};
use crate::model::ToolKind;

#[derive(Debug, Error)]
pub enum EmulatorError {
    #[error("address {0} is already in use")]
    PortInUse(SocketAddr),
    #[error("cannot listen on {addr}: {source}")]
    Bind {
        addr: SocketAddr,
        source: std::io::Error,
    },
    #[error("unknown metric `{0}`")]
    UnknownMetric(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("topology file: {0}")]
    Parse(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FaultKind {
    /// Connections refused; the node collects nothing.
    Down,
    /// Responses delayed past any sensible timeout.
    Slow,
    /// Responses are not valid for the dialect.
    Garbage,
}

/// `[start_ms, end_ms)` relative to the run origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FaultWindow {
    pub start_ms: i64,
    pub end_ms: i64,
    pub kind: FaultKind,
}

impl FaultWindow {
    pub fn contains(&self, t: i64) -> bool {
        self.start_ms <= t && t < self.end_ms
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmulatedNode {
    pub node_id: String,
    pub host: String,
    /// Tool → listening port. Port 0 picks a free port.
    pub tools: BTreeMap<ToolKind, u16>,
    #[serde(default)]
    pub profile: TrafficProfile,
    #[serde(default)]
    pub faults: Vec<FaultWindow>,
}

impl EmulatedNode {
    pub fn fault_at(&self, t: i64) -> Option<FaultKind> {
        self.faults.iter().find(|f| f.contains(t)).map(|f| f.kind)
    }

    pub fn is_down(&self, t: i64) -> bool {
        self.fault_at(t) == Some(FaultKind::Down)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZabbixAccount {
    pub username: String,
    pub password: String,
    /// Tokens rotate every `token_ttl_ms` of emulated time when set.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub token_ttl_ms: Option<i64>,
}

impl Default for ZabbixAccount {
    fn default() -> Self {
        Self {
            username: "Admin".into(),
            password: "zabbix".into(),
            token_ttl_ms: None,
        }
    }
}

fn default_slow_delay_ms() -> u64 {
    6_000
}

fn default_history_step_ms() -> i64 {
    1_000
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopologyConfig {
    /// Run origin in epoch ms; defaults to the clock at start.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_ms: Option<i64>,
    /// Wall-clock delay of SLOW responses.
    #[serde(default = "default_slow_delay_ms")]
    pub slow_delay_ms: u64,
    /// Sample spacing of Zabbix history and perfSONAR archives.
    #[serde(default = "default_history_step_ms")]
    pub history_step_ms: i64,
    #[serde(default)]
    pub zabbix: ZabbixAccount,
    pub nodes: Vec<EmulatedNode>,
}

/// (node, address, tools beyond ntopng and netdata).
const REFERENCE: [(&str, &str, &[ToolKind]); 5] = [
    ("n1", "127.0.100.11", &[ToolKind::Prometheus]),
    ("n2", "127.0.100.12", &[]),
    ("n3", "127.0.100.13", &[ToolKind::Zabbix]),
    ("n4", "127.0.100.14", &[]),
    ("n5", "127.0.100.16", &[ToolKind::Perfsonar]),
];

impl TopologyConfig {
    /// The reference five-node layout on each tool's default port, one
    /// loopback address per node.
    pub fn reference() -> Self {
        let nodes = REFERENCE
            .iter()
            .enumerate()
            .map(|(i, (id, host, extra))| {
                let mut tools = BTreeMap::new();
                for t in [ToolKind::Ntopng, ToolKind::Netdata]
                    .iter()
                    .chain(extra.iter())
                {
                    tools.insert(*t, t.default_port());
                }
                EmulatedNode {
                    node_id: id.to_string(),
                    host: host.to_string(),
                    tools,
                    profile: TrafficProfile {
                        throughput_base: 1.25e8 * (1.0 + 0.2 * i as f64),
                        throughput_amplitude: 2.5e7 * (1.0 + 0.1 * i as f64),
                        period_s: 3600.0 + 600.0 * i as f64,
                        seed: 1000 + i as u64,
                        ..TrafficProfile::default()
                    },
                    faults: Vec::new(),
                }
            })
            .collect();
        Self {
            origin_ms: None,
            slow_delay_ms: default_slow_delay_ms(),
            history_step_ms: default_history_step_ms(),
            zabbix: ZabbixAccount::default(),
            nodes,
        }
    }

    /// Moves every endpoint to 127.0.0.1 on a free port.
    pub fn ephemeral(mut self) -> Self {
        for n in &mut self.nodes {
            n.host = "127.0.0.1".into();
            for port in n.tools.values_mut() {
                *port = 0;
            }
        }
        self
    }

    pub fn node(&self, id: &str) -> Option<&EmulatedNode> {
        self.nodes.iter().find(|n| n.node_id == id)
    }

    pub fn parse(text: &str) -> Result<Self, EmulatorError> {
        let cfg: Self = toml::from_str(text).map_err(|e| EmulatorError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, EmulatorError> {
        let text = fs::read_to_string(path)
            .map_err(|e| EmulatorError::Parse(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("topology serializes")
    }

    pub fn validate(&self) -> Result<(), EmulatorError> {
        let bad = |m: String| Err(EmulatorError::InvalidTopology(m));
        if self.nodes.is_empty() {
            return bad("no nodes".into());
        }
        if self.history_step_ms < 1 {
            return bad("history_step_ms must be positive".into());
        }
        let mut ids = BTreeSet::new();
        let mut bound = BTreeSet::new();
        for n in &self.nodes {
            if !crate::model::is_valid_label_value(&n.node_id) || !ids.insert(&n.node_id) {
                return bad(format!("node id `{}` is invalid or repeated", n.node_id));
            }
            if n.host.parse::<std::net::IpAddr>().is_err() {
                return bad(format!(
                    "node {}: host `{}` is not an IP address",
                    n.node_id, n.host
                ));
            }
            if n.tools.is_empty() {
                return bad(format!("node {} runs no tools", n.node_id));
            }
            for port in n.tools.values() {
                if *port != 0 && !bound.insert((n.host.clone(), *port)) {
                    return bad(format!("port {} used twice on {}", port, n.host));
                }
            }
            n.profile
                .validate()
                .map_err(|e| EmulatorError::InvalidTopology(format!("node {}: {e}", n.node_id)))?;
            let mut faults = n.faults.clone();
            faults.sort_by_key(|f| f.start_ms);
            for f in &faults {
                if f.start_ms >= f.end_ms {
                    return bad(format!("node {}: empty fault window", n.node_id));
                }
            }
            if faults.windows(2).any(|w| w[1].start_ms < w[0].end_ms) {
                return bad(format!("node {}: fault windows overlap", n.node_id));
            }
        }
        Ok(())
    }

    /// Collector specs that scrape this topology once it listens on `addrs`.
    pub fn collector_specs(
        &self,
        addrs: &BTreeMap<(String, ToolKind), SocketAddr>,
        interval_ms: i64,
        timeout_ms: i64,
    ) -> Vec<CollectorSpec> {
        let mut out = Vec::new();
        for n in &self.nodes {
            for tool in n.tools.keys() {
                let Some(addr) = addrs.get(&(n.node_id.clone(), *tool)) else {
                    continue;
                };
                let mut spec = CollectorSpec::new(
                    &format!("{}-{}", tool.as_str(), n.node_id),
                    tool.as_str(),
                    &addr.ip().to_string(),
                    addr.port(),
                    &n.node_id,
                );
                spec.interval_ms = interval_ms;
                spec.timeout_ms = timeout_ms;
                if *tool == ToolKind::Zabbix {
                    spec.credentials = Some(Credentials {
                        username: self.zabbix.username.clone(),
                        secret: self.zabbix.password.clone(),
                    });
                }
                spec.options = CollectorOptions::default();
                out.push(spec);
            }
        }
        out
    }
}
