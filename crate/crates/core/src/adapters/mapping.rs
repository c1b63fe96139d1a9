//! Mapping table and normalization of raw readings into canonical samples.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use super::RawReading;
use crate::model::{canonical_series_key, MetricDef, MetricSample, NODE_LABEL, TOOL_LABEL};

pub const DEFAULT_MAPPINGS: &str = include_str!("../../data/mappings.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conversion {
    None,
    Auto,
    BitsToBytes,
    KilobitsToBytes,
    PercentToRatio,
}

impl Conversion {
    /// Applies the conversion. `None` means the unit is not understood.
    pub fn apply(self, value: f64, source_unit: &str) -> Option<f64> {
        match self {
            Conversion::None => Some(value),
            Conversion::BitsToBytes => Some(value / 8.0),
            Conversion::KilobitsToBytes => Some(value * 125.0),
            Conversion::PercentToRatio => Some(value / 100.0),
            Conversion::Auto => Self::for_unit(source_unit)?.apply(value, source_unit),
        }
    }

    fn for_unit(unit: &str) -> Option<Conversion> {
        match unit.trim().to_ascii_lowercase().as_str() {
            "bits/s" | "bit/s" | "bps" => Some(Conversion::BitsToBytes),
            "kilobits/s" | "kbit/s" | "kbps" => Some(Conversion::KilobitsToBytes),
            "percent" | "%" => Some(Conversion::PercentToRatio),
            "" | "bytes/s" | "b/s" | "ratio" | "count" => Some(Conversion::None),
            _ => None,
        }
    }
}

impl FromStr for Conversion {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "none" => Conversion::None,
            "auto" => Conversion::Auto,
            "bits_to_bytes" => Conversion::BitsToBytes,
            "kilobits_to_bytes" => Conversion::KilobitsToBytes,
            "percent_to_ratio" => Conversion::PercentToRatio,
            other => return Err(format!("unknown conversion `{other}`")),
        })
    }
}

impl fmt::Display for Conversion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Conversion::None => "none",
            Conversion::Auto => "auto",
            Conversion::BitsToBytes => "bits_to_bytes",
            Conversion::KilobitsToBytes => "kilobits_to_bytes",
            Conversion::PercentToRatio => "percent_to_ratio",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MappingRule {
    pub tool: String,
    pub pattern: String,
    pub metric: String,
    pub conversion: Conversion,
}

impl MappingRule {
    pub fn new(tool: &str, pattern: &str, metric: &str, conversion: Conversion) -> Self {
        Self {
            tool: tool.to_string(),
            pattern: pattern.to_string(),
            metric: metric.to_string(),
            conversion,
        }
    }

    pub fn matches(&self, source_metric: &str) -> bool {
        segment_glob(&self.pattern, source_metric)
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("mapping table line {line}: {reason}")]
pub struct MappingError {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MappingTable {
    rules: Vec<MappingRule>,
}

impl MappingTable {
    pub fn parse(text: &str) -> Result<Self, MappingError> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split_whitespace().collect();
            let err = |reason: String| MappingError {
                line: i + 1,
                reason,
            };
            if cols.len() != 4 {
                return Err(err(format!("expected 4 columns, found {}", cols.len())));
            }
            let conversion = cols[3].parse().map_err(err)?;
            rules.push(MappingRule::new(cols[0], cols[1], cols[2], conversion));
        }
        Ok(Self { rules })
    }

    pub fn builtin() -> Self {
        Self::parse(DEFAULT_MAPPINGS).expect("bundled mapping table is valid")
    }

    pub fn rules(&self) -> &[MappingRule] {
        &self.rules
    }

    pub fn for_tool<'a>(&'a self, tool: &'a str) -> impl Iterator<Item = &'a MappingRule> + 'a {
        self.rules.iter().filter(move |r| r.tool == tool)
    }

    pub fn extend(&mut self, rules: impl IntoIterator<Item = MappingRule>) {
        self.rules.extend(rules);
    }
}

/// `*` matches any run of characters other than `.`.
fn segment_glob(pattern: &str, text: &str) -> bool {
    match pattern.split_once('*') {
        None => pattern == text,
        Some((prefix, rest)) => {
            let Some(tail) = text.strip_prefix(prefix) else {
                return false;
            };
            (0..=tail.len())
                .take_while(|&i| !tail[..i].contains('.'))
                .filter(|&i| tail.is_char_boundary(i))
                .any(|i| segment_glob(rest, &tail[i..]))
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Normalized {
    pub samples: Vec<MetricSample>,
    /// Readings with no mapping, an unknown unit or an invalid value.
    pub dropped: usize,
}

/// Maps readings onto canonical metrics, converts units and attaches the
/// `node` and `tool` labels. Readings without a timestamp get `scrape_ts`.
pub fn normalize(
    tool: &str,
    node_label: &str,
    readings: &[RawReading],
    rules: &[MappingRule],
    catalog: &[MetricDef],
    scrape_ts: i64,
) -> Normalized {
    let mut out = Normalized::default();
    let labels = [
        (NODE_LABEL.to_string(), node_label.to_string()),
        (TOOL_LABEL.to_string(), tool.to_string()),
    ];
    for r in readings {
        let sample = rules
            .iter()
            .find(|rule| rule.matches(&r.source_metric))
            .and_then(|rule| {
                let def = catalog.iter().find(|d| d.name == rule.metric)?;
                let value = rule.conversion.apply(r.value, &r.source_unit)?;
                let key = canonical_series_key(&def.name, &labels).ok()?;
                MetricSample::new(key, r.ts.unwrap_or(scrape_ts), value, def.kind).ok()
            });
        match sample {
            Some(s) => out.samples.push(s),
            None => out.dropped += 1,
        }
    }
    out
}
