//! perfSONAR measurement archive, flattened to `[{"ts": s, "val": x}]`.

use async_trait::async_trait;
use serde_json::Value;

use super::{Adapter, CollectorSpec, FetchError, HttpClient, RawReading, ScrapeWindow};
use crate::model::ToolKind;

pub const EVENT_TYPES: &[(&str, &str)] = &[("throughput", "bits/s"), ("packet-loss-rate", "ratio")];

/// Archives deliver results late, so their samples get a wider admission
/// window than scraped tools.
pub const OUT_OF_ORDER_WINDOW_MS: i64 = 60_000;

pub fn parse_archive(
    event_type: &str,
    unit: &str,
    body: &Value,
) -> Result<Vec<RawReading>, FetchError> {
    let items = body
        .as_array()
        .ok_or_else(|| FetchError::MalformedResponse("archive body is not an array".into()))?;
    items
        .iter()
        .enumerate()
        .map(|(i, item)| {
            let field = |name: &str| {
                item.get(name).and_then(Value::as_f64).ok_or_else(|| {
                    FetchError::MalformedResponse(format!("element {i}: missing numeric `{name}`"))
                })
            };
            let ts = field("ts")?;
            let val = field("val")?;
            Ok(RawReading::new(
                event_type,
                Some((ts * 1000.0).round() as i64),
                val,
                unit,
            ))
        })
        .collect()
}

pub async fn fetch_perfsonar(
    client: &HttpClient,
    spec: &CollectorSpec,
    event_type: &str,
    t0: i64,
    t1: i64,
) -> Result<Vec<RawReading>, FetchError> {
    spec.expect_tool(ToolKind::Perfsonar)?;
    let unit = EVENT_TYPES
        .iter()
        .find(|(e, _)| *e == event_type)
        .map(|(_, u)| *u)
        .ok_or_else(|| {
            FetchError::InvalidRequest(format!("unsupported event type `{event_type}`"))
        })?;
    if t0 >= t1 {
        return Err(FetchError::InvalidRequest(format!(
            "empty window {t0}..{t1}"
        )));
    }
    let base = spec.path_or("/archive").trim_end_matches('/');
    // Archive timestamps are whole seconds; ask for those inside (t0, t1].
    let (start_s, end_s) = (t0.div_euclid(1000) + 1, t1.div_euclid(1000));
    if start_s > end_s {
        return Ok(Vec::new());
    }
    let body = client
        .get_json(
            spec,
            &format!("{base}/{event_type}?time-start={start_s}&time-end={end_s}"),
        )
        .await?;
    parse_archive(event_type, unit, &body)
}

pub struct PerfsonarAdapter {
    client: HttpClient,
}

impl PerfsonarAdapter {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

#[async_trait]
impl Adapter for PerfsonarAdapter {
    fn name(&self) -> &str {
        ToolKind::Perfsonar.as_str()
    }

    fn default_port(&self) -> u16 {
        ToolKind::Perfsonar.default_port()
    }

    fn out_of_order_window_ms(&self) -> Option<i64> {
        Some(OUT_OF_ORDER_WINDOW_MS)
    }

    async fn fetch(
        &self,
        spec: &CollectorSpec,
        window: ScrapeWindow,
    ) -> Result<Vec<RawReading>, FetchError> {
        let events: Vec<String> = match &spec.options.event_types {
            Some(e) => e.clone(),
            None => EVENT_TYPES.iter().map(|(e, _)| e.to_string()).collect(),
        };
        let mut out = Vec::new();
        for e in &events {
            out.extend(
                fetch_perfsonar(&self.client, spec, e, window.start_ms, window.end_ms).await?,
            );
        }
        Ok(out)
    }
}
