//! netdata REST API v1: `/api/v1/chart` for units, `/api/v1/data` for rows.

use async_trait::async_trait;
use serde_json::Value;

use super::{Adapter, CollectorSpec, FetchError, HttpClient, RawReading, ScrapeWindow};
use crate::model::ToolKind;

pub const DEFAULT_CHARTS: &[&str] = &["net.eth0"];

/// Decodes a `format=json` data response into one reading per
/// (row, dimension). Null cells are skipped.
pub fn parse_data(chart: &str, unit: &str, body: &Value) -> Result<Vec<RawReading>, FetchError> {
    let malformed = |m: &str| FetchError::MalformedResponse(format!("chart {chart}: {m}"));
    let labels = body
        .get("labels")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing `labels`"))?;
    let rows = body
        .get("data")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed("missing `data`"))?;
    let dims: Vec<&str> = labels
        .iter()
        .map(|l| l.as_str().ok_or_else(|| malformed("non-string label")))
        .collect::<Result<_, _>>()?;
    if dims.first() != Some(&"time") {
        return Err(malformed("first label must be `time`"));
    }
    let mut out = Vec::new();
    for row in rows {
        let cells = row
            .as_array()
            .ok_or_else(|| malformed("row is not an array"))?;
        if cells.len() != dims.len() {
            return Err(malformed("row width does not match labels"));
        }
        let t_s = cells[0]
            .as_i64()
            .ok_or_else(|| malformed("bad time cell"))?;
        for (dim, cell) in dims.iter().zip(cells).skip(1) {
            if cell.is_null() {
                continue;
            }
            let v = cell.as_f64().ok_or_else(|| malformed("non-numeric cell"))?;
            if v.is_finite() {
                out.push(RawReading::new(
                    format!("{chart}.{dim}"),
                    Some(t_s * 1000),
                    v,
                    unit,
                ));
            }
        }
    }
    Ok(out)
}

pub async fn fetch_netdata(
    client: &HttpClient,
    spec: &CollectorSpec,
    charts: &[String],
    window_s: i64,
) -> Result<Vec<RawReading>, FetchError> {
    spec.expect_tool(ToolKind::Netdata)?;
    if window_s < 1 {
        return Err(FetchError::InvalidRequest(
            "window must be at least one second".into(),
        ));
    }
    let base = spec.path.as_deref().unwrap_or("").trim_end_matches('/');
    let mut out = Vec::new();
    for chart in charts {
        let info = client
            .get_json(spec, &format!("{base}/api/v1/chart?chart={chart}"))
            .await?;
        let unit = info
            .get("units")
            .and_then(Value::as_str)
            .unwrap_or("")
            .to_string();
        let body = client
            .get_json(
                spec,
                &format!("{base}/api/v1/data?chart={chart}&after=-{window_s}&format=json"),
            )
            .await?;
        out.extend(parse_data(chart, &unit, &body)?);
    }
    Ok(out)
}

pub struct NetdataAdapter {
    client: HttpClient,
}

impl NetdataAdapter {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

#[async_trait]
impl Adapter for NetdataAdapter {
    fn name(&self) -> &str {
        ToolKind::Netdata.as_str()
    }

    fn default_port(&self) -> u16 {
        ToolKind::Netdata.default_port()
    }

    async fn fetch(
        &self,
        spec: &CollectorSpec,
        window: ScrapeWindow,
    ) -> Result<Vec<RawReading>, FetchError> {
        let charts: Vec<String> = match &spec.options.charts {
            Some(c) => c.clone(),
            None => DEFAULT_CHARTS.iter().map(|s| s.to_string()).collect(),
        };
        let window_s = ((window.end_ms - window.start_ms) + 999) / 1000;
        fetch_netdata(&self.client, spec, &charts, window_s.max(1)).await
    }
}
