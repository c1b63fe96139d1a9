//! ntopng REST API v2 interface statistics.

use async_trait::async_trait;
use serde_json::Value;

use super::{Adapter, CollectorSpec, FetchError, HttpClient, RawReading, ScrapeWindow};
use crate::model::ToolKind;

/// Recognized `rsp` fields and their units.
pub const FIELDS: &[(&str, &str)] = &[
    ("throughput_bps", "bits/s"),
    ("drops", "count"),
    ("packets", "count"),
];

pub fn parse_interface_data(body: &Value) -> Result<Vec<RawReading>, FetchError> {
    let rc = body
        .get("rc")
        .and_then(Value::as_i64)
        .ok_or_else(|| FetchError::MalformedResponse("missing `rc`".into()))?;
    if rc != 0 {
        return Err(FetchError::ToolError(rc));
    }
    let rsp = body
        .get("rsp")
        .and_then(Value::as_object)
        .ok_or_else(|| FetchError::MalformedResponse("missing `rsp` object".into()))?;
    let mut out = Vec::new();
    for (field, unit) in FIELDS {
        if let Some(v) = rsp.get(*field) {
            let v = v.as_f64().ok_or_else(|| {
                FetchError::MalformedResponse(format!("`{field}` is not a number"))
            })?;
            out.push(RawReading::new(
                format!("interface.{field}"),
                None,
                v,
                *unit,
            ));
        }
    }
    Ok(out)
}

pub async fn fetch_ntopng(
    client: &HttpClient,
    spec: &CollectorSpec,
    interface_id: &str,
) -> Result<Vec<RawReading>, FetchError> {
    spec.expect_tool(ToolKind::Ntopng)?;
    let base = spec.path.as_deref().unwrap_or("").trim_end_matches('/');
    let body = client
        .get_json(
            spec,
            &format!("{base}/lua/rest/v2/get/interface/data.lua?ifid={interface_id}"),
        )
        .await?;
    parse_interface_data(&body)
}

pub struct NtopngAdapter {
    client: HttpClient,
}

impl NtopngAdapter {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

#[async_trait]
impl Adapter for NtopngAdapter {
    fn name(&self) -> &str {
        ToolKind::Ntopng.as_str()
    }

    fn default_port(&self) -> u16 {
        ToolKind::Ntopng.default_port()
    }

    async fn fetch(
        &self,
        spec: &CollectorSpec,
        _window: ScrapeWindow,
    ) -> Result<Vec<RawReading>, FetchError> {
        let ifid = spec.options.interface_id.as_deref().unwrap_or("0");
        fetch_ntopng(&self.client, spec, ifid).await
    }
}
