//! Zabbix JSON-RPC API: `user.login` and `history.get`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};

use async_trait::async_trait;
use parking_lot::Mutex;
use serde_json::{json, Value};

use super::{Adapter, CollectorSpec, FetchError, HttpClient, RawReading, ScrapeWindow};
use crate::model::ToolKind;

pub const API_PATH: &str = "/api_jsonrpc.php";
pub const DEFAULT_ITEMS: &[&str] = &["net.if.in", "icmppingloss"];
/// Error code the server returns for an unknown or expired session.
pub const AUTH_EXPIRED_CODE: i64 = -32602;

static REQUEST_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> u64 {
    REQUEST_ID.fetch_add(1, Ordering::Relaxed)
}

fn rpc_error(body: &Value) -> Option<(i64, String)> {
    let err = body.get("error")?;
    let code = err.get("code").and_then(Value::as_i64).unwrap_or(0);
    let msg = err
        .get("data")
        .or_else(|| err.get("message"))
        .and_then(Value::as_str)
        .unwrap_or("")
        .to_string();
    Some((code, msg))
}

pub fn parse_login_response(body: &Value) -> Result<String, FetchError> {
    if let Some((_, msg)) = rpc_error(body) {
        return Err(FetchError::AuthFailed(msg));
    }
    body.get("result")
        .and_then(Value::as_str)
        .map(str::to_string)
        .ok_or_else(|| {
            FetchError::MalformedResponse("login response has neither result nor error".into())
        })
}

pub fn parse_history_response(item_key: &str, body: &Value) -> Result<Vec<RawReading>, FetchError> {
    if let Some((code, _)) = rpc_error(body) {
        return Err(if code == AUTH_EXPIRED_CODE {
            FetchError::AuthExpired
        } else {
            FetchError::ToolError(code)
        });
    }
    let rows = body
        .get("result")
        .and_then(Value::as_array)
        .ok_or_else(|| FetchError::MalformedResponse("history result is not an array".into()))?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let field = |name: &str| -> Result<&str, FetchError> {
                row.get(name).and_then(Value::as_str).ok_or_else(|| {
                    FetchError::MalformedResponse(format!("row {i}: missing string `{name}`"))
                })
            };
            let clock: i64 = field("clock")?
                .parse()
                .map_err(|_| FetchError::MalformedResponse(format!("row {i}: bad clock")))?;
            let value: f64 = field("value")?
                .parse()
                .map_err(|_| FetchError::MalformedResponse(format!("row {i}: bad value")))?;
            Ok(RawReading::new(item_key, Some(clock * 1000), value, ""))
        })
        .collect()
}

pub async fn zabbix_login(client: &HttpClient, spec: &CollectorSpec) -> Result<String, FetchError> {
    spec.expect_tool(ToolKind::Zabbix)?;
    let creds = spec
        .credentials
        .as_ref()
        .ok_or_else(|| FetchError::InvalidRequest("zabbix collector has no credentials".into()))?;
    let body = json!({
        "jsonrpc": "2.0",
        "method": "user.login",
        "params": {"username": creds.username, "password": creds.secret},
        "id": next_id(),
    });
    let resp = client
        .post_json(spec, spec.path_or(API_PATH), &body)
        .await?;
    parse_login_response(&resp)
}

pub async fn zabbix_fetch_history(
    client: &HttpClient,
    spec: &CollectorSpec,
    token: &str,
    item_key: &str,
    t0: i64,
    t1: i64,
) -> Result<Vec<RawReading>, FetchError> {
    spec.expect_tool(ToolKind::Zabbix)?;
    if t0 >= t1 {
        return Err(FetchError::InvalidRequest(format!(
            "empty window {t0}..{t1}"
        )));
    }
    // History has whole-second clocks; ask for the seconds inside (t0, t1].
    let (from_s, till_s) = (t0.div_euclid(1000) + 1, t1.div_euclid(1000));
    if from_s > till_s {
        return Ok(Vec::new());
    }
    let body = json!({
        "jsonrpc": "2.0",
        "method": "history.get",
        "params": {
            "output": "extend",
            "history": 0,
            "filter": {"key_": item_key},
            "time_from": from_s,
            "time_till": till_s,
            "sortfield": "clock",
            "sortorder": "ASC",
        },
        "auth": token,
        "id": next_id(),
    });
    let resp = client
        .post_json(spec, spec.path_or(API_PATH), &body)
        .await?;
    parse_history_response(item_key, &resp)
}

/// Caches one session token per collector id and logs in again once when
/// the server reports it expired.
pub struct ZabbixAdapter {
    client: HttpClient,
    tokens: Mutex<HashMap<String, String>>,
}

impl ZabbixAdapter {
    pub fn new(client: HttpClient) -> Self {
        Self {
            client,
            tokens: Mutex::new(HashMap::new()),
        }
    }

    async fn token(&self, spec: &CollectorSpec, fresh: bool) -> Result<String, FetchError> {
        if !fresh {
            if let Some(t) = self.tokens.lock().get(&spec.id) {
                return Ok(t.clone());
            }
        }
        let t = zabbix_login(&self.client, spec).await?;
        self.tokens.lock().insert(spec.id.clone(), t.clone());
        Ok(t)
    }

    async fn fetch_all(
        &self,
        spec: &CollectorSpec,
        token: &str,
        items: &[String],
        window: ScrapeWindow,
    ) -> Result<Vec<RawReading>, FetchError> {
        let mut out = Vec::new();
        for item in items {
            out.extend(
                zabbix_fetch_history(
                    &self.client,
                    spec,
                    token,
                    item,
                    window.start_ms,
                    window.end_ms,
                )
                .await?,
            );
        }
        Ok(out)
    }
}

#[async_trait]
impl Adapter for ZabbixAdapter {
    fn name(&self) -> &str {
        ToolKind::Zabbix.as_str()
    }

    fn default_port(&self) -> u16 {
        ToolKind::Zabbix.default_port()
    }

    async fn fetch(
        &self,
        spec: &CollectorSpec,
        window: ScrapeWindow,
    ) -> Result<Vec<RawReading>, FetchError> {
        let items: Vec<String> = match &spec.options.items {
            Some(i) => i.clone(),
            None => DEFAULT_ITEMS.iter().map(|s| s.to_string()).collect(),
        };
        let token = self.token(spec, false).await?;
        match self.fetch_all(spec, &token, &items, window).await {
            Err(FetchError::AuthExpired) => {
                self.tokens.lock().remove(&spec.id);
                let token = self.token(spec, true).await?;
                self.fetch_all(spec, &token, &items, window).await
            }
            other => other,
        }
    }
}
