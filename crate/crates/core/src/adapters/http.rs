use std::time::Duration;

use serde_json::Value;

use super::{CollectorSpec, FetchError};

/// Shared HTTP client for all adapters. Redirects are never followed.
#[derive(Debug, Clone)]
pub struct HttpClient {
    inner: reqwest::Client,
}

impl Default for HttpClient {
    fn default() -> Self {
        Self::new()
    }
}

impl HttpClient {
    pub fn new() -> Self {
        let inner = reqwest::Client::builder()
            .redirect(reqwest::redirect::Policy::none())
            .pool_max_idle_per_host(4)
            .build()
            .expect("http client");
        Self { inner }
    }

    pub async fn get_text(
        &self,
        spec: &CollectorSpec,
        path_and_query: &str,
    ) -> Result<String, FetchError> {
        let req = self.inner.get(spec.url(path_and_query));
        self.send(spec, req).await
    }

    pub async fn get_json(
        &self,
        spec: &CollectorSpec,
        path_and_query: &str,
    ) -> Result<Value, FetchError> {
        let body = self.get_text(spec, path_and_query).await?;
        serde_json::from_str(&body).map_err(|e| FetchError::MalformedResponse(e.to_string()))
    }

    pub async fn post_json(
        &self,
        spec: &CollectorSpec,
        path: &str,
        body: &Value,
    ) -> Result<Value, FetchError> {
        let req = self
            .inner
            .post(spec.url(path))
            .header("content-type", "application/json-rpc")
            .body(body.to_string());
        let text = self.send(spec, req).await?;
        serde_json::from_str(&text).map_err(|e| FetchError::MalformedResponse(e.to_string()))
    }

    async fn send(
        &self,
        spec: &CollectorSpec,
        req: reqwest::RequestBuilder,
    ) -> Result<String, FetchError> {
        let timeout = Duration::from_millis(spec.timeout_ms.max(1) as u64);
        let resp = req.timeout(timeout).send().await.map_err(classify)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(FetchError::HttpStatus(status.as_u16()));
        }
        resp.text().await.map_err(classify)
    }
}

fn classify(e: reqwest::Error) -> FetchError {
    if e.is_timeout() {
        FetchError::Timeout
    } else if e.is_connect() {
        FetchError::Unreachable(e.to_string())
    } else if e.is_decode() || e.is_body() {
        FetchError::MalformedResponse(e.to_string())
    } else {
        FetchError::Unreachable(e.to_string())
    }
}
