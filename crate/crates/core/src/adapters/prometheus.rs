//! Prometheus text exposition format.
//!
//! ```text
//! metric_name [ "{" label_name "=" `"` label_value `"` { "," ... } [ "," ] "}" ] value [ timestamp ]
//! ```
//!
//! Comment lines (`# HELP`, `# TYPE` and any other `#` line) are skipped.
//! Samples with NaN or infinite values are skipped since they cannot be
//! stored.

use async_trait::async_trait;
use thiserror::Error;

use super::{Adapter, CollectorSpec, FetchError, HttpClient, RawReading, ScrapeWindow};
use crate::model::ToolKind;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("line {line_no}: {reason}")]
pub struct ParseError {
    pub line_no: usize,
    pub reason: String,
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn peek(&self) -> Option<u8> {
        self.s.get(self.pos).copied()
    }

    fn skip_blanks(&mut self) -> bool {
        let start = self.pos;
        while matches!(self.peek(), Some(b' ' | b'\t')) {
            self.pos += 1;
        }
        self.pos > start
    }

    fn take_while(&mut self, first: impl Fn(u8) -> bool, rest: impl Fn(u8) -> bool) -> &'a str {
        let start = self.pos;
        if self.peek().is_some_and(&first) {
            self.pos += 1;
            while self.peek().is_some_and(&rest) {
                self.pos += 1;
            }
        }
        std::str::from_utf8(&self.s[start..self.pos]).unwrap_or("")
    }

    fn token(&mut self) -> &'a str {
        self.take_while(|c| c != b' ' && c != b'\t', |c| c != b' ' && c != b'\t')
    }
}

fn is_name_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_' || c == b':'
}

fn is_name_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_' || c == b':'
}

fn is_label_start(c: u8) -> bool {
    c.is_ascii_alphabetic() || c == b'_'
}

fn is_label_char(c: u8) -> bool {
    c.is_ascii_alphanumeric() || c == b'_'
}

pub fn parse_value(tok: &str) -> Option<f64> {
    match tok {
        "+Inf" | "Inf" => Some(f64::INFINITY),
        "-Inf" => Some(f64::NEG_INFINITY),
        "NaN" => Some(f64::NAN),
        _ if tok
            .bytes()
            .all(|c| c.is_ascii_digit() || b"+-.eE".contains(&c))
            && !tok.is_empty() =>
        {
            tok.parse().ok()
        }
        _ => None,
    }
}

fn parse_line(line: &str, scrape_ts: i64) -> Result<Option<RawReading>, String> {
    let mut c = Cursor {
        s: line.as_bytes(),
        pos: 0,
    };
    c.skip_blanks();
    match c.peek() {
        None => return Ok(None),
        Some(b'#') => return Ok(None),
        _ => {}
    }
    let name = c.take_while(is_name_start, is_name_char);
    if name.is_empty() {
        return Err("invalid metric name".into());
    }
    let mut labels: Vec<(String, String)> = Vec::new();
    let spaced = c.skip_blanks();
    if c.peek() == Some(b'{') {
        c.pos += 1;
        loop {
            c.skip_blanks();
            if c.peek() == Some(b'}') {
                c.pos += 1;
                break;
            }
            let lname = c.take_while(is_label_start, is_label_char);
            if lname.is_empty() {
                return Err("invalid label name".into());
            }
            c.skip_blanks();
            if c.peek() != Some(b'=') {
                return Err(format!("expected `=` after label `{lname}`"));
            }
            c.pos += 1;
            c.skip_blanks();
            if c.peek() != Some(b'"') {
                return Err(format!("expected quoted value for label `{lname}`"));
            }
            c.pos += 1;
            let mut value = Vec::new();
            loop {
                match c.peek() {
                    None => return Err("unterminated label value".into()),
                    Some(b'"') => {
                        c.pos += 1;
                        break;
                    }
                    Some(b'\\') => {
                        let esc = c.s.get(c.pos + 1).copied();
                        value.push(match esc {
                            Some(b'\\') => b'\\',
                            Some(b'"') => b'"',
                            Some(b'n') => b'\n',
                            _ => return Err("invalid escape in label value".into()),
                        });
                        c.pos += 2;
                    }
                    Some(b) => {
                        value.push(b);
                        c.pos += 1;
                    }
                }
            }
            if labels.iter().any(|(k, _)| k == lname) {
                return Err(format!("duplicate label `{lname}`"));
            }
            let value =
                String::from_utf8(value).map_err(|_| "label value is not UTF-8".to_string())?;
            labels.push((lname.to_string(), value));
            c.skip_blanks();
            match c.peek() {
                Some(b',') => c.pos += 1,
                Some(b'}') => {}
                _ => return Err("expected `,` or `}` in label set".into()),
            }
        }
        c.skip_blanks();
    } else if !spaced {
        return Err("expected whitespace after metric name".into());
    }
    let value_tok = c.token();
    let value = parse_value(value_tok).ok_or_else(|| format!("invalid value `{value_tok}`"))?;
    let mut ts = scrape_ts;
    if c.skip_blanks() {
        let ts_tok = c.token();
        if !ts_tok.is_empty() {
            ts = ts_tok
                .parse::<i64>()
                .map_err(|_| format!("invalid timestamp `{ts_tok}`"))?;
            c.skip_blanks();
        }
    }
    if c.peek().is_some() {
        return Err("trailing characters".into());
    }
    if !value.is_finite() {
        return Ok(None);
    }
    Ok(Some(RawReading {
        source_metric: name.to_string(),
        source_labels: labels,
        ts: Some(ts),
        value,
        source_unit: String::new(),
    }))
}

/// Parses a whole exposition body. Any bad line fails the entire body.
pub fn parse_prometheus_exposition(
    body: &str,
    scrape_ts: i64,
) -> Result<Vec<RawReading>, ParseError> {
    let mut out = Vec::new();
    for (i, line) in body.split('\n').enumerate() {
        let line = line.strip_suffix('\r').unwrap_or(line);
        match parse_line(line, scrape_ts) {
            Ok(Some(r)) => out.push(r),
            Ok(None) => {}
            Err(reason) => {
                return Err(ParseError {
                    line_no: i + 1,
                    reason,
                })
            }
        }
    }
    Ok(out)
}

pub async fn fetch_prometheus(
    client: &HttpClient,
    spec: &CollectorSpec,
    scrape_ts: i64,
) -> Result<Vec<RawReading>, FetchError> {
    spec.expect_tool(ToolKind::Prometheus)?;
    let body = client.get_text(spec, spec.path_or("/metrics")).await?;
    Ok(parse_prometheus_exposition(&body, scrape_ts)?)
}

pub struct PrometheusAdapter {
    client: HttpClient,
}

impl PrometheusAdapter {
    pub fn new(client: HttpClient) -> Self {
        Self { client }
    }
}

#[async_trait]
impl Adapter for PrometheusAdapter {
    fn name(&self) -> &str {
        ToolKind::Prometheus.as_str()
    }

    fn default_port(&self) -> u16 {
        ToolKind::Prometheus.default_port()
    }

    async fn fetch(
        &self,
        spec: &CollectorSpec,
        window: ScrapeWindow,
    ) -> Result<Vec<RawReading>, FetchError> {
        fetch_prometheus(&self.client, spec, window.end_ms).await
    }
}
