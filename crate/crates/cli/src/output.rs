//! Renders a query_range response. Values are printed from the response's
//! own number text so nothing is re-rounded.

use std::io::{self, Write};

use serde_json::Value;

use crate::Format;

/// `(series, ts, value)` rows in response order; `None` is a null bucket.
pub fn rows(response: &Value) -> io::Result<Vec<(String, i64, Option<String>)>> {
    let bad = |what: &str| {
        io::Error::new(
            io::ErrorKind::InvalidData,
            format!("unexpected response: {what}"),
        )
    };
    let frames = response
        .get("frames")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("no frames"))?;
    let mut out = Vec::new();
    for f in frames {
        let series = f
            .get("series")
            .and_then(Value::as_str)
            .ok_or_else(|| bad("frame without series"))?;
        for p in f
            .get("points")
            .and_then(Value::as_array)
            .ok_or_else(|| bad("frame without points"))?
        {
            let ts = p
                .get(0)
                .and_then(Value::as_i64)
                .ok_or_else(|| bad("point without ts"))?;
            let value = match p.get(1) {
                Some(Value::Null) => None,
                Some(v @ Value::Number(_)) => Some(v.to_string()),
                _ => return Err(bad("point value")),
            };
            out.push((series.to_string(), ts, value));
        }
    }
    Ok(out)
}

pub fn render(response: &Value, format: Format, out: &mut impl Write) -> io::Result<()> {
    match format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut *out, response)?;
            writeln!(out)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(["series", "ts", "value"])?;
            for (series, ts, value) in rows(response)? {
                w.write_record([series, ts.to_string(), value.unwrap_or_default()])?;
            }
            w.flush()
        }
        Format::Table => {
            let rows = rows(response)?;
            let width = rows
                .iter()
                .map(|r| r.0.len())
                .max()
                .unwrap_or(0)
                .max("SERIES".len());
            writeln!(out, "{:<width$}  {:>13}  VALUE", "SERIES", "TS")?;
            for (series, ts, value) in rows {
                writeln!(
                    out,
                    "{series:<width$}  {ts:>13}  {}",
                    value.as_deref().unwrap_or("-")
                )?;
            }
            Ok(())
        }
    }
}
