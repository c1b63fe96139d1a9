//! Independent oracles shared by the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;
use std::sync::OnceLock;

use regex::Regex;

/// `(name, labels in order, value bits, ts)`.
pub type RefSample = (String, Vec<(String, String)>, u64, i64);

fn line_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"^[ \t]*(?P<name>[a-zA-Z_:][a-zA-Z0-9_:]*)(?:[ \t]*\{(?P<labels>(?:[^"}]|"(?:[^"\\]|\\.)*")*)\}[ \t]*|[ \t]+)(?P<value>[^ \t]+)(?:[ \t]+(?P<ts>[+-]?[0-9]+))?[ \t]*$"#,
        )
        .unwrap()
    })
}

fn label_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(
            r#"^[ \t]*([a-zA-Z_][a-zA-Z0-9_]*)[ \t]*=[ \t]*"((?:[^"\\]|\\.)*)"[ \t]*(?:,|$)"#,
        )
        .unwrap()
    })
}

fn number_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^[+-]?(?:[0-9]+(?:\.[0-9]*)?|\.[0-9]+)(?:[eE][+-]?[0-9]+)?$").unwrap()
    })
}

fn unescape(s: &str) -> Option<String> {
    let mut out = String::new();
    let mut it = s.chars();
    while let Some(c) = it.next() {
        if c != '\\' {
            out.push(c);
            continue;
        }
        out.push(match it.next()? {
            '\\' => '\\',
            '"' => '"',
            'n' => '\n',
            _ => return None,
        });
    }
    Some(out)
}

/// Regex-based exposition reader. `None` means the body is rejected.
/// Non-finite samples are dropped; missing timestamps take `scrape_ts`.
pub fn reference_exposition(body: &str, scrape_ts: i64) -> Option<Vec<RefSample>> {
    let mut out = Vec::new();
    for line in body.lines() {
        let trimmed = line.trim_start_matches([' ', '\t']);
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let caps = line_re().captures(line)?;
        let mut labels = Vec::new();
        if let Some(body) = caps.name("labels") {
            let mut rest = body.as_str();
            while !rest.trim_matches([' ', '\t']).is_empty() {
                let m = label_re().captures(rest)?;
                let name = m[1].to_string();
                if labels.iter().any(|(k, _): &(String, String)| *k == name) {
                    return None;
                }
                labels.push((name, unescape(&m[2])?));
                rest = &rest[m.get(0).unwrap().end()..];
            }
        }
        let value = match &caps["value"] {
            "NaN" | "Inf" | "+Inf" | "-Inf" => continue,
            v if number_re().is_match(v) => v.parse::<f64>().ok()?,
            _ => return None,
        };
        let ts = match caps.name("ts") {
            Some(t) => t.as_str().parse::<i64>().ok()?,
            None => scrape_ts,
        };
        out.push((caps["name"].to_string(), labels, value.to_bits(), ts));
    }
    Some(out)
}

pub fn corpus_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/corpus/exposition")
}

/// `(file name, body)` for every fixture, sorted by name.
pub fn exposition_corpus() -> Vec<(String, String)> {
    let mut files: Vec<_> = std::fs::read_dir(corpus_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "prom"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

/// Scan-and-bucket query over one series' points. Rates are computed over
/// consecutive in-window points, with a drop treated as a counter reset.
pub fn naive_query(
    points: &[(i64, f64)],
    t0: i64,
    t1: i64,
    step: i64,
    agg: &str,
) -> Vec<(i64, Option<f64>)> {
    let mut window: Vec<(i64, f64)> = points
        .iter()
        .copied()
        .filter(|p| p.0 >= t0 && p.0 < t1)
        .collect();
    window.sort_by_key(|p| p.0);
    let src: Vec<(i64, f64)> = if agg == "rate" {
        let mut r = Vec::new();
        for i in 1..window.len() {
            let ((ta, va), (tb, vb)) = (window[i - 1], window[i]);
            let increase = if vb < va { vb } else { vb - va };
            r.push((tb, increase / ((tb - ta) as f64 / 1000.0)));
        }
        r
    } else {
        window
    };
    let mut out = Vec::new();
    let mut b = t0;
    while b < t1 {
        let vals: Vec<f64> = src
            .iter()
            .filter(|p| p.0 >= b && p.0 < b + step)
            .map(|p| p.1)
            .collect();
        let v = if vals.is_empty() {
            None
        } else {
            Some(match agg {
                "avg" | "rate" => vals.iter().sum::<f64>() / vals.len() as f64,
                "sum" => vals.iter().sum(),
                "min" => vals
                    .iter()
                    .copied()
                    .reduce(|a, b| if b < a { b } else { a })
                    .unwrap(),
                "max" => vals
                    .iter()
                    .copied()
                    .reduce(|a, b| if b > a { b } else { a })
                    .unwrap(),
                "last" => *vals.last().unwrap(),
                other => panic!("unknown aggregator {other}"),
            })
        };
        out.push((b, v));
        b += step;
    }
    out
}
