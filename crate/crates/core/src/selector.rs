//! Series selectors: `name_pattern{label=value,label!=value}`.
//!
//! The name pattern is a metric name where `*` matches any run of
//! characters; it may be omitted (or be a lone `*`) to match every metric.
//! Label values may be bare or double-quoted.

use std::fmt;

use thiserror::Error;

use crate::model::{is_valid_name, SeriesKey};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid selector `{input}`: {reason}")]
pub struct SelectorError {
    pub input: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchOp {
    Eq,
    Ne,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMatcher {
    pub name: String,
    pub op: MatchOp,
    pub value: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Selector {
    name: Option<String>,
    matchers: Vec<LabelMatcher>,
}

impl Selector {
    pub fn all() -> Self {
        Self {
            name: None,
            matchers: Vec::new(),
        }
    }

    pub fn parse(input: &str) -> Result<Self, SelectorError> {
        let err = |reason: &str| SelectorError {
            input: input.to_string(),
            reason: reason.to_string(),
        };
        let text = input.trim();
        if text.is_empty() {
            return Err(err("empty selector"));
        }
        let (name_part, rest) = match text.find('{') {
            Some(i) => (&text[..i], Some(&text[i + 1..])),
            None => (text, None),
        };
        let name = match name_part {
            "" | "*" => None,
            pat => {
                let valid_chars = pat
                    .chars()
                    .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_' || c == '*');
                if !valid_chars || pat.starts_with(|c: char| c.is_ascii_digit()) {
                    return Err(err("metric pattern must use [a-z0-9_*]"));
                }
                Some(pat.to_string())
            }
        };
        let mut matchers = Vec::new();
        if let Some(rest) = rest {
            let body = rest
                .strip_suffix('}')
                .ok_or_else(|| err("missing closing brace"))?;
            matchers = parse_matchers(body).map_err(|r| err(&r))?;
        }
        Ok(Self { name, matchers })
    }

    /// The metric name if the pattern is a plain literal.
    pub fn exact_name(&self) -> Option<&str> {
        self.name.as_deref().filter(|n| !n.contains('*'))
    }

    pub fn matchers(&self) -> &[LabelMatcher] {
        &self.matchers
    }

    pub fn matches(&self, key: &SeriesKey) -> bool {
        if let Some(pat) = &self.name {
            if !glob_match(pat, key.name()) {
                return false;
            }
        }
        self.matchers.iter().all(|m| {
            let actual = key.label(&m.name);
            match m.op {
                MatchOp::Eq => actual == Some(m.value.as_str()),
                MatchOp::Ne => actual != Some(m.value.as_str()),
            }
        })
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name.as_deref().unwrap_or("*"))?;
        f.write_str("{")?;
        for (i, m) in self.matchers.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            let op = if m.op == MatchOp::Eq { "=" } else { "!=" };
            write!(f, "{}{}{}", m.name, op, m.value)?;
        }
        f.write_str("}")
    }
}

fn parse_matchers(body: &str) -> Result<Vec<LabelMatcher>, String> {
    let mut out = Vec::new();
    let chars: Vec<char> = body.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        if i >= chars.len() {
            break;
        }
        let start = i;
        while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_') {
            i += 1;
        }
        let name: String = chars[start..i].iter().collect();
        if !is_valid_name(&name) {
            return Err(format!("bad label name `{name}`"));
        }
        let op = match (chars.get(i), chars.get(i + 1)) {
            (Some('!'), Some('=')) => {
                i += 2;
                MatchOp::Ne
            }
            (Some('='), _) => {
                i += 1;
                MatchOp::Eq
            }
            _ => return Err(format!("expected `=` or `!=` after `{name}`")),
        };
        let mut value = String::new();
        if chars.get(i) == Some(&'"') {
            i += 1;
            loop {
                match chars.get(i) {
                    None => return Err("unterminated quoted value".into()),
                    Some('\\') => {
                        let c = chars.get(i + 1).ok_or("dangling escape")?;
                        value.push(*c);
                        i += 2;
                    }
                    Some('"') => {
                        i += 1;
                        break;
                    }
                    Some(c) => {
                        value.push(*c);
                        i += 1;
                    }
                }
            }
        } else {
            while i < chars.len() && chars[i] != ',' {
                value.push(chars[i]);
                i += 1;
            }
            value = value.trim().to_string();
        }
        out.push(LabelMatcher { name, op, value });
        while i < chars.len() && chars[i].is_whitespace() {
            i += 1;
        }
        match chars.get(i) {
            None => break,
            Some(',') => i += 1,
            Some(c) => return Err(format!("unexpected `{c}`")),
        }
    }
    Ok(out)
}

/// `*` matches any (possibly empty) run of characters.
pub fn glob_match(pattern: &str, text: &str) -> bool {
    let p = pattern.as_bytes();
    let t = text.as_bytes();
    let (mut pi, mut ti) = (0, 0);
    let mut star: Option<(usize, usize)> = None;
    while ti < t.len() {
        if pi < p.len() && p[pi] == b'*' {
            star = Some((pi, ti));
            pi += 1;
        } else if pi < p.len() && p[pi] == t[ti] {
            pi += 1;
            ti += 1;
        } else if let Some((sp, st)) = star {
            pi = sp + 1;
            ti = st + 1;
            star = Some((sp, st + 1));
        } else {
            return false;
        }
    }
    p[pi..].iter().all(|c| *c == b'*')
}
