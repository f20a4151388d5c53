//! Line-oriented key/value documents used for scene, episode, config and
//! map files.
//!
//! ```text
//! stmr-scene v1
//! # comment
//! cell_size = 5
//! label =
//! 1 1 2
//! 1 3 2
//! ```
//!
//! A key with an empty value opens a block; the block runs until a blank
//! line, the next `key =` line, or end of input.

use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DocError {
    pub line: usize,
    pub message: String,
}

impl DocError {
    pub fn new(line: usize, message: impl Into<String>) -> Self {
        Self {
            line,
            message: message.into(),
        }
    }
}

impl fmt::Display for DocError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

impl std::error::Error for DocError {}

#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Scalar(String),
    /// `(line number, text)` pairs.
    Block(Vec<(usize, String)>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub key: String,
    pub line: usize,
    pub value: Value,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub header: String,
    pub entries: Vec<Entry>,
}

fn key_line(line: &str) -> Option<(&str, &str)> {
    let (k, v) = line.split_once('=')?;
    let k = k.trim();
    let is_ident = !k.is_empty()
        && k
            .chars()
            .all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_');
    is_ident.then_some((k, v.trim()))
}

impl Document {
    /// Parses a document whose first non-comment line must equal `header`.
    /// An empty `header` accepts documents without one.
    pub fn parse(text: &str, header: &str) -> Result<Self, DocError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end()))
            .peekable();

        let mut found_header = String::new();
        if !header.is_empty() {
            loop {
                match lines.next() {
                    Some((_, l)) if l.trim().is_empty() || l.trim_start().starts_with('#') => {}
                    Some((n, l)) => {
                        if l.trim() != header {
                            return Err(DocError::new(
                                n,
                                format!("expected header `{header}`, found `{}`", l.trim()),
                            ));
                        }
                        found_header = l.trim().to_string();
                        break;
                    }
                    None => return Err(DocError::new(0, format!("missing header `{header}`"))),
                }
            }
        }

        let mut entries: Vec<Entry> = Vec::new();
        while let Some((n, raw)) = lines.next() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = key_line(line) else {
                return Err(DocError::new(n, format!("expected `key = value`, found `{line}`")));
            };
            if entries.iter().any(|e| e.key == key) {
                return Err(DocError::new(n, format!("duplicate key `{key}`")));
            }
            let value = if value.is_empty() {
                let mut block = Vec::new();
                while let Some(&(bn, braw)) = lines.peek() {
                    let b = braw.trim();
                    if b.is_empty() || key_line(b).is_some() {
                        break;
                    }
                    lines.next();
                    if !b.starts_with('#') {
                        block.push((bn, b.to_string()));
                    }
                }
                Value::Block(block)
            } else {
                Value::Scalar(value.to_string())
            };
            entries.push(Entry {
                key: key.to_string(),
                line: n,
                value,
            });
        }
        Ok(Document {
            header: found_header,
            entries,
        })
    }

    pub fn get(&self, key: &str) -> Option<&Entry> {
        self.entries.iter().find(|e| e.key == key)
    }

    pub fn scalar(&self, key: &str) -> Result<Option<(usize, &str)>, DocError> {
        match self.get(key) {
            None => Ok(None),
            Some(Entry {
                value: Value::Scalar(s),
                line,
                ..
            }) => Ok(Some((*line, s.as_str()))),
            Some(e) => Err(DocError::new(e.line, format!("`{key}` must be a single value"))),
        }
    }

    pub fn require_scalar(&self, key: &str) -> Result<(usize, &str), DocError> {
        self.scalar(key)?
            .ok_or_else(|| DocError::new(0, format!("missing field `{key}`")))
    }

    pub fn block(&self, key: &str) -> Result<Option<&[(usize, String)]>, DocError> {
        match self.get(key) {
            None => Ok(None),
            Some(Entry {
                value: Value::Block(b),
                ..
            }) => Ok(Some(b.as_slice())),
            Some(e) => Err(DocError::new(e.line, format!("`{key}` must be a block"))),
        }
    }

    pub fn require_block(&self, key: &str) -> Result<&[(usize, String)], DocError> {
        self.block(key)?
            .ok_or_else(|| DocError::new(0, format!("missing block `{key}`")))
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>, DocError> {
        match self.scalar(key)? {
            None => Ok(None),
            Some((line, s)) => s
                .parse()
                .map(Some)
                .map_err(|_| DocError::new(line, format!("`{key}`: cannot parse `{s}`"))),
        }
    }
}

/// Parses whitespace-separated numbers from one line.
pub fn numbers<T: FromStr>(line: usize, text: &str, what: &str) -> Result<Vec<T>, DocError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse()
                .map_err(|_| DocError::new(line, format!("{what}: cannot parse `{tok}`")))
        })
        .collect()
}

/// Parses exactly `n` whitespace-separated numbers.
pub fn fixed_numbers<T: FromStr>(
    line: usize,
    text: &str,
    n: usize,
    what: &str,
) -> Result<Vec<T>, DocError> {
    let v = numbers(line, text, what)?;
    if v.len() != n {
        return Err(DocError::new(
            line,
            format!("{what}: expected {n} values, found {}", v.len()),
        ));
    }
    Ok(v)
}
