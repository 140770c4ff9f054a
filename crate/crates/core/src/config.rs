//! Plain-text `key = value` documents.
//!
//! One entry per line, UTF-8, `#` starts a comment that runs to the end of
//! the line. Keys may repeat; callers decide whether repetition is allowed.
//! This is the format of scene descriptions, sequence `meta` files and the
//! run configuration echoed by the CLI.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct Entry {
    pub key: String,
    pub value: String,
    /// 1-based source line, 0 for entries built in memory.
    pub line: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct KvDocument {
    entries: Vec<Entry>,
}

impl KvDocument {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}: expected `key = value`", idx + 1))
            })?;
            let key = key.trim();
            if key.is_empty() {
                return Err(Error::config(format!("line {}: empty key", idx + 1)));
            }
            entries.push(Entry {
                key: key.to_string(),
                value: value.trim().to_string(),
                line: idx + 1,
            });
        }
        Ok(Self { entries })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::format(path, "document", msg),
            other => other,
        })
    }

    pub fn push(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push(Entry {
            key: key.into(),
            value: value.to_string(),
            line: 0,
        });
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    /// Single-valued lookup. A repeated key is an error.
    pub fn get(&self, key: &str) -> Result<Option<&Entry>> {
        let mut found = None;
        for e in self.entries.iter().filter(|e| e.key == key) {
            if found.is_some() {
                return Err(Error::config(format!(
                    "line {}: key `{key}` given more than once",
                    e.line
                )));
            }
            found = Some(e);
        }
        Ok(found)
    }

    pub fn get_all<'a>(&'a self, key: &'a str) -> impl Iterator<Item = &'a Entry> + 'a {
        self.entries.iter().filter(move |e| e.key == key)
    }

    pub fn parse_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key)? {
            None => Ok(None),
            Some(e) => e.value.parse::<T>().map(Some).map_err(|_| {
                Error::config(format!(
                    "line {}: cannot parse `{}` for key `{key}`",
                    e.line, e.value
                ))
            }),
        }
    }

    pub fn parse_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.parse_opt(key)?.unwrap_or(default))
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.parse_opt(key)?
            .ok_or_else(|| Error::config(format!("missing required key `{key}`")))
    }

    /// Rejects any key not in `known`, so typos do not silently fall back to
    /// defaults.
    pub fn check_keys(&self, known: &[&str]) -> Result<()> {
        match self.entries.iter().find(|e| !known.contains(&e.key.as_str())) {
            Some(e) => Err(Error::config(format!(
                "line {}: unknown key `{}`",
                e.line, e.key
            ))),
            None => Ok(()),
        }
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            let _ = writeln!(out, "{} = {}", e.key, e.value);
        }
        out
    }
}
