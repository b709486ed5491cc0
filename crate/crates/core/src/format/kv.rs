//! Line-based `key = value` text format shared by configs and manifests.
//! '#' starts a comment; arrays are comma-separated; floats print in the
//! shortest round-trip representation.

use std::collections::HashMap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default)]
pub struct KvMap {
    entries: Vec<(String, String)>,
    index: HashMap<String, usize>,
}

impl KvMap {
    pub fn new() -> Self {
        KvMap::default()
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = KvMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = match raw.find('#') {
                Some(at) => &raw[..at],
                None => raw,
            }
            .trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::config(format!("line {}: expected 'key = value', got '{raw}'", lineno + 1)));
            };
            kv.push(key.trim(), value.trim());
        }
        Ok(kv)
    }

    pub fn push(&mut self, key: &str, value: impl std::fmt::Display) {
        let key = key.to_string();
        self.index.insert(key.clone(), self.entries.len());
        self.entries.push((key, value.to_string()));
    }

    pub fn push_list<T: std::fmt::Display>(&mut self, key: &str, values: &[T]) {
        let joined = values.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",");
        self.push(key, joined);
    }

    pub fn serialize(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.entries {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(v);
            out.push('\n');
        }
        out
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.index.get(key).map(|&i| self.entries[i].1.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| Error::config(format!("missing key '{key}'")))
    }

    pub fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let raw = self.require(key)?;
        raw.parse().map_err(|_| Error::config(format!("key '{key}': cannot parse '{raw}'")))
    }

    pub fn parse_or<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw.parse().map_err(|_| Error::config(format!("key '{key}': cannot parse '{raw}'"))),
        }
    }

    pub fn parse_list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let raw = self.require(key)?;
        raw.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| Error::config(format!("key '{key}': cannot parse element '{s}'")))
            })
            .collect()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(k, _)| k.as_str())
    }
}
