//! Flat `key = value` configuration files. Blank lines and lines starting
//! with `#` are ignored.

use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Parses entries in file order. Duplicate keys are errors.
pub fn parse_entries(text: &str) -> Result<Vec<(String, String)>> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        if out.iter().any(|(e, _)| e == k) {
            return Err(Error::Config(format!("line {}: duplicate key {k}", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

pub fn read_entries(path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    parse_entries(&text)
}

pub fn parse_value<V: FromStr>(key: &str, value: &str) -> Result<V> {
    value.parse().map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

/// Decimal or `a/b` fraction.
pub fn parse_ratio(key: &str, value: &str) -> Result<f64> {
    if let Some((a, b)) = value.split_once('/') {
        let a: f64 = parse_value(key, a.trim())?;
        let b: f64 = parse_value(key, b.trim())?;
        if b == 0.0 {
            return Err(Error::Config(format!("{key}: zero denominator")));
        }
        Ok(a / b)
    } else {
        parse_value(key, value)
    }
}

pub fn unknown_key(key: &str) -> Error {
    Error::Config(format!("unknown key {key}"))
}
