//! Flat `key=value` records, one per line, for machine-readable reports.
//!
//! Values containing whitespace, quotes or `=` are double-quoted with `\"`
//! and `\\` escapes.

use std::collections::BTreeMap;
use std::fs::OpenOptions;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

fn needs_quotes(v: &str) -> bool {
    v.is_empty() || v.chars().any(|c| c.is_whitespace() || c == '"' || c == '=' || c == '\\')
}

pub fn format_record(fields: &[(String, String)]) -> String {
    fields
        .iter()
        .map(|(k, v)| {
            if needs_quotes(v) {
                let escaped = v.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
                format!("{k}=\"{escaped}\"")
            } else {
                format!("{k}={v}")
            }
        })
        .collect::<Vec<_>>()
        .join(" ")
}

/// Parses one record back into its fields (last occurrence wins).
pub fn parse_record(line: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let mut chars = line.trim().chars().peekable();
    loop {
        while chars.next_if(|c| c.is_whitespace()).is_some() {}
        if chars.peek().is_none() {
            return Ok(out);
        }
        let key: String = std::iter::from_fn(|| chars.next_if(|&c| c != '=' && !c.is_whitespace())).collect();
        if chars.next() != Some('=') {
            return Err(Error::data(format!("record field `{key}` has no value")));
        }
        let mut value = String::new();
        if chars.next_if_eq(&'"').is_some() {
            loop {
                match chars.next() {
                    Some('\\') => value.extend(chars.next()),
                    Some('"') => break,
                    Some(c) => value.push(c),
                    None => return Err(Error::data(format!("unterminated quote in field `{key}`"))),
                }
            }
        } else {
            value.extend(std::iter::from_fn(|| chars.next_if(|c| !c.is_whitespace())));
        }
        out.insert(key, value);
    }
}

/// Appends `record` as a new line of `path`, creating the file if needed.
pub fn append_record(path: &Path, record: &str) -> Result<()> {
    let mut f = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| Error::io(path, e))?;
    writeln!(f, "{record}").map_err(|e| Error::io(path, e))
}
