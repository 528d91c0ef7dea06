//! Experiment manifests: `key = value` lines, `#` comments, blank lines
//! ignored.
//!
//! ```text
//! corpus  = data/train
//! schema  = default
//! model   = baseline        # or an endpoint: tcp:HOST:PORT, cmd:PROGRAM ARGS
//! seed    = 0
//! repeats = 10
//! rho     = 0.125
//! epochs  = 10
//! patience = 3
//! jobs    = 4
//! ```

use std::collections::BTreeMap;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("manifest line {line}: {message}")]
pub struct ManifestError {
    pub line: usize,
    pub message: String,
}

pub const KEYS: &[&str] = &[
    "corpus", "schema", "model", "seed", "repeats", "rho", "epochs", "patience", "jobs", "out",
    "strict",
];

/// Raw key → value pairs, with unknown keys and duplicates rejected.
pub fn parse_manifest(text: &str) -> Result<BTreeMap<String, String>, ManifestError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| ManifestError {
            line: i + 1,
            message,
        };
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (k, v) = (k.trim(), v.trim());
        if !KEYS.contains(&k) {
            return Err(err(format!("unknown key `{k}`")));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(err(format!("duplicate key `{k}`")));
        }
    }
    Ok(out)
}
