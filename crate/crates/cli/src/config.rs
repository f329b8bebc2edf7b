//! `key = value` configuration files.

use std::collections::BTreeMap;

use crate::error::{validation, CliError};

/// Parses UTF-8 `key = value` lines. `#` starts a comment; blank lines are
/// skipped. Keys may use `-` or `_` interchangeably.
pub fn parse_config(text: &str) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return validation(format!("config line {}: expected `key = value`", i + 1));
        };
        let key = normalize_key(k.trim());
        let value = v.trim();
        if key.is_empty() || value.is_empty() {
            return validation(format!("config line {}: empty key or value", i + 1));
        }
        if out.insert(key.clone(), value.to_string()).is_some() {
            return validation(format!("config line {}: `{key}` set twice", i + 1));
        }
    }
    Ok(out)
}

pub fn normalize_key(k: &str) -> String {
    k.trim_start_matches("--").replace('-', "_").to_ascii_lowercase()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_spacing() {
        let c = parse_config("# header\nseed = 42\n  m0=2 # trailing\n\nbox-half = 3\n").unwrap();
        assert_eq!(c["seed"], "42");
        assert_eq!(c["m0"], "2");
        assert_eq!(c["box_half"], "3");
        assert_eq!(c.len(), 3);
    }

    #[test]
    fn rejects_garbage() {
        assert!(parse_config("seed 42").is_err());
        assert!(parse_config("seed = 1\nseed = 2").is_err());
        assert!(parse_config("seed =").is_err());
    }
}
