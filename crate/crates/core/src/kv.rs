//! Plain-text `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored; a trailing `# ...`
//! comment after a value is stripped. Keys are case-sensitive and must be
//! unique within a file.

use std::collections::BTreeMap;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("unknown configuration key `{key}` (line {line})")]
    UnknownKey { line: usize, key: String },
    #[error("invalid value for `{key}`: {value:?} ({reason})")]
    InvalidValue { key: String, value: String, reason: String },
    #[error("{0}")]
    Invalid(String),
}

/// One parsed entry with its source line.
#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub value: String,
    pub line: usize,
}

/// Ordered key/value table parsed from text.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KvTable {
    entries: BTreeMap<String, Entry>,
}

impl KvTable {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut entries = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = match raw.find('#') {
                Some(pos) => &raw[..pos],
                None => raw,
            }
            .trim();
            if content.is_empty() {
                continue;
            }
            let Some((key, value)) = content.split_once('=') else {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            };
            let key = key.trim();
            if key.is_empty() {
                return Err(ConfigError::Syntax {
                    line,
                    text: raw.to_string(),
                });
            }
            let entry = Entry {
                value: value.trim().to_string(),
                line,
            };
            if entries.insert(key.to_string(), entry).is_some() {
                return Err(ConfigError::Duplicate {
                    line,
                    key: key.to_string(),
                });
            }
        }
        Ok(Self { entries })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parse `key` with [`FromStr`] if present.
    pub fn parse_opt<T>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v.parse::<T>().map(Some).map_err(|e| ConfigError::InvalidValue {
                key: key.to_string(),
                value: v.to_string(),
                reason: e.to_string(),
            }),
        }
    }

    /// Reject any key not in `allowed`.
    pub fn check_known(&self, allowed: &[&str]) -> Result<(), ConfigError> {
        for (key, entry) in &self.entries {
            if !allowed.contains(&key.as_str()) {
                return Err(ConfigError::UnknownKey {
                    line: entry.line,
                    key: key.clone(),
                });
            }
        }
        Ok(())
    }

    /// Keep only the listed keys.
    pub fn subset(&self, keys: &[&str]) -> KvTable {
        KvTable {
            entries: self
                .entries
                .iter()
                .filter(|(k, _)| keys.contains(&k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }
}

pub fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true or false".to_string(),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_comments_and_whitespace() {
        let t = KvTable::parse("# header\n a = 1 \n\nb=two # trailing\n").unwrap();
        assert_eq!(t.get("a"), Some("1"));
        assert_eq!(t.get("b"), Some("two"));
        assert_eq!(t.keys().count(), 2);
    }

    #[test]
    fn rejects_duplicates_and_garbage() {
        assert!(matches!(
            KvTable::parse("a = 1\na = 2"),
            Err(ConfigError::Duplicate { line: 2, .. })
        ));
        assert!(matches!(
            KvTable::parse("just words"),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
    }

    #[test]
    fn unknown_keys_carry_line() {
        let t = KvTable::parse("a = 1\nzzz = 3").unwrap();
        let err = t.check_known(&["a"]).unwrap_err();
        assert_eq!(
            err,
            ConfigError::UnknownKey {
                line: 2,
                key: "zzz".into()
            }
        );
    }

    #[test]
    fn typed_parse_reports_key() {
        let t = KvTable::parse("x = abc").unwrap();
        let err = t.parse_opt::<f64>("x").unwrap_err();
        assert!(err.to_string().contains("`x`"));
        assert_eq!(t.parse_opt::<f64>("missing").unwrap(), None);
    }
}
