//! `key=value` configuration files.
//!
//! Blank lines and lines starting with `#` are skipped. Keys and values are
//! trimmed; a key may appear once.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ConfigFile {
    entries: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(i + 1, "expected key=value"))?;
            let key = key.trim();
            let value = value.trim();
            if key.is_empty() {
                return Err(Error::parse(i + 1, "empty key"));
            }
            if !key.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
                return Err(Error::parse(i + 1, format!("bad key {key:?}")));
            }
            if entries.insert(key.to_string(), value.to_string()).is_some() {
                return Err(Error::parse(i + 1, format!("duplicate key {key:?}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Parse { line, msg } => {
                Error::Format(format!("{}:{line}: {msg}", path.display()))
            }
            other => other,
        })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get_parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.get(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| Error::invalid(format!("config key {key}: {e}")))
            })
            .transpose()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    /// Errors on the first key outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        match self.keys().find(|k| !allowed.contains(k)) {
            Some(k) => Err(Error::invalid(format!("unknown config key {k:?}"))),
            None => Ok(()),
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn parses_pairs_and_comments() {
        let c = ConfigFile::parse("# run\nsweeps = 40\n\nlearn_rate=0.5  \nregime=ideal\n").unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(c.get_parsed::<usize>("sweeps").unwrap(), Some(40));
        assert_eq!(c.get_parsed::<f64>("learn_rate").unwrap(), Some(0.5));
        assert_eq!(c.get("regime"), Some("ideal"));
        assert_eq!(c.get("seed"), None);
    }

    #[test]
    fn empty_value_allowed() {
        assert_eq!(ConfigFile::parse("a=").unwrap().get("a"), Some(""));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = ConfigFile::parse("a=1\nnot a pair\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = ConfigFile::parse("a=1\na=2\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
        assert!(ConfigFile::parse("=3").is_err());
        assert!(ConfigFile::parse("a b=3").is_err());
    }

    #[test]
    fn bad_value_type() {
        let c = ConfigFile::parse("sweeps=ten").unwrap();
        assert!(c.get_parsed::<usize>("sweeps").is_err());
    }

    #[test]
    fn unknown_keys() {
        let c = ConfigFile::parse("sweeps=1\nwat=2").unwrap();
        assert!(c.check_keys(&["sweeps"]).is_err());
        assert!(c.check_keys(&["sweeps", "wat"]).is_ok());
    }

    proptest! {
        #[test]
        fn written_pairs_parse_back(
            pairs in proptest::collection::btree_map("[a-z_][a-z0-9_]{0,8}", "[ -~&&[^=#]]{0,12}", 0..8),
        ) {
            let text: String = pairs.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
            let c = ConfigFile::parse(&text).unwrap();
            prop_assert_eq!(c.len(), pairs.len());
            for (k, v) in &pairs {
                prop_assert_eq!(c.get(k), Some(v.trim()));
            }
        }
    }
}
