//! Flag values merged with an optional `key=value` config file.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use clickroles_core::{Error, Result};

/// Resolves settings in the order flag, config file, default, and records
/// every resolved value for the run manifest.
#[derive(Debug, Default)]
pub struct Settings {
    file: BTreeMap<String, String>,
    pub resolved: BTreeMap<String, String>,
}

impl Settings {
    pub fn parse(text: &str) -> Result<Self> {
        let mut file = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Malformed {
                line: i as u64 + 1,
                reason: format!("config: expected key=value, got {line:?}"),
            })?;
            file.insert(k.trim().replace('_', "-"), v.trim().to_string());
        }
        Ok(Settings {
            file,
            resolved: BTreeMap::new(),
        })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Settings::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Settings::parse(&text)
            }
        }
    }

    fn from_file<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.file.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Usage(format!("config: invalid value {v:?} for {key}"))),
        }
    }

    pub fn get<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T> {
        let v = match flag {
            Some(v) => v,
            None => self.from_file(key)?.unwrap_or(default),
        };
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    pub fn get_opt<T: FromStr + Display>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>> {
        let v = match flag {
            Some(v) => Some(v),
            None => self.from_file(key)?,
        };
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    /// A flag that can only switch a setting on.
    pub fn flag(&mut self, key: &str, flag: bool) -> Result<bool> {
        let v = flag || self.from_file::<bool>(key)?.unwrap_or(false);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// File locations are not recorded; the run lists them with digests.
    pub fn path(&self, key: &str, flag: Option<&Path>) -> Option<std::path::PathBuf> {
        flag.map(Path::to_path_buf)
            .or_else(|| self.file.get(key).map(std::path::PathBuf::from))
    }

    /// Comma-separated list.
    pub fn list(&mut self, key: &str, flag: Option<&str>) -> Option<Vec<String>> {
        let raw = flag.map(str::to_string).or_else(|| self.file.get(key).cloned())?;
        self.resolved.insert(key.to_string(), raw.clone());
        Some(
            raw.split(',')
                .map(|s| s.trim().to_string())
                .filter(|s| !s.is_empty())
                .collect(),
        )
    }
}
