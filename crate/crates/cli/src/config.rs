//! Flat `key=value` configuration merged with command-line flags.

use std::cell::RefCell;
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::parser::ValueSource;
use clap::ArgMatches;

use crate::error::CliError;

/// Effective settings for one command: file values overridden by flags.
#[derive(Debug, Default)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
    resolved: RefCell<BTreeMap<String, String>>,
}

fn normalize(key: &str) -> String {
    key.trim().replace('_', "-")
}

/// Parses `key=value` lines; `#` starts a comment.
pub fn parse_config(text: &str, path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::Config(format!("{}:{}: expected key=value, got {line:?}", path.display(), i + 1))
        })?;
        out.insert(normalize(k), v.trim().to_string());
    }
    Ok(out)
}

impl RunConfig {
    /// Merges the optional `--config` file with every flag given on the command line.
    pub fn from_matches(m: &ArgMatches) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        if let Some(path) = m.get_one::<String>("config") {
            let path = PathBuf::from(path);
            let text = fs::read_to_string(&path).map_err(|e| CliError::io(path.clone(), e))?;
            values = parse_config(&text, &path)?;
        }
        for id in m.ids() {
            let id = id.as_str();
            if id == "config" || m.value_source(id) != Some(ValueSource::CommandLine) {
                continue;
            }
            let Ok(Some(raw)) = m.try_get_raw(id) else { continue };
            let joined: Vec<String> = raw.map(|s| s.to_string_lossy().into_owned()).collect();
            values.insert(normalize(id), joined.join(","));
        }
        Ok(RunConfig {
            values,
            resolved: RefCell::default(),
        })
    }

    #[cfg(test)]
    pub fn from_pairs(pairs: &[(&str, &str)]) -> Self {
        RunConfig {
            values: pairs.iter().map(|(k, v)| (normalize(k), v.to_string())).collect(),
            resolved: RefCell::default(),
        }
    }

    fn note(&self, key: &str, value: &str) {
        self.resolved.borrow_mut().insert(key.to_string(), value.to_string());
    }

    pub fn opt_str(&self, key: &str) -> Option<String> {
        let v = self.values.get(key).cloned();
        if let Some(v) = &v {
            self.note(key, v);
        }
        v
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        let v = self.values.get(key).cloned().unwrap_or_else(|| default.to_string());
        self.note(key, &v);
        v
    }

    pub fn require(&self, key: &str) -> Result<String, CliError> {
        self.opt_str(key)
            .ok_or_else(|| CliError::Usage(format!("missing required setting --{key}")))
    }

    pub fn opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.opt_str(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| CliError::Usage(format!("cannot parse --{key} value {v:?}"))),
        }
    }

    pub fn get<T: FromStr + ToString>(&self, key: &str, default: T) -> Result<T, CliError> {
        match self.opt(key)? {
            Some(v) => Ok(v),
            None => {
                self.note(key, &default.to_string());
                Ok(default)
            }
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool, CliError> {
        self.get(key, false)
    }

    /// The settings actually consulted, defaults included, as `key=value` lines.
    pub fn resolved_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in self.resolved.borrow().iter() {
            out.push_str(&format!("{k}={v}\n"));
        }
        out
    }
}

/// Comma-separated list; `a-b` expands to the inclusive integer range.
pub fn parse_index_list(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("invalid index list {text:?}"));
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.trim().parse().map_err(|_| bad())?;
                let b: usize = b.trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

pub fn split_list(text: &str) -> Vec<String> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}
