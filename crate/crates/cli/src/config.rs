//! Flat `key = value` run configuration with dotted sections.
//!
//! ```text
//! # comment
//! signal.kind = rectangles
//! train.method = ad_naive
//! train.lr = 1e-3
//! ```
//!
//! Every key has a default (see [`KEYS`]); unknown keys are rejected.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

/// Recognised keys and their defaults. An empty default means "unset".
pub const KEYS: &[(&str, &str)] = &[
    ("signal.kind", "gaussian"),
    ("signal.dims", "1"),
    ("signal.count", "8"),
    ("signal.seed", "0"),
    ("signal.path", ""),
    ("field.hidden_width", "64"),
    ("field.hidden_layers", "3"),
    ("field.pe_bands", "6"),
    ("train.method", "ad_naive"),
    ("train.k", "1"),
    ("train.iterations", ""),
    ("train.batch", ""),
    ("train.lr", "1e-3"),
    ("train.loss", "huber"),
    ("train.huber_delta", "1.0"),
    ("train.seed", "0"),
    ("train.n_mc", "32"),
    ("train.n_kernel", "32"),
    ("train.eps", "0.0078125"),
    ("train.sigma", "0.02"),
    ("train.debias", "true"),
    ("train.log_every", "100"),
    ("eval.checkpoint", ""),
    ("eval.resolution", "256"),
    ("eval.margin", "0.05"),
    ("eval.filter_sigmas", ""),
    ("eval.n_oracle", "100000"),
    ("filter.sigma", "0.1"),
    ("oracle.points", ""),
    ("oracle.resolution", "11"),
    ("oracle.write_checkpoint", "false"),
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("line {line}: expected `key = value`")]
    Syntax { line: usize },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: duplicate key `{key}`")]
    Duplicate { line: usize, key: String },
    #[error("{}`{key}`: invalid value `{value}`: {reason}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Value { line: Option<usize>, key: String, value: String, reason: String },
}

#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    /// Explicitly set keys with their source line.
    set: BTreeMap<String, (String, usize)>,
}

fn default_of(key: &str) -> Option<&'static str> {
    KEYS.iter().find(|(k, _)| *k == key).map(|(_, v)| *v)
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let mut set = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let (k, v) = body.split_once('=').ok_or(ConfigError::Syntax { line })?;
            let (k, v) = (k.trim(), v.trim());
            if k.is_empty() {
                return Err(ConfigError::Syntax { line });
            }
            if default_of(k).is_none() {
                return Err(ConfigError::UnknownKey { line, key: k.to_string() });
            }
            if set.insert(k.to_string(), (v.to_string(), line)).is_some() {
                return Err(ConfigError::Duplicate { line, key: k.to_string() });
            }
        }
        Ok(Self { set })
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Overrides a key as if it had been written in the file.
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        assert!(default_of(key).is_some(), "unknown key {key}");
        self.set.insert(key.to_string(), (value.into(), 0));
    }

    pub fn is_set(&self, key: &str) -> bool {
        self.set.contains_key(key)
    }

    /// Raw value, falling back to the default; `None` when neither is set.
    pub fn raw(&self, key: &str) -> Option<&str> {
        let v = match self.set.get(key) {
            Some((v, _)) => v.as_str(),
            None => default_of(key).unwrap_or_else(|| panic!("unknown key {key}")),
        };
        (!v.is_empty()).then_some(v)
    }

    fn line(&self, key: &str) -> Option<usize> {
        self.set.get(key).map(|(_, l)| *l).filter(|&l| l > 0)
    }

    pub fn value_error(&self, key: &str, reason: impl Into<String>) -> ConfigError {
        ConfigError::Value {
            line: self.line(key),
            key: key.to_string(),
            value: self.raw(key).unwrap_or("").to_string(),
            reason: reason.into(),
        }
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| self.value_error(key, e.to_string())),
        }
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        self.get_opt(key)?.ok_or_else(|| self.value_error(key, "required"))
    }

    /// Comma-separated list; empty when unset.
    pub fn get_list<T: FromStr>(&self, key: &str) -> Result<Vec<T>, ConfigError>
    where
        T::Err: std::fmt::Display,
    {
        let Some(v) = self.raw(key) else { return Ok(Vec::new()) };
        v.split(',')
            .map(|s| s.trim().parse().map_err(|e: T::Err| self.value_error(key, e.to_string())))
            .collect()
    }
}
