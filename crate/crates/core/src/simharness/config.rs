//! `key = value` configuration files.
//!
//! ```text
//! # comments start with '#'
//! seed = 42
//! tolerance_rates = 0, 0.5, 1
//! tolerance_mode = scaled-poisson
//! rbo_p = 0.9
//! r = 9
//! grid = base-a; fair-a[x=1]; mosaic-a[b~0.5/x~0.5]
//! ```

use thiserror::Error;

use super::{EvalConfig, GridCell};

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: expected key = value")]
    Syntax { line: usize },
    #[error("line {line}: duplicate key {key:?}")]
    Duplicate { line: usize, key: String },
    #[error("{key}: {message}")]
    Value { key: String, message: String },
    #[error("unknown key {0:?}")]
    UnknownKey(String),
}

impl ConfigError {
    pub fn value(key: &str, message: impl Into<String>) -> Self {
        Self::Value {
            key: key.to_owned(),
            message: message.into(),
        }
    }
}

/// Splits a config file into ordered `(key, value)` pairs.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(ConfigError::Syntax { line: n + 1 })?;
        let key = k.trim().to_owned();
        if key.is_empty() {
            return Err(ConfigError::Syntax { line: n + 1 });
        }
        if out.iter().any(|(existing, _)| *existing == key) {
            return Err(ConfigError::Duplicate { line: n + 1, key });
        }
        out.push((key, v.trim().to_owned()));
    }
    Ok(out)
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .parse()
        .map_err(|_| ConfigError::value(key, format!("cannot parse {value:?}")))
}

/// Applies one key to an evaluation config. Returns `false` if the key is
/// not an evaluation key.
pub fn apply_eval_key(config: &mut EvalConfig, key: &str, value: &str) -> Result<bool, ConfigError> {
    match key {
        "seed" => config.seed = number(key, value)?,
        "r" => {
            config.r = number(key, value)?;
            if config.r == 0 {
                return Err(ConfigError::value(key, "must be positive"));
            }
        }
        "rbo_p" => {
            config.rbo_p = number(key, value)?;
            if !(config.rbo_p > 0.0 && config.rbo_p < 1.0) {
                return Err(ConfigError::value(key, "must lie in (0, 1)"));
            }
        }
        "tolerance_rates" => {
            config.tolerance_rates = value
                .split(',')
                .map(|v| number::<f64>(key, v.trim()))
                .collect::<Result<_, _>>()?;
            if config.tolerance_rates.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
                return Err(ConfigError::value(key, "rates must be non-negative"));
            }
        }
        "tolerance_mode" => config.tolerance_mode = value.parse().map_err(|m: String| ConfigError::value(key, m))?,
        "grid" => {
            config.grid = value
                .split(';')
                .map(str::trim)
                .filter(|c| !c.is_empty())
                .map(|c| c.parse::<GridCell>().map_err(|m| ConfigError::value(key, m)))
                .collect::<Result<_, _>>()?;
        }
        _ => return Ok(false),
    }
    Ok(true)
}

/// Parses a file holding only evaluation keys.
pub fn parse_eval_config(text: &str) -> Result<EvalConfig, ConfigError> {
    let mut config = EvalConfig::default();
    for (key, value) in parse_kv(text)? {
        if !apply_eval_key(&mut config, &key, &value)? {
            return Err(ConfigError::UnknownKey(key));
        }
    }
    Ok(config)
}
