//! Flat `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Keys are grouped by
//! prefix: `index.*`, `cache.*`, `update.*`; other prefixes (such as
//! `harness.*`) are returned to the caller untouched.

use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::IndexConfig;

/// Parses `key = value` lines, preserving order.
pub fn parse_kv(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim();
        if k.is_empty() {
            return Err(Error::Config(format!("line {}: empty key", n + 1)));
        }
        out.push((k.to_string(), v.trim().to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for {key}"))),
    }
}

impl IndexConfig {
    /// Applies one key. Returns `Ok(false)` for keys outside the index,
    /// cache and update groups; unknown keys inside those groups are errors.
    pub fn apply(&mut self, key: &str, value: &str) -> Result<bool> {
        let c = &mut self.cache;
        let u = &mut self.update;
        match key {
            "index.dim" => self.dim = parse(key, value)?,
            "index.capacity" => self.capacity = parse(key, value)?,
            "index.degree" | "index.R" => self.degree = parse(key, value)?,
            "index.partition_size" => self.partition_size = parse(key, value)?,
            "index.merge_beam" | "index.L_build" => self.merge_beam = parse(key, value)?,
            "index.build_seed" => self.build_seed = parse(key, value)?,
            "index.hot_capacity" => self.hot_capacity = Some(parse(key, value)?),
            "index.hot_segments" => self.hot_segments = parse(key, value)?,
            "index.spill_path" => self.spill_path = Some(value.into()),
            "cache.policy" => c.policy = value.parse()?,
            "cache.alpha" => c.predictor.alpha = parse(key, value)?,
            "cache.beta" => c.predictor.beta = parse(key, value)?,
            "cache.window_len" => c.predictor.window_len = parse(key, value)?,
            "cache.decay" => c.predictor.decay = parse(key, value)?,
            "cache.t_hot" => c.cost.t_hot = parse(key, value)?,
            "cache.t_cold" => c.cost.t_cold = parse(key, value)?,
            "cache.t_transfer" => c.cost.t_transfer = parse(key, value)?,
            "cache.theta_adaptive" => c.theta_adaptive = parse_bool(key, value)?,
            "cache.adapt_window" => c.adapt_window = parse(key, value)?,
            "cache.capacity_fraction" => c.capacity_fraction = parse(key, value)?,
            "cache.lrfu_lambda" => c.lrfu_lambda = parse(key, value)?,
            "update.repair_threshold" => u.repair_threshold = parse(key, value)?,
            "update.repair_fanout" => u.repair_fanout = parse(key, value)?,
            "update.repair_budget" => u.repair_budget = parse(key, value)?,
            "update.consolidation_threshold" => u.consolidation_threshold = parse(key, value)?,
            "update.version_bound" => u.version_bound = parse(key, value)?,
            "update.sync_batch" => u.sync_batch = parse(key, value)?,
            "update.repair_enabled" => u.repair_enabled = parse_bool(key, value)?,
            "update.consolidation_enabled" => u.consolidation_enabled = parse_bool(key, value)?,
            "update.l_insert" => u.l_insert = parse(key, value)?,
            "update.insert_seed" => u.insert_seed = parse(key, value)?,
            k if k.starts_with("index.") || k.starts_with("cache.") || k.starts_with("update.") => {
                return Err(Error::Config(format!("unknown key {k}")))
            }
            _ => return Ok(false),
        }
        Ok(true)
    }

    /// Applies every pair; returns the pairs that belong to other groups.
    pub fn apply_all(&mut self, pairs: &[(String, String)]) -> Result<Vec<(String, String)>> {
        let mut rest = Vec::new();
        for (k, v) in pairs {
            if !self.apply(k, v)? {
                rest.push((k.clone(), v.clone()));
            }
        }
        Ok(rest)
    }

    /// Reads a config file on top of `self`.
    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<Vec<(String, String)>> {
        let text = std::fs::read_to_string(path)?;
        self.apply_all(&parse_kv(&text)?)
    }
}
