//! Plain-text `key = value` configuration with an optional `[grid]` section
//! whose values are comma-separated lists.
//!
//! ```text
//! n = 62
//! d = 2
//! K = 2
//! delta = 4
//! [grid]
//! delta = 0, 2, 4
//! ```

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use ini::Ini;

const KEYS: &[&str] = &[
    "n",
    "d",
    "K",
    "delta",
    "L",
    "M",
    "lambda",
    "seed",
    "trials",
    "i",
    "j",
    "robust",
    "threshold",
    "linkage",
    "max_edges",
    "even_only",
    "path_length",
    "perturb",
];

pub const GRID_KEYS: &[&str] = &["n", "d", "K", "delta", "L", "M", "lambda"];

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    values: BTreeMap<String, String>,
    grid: BTreeMap<String, Vec<String>>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Config> {
        let ini = Ini::load_from_str(text).map_err(|e| anyhow!("config: {e}"))?;
        let mut cfg = Config::default();
        for (section, props) in ini.iter() {
            match section {
                None => {
                    for (k, v) in props.iter() {
                        if !KEYS.contains(&k) {
                            bail!("config: unknown key `{k}`");
                        }
                        cfg.values.insert(k.to_string(), v.trim().to_string());
                    }
                }
                Some("grid") => {
                    for (k, v) in props.iter() {
                        if !GRID_KEYS.contains(&k) {
                            bail!("config: `{k}` cannot be swept");
                        }
                        let items: Vec<String> = v
                            .split(',')
                            .map(|s| s.trim().to_string())
                            .filter(|s| !s.is_empty())
                            .collect();
                        if items.is_empty() {
                            bail!("config: empty grid list for `{k}`");
                        }
                        cfg.grid.insert(k.to_string(), items);
                    }
                }
                Some(other) => bail!("config: unknown section [{other}]"),
            }
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Config> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Config::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.values.insert(key.to_string(), value.to_string());
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| anyhow!("config: cannot parse `{key} = {v}`")),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        self.get(key)?
            .ok_or_else(|| anyhow!("config: missing required key `{key}`"))
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn grid(&self) -> &BTreeMap<String, Vec<String>> {
        &self.grid
    }

    /// Values for a sweepable key: the grid list if present, else the scalar.
    pub fn axis(&self, key: &str) -> Option<Vec<String>> {
        self.grid
            .get(key)
            .cloned()
            .or_else(|| self.values.get(key).map(|v| vec![v.clone()]))
    }

    /// Cartesian product over the sweepable keys in `GRID_KEYS` order, the
    /// last key varying fastest. Keys absent from both sections are left out.
    pub fn grid_points(&self) -> Vec<Config> {
        let mut points = vec![self.clone()];
        for &key in GRID_KEYS {
            let Some(values) = self.axis(key) else {
                continue;
            };
            let mut next = Vec::with_capacity(points.len() * values.len());
            for p in &points {
                for v in &values {
                    let mut q = p.clone();
                    q.values.insert(key.to_string(), v.clone());
                    q.grid.clear();
                    next.push(q);
                }
            }
            points = next;
        }
        points
    }
}
