//! Flat `section.key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};

/// Parsed configuration; keys are `section.key`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig {
    values: BTreeMap<String, String>,
}

pub const KNOWN_KEYS: &[&str] = &[
    "run.seed",
    "run.budget",
    "run.out",
    "paths.registry",
    "paths.templates",
    "paths.rules",
    "generate.n",
    "generate.m",
    "generate.depth",
    "generate.rule_ids",
    "generate.fact_format",
    "generate.split_ratios",
    "metrics.thresholds",
    "train.learning_rate",
    "train.epochs",
    "train.hash_buckets",
    "train.meta_features",
];

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `section.key = value`", i + 1))?;
            let key = key.trim();
            if !key.contains('.') {
                bail!("line {}: key `{key}` has no section", i + 1);
            }
            if !KNOWN_KEYS.contains(&key) {
                bail!("line {}: unknown key `{key}`", i + 1);
            }
            values.insert(key.to_string(), value.trim().to_string());
        }
        Ok(FileConfig { values })
    }

    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .with_context(|| format!("reading config {}", p.display()))?;
                Self::parse(&text).with_context(|| format!("in config {}", p.display()))
            }
        }
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|e| anyhow!("config `{key}` = `{v}`: {e}"))
            })
            .transpose()
    }

    /// Flag value if given, else the file value.
    pub fn pick<T: FromStr>(&self, flag: Option<T>, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match flag {
            Some(v) => Ok(Some(v)),
            None => self.get(key),
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>>
    where
        T::Err: std::fmt::Display,
    {
        self.raw(key).map(|v| parse_list(v)).transpose()
    }
}

/// Comma-separated values.
pub fn parse_list<T: FromStr>(text: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<T>().map_err(|e| anyhow!("`{s}`: {e}")))
        .collect()
}
