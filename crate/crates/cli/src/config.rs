//! Flat dotted-key configuration: JSON file first, flags on top.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde_json::Value;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Default)]
pub struct Config {
    values: BTreeMap<String, Value>,
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let root: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let Value::Object(map) = root else {
            return Err(CliError::Config("config root must be a JSON object".into()));
        };
        let mut values = BTreeMap::new();
        flatten("", map, &mut values);
        Ok(Self { values })
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.values.insert(key.to_string(), value);
    }

    /// Parses `key=value`; the value is read as JSON when possible, else as a string.
    pub fn set_pair(&mut self, pair: &str) -> Result<()> {
        let (k, v) = pair
            .split_once('=')
            .ok_or_else(|| CliError::Config(format!("expected key=value, got '{pair}'")))?;
        let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
        self.set(k.trim(), value);
        Ok(())
    }

    /// Records `default` under `key` when absent so run.json shows it.
    fn resolve(&mut self, key: &str, default: Value) -> Value {
        self.values
            .entry(key.to_string())
            .or_insert(default)
            .clone()
    }

    pub fn str(&mut self, key: &str, default: &str) -> Result<String> {
        match self.resolve(key, Value::String(default.to_string())) {
            Value::String(s) => Ok(s),
            other => Ok(other.to_string()),
        }
    }

    pub fn opt_str(&self, key: &str) -> Option<String> {
        match self.values.get(key)? {
            Value::String(s) => Some(s.clone()),
            Value::Null => None,
            other => Some(other.to_string()),
        }
    }

    pub fn required(&self, key: &str) -> Result<String> {
        self.opt_str(key)
            .ok_or_else(|| CliError::Config(format!("missing required setting '{key}'")))
    }

    pub fn path(&self, key: &str) -> Result<PathBuf> {
        self.required(key).map(PathBuf::from)
    }

    pub fn parse<T>(&mut self, key: &str, default: T) -> Result<T>
    where
        T: FromStr + Into<Value> + Clone,
        T::Err: std::fmt::Display,
    {
        match self.resolve(key, default.into()) {
            Value::String(s) => s
                .parse()
                .map_err(|e| CliError::Config(format!("{key}: {e}"))),
            other => other
                .to_string()
                .parse()
                .map_err(|e| CliError::Config(format!("{key}: {e}"))),
        }
    }

    pub fn bool(&mut self, key: &str, default: bool) -> Result<bool> {
        self.parse(key, default)
    }

    /// List values: JSON array, or a comma-separated string.
    pub fn list(&mut self, key: &str, default: &[&str]) -> Result<Vec<String>> {
        let default = Value::Array(
            default
                .iter()
                .map(|s| Value::String(s.to_string()))
                .collect(),
        );
        match self.resolve(key, default) {
            Value::Array(items) => Ok(items
                .into_iter()
                .map(|v| match v {
                    Value::String(s) => s,
                    other => other.to_string(),
                })
                .collect()),
            Value::String(s) if s.trim().is_empty() => Ok(Vec::new()),
            Value::String(s) => Ok(s.split(',').map(|p| p.trim().to_string()).collect()),
            other => Ok(vec![other.to_string()]),
        }
    }

    pub fn layers(&mut self, available: &[i64]) -> Result<Vec<i64>> {
        let raw = self.list("layers", &[])?;
        if raw.is_empty() {
            return Ok(available.to_vec());
        }
        let mut out = Vec::new();
        for s in raw {
            let layer = if s == "last" {
                *available
                    .last()
                    .ok_or_else(|| CliError::Config("dump has no layers".into()))?
            } else {
                s.parse()
                    .map_err(|_| CliError::Config(format!("bad layer '{s}'")))?
            };
            if !available.contains(&layer) {
                return Err(CliError::Config(format!(
                    "layer {layer} not present in dump"
                )));
            }
            out.push(layer);
        }
        Ok(out)
    }

    pub fn to_json(&self) -> Value {
        Value::Object(self.values.clone().into_iter().collect())
    }
}

fn flatten(prefix: &str, map: serde_json::Map<String, Value>, out: &mut BTreeMap<String, Value>) {
    for (k, v) in map {
        let key = if prefix.is_empty() {
            k
        } else {
            format!("{prefix}.{k}")
        };
        match v {
            Value::Object(inner) => flatten(&key, inner, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nested_objects_flatten() {
        let mut out = BTreeMap::new();
        let v: Value = serde_json::json!({"probe": {"l2_lambda": 0.5}, "seed": 3});
        let Value::Object(m) = v else { unreachable!() };
        flatten("", m, &mut out);
        assert_eq!(out["probe.l2_lambda"], serde_json::json!(0.5));
        assert_eq!(out["seed"], serde_json::json!(3));
    }

    #[test]
    fn lists_from_strings() {
        let mut c = Config::default();
        c.set("layers", Value::String("0, 2".into()));
        assert_eq!(c.list("layers", &[]).unwrap(), vec!["0", "2"]);
        assert_eq!(c.layers(&[0, 1, 2]).unwrap(), vec![0, 2]);
        assert!(c.layers(&[0, 1]).is_err());
    }

    #[test]
    fn pair_values_parse_as_json() {
        let mut c = Config::default();
        c.set_pair("probe.repetitions=4").unwrap();
        c.set_pair("rsa.selection=segment:s_inf").unwrap();
        assert_eq!(c.parse::<usize>("probe.repetitions", 10).unwrap(), 4);
        assert_eq!(c.str("rsa.selection", "x").unwrap(), "segment:s_inf");
    }
}
